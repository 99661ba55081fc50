use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cases::{self, RandomCase};
use crate::network::{build_n_minus_1, DeviceRef};

fn n1_case(seed: u64, nodes: usize, outages: usize) -> Problem {
    let net = cases::random_case(
        seed,
        &RandomCase {
            dc_lines: 1,
            ..RandomCase::small(nodes, 2)
        },
    );
    let g = net.contingency_group;
    let refs: Vec<_> = (0..outages)
        .map(|device| DeviceRef { group: g, device })
        .collect();
    let spec = build_n_minus_1(&net, &refs).unwrap();
    Problem::new(net, spec).unwrap()
}

fn quiet(alpha: f64) -> SolverConfig {
    SolverConfig {
        alpha,
        trace_every: 0,
        ..SolverConfig::default()
    }
}

fn randomize<'a>(rng: &mut ChaCha8Rng, it: impl Iterator<Item = &'a mut f64>) {
    it.for_each(|x| *x = rng.random_range(-1.0..1.0));
}

fn random_state(problem: &Problem, rng: &mut ChaCha8Rng) -> StateTangent {
    let mut s = StateTangent::zeros(problem);
    randomize(rng, s.iter_mut());
    s
}

fn random_schedule(problem: &Problem, rng: &mut ChaCha8Rng) -> ScheduleTensor {
    let mut s = ScheduleTensor::zeros(&problem.topology, &problem.schedule_slices());
    randomize(rng, s.iter_mut());
    s
}

fn random_params(problem: &Problem, rng: &mut ChaCha8Rng) -> ParamVec {
    let mut p = ParamVec::zeros(problem);
    randomize(rng, p.iter_mut());
    p
}

/// A realistic linearization point: a few solver iterations in.
fn midway(problem: &Problem, alpha: f64) -> SolverState {
    let mut state = run_fixed(problem, &quiet(alpha), 17).unwrap();
    state.rho_p = 1.3;
    state.rho_theta = 0.8;
    state
}

fn assert_dot(lhs: f64, rhs: f64, what: &str) {
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    assert!((lhs - rhs).abs() <= 1e-10 * scale, "{what}: {lhs} vs {rhs}");
}

#[test]
fn targets_adjoint() {
    let problem = n1_case(2, 6, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let ds = random_state(&problem, &mut rng);
        let (gx, gy) = (
            random_schedule(&problem, &mut rng),
            random_schedule(&problem, &mut rng),
        );
        let (dx, dy) = step_targets(&problem, &ds);
        let back = targets_vjp(&problem, &gx, &gy);
        assert_dot(dx.dot(&gx) + dy.dot(&gy), ds.dot(&back), "targets");
    }
}

#[test]
fn prox_adjoint_every_kind() {
    for seed in 0..4 {
        let problem = n1_case(seed, 5 + seed as usize, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
        let state = midway(&problem, 1.0);
        let (x, y) = step_targets(&problem, &carried(&state));
        let (dx, dy) = (
            random_schedule(&problem, &mut rng),
            random_schedule(&problem, &mut rng),
        );
        let dparam = random_params(&problem, &mut rng);
        let (gp, gth) = (
            random_schedule(&problem, &mut rng),
            random_schedule(&problem, &mut rng),
        );
        let rho = (1.3, 0.8);
        let (dp, dth) = prox_jvp_all(&problem, rho, (&x, &y), &dx, &dy, &dparam);
        let mut gparam = ParamVec::zeros(&problem);
        let (gx, gy) = prox_vjp_all(&problem, rho, &x, &y, &gp, &gth, &mut gparam);
        assert_dot(
            dp.dot(&gp) + dth.dot(&gth),
            dx.dot(&gx) + dy.dot(&gy) + dparam.dot(&gparam),
            "prox",
        );
    }
}

#[test]
fn split_adjoint() {
    let problem = n1_case(4, 7, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (dp, dth) = (
        random_schedule(&problem, &mut rng),
        random_schedule(&problem, &mut rng),
    );
    let out = split(&problem, &dp, &dth).unwrap();
    let mut g = out.clone();
    randomize(&mut rng, g.ptil.iter_mut().chain(g.thtil.iter_mut()));
    randomize(
        &mut rng,
        g.pbar.data.iter_mut().chain(g.thbar.data.iter_mut()),
    );
    let (gp, gth) = split_vjp(&problem, &g).unwrap();
    assert_dot(out.dot(&g), dp.dot(&gp) + dth.dot(&gth), "split");
}

#[test]
fn update_adjoint() {
    let problem = n1_case(5, 5, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for alpha in [1.0, 1.5] {
        let ds = random_state(&problem, &mut rng);
        let (dp, dth) = (
            random_schedule(&problem, &mut rng),
            random_schedule(&problem, &mut rng),
        );
        let mut dsp = split(&problem, &dp, &dth).unwrap();
        randomize(&mut rng, dsp.pbar.data.iter_mut());
        let scale = (1.0 / 1.1, 1.1);
        let out = update(&ds, &dsp, alpha, scale);
        let g = random_state(&problem, &mut rng);
        let (gs, gsp) = update_vjp(&g, alpha, scale);
        assert_dot(out.dot(&g), ds.dot(&gs) + dsp.dot(&gsp), "update");
    }
}

#[test]
fn full_step_adjoint() {
    for (seed, alpha) in [(6, 1.0), (7, 1.5), (8, 1.2)] {
        let problem = n1_case(seed, 6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = midway(&problem, alpha);
        let scale = (1.1, 1.0 / 1.1);
        let ds = random_state(&problem, &mut rng);
        let dparam = random_params(&problem, &mut rng);
        let (dout, dp, dth) = step_jvp(&problem, alpha, &state, scale, &ds, &dparam).unwrap();
        let g = random_state(&problem, &mut rng);
        let (gp, gth) = (
            random_schedule(&problem, &mut rng),
            random_schedule(&problem, &mut rng),
        );
        let mut gparam = ParamVec::zeros(&problem);
        let gs = step_vjp(
            &problem,
            alpha,
            &state,
            scale,
            &g,
            Some((&gp, &gth)),
            &mut gparam,
        )
        .unwrap();
        assert_dot(
            dout.dot(&g) + dp.dot(&gp) + dth.dot(&gth),
            ds.dot(&gs) + dparam.dot(&gparam),
            "step",
        );
    }
}

#[test]
fn step_tangent_matches_difference_quotient() {
    let problem = n1_case(9, 5, 1);
    let alpha = 1.5;
    let state = midway(&problem, alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ds = random_state(&problem, &mut rng);
    let dparam = ParamVec::zeros(&problem);
    let (dout, _, _) = step_jvp(&problem, alpha, &state, (1.0, 1.0), &ds, &dparam).unwrap();
    let eps = 1e-7;
    let shifted = |sign: f64| {
        let mut s = state.clone();
        s.z.axpy(sign * eps, &ds.z);
        s.v.axpy(sign * eps, &ds.v);
        s.u.data
            .iter_mut()
            .zip(&ds.u.data)
            .for_each(|(a, b)| *a += sign * eps * b);
        s.xi.data
            .iter_mut()
            .zip(&ds.xi.data)
            .for_each(|(a, b)| *a += sign * eps * b);
        let mut solver = Solver::new(
            &problem,
            SolverConfig {
                adaptive: None,
                ..quiet(alpha)
            },
        )
        .unwrap();
        solver.iterate(&mut s).unwrap();
        s
    };
    let (hi, lo) = (shifted(1.0), shifted(-1.0));
    let fd: Vec<f64> =
        hi.u.data
            .iter()
            .zip(&lo.u.data)
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect();
    let err = fd
        .iter()
        .zip(&dout.u.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn replay_is_bitwise() {
    let problem = n1_case(3, 6, 2);
    let tape = solve_with_tape_every(&problem, &quiet(1.5), 137, 20).unwrap();
    let again = tape.replay().unwrap();
    assert_eq!(&again, tape.final_state());
    assert_eq!(tape.len(), 137);
}

#[test]
fn toy_tape_length() {
    let problem = Problem::base(cases::toy()).unwrap();
    let tape = solve_with_tape(&problem, &quiet(1.0), 1000).unwrap();
    assert_eq!(tape.len(), 1000);
    assert_eq!(tape.penalties().len(), 1000);
}

#[test]
fn zero_iterations_give_zero_gradient() {
    let problem = Problem::base(cases::binding_toy(2.0)).unwrap();
    let tape = solve_with_tape(&problem, &quiet(1.0), 0).unwrap();
    let g = grad(
        &tape,
        &Objective::TotalCost,
        &ParameterSelector::new(0, ParamField::PMax),
    )
    .unwrap();
    assert_eq!(g, vec![0.0, 0.0]);
}

#[test]
fn slack_capacity_has_zero_gradient() {
    let problem = Problem::base(cases::toy()).unwrap();
    let tape = solve_with_tape(&problem, &quiet(1.0), 1000).unwrap();
    let g = grad(
        &tape,
        &Objective::TotalCost,
        &ParameterSelector::new(0, ParamField::PMax),
    )
    .unwrap();
    assert_eq!(g, vec![0.0]);
}

#[test]
fn binding_capacity_gradient_is_price_difference() {
    let problem = Problem::base(cases::binding_toy(2.0)).unwrap();
    let tape = solve_with_tape(&problem, &quiet(1.0), 1000).unwrap();
    let wrt = ParameterSelector::new(0, ParamField::PMax).with_devices(vec![0]);
    let g = grad(&tape, &Objective::TotalCost, &wrt).unwrap();
    assert!((g[0] - (1.0 - 5.0)).abs() < 1e-6, "{g:?}");
}

#[test]
fn unrolled_matches_finite_differences() {
    let problem = n1_case(12, 6, 1);
    let cfg = quiet(1.0);
    let iters = 300;
    let tape = solve_with_tape(&problem, &cfg, iters).unwrap();
    for (group, field) in [
        (2, ParamField::PMax),
        (2, ParamField::LinearCost),
        (0, ParamField::Load),
    ] {
        let wrt = ParameterSelector::new(group, field);
        let g = grad(&tape, &Objective::TotalCost, &wrt).unwrap();
        let fd = grad_fd(
            &problem,
            &cfg,
            &Objective::TotalCost,
            &wrt,
            1e-4,
            Some(iters),
        )
        .unwrap();
        let fd_half = grad_fd(
            &problem,
            &cfg,
            &Objective::TotalCost,
            &wrt,
            5e-5,
            Some(iters),
        )
        .unwrap();
        for ((a, b), c) in g.iter().zip(&fd).zip(&fd_half) {
            // stencils that cross a kink disagree with each other
            if (b - c).abs() > 1e-6 * b.abs().max(1.0) {
                continue;
            }
            assert!(
                (a - b).abs() <= 1e-4 * b.abs().max(1.0),
                "{field:?}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn contingency_parameters_collect_unaffected_slices() {
    let problem = n1_case(13, 5, 2);
    let cfg = quiet(1.0);
    let tape = solve_with_tape(&problem, &cfg, 200).unwrap();
    let wrt = ParameterSelector::new(problem.contingency_group(), ParamField::Susceptance);
    let g = grad(&tape, &Objective::TotalCost, &wrt).unwrap();
    let fd = grad_fd(&problem, &cfg, &Objective::TotalCost, &wrt, 1e-5, Some(200)).unwrap();
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn finite_differences_on_a_linear_map() {
    // toy cost equals b·(−load) at the optimum
    let problem = Problem::base(cases::toy()).unwrap();
    let cfg = SolverConfig {
        tol: 1e-9,
        max_iter: 50_000,
        ..quiet(1.0)
    };
    let wrt = ParameterSelector::new(1, ParamField::Load);
    for h in [1e-3, 1e-5] {
        let fd = grad_fd(&problem, &cfg, &Objective::TotalCost, &wrt, h, None).unwrap();
        assert!((fd[0] + 1.0).abs() < 1e-5, "h {h}: {fd:?}");
    }
}

#[test]
fn linear_objective_gradient() {
    let problem = Problem::base(cases::binding_toy(2.0)).unwrap();
    let cfg = quiet(1.0);
    let tape = solve_with_tape(&problem, &cfg, 400).unwrap();
    let mut cp = ScheduleTensor::zeros(&problem.topology, &problem.schedule_slices());
    cp.groups[0].data[1] = 1.0;
    let obj = Objective::Linear {
        theta: cp.clone(),
        p: cp,
    };
    // the backup generator covers what the capped one cannot
    let wrt = ParameterSelector::new(0, ParamField::PMax).with_devices(vec![0]);
    let g = grad(&tape, &obj, &wrt).unwrap();
    assert!((g[0] + 1.0).abs() < 1e-6, "{g:?}");
}

#[test]
fn battery_requires_finite_differences() {
    let problem = Problem::base(cases::three_bus()).unwrap();
    let err = solve_with_tape(&problem, &quiet(1.0), 10).unwrap_err();
    assert!(
        matches!(err, Error::Unsupported(ref m) if m.contains("grad_fd")),
        "{err}"
    );
    let wrt = ParameterSelector::new(1, ParamField::PMax);
    let cfg = SolverConfig {
        tol: 1e-4,
        ..quiet(1.0)
    };
    let fd = grad_fd(&problem, &cfg, &Objective::TotalCost, &wrt, 1e-3, Some(50)).unwrap();
    assert!(fd.iter().all(|x| x.is_finite()));
}

#[test]
fn selector_validation() {
    let problem = Problem::base(cases::toy()).unwrap();
    let bad_field = ParameterSelector::new(0, ParamField::Capacity);
    assert!(matches!(
        bad_field.resolve(&problem),
        Err(Error::Selector(_))
    ));
    let bad_device = ParameterSelector::new(0, ParamField::PMax).with_devices(vec![3]);
    assert!(matches!(
        bad_device.resolve(&problem),
        Err(Error::Selector(_))
    ));
    assert!(matches!(
        ParameterSelector::new(9, ParamField::PMax).resolve(&problem),
        Err(Error::Selector(_))
    ));
}
