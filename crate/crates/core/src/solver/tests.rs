use super::shadow::{dual_structure_defect, shadow_iterate, ShadowState};
use super::*;
use crate::cases::{self, RandomCase};
use crate::network::{build_n_minus_1, DeviceRef};

fn toy() -> Problem {
    Problem::base(cases::toy()).unwrap()
}

fn quiet(tol: f64, max_iter: usize) -> SolverConfig {
    SolverConfig {
        tol,
        max_iter,
        trace_every: 0,
        ..SolverConfig::default()
    }
}

fn lines_n1(net: &crate::network::Network, count: usize) -> Problem {
    let g = net.contingency_group;
    let outages: Vec<_> = (0..count.min(net.groups[g].count()))
        .map(|device| DeviceRef { group: g, device })
        .collect();
    let spec = build_n_minus_1(net, &outages).unwrap();
    Problem::new(net.clone(), spec).unwrap()
}

#[test]
fn toy_converges_to_analytic_solution() {
    let problem = toy();
    let sol = solve(&problem, &quiet(1e-8, 20_000), None).unwrap();
    assert_eq!(sol.status, Status::Converged);
    assert!((sol.p.groups[0].data[0] - 4.0).abs() < 1e-6, "{:?}", sol.p);
    assert!((sol.objective - 4.0).abs() < 1e-6);
    assert!(
        (sol.prices.data[0] - 1.0).abs() < 1e-6,
        "price {}",
        sol.prices.data[0]
    );
}

#[test]
fn exact_fixed_point_has_zero_residuals() {
    let problem = toy();
    let cfg = quiet(1e-3, 10);
    let mut state = init_state(&problem, None, &cfg).unwrap();
    state.p.groups[0].data[0] = 4.0;
    state.p.groups[1].data[0] = -4.0;
    state.z = state.p.clone();
    state.u.data[0] = -1.0;
    let before = state.clone();
    let mut solver = Solver::new(&problem, cfg).unwrap();
    let res = solver.iterate(&mut state).unwrap();
    assert_eq!(res, Residuals::default());
    assert_eq!(state.p, before.p);
    assert_eq!(state.u, before.u);
}

#[test]
fn convergence_threshold() {
    let problem = toy();
    // J = 2, T = 1, K = 0: bound = ε·√4
    assert!((convergence_bound(&problem, 1e-3) - 2e-3).abs() < 1e-15);
    let at = Residuals {
        primal_p: 1e-3,
        dual_p: 1e-3,
        ..Default::default()
    };
    assert!(check_convergence(&at, &problem, 1e-3));
    assert!(check_convergence(&Residuals::default(), &problem, 1e-12));
    let above = Residuals {
        dual_theta: 2.0001e-3,
        ..Default::default()
    };
    assert!(!check_convergence(&above, &problem, 1e-3));
}

#[test]
fn adaptive_rule() {
    let problem = toy();
    let mut state = init_state(&problem, None, &SolverConfig::default()).unwrap();
    state.u.data[0] = 1.1;
    state.v.groups[0].data[0] = 2.0;
    let cfg = AdaptiveConfig::default();
    let res = Residuals {
        primal_p: 5.0,
        dual_p: 1.0,
        primal_theta: 1.0,
        dual_theta: 1.5,
    };
    assert!(adapt_penalties(&mut state, &res, &cfg));
    assert!((state.rho_p - 1.1).abs() < 1e-15);
    assert!((state.u.data[0] - 1.0).abs() < 1e-15);
    assert_eq!(state.rho_theta, 1.0);
    assert_eq!(state.v.groups[0].data[0], 2.0);

    let res = Residuals {
        primal_p: 1.0,
        dual_p: 1.0,
        primal_theta: 1.0,
        dual_theta: 3.0,
    };
    adapt_penalties(&mut state, &res, &cfg);
    assert!((state.rho_theta - 1.0 / 1.1).abs() < 1e-15);
    assert!((state.v.groups[0].data[0] - 2.2).abs() < 1e-14);
}

#[test]
fn warm_state_is_copied_and_checked() {
    let problem = Problem::base(cases::three_bus()).unwrap();
    let cfg = quiet(1e-3, 50);
    let sol = solve(&problem, &cfg, None).unwrap();
    let warm = init_state(&problem, Some(&sol.state), &cfg).unwrap();
    assert_eq!(
        SolverState {
            iter: sol.state.iter,
            ..warm
        },
        sol.state
    );

    let other = Problem::base(cases::random_case(1, &RandomCase::small(3, 3))).unwrap();
    assert!(matches!(
        init_state(&other, Some(&sol.state), &cfg),
        Err(Error::Shape(_))
    ));
}

#[test]
fn zero_start_by_default() {
    let problem = Problem::base(cases::three_bus()).unwrap();
    let s = init_state(&problem, None, &SolverConfig::default()).unwrap();
    assert!(s
        .p
        .iter()
        .chain(s.theta.iter())
        .chain(s.v.iter())
        .all(|&x| x == 0.0));
    assert!(s.u.data.iter().chain(&s.xi.data).all(|&x| x == 0.0));
}

#[test]
fn unit_relaxation_matches_simplified_bitwise() {
    for seed in 0..6 {
        let net = cases::random_case(seed, &RandomCase::small(4 + seed as usize % 4, 2));
        let problem = lines_n1(&net, 2);
        let cfg = quiet(1e-3, 100);
        let mut a = init_state(&problem, None, &cfg).unwrap();
        let mut b = a.clone();
        let mut sa = Solver::new(&problem, cfg.clone()).unwrap();
        let mut sb = Solver::new(&problem, cfg).unwrap();
        for _ in 0..60 {
            let ra = sa.iterate_simplified(&mut a).unwrap();
            let rb = sb.iterate_relaxed(&mut b).unwrap();
            assert_eq!(ra.primal_p.to_bits(), rb.primal_p.to_bits());
            assert_eq!(ra.dual_theta.to_bits(), rb.dual_theta.to_bits());
        }
        let bits = |s: &SolverState| {
            s.p.iter()
                .chain(s.theta.iter())
                .chain(s.v.iter())
                .chain(&s.u.data)
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b), "seed {seed}");
    }
}

#[test]
fn duplicates_keep_their_structure() {
    let net = cases::random_case(3, &RandomCase::small(6, 2));
    let problem = lines_n1(&net, 2);
    let cfg = SolverConfig {
        alpha: 1.5,
        ..quiet(1e-3, 100)
    };
    let mut state = init_state(&problem, None, &cfg).unwrap();
    let mut solver = Solver::new(&problem, cfg).unwrap();
    let topo = &problem.topology;
    for _ in 0..40 {
        solver.iterate(&mut state).unwrap();
        let zbar = crate::tensor::node_average(&state.z, topo).unwrap();
        assert!(zbar.data.iter().all(|x| x.abs() < 1e-10));
        let vbar = crate::tensor::node_average(&state.v, topo).unwrap();
        assert!(vbar.data.iter().all(|x| x.abs() < 1e-10));
    }
}

#[test]
fn shared_prox_equals_summed_penalty_minimizer() {
    // generator prox: argmin a p² + b p + Σ_k ρ/2 (p − x_k)², clamped
    let net = cases::random_case(5, &RandomCase::small(5, 1));
    let problem = lines_n1(&net, 3);
    let k1 = problem.num_slices();
    let topo = &problem.topology;
    let mut state = init_state(&problem, None, &SolverConfig::default()).unwrap();
    let mut rng_val = 0.37f64;
    let mut next = || {
        rng_val = (rng_val * 7.31 + 0.113).fract();
        rng_val * 4.0 - 2.0
    };
    state.z.iter_mut().for_each(|x| *x = next());
    state.u.data.iter_mut().for_each(|x| *x = next());
    let slices = problem.schedule_slices();
    let mut x = ScheduleTensor::zeros(topo, &slices);
    let mut y = ScheduleTensor::zeros(topo, &slices);
    targets(
        &problem, &state.z, &state.xi, &state.u, &state.v, &mut x, &mut y,
    );
    let mut p = ScheduleTensor::zeros(topo, &slices);
    let mut th = p.clone();
    let rho = 0.7;
    let mut solver = Solver::new(&problem, SolverConfig::default()).unwrap();
    solver
        .prox_all(rho, rho, &x, &y, InnerStop::default(), &mut p, &mut th)
        .unwrap();
    let g = 2;
    let crate::devices::GroupParams::Generator(gens) = problem.params(g, 0) else {
        panic!()
    };
    for (d, gen) in gens.iter().enumerate() {
        let n = topo.node_of[g][d];
        let sum: f64 = (0..k1)
            .map(|k| state.z.groups[g].slice(k)[d] - state.u.get(k, n, 0))
            .sum();
        let want = ((rho * sum - gen.linear_cost) / (2.0 * gen.quadratic_cost + k1 as f64 * rho))
            .clamp(gen.p_min[0], gen.p_max[0]);
        assert!((p.groups[g].data[d] - want).abs() < 1e-12);
    }
}

#[test]
fn shadow_preserves_dual_structure_and_matches() {
    let net = cases::random_case(11, &RandomCase::small(5, 2));
    let problem = lines_n1(&net, 2);
    let cfg = quiet(1e-3, 200);
    let mut main = init_state(&problem, None, &cfg).unwrap();
    let mut shadow = ShadowState::zeros(&problem, cfg.rho_p, cfg.rho_theta);
    let mut s1 = Solver::new(&problem, cfg.clone()).unwrap();
    let mut s2 = Solver::new(&problem, cfg).unwrap();
    for _ in 0..150 {
        s1.iterate(&mut main).unwrap();
        shadow_iterate(&mut s2, &mut shadow).unwrap();
        let (du, dv) = dual_structure_defect(&problem, &shadow).unwrap();
        assert!(du <= 1e-12 && dv <= 1e-12, "{du} {dv}");
    }
    let diff = main
        .p
        .iter()
        .zip(shadow.p.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn infeasible_case_does_not_converge() {
    let mut net = cases::toy();
    if let crate::devices::GroupParams::FixedLoad(l) = &mut net.groups[1].params {
        l[0].p_load = vec![-20.0];
    }
    let problem = Problem::base(net).unwrap();
    let sol = solve(&problem, &quiet(1e-4, 2000), None).unwrap();
    assert_ne!(sol.status, Status::Converged);
    assert!(sol.residuals.primal() > 1e-2);
}

#[test]
fn relaxed_and_adaptive_three_bus_with_battery() {
    // shared devices pin every node's phase across slices, so one outage is the most
    // the three-bus network can absorb without curtailment
    let problem = lines_n1(&cases::three_bus(), 1);
    for alpha in [1.0, 1.5] {
        let cfg = SolverConfig {
            alpha,
            ..quiet(1e-4, 20_000)
        };
        let sol = solve(&problem, &cfg, None).unwrap();
        assert_eq!(sol.status, Status::Converged, "alpha {alpha}");
        assert!(sol.objective.is_finite());
    }
}

#[test]
fn invalid_config_is_rejected() {
    let problem = toy();
    for cfg in [
        SolverConfig {
            alpha: 2.0,
            ..Default::default()
        },
        SolverConfig {
            tol: 0.0,
            ..Default::default()
        },
        SolverConfig {
            rho_p: -1.0,
            ..Default::default()
        },
        SolverConfig {
            inner: InnerStop::Fixed(0),
            ..Default::default()
        },
    ] {
        assert!(matches!(Solver::new(&problem, cfg), Err(Error::Config(_))));
    }
}
