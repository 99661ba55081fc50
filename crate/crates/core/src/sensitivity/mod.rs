//! Reverse-mode differentiation through a fixed number of solver iterations.
//!
//! One iteration maps `s = (z, ξ, u, v)` to `s⁺` through four pieces, each with a
//! hand-written tangent and adjoint:
//!
//! ```text
//! targets   (z, ξ, u, v)        → (x, y)                  linear
//! prox      (x, y; params)      → (p, θ)                  piecewise smooth
//! split     (p, θ)              → (p̄, p̃, θ̄, θ̃)            linear
//! update    (s, p̄, p̃, θ̄, θ̃)     → s⁺                      linear, includes ρ rescaling
//! ```
//!
//! Penalties and their rescaling factors are read from the tape as constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devices::{self, get_param, param_slots, shift_param, GroupParams, ParamField};
use crate::error::{Error, Result};
use crate::network::Problem;
use crate::solver::{
    self, adapt_penalties, group_penalties, init_state, Solver, SolverConfig, SolverState,
};
use crate::tensor::{
    average_adjoint, node_average, node_residual, reduce_broadcast, scatter_sum, NodeTensor,
    ScheduleTensor,
};

/// Default distance between stored full-state checkpoints.
pub const CHECKPOINT_EVERY: usize = 50;

/// Flat per-device parameter vector: `groups[g][(k·D + d)·slots + s]`, one slice per
/// parameter slice of the group (K+1 for the contingency group).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVec {
    pub groups: Vec<Vec<f64>>,
}

impl ParamVec {
    pub fn zeros(problem: &Problem) -> Self {
        let groups = problem
            .network
            .groups
            .iter()
            .enumerate()
            .map(|(g, grp)| {
                vec![0.0; problem.group_slices(g) * grp.count() * param_slots(grp.kind())]
            })
            .collect();
        Self { groups }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.groups
            .iter()
            .zip(&other.groups)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.groups.iter_mut().flatten()
    }
}

/// Tangent or cotangent of the carried state `(z, ξ, u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTangent {
    pub z: ScheduleTensor,
    pub xi: NodeTensor,
    pub u: NodeTensor,
    pub v: ScheduleTensor,
}

impl StateTangent {
    pub fn zeros(problem: &Problem) -> Self {
        let topo = &problem.topology;
        let k1 = problem.num_slices();
        Self {
            z: ScheduleTensor::zeros_uniform(topo, k1),
            xi: NodeTensor::zeros(k1, topo.num_nodes, topo.horizon),
            u: NodeTensor::zeros(k1, topo.num_nodes, topo.horizon),
            v: ScheduleTensor::zeros_uniform(topo, k1),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.z.dot(&other.z) + self.xi.dot(&other.xi) + self.u.dot(&other.u) + self.v.dot(&other.v)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.z
            .iter_mut()
            .chain(self.xi.data.iter_mut())
            .chain(self.u.data.iter_mut())
            .chain(self.v.iter_mut())
    }
}

/// Node averages and residuals of a schedule pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub pbar: NodeTensor,
    pub ptil: ScheduleTensor,
    pub thbar: NodeTensor,
    pub thtil: ScheduleTensor,
}

impl Split {
    pub fn dot(&self, other: &Self) -> f64 {
        self.pbar.dot(&other.pbar)
            + self.ptil.dot(&other.ptil)
            + self.thbar.dot(&other.thbar)
            + self.thtil.dot(&other.thtil)
    }
}

/// Which parameters to differentiate: one field of one group, optionally restricted to
/// some devices. Contingency-group gradients refer to the base parameters and collect
/// every slice that does not override the device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSelector {
    pub group: usize,
    pub field: ParamField,
    #[serde(default)]
    pub devices: Option<Vec<usize>>,
}

impl ParameterSelector {
    pub fn new(group: usize, field: ParamField) -> Self {
        Self {
            group,
            field,
            devices: None,
        }
    }

    pub fn with_devices(mut self, devices: Vec<usize>) -> Self {
        self.devices = Some(devices);
        self
    }

    /// Selected device indices together with the parameter slot.
    pub fn resolve(&self, problem: &Problem) -> Result<(Vec<usize>, usize)> {
        let grp = problem
            .network
            .groups
            .get(self.group)
            .ok_or_else(|| Error::Selector(format!("no group {}", self.group)))?;
        let slot = self.field.slot(grp.kind()).ok_or_else(|| {
            Error::Selector(format!(
                "{} is not a differentiable field of {} devices",
                self.field.name(),
                grp.kind().name()
            ))
        })?;
        let devices = match &self.devices {
            Some(list) => {
                if let Some(&d) = list.iter().find(|&&d| d >= grp.count()) {
                    return Err(Error::Selector(format!(
                        "group {} has {} devices, selector asks for {d}",
                        self.group,
                        grp.count()
                    )));
                }
                list.clone()
            }
            None => (0..grp.count()).collect(),
        };
        Ok((devices, slot))
    }

    /// Picks the selected entries out of a full parameter gradient.
    pub fn collect(&self, problem: &Problem, full: &ParamVec) -> Result<Vec<f64>> {
        let (devices, slot) = self.resolve(problem)?;
        let g = self.group;
        let count = problem.network.groups[g].count();
        let slots = param_slots(problem.network.groups[g].kind());
        let cg = problem.contingency_group();
        Ok(devices
            .iter()
            .map(|&d| {
                (0..problem.group_slices(g))
                    .filter(|&k| g != cg || !problem.is_overridden(k, d))
                    .map(|k| full.groups[g][(k * count + d) * slots + slot])
                    .sum()
            })
            .collect())
    }
}

/// Scalar function of the final schedules.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// The weighted system cost the solver minimizes.
    TotalCost,
    /// `⟨c_p, p⟩ + ⟨c_θ, θ⟩`.
    Linear {
        p: ScheduleTensor,
        theta: ScheduleTensor,
    },
}

impl Objective {
    pub fn value(&self, problem: &Problem, p: &ScheduleTensor, theta: &ScheduleTensor) -> f64 {
        match self {
            Objective::TotalCost => solver::objective(problem, p, theta),
            Objective::Linear { p: cp, theta: ct } => cp.dot(p) + ct.dot(theta),
        }
    }

    /// Partial derivatives of the objective at `(p, θ)`, written into `gp`, `gth` and added
    /// to `gparam`.
    fn seed(
        &self,
        problem: &Problem,
        p: &ScheduleTensor,
        theta: &ScheduleTensor,
        gp: &mut ScheduleTensor,
        gth: &mut ScheduleTensor,
        gparam: &mut ParamVec,
    ) -> Result<()> {
        match self {
            Objective::Linear { p: cp, theta: ct } => {
                if !cp.same_shape(p) || !ct.same_shape(theta) {
                    return Err(Error::Shape(
                        "linear objective does not match the schedule shape".into(),
                    ));
                }
                *gp = cp.clone();
                *gth = ct.clone();
            }
            // device constraints hold on every prox output, so only generator costs vary
            Objective::TotalCost => {
                let k1 = problem.num_slices() as f64;
                gp.fill(0.0);
                gth.fill(0.0);
                for (g, pg) in p.groups.iter().enumerate() {
                    let w = if g == problem.contingency_group() {
                        1.0 / k1
                    } else {
                        1.0
                    };
                    for k in 0..pg.slices {
                        let GroupParams::Generator(gens) = problem.params(g, k) else {
                            continue;
                        };
                        for (d, gen) in gens.iter().enumerate() {
                            let ps = pg.device(k, d);
                            let off = (k * gens.len() + d) * devices::generator::PARAMS;
                            let gd = &mut gp.groups[g].data[pg.index(k, d, 0, 0)..][..ps.len()];
                            for (a, &x) in gd.iter_mut().zip(ps) {
                                *a = w * (2.0 * gen.quadratic_cost * x + gen.linear_cost);
                            }
                            gparam.groups[g][off] += w * ps.iter().map(|x| x * x).sum::<f64>();
                            gparam.groups[g][off + 1] += w * ps.iter().sum::<f64>();
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn require_analytic(problem: &Problem) -> Result<()> {
    if let Some(g) = problem
        .network
        .groups
        .iter()
        .find(|g| g.count() > 0 && !g.kind().is_analytic())
    {
        return Err(Error::Unsupported(format!(
            "group '{}' has {} devices, which have no analytic derivative; use finite differences (grad_fd)",
            g.name,
            g.kind().name()
        )));
    }
    Ok(())
}

/// One recorded iteration: the solver step followed by the adaptive rule.
/// Returns the factors the scaled prices were multiplied by.
fn advance(solver: &mut Solver<'_>, state: &mut SolverState, i: usize) -> Result<(f64, f64)> {
    let res = solver.iterate(state)?;
    let mut scale = (1.0, 1.0);
    if let Some(a) = solver.config().adaptive {
        if i.is_multiple_of(a.every) {
            let (rp, rt) = (state.rho_p, state.rho_theta);
            adapt_penalties(state, &res, &a);
            scale = (rp / state.rho_p, rt / state.rho_theta);
        }
    }
    Ok(scale)
}

/// Recorded forward pass: checkpoints plus the penalty schedule.
#[derive(Clone, Debug)]
pub struct Tape<'a> {
    problem: &'a Problem,
    config: SolverConfig,
    iters: usize,
    every: usize,
    checkpoints: Vec<SolverState>,
    penalties: Vec<(f64, f64)>,
    rescale: Vec<(f64, f64)>,
    final_state: SolverState,
}

/// Runs exactly `iters` iterations from a cold start and records what the reverse pass needs.
pub fn solve_with_tape<'a>(
    problem: &'a Problem,
    config: &SolverConfig,
    iters: usize,
) -> Result<Tape<'a>> {
    solve_with_tape_every(problem, config, iters, CHECKPOINT_EVERY)
}

/// [`solve_with_tape`] with an explicit checkpoint interval.
pub fn solve_with_tape_every<'a>(
    problem: &'a Problem,
    config: &SolverConfig,
    iters: usize,
    every: usize,
) -> Result<Tape<'a>> {
    require_analytic(problem)?;
    if every == 0 {
        return Err(Error::Config("checkpoint interval must be positive".into()));
    }
    let mut solver = Solver::new(problem, config.clone())?;
    let mut state = init_state(problem, None, config)?;
    let mut checkpoints = Vec::with_capacity(iters / every + 1);
    let mut penalties = Vec::with_capacity(iters);
    let mut rescale = Vec::with_capacity(iters);
    for i in 0..iters {
        if i % every == 0 {
            checkpoints.push(state.clone());
        }
        penalties.push((state.rho_p, state.rho_theta));
        rescale.push(advance(&mut solver, &mut state, i + 1)?);
    }
    Ok(Tape {
        problem,
        config: config.clone(),
        iters,
        every,
        checkpoints,
        penalties,
        rescale,
        final_state: state,
    })
}

impl<'a> Tape<'a> {
    /// Number of recorded iterations.
    pub fn len(&self) -> usize {
        self.iters
    }

    pub fn is_empty(&self) -> bool {
        self.iters == 0
    }

    pub fn final_state(&self) -> &SolverState {
        &self.final_state
    }

    /// `(ρ_p, ρ_θ)` in force during each iteration.
    pub fn penalties(&self) -> &[(f64, f64)] {
        &self.penalties
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    /// Reruns every step from the first checkpoint.
    pub fn replay(&self) -> Result<SolverState> {
        let mut solver = Solver::new(self.problem, self.config.clone())?;
        let mut state = match self.checkpoints.first() {
            Some(s) => s.clone(),
            None => return Ok(self.final_state.clone()),
        };
        for i in 0..self.iters {
            advance(&mut solver, &mut state, i + 1)?;
        }
        Ok(state)
    }

    /// States entering iterations `start..end`, recomputed from the checkpoint at `start`.
    fn segment(&self, solver: &mut Solver<'_>, c: usize) -> Result<Vec<SolverState>> {
        let start = c * self.every;
        let end = (start + self.every).min(self.iters);
        let mut states = Vec::with_capacity(end - start);
        let mut state = self.checkpoints[c].clone();
        for i in start..end {
            states.push(state.clone());
            if i + 1 < end {
                advance(solver, &mut state, i + 1)?;
            }
        }
        Ok(states)
    }

    /// Gradient of `objective` with respect to every differentiable parameter slot.
    pub fn param_grad(&self, objective: &Objective) -> Result<ParamVec> {
        let problem = self.problem;
        let topo = &problem.topology;
        let slices = problem.schedule_slices();
        let fin = &self.final_state;
        let mut gparam = ParamVec::zeros(problem);
        let mut gp = ScheduleTensor::zeros(topo, &slices);
        let mut gth = ScheduleTensor::zeros(topo, &slices);
        objective.seed(problem, &fin.p, &fin.theta, &mut gp, &mut gth, &mut gparam)?;
        let mut adj = StateTangent::zeros(problem);
        let mut solver = Solver::new(problem, self.config.clone())?;
        let alpha = self.config.alpha;
        for c in (0..self.checkpoints.len()).rev() {
            let start = c * self.every;
            let states = self.segment(&mut solver, c)?;
            for (off, state) in states.iter().enumerate().rev() {
                let i = start + off;
                let direct = (i + 1 == self.iters).then_some((&gp, &gth));
                adj = step_vjp(
                    problem,
                    alpha,
                    state,
                    self.rescale[i],
                    &adj,
                    direct,
                    &mut gparam,
                )?;
            }
        }
        Ok(gparam)
    }
}

/// Gradient of `objective` at the end of the tape with respect to the selected parameters.
pub fn grad(tape: &Tape<'_>, objective: &Objective, wrt: &ParameterSelector) -> Result<Vec<f64>> {
    wrt.collect(tape.problem, &tape.param_grad(objective)?)
}

/// Runs exactly `iters` iterations with the same adaptive schedule as a tape.
pub fn run_fixed(problem: &Problem, config: &SolverConfig, iters: usize) -> Result<SolverState> {
    let mut solver = Solver::new(problem, config.clone())?;
    let mut state = init_state(problem, None, config)?;
    for i in 0..iters {
        advance(&mut solver, &mut state, i + 1)?;
    }
    Ok(state)
}

/// Central differences with relative step `h`. `iters = Some(n)` evaluates after exactly
/// `n` iterations; `None` solves with `config` to convergence. Works for every device kind.
pub fn grad_fd(
    problem: &Problem,
    config: &SolverConfig,
    objective: &Objective,
    wrt: &ParameterSelector,
    h: f64,
    iters: Option<usize>,
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (devices, _) = wrt.resolve(problem)?;
    let g = wrt.group;
    let eval = |d: usize, delta: f64| -> Result<f64> {
        let mut net = problem.network.clone();
        shift_param(&mut net.groups[g].params, d, wrt.field, delta);
        let perturbed = Problem::new(net, problem.contingencies.clone())?;
        let state = match iters {
            Some(n) => run_fixed(&perturbed, config, n)?,
            None => solver::solve(&perturbed, config, None)?.state,
        };
        let mut solver = Solver::new(&perturbed, config.clone())?;
        let (p, theta) = solver.polish(&state)?;
        Ok(objective.value(&perturbed, &p, &theta))
    };
    devices
        .iter()
        .map(|&d| {
            let x = get_param(&problem.network.groups[g].params, d, wrt.field).unwrap_or(0.0);
            let step = if x != 0.0 { h * x.abs() } else { h };
            Ok((eval(d, step)? - eval(d, -step)?) / (2.0 * step))
        })
        .collect()
}

/// Prox targets of a state, as the solver computes them.
pub fn step_targets(problem: &Problem, s: &StateTangent) -> (ScheduleTensor, ScheduleTensor) {
    let slices = problem.schedule_slices();
    let mut x = ScheduleTensor::zeros(&problem.topology, &slices);
    let mut y = x.clone();
    solver::targets(problem, &s.z, &s.xi, &s.u, &s.v, &mut x, &mut y);
    (x, y)
}

/// Adjoint of [`step_targets`].
pub fn targets_vjp(problem: &Problem, gx: &ScheduleTensor, gy: &ScheduleTensor) -> StateTangent {
    let topo = &problem.topology;
    let horizon = topo.horizon;
    let k1 = problem.num_slices();
    let mut out = StateTangent::zeros(problem);
    for (g, (xg, yg)) in gx.groups.iter().zip(&gy.groups).enumerate() {
        let shared = xg.slices == 1 && k1 > 1;
        let s = if shared { 1.0 / k1 as f64 } else { 1.0 };
        let map = &topo.node_of[g];
        for k in 0..k1 {
            let kk = if shared { 0 } else { k };
            let xs = xg.slice(kk);
            let ys = yg.slice(kk);
            let zs = out.z.groups[g].slice_mut(k);
            for (a, b) in zs.iter_mut().zip(xs) {
                *a += s * b;
            }
            let vs = out.v.groups[g].slice_mut(k);
            for (a, b) in vs.iter_mut().zip(ys) {
                *a -= s * b;
            }
            for (b, &n) in map.iter().enumerate() {
                let base = out.u.index(k, n, 0);
                for t in 0..horizon {
                    out.u.data[base + t] -= s * xs[b * horizon + t];
                    out.xi.data[base + t] += s * ys[b * horizon + t];
                }
            }
        }
    }
    out
}

/// Tangent of every device prox at targets `(x, y)`.
pub fn prox_jvp_all(
    problem: &Problem,
    rho: (f64, f64),
    (x, y): (&ScheduleTensor, &ScheduleTensor),
    dx: &ScheduleTensor,
    dy: &ScheduleTensor,
    dparam: &ParamVec,
) -> (ScheduleTensor, ScheduleTensor) {
    let mut dp = ScheduleTensor::zeros(&problem.topology, &problem.schedule_slices());
    let mut dth = dp.clone();
    for g in 0..problem.network.groups.len() {
        let (rp, rt) = group_penalties(problem, g, rho.0, rho.1);
        for k in 0..problem.group_slices(g) {
            let params = problem.params(g, k);
            let count = params.len();
            if count == 0 {
                continue;
            }
            let slots = param_slots(params.kind());
            let xs = x.groups[g].slice(k);
            let ys = y.groups[g].slice(k);
            let dxs = dx.groups[g].slice(k);
            let dys = dy.groups[g].slice(k);
            let block = xs.len() / count;
            let dpar = &dparam.groups[g][k * count * slots..(k + 1) * count * slots];
            dp.groups[g]
                .slice_mut(k)
                .par_chunks_mut(block.max(1))
                .zip(dth.groups[g].slice_mut(k).par_chunks_mut(block.max(1)))
                .enumerate()
                .for_each(|(d, (dpd, dtd))| {
                    let r = d * block..(d + 1) * block;
                    devices::prox_jvp(
                        params,
                        d,
                        &xs[r.clone()],
                        &ys[r.clone()],
                        rp,
                        rt,
                        &dxs[r.clone()],
                        &dys[r],
                        &dpar[d * slots..(d + 1) * slots],
                        dpd,
                        dtd,
                    );
                });
        }
    }
    (dp, dth)
}

/// Adjoint of [`prox_jvp_all`]: returns `(g_x, g_y)` and accumulates into `gparam`.
pub fn prox_vjp_all(
    problem: &Problem,
    rho: (f64, f64),
    x: &ScheduleTensor,
    y: &ScheduleTensor,
    gp: &ScheduleTensor,
    gth: &ScheduleTensor,
    gparam: &mut ParamVec,
) -> (ScheduleTensor, ScheduleTensor) {
    let mut gx = ScheduleTensor::zeros(&problem.topology, &problem.schedule_slices());
    let mut gy = gx.clone();
    for g in 0..problem.network.groups.len() {
        let (rp, rt) = group_penalties(problem, g, rho.0, rho.1);
        for k in 0..problem.group_slices(g) {
            let params = problem.params(g, k);
            let count = params.len();
            if count == 0 {
                continue;
            }
            let slots = param_slots(params.kind());
            let xs = x.groups[g].slice(k);
            let ys = y.groups[g].slice(k);
            let gps = gp.groups[g].slice(k);
            let gts = gth.groups[g].slice(k);
            let block = xs.len() / count;
            let gpar = &mut gparam.groups[g][k * count * slots..(k + 1) * count * slots];
            gx.groups[g]
                .slice_mut(k)
                .par_chunks_mut(block.max(1))
                .zip(gy.groups[g].slice_mut(k).par_chunks_mut(block.max(1)))
                .zip(gpar.par_chunks_mut(slots.max(1)))
                .enumerate()
                .for_each(|(d, ((gxd, gyd), gpd))| {
                    let r = d * block..(d + 1) * block;
                    devices::prox_vjp(
                        params,
                        d,
                        &xs[r.clone()],
                        &ys[r.clone()],
                        rp,
                        rt,
                        &gps[r.clone()],
                        &gts[r],
                        gxd,
                        gyd,
                        gpd,
                    );
                });
        }
    }
    (gx, gy)
}

/// Node averages and residuals of `(p, θ)`.
pub fn split(problem: &Problem, p: &ScheduleTensor, theta: &ScheduleTensor) -> Result<Split> {
    let topo = &problem.topology;
    let pbar = node_average(p, topo)?;
    let thbar = node_average(theta, topo)?;
    Ok(Split {
        ptil: node_residual(p, &pbar, topo)?,
        thtil: node_residual(theta, &thbar, topo)?,
        pbar,
        thbar,
    })
}

/// Adjoint of [`split`].
pub fn split_vjp(problem: &Problem, g: &Split) -> Result<(ScheduleTensor, ScheduleTensor)> {
    let topo = &problem.topology;
    let slices = problem.schedule_slices();
    let one = |bar: &NodeTensor, til: &ScheduleTensor| -> Result<ScheduleTensor> {
        let mut node = bar.clone();
        for (a, b) in node.data.iter_mut().zip(&scatter_sum(til, topo)?.data) {
            *a -= b;
        }
        let mut out = average_adjoint(&node, topo, &slices);
        out.axpy(1.0, &reduce_broadcast(til, &slices));
        Ok(out)
    };
    Ok((one(&g.pbar, &g.ptil)?, one(&g.thbar, &g.thtil)?))
}

/// `z⁺ = α p̃ + (1−α) z`, `ξ⁺ = α θ̄ + (1−α) ξ`, `u⁺ = c_u (u + α p̄)`, `v⁺ = c_v (v + α θ̃)`.
pub fn update(s: &StateTangent, sp: &Split, alpha: f64, scale: (f64, f64)) -> StateTangent {
    let mix = |a: &mut f64, b: f64| *a = alpha * *a + (1.0 - alpha) * b;
    let mut z = sp.ptil.clone();
    z.iter_mut().zip(s.z.iter()).for_each(|(a, &b)| mix(a, b));
    let mut xi = sp.thbar.clone();
    xi.data
        .iter_mut()
        .zip(&s.xi.data)
        .for_each(|(a, &b)| mix(a, b));
    let mut u = s.u.clone();
    u.data
        .iter_mut()
        .zip(&sp.pbar.data)
        .for_each(|(a, b)| *a = scale.0 * (*a + alpha * b));
    let mut v = s.v.clone();
    v.iter_mut()
        .zip(sp.thtil.iter())
        .for_each(|(a, b)| *a = scale.1 * (*a + alpha * b));
    StateTangent { z, xi, u, v }
}

/// Adjoint of [`update`] with respect to `(s, split)`.
pub fn update_vjp(g: &StateTangent, alpha: f64, scale: (f64, f64)) -> (StateTangent, Split) {
    let scaled = |x: &ScheduleTensor, a: f64| {
        let mut out = x.clone();
        out.scale(a);
        out
    };
    let scaled_node = |x: &NodeTensor, a: f64| {
        let mut out = x.clone();
        out.scale(a);
        out
    };
    let s = StateTangent {
        z: scaled(&g.z, 1.0 - alpha),
        xi: scaled_node(&g.xi, 1.0 - alpha),
        u: scaled_node(&g.u, scale.0),
        v: scaled(&g.v, scale.1),
    };
    let sp = Split {
        pbar: scaled_node(&g.u, alpha * scale.0),
        ptil: scaled(&g.z, alpha),
        thbar: scaled_node(&g.xi, alpha),
        thtil: scaled(&g.v, alpha * scale.1),
    };
    (s, sp)
}

fn carried(state: &SolverState) -> StateTangent {
    StateTangent {
        z: state.z.clone(),
        xi: state.xi.clone(),
        u: state.u.clone(),
        v: state.v.clone(),
    }
}

/// Tangent of one iteration at `state`: returns the state tangent and `(dp, dθ)` of the prox outputs.
pub fn step_jvp(
    problem: &Problem,
    alpha: f64,
    state: &SolverState,
    scale: (f64, f64),
    ds: &StateTangent,
    dparam: &ParamVec,
) -> Result<(StateTangent, ScheduleTensor, ScheduleTensor)> {
    let rho = (state.rho_p, state.rho_theta);
    let (x, y) = step_targets(problem, &carried(state));
    let (dx, dy) = step_targets(problem, ds);
    let (dp, dth) = prox_jvp_all(problem, rho, (&x, &y), &dx, &dy, dparam);
    let sp = split(problem, &dp, &dth)?;
    Ok((update(ds, &sp, alpha, scale), dp, dth))
}

/// Adjoint of [`step_jvp`]. `direct` adds cotangents on the prox outputs of this step.
pub fn step_vjp(
    problem: &Problem,
    alpha: f64,
    state: &SolverState,
    scale: (f64, f64),
    g: &StateTangent,
    direct: Option<(&ScheduleTensor, &ScheduleTensor)>,
    gparam: &mut ParamVec,
) -> Result<StateTangent> {
    let rho = (state.rho_p, state.rho_theta);
    let (mut gs, gsplit) = update_vjp(g, alpha, scale);
    let (mut gp, mut gth) = split_vjp(problem, &gsplit)?;
    if let Some((a, b)) = direct {
        gp.axpy(1.0, a);
        gth.axpy(1.0, b);
    }
    let (x, y) = step_targets(problem, &carried(state));
    let (gx, gy) = prox_vjp_all(problem, rho, &x, &y, &gp, &gth, gparam);
    let back = targets_vjp(problem, &gx, &gy);
    gs.z.axpy(1.0, &back.z);
    gs.v.axpy(1.0, &back.v);
    for (a, b) in gs.xi.data.iter_mut().zip(&back.xi.data) {
        *a += b;
    }
    for (a, b) in gs.u.data.iter_mut().zip(&back.u.data) {
        *a += b;
    }
    Ok(gs)
}

#[cfg(test)]
mod tests;
