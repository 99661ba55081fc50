//! Proximal message passing.
//!
//! Contingency-group devices keep one schedule per slice `k = 0..=K`; every other device
//! keeps a single schedule that must balance all `K+1` slices at once. Scaled prices `u`
//! (power) are stored per node and `v` (phase) per terminal, so `ũ = 0` and `v̄ = 0` hold by
//! construction.

pub mod shadow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devices::{self, prox_into, GroupParams, ProxRequest, QpBatch};
use crate::error::{Error, Result};
use crate::network::Problem;
use crate::qp::InnerStop;
use crate::tensor::{
    node_average, node_average_into, node_residual_into, NodeTensor, ScheduleTensor,
};

/// Residual-balancing penalty updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub mu: f64,
    pub gamma: f64,
    pub every: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            mu: 2.0,
            gamma: 1.1,
            every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute tolerance `ε`.
    pub tol: f64,
    pub max_iter: usize,
    pub min_iter: usize,
    pub rho_p: f64,
    pub rho_theta: f64,
    /// Over-relaxation `α ∈ [1, 2)`.
    pub alpha: f64,
    pub adaptive: Option<AdaptiveConfig>,
    /// Inner ADMM stopping rule for QP-backed devices.
    pub inner: InnerStop,
    /// Inner ADMM penalty.
    pub omega: f64,
    /// Trace every n-th iteration; 0 disables the trace.
    pub trace_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 10_000,
            min_iter: 0,
            rho_p: 1.0,
            rho_theta: 1.0,
            alpha: 1.0,
            adaptive: Some(AdaptiveConfig::default()),
            inner: InnerStop::default(),
            omega: 1.0,
            trace_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tolerance must be positive");
        }
        if !(self.rho_p > 0.0 && self.rho_theta > 0.0)
            || !(self.rho_p.is_finite() && self.rho_theta.is_finite())
        {
            return bad("penalties must be positive");
        }
        if !(1.0..2.0).contains(&self.alpha) {
            return bad("over-relaxation must lie in [1, 2)");
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("inner penalty must be positive");
        }
        if self.min_iter > self.max_iter {
            return bad("min_iter exceeds max_iter");
        }
        if let Some(a) = &self.adaptive {
            if !(a.mu > 1.0 && a.gamma > 1.0 && a.every > 0) {
                return bad("adaptive penalties need mu > 1, gamma > 1, every > 0");
            }
        }
        match self.inner {
            InnerStop::Fixed(0) => bad("inner iterations must be positive"),
            InnerStop::Tolerance { tol, max_iter } if !(tol > 0.0) || max_iter == 0 => {
                bad("inner tolerance and iteration limit must be positive")
            }
            _ => Ok(()),
        }
    }
}

/// Outer iterate. `z` holds `K+1` slices in every group; `v` likewise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub p: ScheduleTensor,
    pub theta: ScheduleTensor,
    pub z: ScheduleTensor,
    pub xi: NodeTensor,
    pub u: NodeTensor,
    pub v: ScheduleTensor,
    pub rho_p: f64,
    pub rho_theta: f64,
    pub iter: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal_p: f64,
    pub primal_theta: f64,
    pub dual_p: f64,
    pub dual_theta: f64,
}

impl Residuals {
    pub fn primal(&self) -> f64 {
        self.primal_p.hypot(self.primal_theta)
    }

    pub fn dual(&self) -> f64 {
        self.dual_p.hypot(self.dual_theta)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.primal_p,
            self.primal_theta,
            self.dual_p,
            self.dual_theta,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub residuals: Residuals,
    pub rho_p: f64,
    pub rho_theta: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub p: ScheduleTensor,
    pub theta: ScheduleTensor,
    /// Node prices `−ρ_p u` per slice; summing over slices gives the price seen by shared devices.
    pub prices: NodeTensor,
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
    pub residuals: Residuals,
    pub trace: Vec<TraceRecord>,
    /// Final unpolished iterate, usable as a warm start.
    pub state: SolverState,
}

/// `ε·√(2JT(K+1))`
pub fn convergence_bound(problem: &Problem, tol: f64) -> f64 {
    let n = 2 * problem.topology.num_terminals * problem.horizon() * problem.num_slices();
    tol * (n as f64).sqrt()
}

pub fn check_convergence(res: &Residuals, problem: &Problem, tol: f64) -> bool {
    res.primal().max(res.dual()) <= convergence_bound(problem, tol)
}

/// All-zero state, or a copy of `warm` after a shape check.
pub fn init_state(
    problem: &Problem,
    warm: Option<&SolverState>,
    config: &SolverConfig,
) -> Result<SolverState> {
    let topo = &problem.topology;
    let k1 = problem.num_slices();
    let slices = problem.schedule_slices();
    let zero = SolverState {
        p: ScheduleTensor::zeros(topo, &slices),
        theta: ScheduleTensor::zeros(topo, &slices),
        z: ScheduleTensor::zeros_uniform(topo, k1),
        xi: NodeTensor::zeros(k1, topo.num_nodes, topo.horizon),
        u: NodeTensor::zeros(k1, topo.num_nodes, topo.horizon),
        v: ScheduleTensor::zeros_uniform(topo, k1),
        rho_p: config.rho_p,
        rho_theta: config.rho_theta,
        iter: 0,
    };
    let Some(w) = warm else {
        return Ok(zero);
    };
    let node_ok = |a: &NodeTensor, b: &NodeTensor| {
        (a.slices, a.nodes, a.horizon) == (b.slices, b.nodes, b.horizon)
    };
    if !(w.p.same_shape(&zero.p)
        && w.theta.same_shape(&zero.theta)
        && w.z.same_shape(&zero.z)
        && w.v.same_shape(&zero.v)
        && node_ok(&w.xi, &zero.xi)
        && node_ok(&w.u, &zero.u))
    {
        return Err(Error::Shape("warm start does not match the network".into()));
    }
    if !(w.rho_p > 0.0 && w.rho_theta > 0.0) {
        return Err(Error::Shape("warm start penalties must be positive".into()));
    }
    Ok(SolverState {
        iter: 0,
        ..w.clone()
    })
}

/// Mutable workspaces that persist across iterations: inner QP state per group.
pub struct Solver<'a> {
    problem: &'a Problem,
    config: SolverConfig,
    qp: Vec<Option<QpBatch>>,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a Problem, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let qp = (0..problem.network.groups.len())
            .map(|g| {
                let params = problem.params(g, 0);
                if params.kind().is_analytic() {
                    return Ok(None);
                }
                let slices: Vec<&GroupParams> = (0..problem.group_slices(g))
                    .map(|k| problem.params(g, k))
                    .collect();
                let (rp, rt) = group_penalties(problem, g, config.rho_p, config.rho_theta);
                QpBatch::new(&slices, problem.horizon(), rp, rt, config.omega).map(Some)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            problem,
            config,
            qp,
        })
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// One outer iteration; dispatches on `α`.
    pub fn iterate(&mut self, state: &mut SolverState) -> Result<Residuals> {
        if self.config.alpha == 1.0 {
            self.iterate_simplified(state)
        } else {
            self.iterate_relaxed(state)
        }
    }

    /// Message passing without stored duplicates: `z = p̃`, `ξ = θ̄` are recomputed from `(p, θ)`.
    pub fn iterate_simplified(&mut self, state: &mut SolverState) -> Result<Residuals> {
        let topo = &self.problem.topology;
        let k1 = self.problem.num_slices();
        let mut z = ScheduleTensor::zeros_uniform(topo, k1);
        let mut xi = NodeTensor::zeros(k1, topo.num_nodes, topo.horizon);
        let pbar = node_average(&state.p, topo)?;
        node_residual_into(&state.p, &pbar, topo, &mut z);
        node_average_into(&state.theta, topo, &mut xi);
        let next = self.half_step(state, &z, &xi)?;
        let res = Residuals {
            primal_p: next.pbar.terminal_norm(&topo.degree),
            primal_theta: next.thtil.norm(),
            dual_p: state.rho_p * diff_norm(&next.ptil.groups, &z.groups),
            dual_theta: state.rho_theta * node_diff_norm(&next.thbar, &xi, &topo.degree),
        };
        for (a, b) in state.u.data.iter_mut().zip(&next.pbar.data) {
            *a += b;
        }
        for (a, b) in state.v.iter_mut().zip(next.thtil.iter()) {
            *a += b;
        }
        state.p = next.p;
        state.theta = next.theta;
        state.z = next.ptil;
        state.xi = next.thbar;
        state.iter += 1;
        Ok(res)
    }

    /// ADMM with explicit duplicates and over-relaxation `α`.
    pub fn iterate_relaxed(&mut self, state: &mut SolverState) -> Result<Residuals> {
        let topo = &self.problem.topology;
        let alpha = self.config.alpha;
        let z_old = std::mem::replace(&mut state.z, ScheduleTensor { groups: vec![] });
        let xi_old = std::mem::replace(&mut state.xi, NodeTensor::zeros(0, 0, 0));
        let next = self.half_step(state, &z_old, &xi_old)?;
        let mut z = next.ptil;
        for (a, b) in z.iter_mut().zip(z_old.iter()) {
            *a = alpha * *a + (1.0 - alpha) * b;
        }
        let mut xi = next.thbar;
        for (a, b) in xi.data.iter_mut().zip(&xi_old.data) {
            *a = alpha * *a + (1.0 - alpha) * b;
        }
        let res = Residuals {
            primal_p: next.pbar.terminal_norm(&topo.degree),
            primal_theta: next.thtil.norm(),
            dual_p: state.rho_p * diff_norm(&z.groups, &z_old.groups),
            dual_theta: state.rho_theta * node_diff_norm(&xi, &xi_old, &topo.degree),
        };
        for (a, b) in state.u.data.iter_mut().zip(&next.pbar.data) {
            *a += alpha * b;
        }
        for (a, b) in state.v.iter_mut().zip(next.thtil.iter()) {
            *a += alpha * b;
        }
        state.p = next.p;
        state.theta = next.theta;
        state.z = z;
        state.xi = xi;
        state.iter += 1;
        Ok(res)
    }

    /// Prox step from duplicates `(z, ξ)` plus the projections of the new schedules.
    fn half_step(
        &mut self,
        state: &SolverState,
        z: &ScheduleTensor,
        xi: &NodeTensor,
    ) -> Result<HalfStep> {
        let problem = self.problem;
        let topo = &problem.topology;
        let k1 = problem.num_slices();
        let slices = problem.schedule_slices();
        let mut x = ScheduleTensor::zeros(topo, &slices);
        let mut y = ScheduleTensor::zeros(topo, &slices);
        targets(problem, z, xi, &state.u, &state.v, &mut x, &mut y);
        let mut p = ScheduleTensor::zeros(topo, &slices);
        let mut theta = ScheduleTensor::zeros(topo, &slices);
        self.prox_all(
            state.rho_p,
            state.rho_theta,
            &x,
            &y,
            self.config.inner,
            &mut p,
            &mut theta,
        )?;
        if !(p.all_finite() && theta.all_finite()) {
            return Err(Error::Diverged {
                iter: state.iter + 1,
                detail: "non-finite schedule after prox".into(),
            });
        }
        let pbar = node_average(&p, topo)?;
        let mut ptil = ScheduleTensor::zeros_uniform(topo, k1);
        node_residual_into(&p, &pbar, topo, &mut ptil);
        let thbar = node_average(&theta, topo)?;
        let mut thtil = ScheduleTensor::zeros_uniform(topo, k1);
        node_residual_into(&theta, &thbar, topo, &mut thtil);
        Ok(HalfStep {
            p,
            theta,
            pbar,
            ptil,
            thbar,
            thtil,
        })
    }

    /// Proxes of every group slice at the given outer penalties.
    #[allow(clippy::too_many_arguments)]
    pub fn prox_all(
        &mut self,
        rho_p: f64,
        rho_theta: f64,
        x: &ScheduleTensor,
        y: &ScheduleTensor,
        stop: InnerStop,
        p: &mut ScheduleTensor,
        theta: &mut ScheduleTensor,
    ) -> Result<()> {
        let problem = self.problem;
        let horizon = problem.horizon();
        for (g, batch) in self.qp.iter_mut().enumerate() {
            let (rp, rt) = group_penalties(problem, g, rho_p, rho_theta);
            if let Some(b) = batch.as_mut() {
                b.set_penalties(rp, rt)?;
            }
            for k in 0..problem.group_slices(g) {
                let req = ProxRequest {
                    x: x.groups[g].slice(k),
                    y: y.groups[g].slice(k),
                    rho_p: rp,
                    rho_theta: rt,
                };
                let qp = batch.as_mut().map(|b| (b, k));
                prox_into(
                    problem.params(g, k),
                    horizon,
                    &req,
                    qp,
                    stop,
                    p.groups[g].slice_mut(k),
                    theta.groups[g].slice_mut(k),
                )?;
            }
        }
        Ok(())
    }

    /// Residual balancing; rescales the scaled prices when a penalty moves.
    pub fn adapt_penalties(&self, state: &mut SolverState, res: &Residuals) -> bool {
        let Some(a) = self.config.adaptive else {
            return false;
        };
        adapt_penalties(state, res, &a)
    }

    /// Objective of the current prox outputs, using inner locals for QP-backed devices.
    pub fn running_objective(&self, state: &SolverState) -> f64 {
        let problem = self.problem;
        let k1 = problem.num_slices() as f64;
        let mut total = 0.0;
        for (g, gt) in state.p.groups.iter().enumerate() {
            let weight = if g == problem.contingency_group() {
                1.0 / k1
            } else {
                1.0
            };
            for k in 0..gt.slices {
                let params = problem.params(g, k);
                for d in 0..gt.devices {
                    let c = match &self.qp[g] {
                        Some(b) => b
                            .factor(k, d)
                            .form()
                            .local_cost(&b.locals[k * gt.devices + d]),
                        None => devices::cost(
                            params,
                            d,
                            gt.device(k, d),
                            state.theta.groups[g].device(k, d),
                        ),
                    };
                    total += weight * c;
                }
            }
        }
        total
    }

    /// Re-solves the QP-backed proxes at the targets of `state` to a tight inner tolerance.
    pub fn polish(&mut self, state: &SolverState) -> Result<(ScheduleTensor, ScheduleTensor)> {
        let mut p = state.p.clone();
        let mut theta = state.theta.clone();
        if self.qp.iter().all(Option::is_none) {
            return Ok((p, theta));
        }
        let problem = self.problem;
        let topo = &problem.topology;
        let slices = problem.schedule_slices();
        let mut x = ScheduleTensor::zeros(topo, &slices);
        let mut y = ScheduleTensor::zeros(topo, &slices);
        targets(
            problem, &state.z, &state.xi, &state.u, &state.v, &mut x, &mut y,
        );
        let stop = InnerStop::Tolerance {
            tol: 1e-10,
            max_iter: 20_000,
        };
        let horizon = problem.horizon();
        for (g, batch) in self.qp.iter_mut().enumerate() {
            let Some(b) = batch.as_mut() else { continue };
            let (rp, rt) = group_penalties(problem, g, state.rho_p, state.rho_theta);
            b.set_penalties(rp, rt)?;
            for k in 0..problem.group_slices(g) {
                let req = ProxRequest {
                    x: x.groups[g].slice(k),
                    y: y.groups[g].slice(k),
                    rho_p: rp,
                    rho_theta: rt,
                };
                prox_into(
                    problem.params(g, k),
                    horizon,
                    &req,
                    Some((b, k)),
                    stop,
                    p.groups[g].slice_mut(k),
                    theta.groups[g].slice_mut(k),
                )?;
            }
        }
        Ok((p, theta))
    }

    /// Runs to convergence, `max_iter` or divergence.
    pub fn run(&mut self, mut state: SolverState) -> Result<Solution> {
        let problem = self.problem;
        let cfg = self.config.clone();
        let bound = convergence_bound(problem, cfg.tol);
        let rms_scale = bound / cfg.tol;
        let mut trace = Vec::new();
        let mut status = Status::MaxIter;
        let mut res = Residuals::default();
        for i in 1..=cfg.max_iter {
            let step = match self.iterate(&mut state) {
                Ok(r) => Some(r),
                Err(Error::Diverged { .. }) => None,
                Err(e) => return Err(e),
            };
            match step {
                Some(r) if r.is_finite() && r.primal().max(r.dual()) / rms_scale <= 1e9 => res = r,
                _ => {
                    status = Status::Diverged;
                    break;
                }
            }
            let done = i >= cfg.min_iter && res.primal().max(res.dual()) <= bound;
            if cfg.trace_every > 0 && (i % cfg.trace_every == 0 || done || i == cfg.max_iter) {
                trace.push(TraceRecord {
                    iter: i,
                    residuals: res,
                    rho_p: state.rho_p,
                    rho_theta: state.rho_theta,
                    objective: self.running_objective(&state),
                });
            }
            if done {
                status = Status::Converged;
                break;
            }
            if let Some(a) = cfg.adaptive {
                if i % a.every == 0 {
                    adapt_penalties(&mut state, &res, &a);
                }
            }
        }
        if status == Status::Diverged {
            let mut prices = state.u.clone();
            prices.scale(-state.rho_p);
            return Ok(Solution {
                p: state.p.clone(),
                theta: state.theta.clone(),
                prices,
                objective: f64::NAN,
                status,
                iterations: state.iter,
                residuals: res,
                trace,
                state,
            });
        }
        let (p, theta) = self.polish(&state)?;
        let objective = objective(problem, &p, &theta);
        let mut prices = state.u.clone();
        prices.scale(-state.rho_p);
        Ok(Solution {
            p,
            theta,
            prices,
            objective,
            status,
            iterations: state.iter,
            residuals: res,
            trace,
            state,
        })
    }
}

struct HalfStep {
    p: ScheduleTensor,
    theta: ScheduleTensor,
    pbar: NodeTensor,
    ptil: ScheduleTensor,
    thbar: NodeTensor,
    thtil: ScheduleTensor,
}

/// Prox penalties of group `g`: shared groups see all `K+1` slices at once.
pub fn group_penalties(problem: &Problem, g: usize, rho_p: f64, rho_theta: f64) -> (f64, f64) {
    if g == problem.contingency_group() {
        (rho_p, rho_theta)
    } else {
        let k1 = problem.num_slices() as f64;
        (k1 * rho_p, k1 * rho_theta)
    }
}

/// Prox targets: `(z − u, ξ − v)` per slice for the contingency group and their slice average
/// for shared groups. `z`, `v` have `K+1` slices everywhere; `x`, `y` follow the schedule shape.
pub fn targets(
    problem: &Problem,
    z: &ScheduleTensor,
    xi: &NodeTensor,
    u: &NodeTensor,
    v: &ScheduleTensor,
    x: &mut ScheduleTensor,
    y: &mut ScheduleTensor,
) {
    let topo = &problem.topology;
    let horizon = topo.horizon;
    let k1 = problem.num_slices();
    x.groups
        .par_iter_mut()
        .zip(y.groups.par_iter_mut())
        .enumerate()
        .for_each(|(g, (xg, yg))| {
            let map = &topo.node_of[g];
            let shared = xg.slices == 1 && k1 > 1;
            xg.data.fill(0.0);
            yg.data.fill(0.0);
            let len = xg.slice_len();
            for k in 0..k1 {
                let kk = if shared { 0 } else { k };
                let zs = z.groups[g].slice(k);
                let vs = v.groups[g].slice(k);
                let xs = &mut xg.data[kk * len..(kk + 1) * len];
                let ys = &mut yg.data[kk * len..(kk + 1) * len];
                for (b, &n) in map.iter().enumerate() {
                    let us = &u.data[u.index(k, n, 0)..][..horizon];
                    let es = &xi.data[xi.index(k, n, 0)..][..horizon];
                    let r = b * horizon..(b + 1) * horizon;
                    for (t, j) in r.enumerate() {
                        xs[j] += zs[j] - us[t];
                        ys[j] += es[t] - vs[j];
                    }
                }
            }
            if shared {
                let inv = k1 as f64;
                xg.data.iter_mut().for_each(|a| *a /= inv);
                yg.data.iter_mut().for_each(|a| *a /= inv);
            }
        });
}

/// Residual balancing for `x ∈ {p, θ}` independently; returns whether a penalty changed.
pub fn adapt_penalties(state: &mut SolverState, res: &Residuals, cfg: &AdaptiveConfig) -> bool {
    let rule = |primal: f64, dual: f64, rho: f64| {
        if primal > cfg.mu * dual {
            rho * cfg.gamma
        } else if dual > cfg.mu * primal {
            rho / cfg.gamma
        } else {
            rho
        }
    };
    let rho_p = rule(res.primal_p, res.dual_p, state.rho_p);
    let rho_theta = rule(res.primal_theta, res.dual_theta, state.rho_theta);
    let changed = rho_p != state.rho_p || rho_theta != state.rho_theta;
    if rho_p != state.rho_p {
        state.u.scale(state.rho_p / rho_p);
        state.rho_p = rho_p;
    }
    if rho_theta != state.rho_theta {
        state.v.scale(state.rho_theta / rho_theta);
        state.rho_theta = rho_theta;
    }
    changed
}

/// `Σ_shared cost + (1/(K+1)) Σ_k cost_k` over the contingency group; +∞ when any device is
/// infeasible beyond the cost tolerance.
pub fn objective(problem: &Problem, p: &ScheduleTensor, theta: &ScheduleTensor) -> f64 {
    let k1 = problem.num_slices() as f64;
    let mut total = 0.0;
    for (g, gt) in p.groups.iter().enumerate() {
        let weight = if g == problem.contingency_group() {
            1.0 / k1
        } else {
            1.0
        };
        for k in 0..gt.slices {
            let params = problem.params(g, k);
            let costs: Vec<f64> = (0..gt.devices)
                .into_par_iter()
                .map(|d| devices::cost(params, d, gt.device(k, d), theta.groups[g].device(k, d)))
                .collect();
            total += weight * costs.iter().sum::<f64>();
        }
    }
    total
}

fn diff_norm(a: &[crate::tensor::GroupTensor], b: &[crate::tensor::GroupTensor]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.data.iter().zip(&y.data))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn node_diff_norm(a: &NodeTensor, b: &NodeTensor, degree: &[usize]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.slices {
        for (n, &deg) in degree.iter().enumerate() {
            for t in 0..a.horizon {
                let d = a.get(k, n, t) - b.get(k, n, t);
                s += deg as f64 * d * d;
            }
        }
    }
    s.sqrt()
}

/// Cold or warm solve.
pub fn solve(
    problem: &Problem,
    config: &SolverConfig,
    warm: Option<&SolverState>,
) -> Result<Solution> {
    let state = init_state(problem, warm, config)?;
    Solver::new(problem, config.clone())?.run(state)
}

#[cfg(test)]
mod tests;
