//! Unsimplified ADMM with every quantity stored per terminal.
//!
//! Runs the four-step update literally: prox, projection of `(p + u, θ + v)` onto
//! `{z̄ = 0}` and `{ξ̃ = 0}`, then `u += p − z`, `v += θ − ξ`. Used to check that the
//! node-level representation of the main loop loses nothing.

use crate::error::Result;
use crate::network::Problem;
use crate::tensor::{node_average, node_residual, ScheduleTensor};

use super::Solver;

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowState {
    pub p: ScheduleTensor,
    pub theta: ScheduleTensor,
    pub z: ScheduleTensor,
    pub xi: ScheduleTensor,
    pub u: ScheduleTensor,
    pub v: ScheduleTensor,
    pub rho_p: f64,
    pub rho_theta: f64,
}

impl ShadowState {
    pub fn zeros(problem: &Problem, rho_p: f64, rho_theta: f64) -> Self {
        let topo = &problem.topology;
        let slices = problem.schedule_slices();
        let full = || ScheduleTensor::zeros_uniform(topo, problem.num_slices());
        Self {
            p: ScheduleTensor::zeros(topo, &slices),
            theta: ScheduleTensor::zeros(topo, &slices),
            z: full(),
            xi: full(),
            u: full(),
            v: full(),
            rho_p,
            rho_theta,
        }
    }
}

/// Copies shared-group slices across all `K+1` slices.
pub fn broadcast(x: &ScheduleTensor, k1: usize) -> ScheduleTensor {
    let mut out = x.clone();
    for g in &mut out.groups {
        if g.slices == 1 && k1 > 1 {
            let one = g.data.clone();
            g.data = one.repeat(k1);
            g.slices = k1;
        }
    }
    out
}

/// `Σ_k` for shared groups, identity for the contingency group, divided by `K+1` for shared ones.
fn slice_mean(x: &ScheduleTensor, slices: &[usize]) -> ScheduleTensor {
    let mut out = crate::tensor::reduce_broadcast(x, slices);
    let k1 = x.groups.iter().map(|g| g.slices).max().unwrap_or(1) as f64;
    for (g, &s) in out.groups.iter_mut().zip(slices) {
        if s == 1 && k1 > 1.0 {
            g.data.iter_mut().for_each(|a| *a /= k1);
        }
    }
    out
}

pub fn shadow_iterate(solver: &mut Solver<'_>, st: &mut ShadowState) -> Result<()> {
    let problem = solver.problem();
    let topo = &problem.topology;
    let k1 = problem.num_slices();
    let slices = problem.schedule_slices();
    let mut zx = st.z.clone();
    zx.axpy(-1.0, &st.u);
    let mut yx = st.xi.clone();
    yx.axpy(-1.0, &st.v);
    let x = slice_mean(&zx, &slices);
    let y = slice_mean(&yx, &slices);
    let inner = solver.config().inner;
    let (rp, rt) = (st.rho_p, st.rho_theta);
    solver.prox_all(rp, rt, &x, &y, inner, &mut st.p, &mut st.theta)?;
    let mut pu = broadcast(&st.p, k1);
    pu.axpy(1.0, &st.u);
    let mut tv = broadcast(&st.theta, k1);
    tv.axpy(1.0, &st.v);
    st.z = node_residual(&pu, &node_average(&pu, topo)?, topo)?;
    st.xi = crate::tensor::gather_to_terminals(&node_average(&tv, topo)?, topo)?;
    let pb = broadcast(&st.p, k1);
    let tb = broadcast(&st.theta, k1);
    st.u.axpy(1.0, &pb);
    st.u.axpy(-1.0, &st.z);
    st.v.axpy(1.0, &tb);
    st.v.axpy(-1.0, &st.xi);
    Ok(())
}

/// `(max |ũ|, max |v̄|)`: both vanish when the dual structure is preserved.
pub fn dual_structure_defect(problem: &Problem, st: &ShadowState) -> Result<(f64, f64)> {
    let topo = &problem.topology;
    let u_res = node_residual(&st.u, &node_average(&st.u, topo)?, topo)?;
    let v_avg = node_average(&st.v, topo)?;
    let vmax = v_avg.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok((u_res.max_abs(), vmax))
}
