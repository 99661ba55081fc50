//! Reference solver: the whole contingency-constrained problem as one QP.
//!
//! Variables are stacked per device block `(p, θ, s)`; shared devices get one block,
//! contingency-group devices one block per slice. Power balance and phase consistency are
//! explicit equality rows per `(k, n, t)`.

pub mod ipm;

use std::collections::{HashMap, HashSet};

use crate::devices::{qp_form, GroupParams, ParamField};
use crate::error::{Error, Result};
use crate::network::Problem;
use crate::tensor::{NodeTensor, ScheduleTensor};
use ipm::{DenseQp, IpmOptions, IpmStatus, LinRow};

/// Weight on `Σθ²` that removes the phase gauge freedom of each island.
const THETA_REG: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dual {
    Eq(usize),
    Ineq(usize),
}

/// Assembled problem and the bookkeeping to read schedules and duals back.
#[derive(Clone, Debug)]
pub struct MonolithicQp {
    pub qp: DenseQp,
    /// `blocks[g][k·D + d]`: first variable of the device block.
    blocks: Vec<Vec<usize>>,
    /// Balance row of `(k, n, t)` and how many slices share it.
    balance: Vec<(usize, usize)>,
    /// `(dual, coefficient)` pairs whose sum is `∂f*/∂param` for constraint-type parameters.
    param_rows: HashMap<(usize, usize, usize, ParamField), Vec<(Dual, f64)>>,
    theta_vars: Vec<usize>,
    slices: usize,
    nodes: usize,
    horizon: usize,
}

impl MonolithicQp {
    pub fn num_vars(&self) -> usize {
        self.qp.n
    }

    pub fn num_eq(&self) -> usize {
        self.qp.eq.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.qp.ineq.len()
    }
}

/// Builds the QP whose optimum is the weighted contingency-constrained objective.
pub fn assemble(problem: &Problem) -> MonolithicQp {
    let topo = &problem.topology;
    let horizon = topo.horizon;
    let k1 = problem.num_slices();
    let groups = &problem.network.groups;

    let mut n = 0;
    let mut blocks = Vec::with_capacity(groups.len());
    for (g, &(devices, tau)) in topo.shapes.iter().enumerate() {
        let mut offs = Vec::new();
        for k in 0..problem.group_slices(g) {
            let params = problem.params(g, k);
            for d in 0..devices {
                offs.push(n);
                let locals = qp_form(params, d, horizon).map_or(0, |f| f.local_dim);
                n += 2 * tau * horizon + locals;
            }
        }
        blocks.push(offs);
    }

    let mut qp = DenseQp::new(n);
    let mut param_rows: HashMap<_, Vec<(Dual, f64)>> = HashMap::new();
    let mut theta_vars = Vec::new();
    let eq = |qp: &mut DenseQp, coef: Vec<(usize, f64)>, rhs: f64| {
        qp.eq.push(LinRow::new(coef, rhs));
        qp.eq.len() - 1
    };
    let ineq = |qp: &mut DenseQp, coef: Vec<(usize, f64)>, rhs: f64| {
        qp.ineq.push(LinRow::new(coef, rhs));
        qp.ineq.len() - 1
    };

    for (g, &(devices, tau)) in topo.shapes.iter().enumerate() {
        let weight = if g == problem.contingency_group() {
            1.0 / k1 as f64
        } else {
            1.0
        };
        let block_len = tau * horizon;
        for k in 0..problem.group_slices(g) {
            let params = problem.params(g, k);
            for d in 0..devices {
                let base = blocks[g][k * devices + d];
                let p = |i: usize, t: usize| base + i * horizon + t;
                let th = |i: usize, t: usize| base + block_len + i * horizon + t;
                for v in base + block_len..base + 2 * block_len {
                    theta_vars.push(v);
                    qp.add_quad(v, v, THETA_REG);
                }
                let mut tag = |field: ParamField, dual: Dual, coef: f64| {
                    param_rows
                        .entry((g, k, d, field))
                        .or_default()
                        .push((dual, coef));
                };
                match params {
                    GroupParams::Generator(v) => {
                        let gen = &v[d];
                        for t in 0..horizon {
                            qp.add_quad(p(0, t), p(0, t), weight * gen.quadratic_cost);
                            qp.c[p(0, t)] += weight * gen.linear_cost;
                            if gen.p_min[t] == gen.p_max[t] {
                                let r = eq(&mut qp, vec![(p(0, t), 1.0)], gen.p_max[t]);
                                tag(ParamField::PMax, Dual::Eq(r), -0.5);
                                tag(ParamField::PMin, Dual::Eq(r), -0.5);
                            } else {
                                let r = ineq(&mut qp, vec![(p(0, t), 1.0)], gen.p_max[t]);
                                tag(ParamField::PMax, Dual::Ineq(r), -1.0);
                                let r = ineq(&mut qp, vec![(p(0, t), -1.0)], -gen.p_min[t]);
                                tag(ParamField::PMin, Dual::Ineq(r), 1.0);
                            }
                        }
                    }
                    GroupParams::FixedLoad(v) => {
                        for t in 0..horizon {
                            let r = eq(&mut qp, vec![(p(0, t), 1.0)], v[d].p_load[t]);
                            tag(ParamField::Load, Dual::Eq(r), -1.0);
                        }
                    }
                    GroupParams::AcLine(v) => {
                        let line = &v[d];
                        for t in 0..horizon {
                            eq(&mut qp, vec![(p(0, t), 1.0), (p(1, t), 1.0)], 0.0);
                            let mut flow = vec![(p(1, t), 1.0)];
                            if line.susceptance != 0.0 {
                                flow.push((th(0, t), -line.susceptance));
                                flow.push((th(1, t), line.susceptance));
                            }
                            let r = eq(&mut qp, flow, 0.0);
                            tag(ParamField::Susceptance, Dual::Eq(r), f64::NAN);
                            capacity_rows(&mut qp, &mut tag, p(1, t), line.capacity);
                        }
                    }
                    GroupParams::DcLine(v) => {
                        for t in 0..horizon {
                            eq(&mut qp, vec![(p(0, t), 1.0), (p(1, t), 1.0)], 0.0);
                            capacity_rows(&mut qp, &mut tag, p(1, t), v[d].capacity);
                        }
                    }
                    GroupParams::Battery(_) | GroupParams::GenericQp(_) => {
                        let form = qp_form(params, d, horizon).expect("QP-backed kind");
                        let local = base + 2 * block_len;
                        for &(i, j, v) in &form.quad {
                            let v = if i == j { weight * v } else { 2.0 * weight * v };
                            qp.add_quad(local + i, local + j, v);
                        }
                        for (j, &c) in form.lin.iter().enumerate() {
                            qp.c[local + j] += weight * c;
                        }
                        for (r, row) in form.rows.iter().enumerate() {
                            let coef = row.entries.iter().map(|&(j, a)| (base + j, a)).collect();
                            if r < form.num_eq {
                                eq(&mut qp, coef, row.rhs);
                            } else {
                                ineq(&mut qp, coef, row.rhs);
                            }
                        }
                    }
                }
            }
        }
    }

    // Terminals attached to each node: (group, device, slot).
    let mut at_node: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); topo.num_nodes];
    for (g, &(devices, tau)) in topo.shapes.iter().enumerate() {
        for d in 0..devices {
            for i in 0..tau {
                at_node[topo.node_of[g][d * tau + i]].push((g, d, i));
            }
        }
    }
    // Shared terminals first so they anchor phase consistency.
    for list in &mut at_node {
        list.sort_by_key(|&(g, d, i)| (g == problem.contingency_group(), g, d, i));
    }
    let var = |k: usize, (g, d, i): (usize, usize, usize), t: usize, phase: bool| {
        let (devices, tau) = topo.shapes[g];
        let kk = if problem.group_slices(g) == 1 { 0 } else { k };
        let base = blocks[g][kk * devices + d];
        base + usize::from(phase) * tau * horizon + i * horizon + t
    };
    let mut balance = vec![(0, 1); k1 * topo.num_nodes * horizon];
    let mut seen_balance: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut seen_phase: HashSet<(usize, usize)> = HashSet::new();
    let mut copies: HashMap<usize, usize> = HashMap::new();
    for k in 0..k1 {
        for (node, list) in at_node.iter().enumerate() {
            for t in 0..horizon {
                let mut vars: Vec<usize> = list.iter().map(|&j| var(k, j, t, false)).collect();
                vars.sort_unstable();
                let row = match seen_balance.get(&vars) {
                    Some(&r) => r,
                    None => {
                        let r = eq(&mut qp, vars.iter().map(|&v| (v, 1.0)).collect(), 0.0);
                        seen_balance.insert(vars, r);
                        r
                    }
                };
                *copies.entry(row).or_default() += 1;
                balance[(k * topo.num_nodes + node) * horizon + t] = (row, 0);
                let anchor = var(k, list[0], t, true);
                for &j in &list[1..] {
                    let other = var(k, j, t, true);
                    if other != anchor && seen_phase.insert((anchor, other)) {
                        eq(&mut qp, vec![(other, 1.0), (anchor, -1.0)], 0.0);
                    }
                }
            }
        }
    }
    for b in &mut balance {
        b.1 = copies[&b.0];
    }

    MonolithicQp {
        qp,
        blocks,
        balance,
        param_rows,
        theta_vars,
        slices: k1,
        nodes: topo.num_nodes,
        horizon,
    }
}

fn capacity_rows(
    qp: &mut DenseQp,
    tag: &mut impl FnMut(ParamField, Dual, f64),
    var: usize,
    cap: f64,
) {
    if cap == 0.0 {
        qp.eq.push(LinRow::new(vec![(var, 1.0)], 0.0));
        return;
    }
    qp.ineq.push(LinRow::new(vec![(var, 1.0)], cap));
    tag(ParamField::Capacity, Dual::Ineq(qp.ineq.len() - 1), -1.0);
    qp.ineq.push(LinRow::new(vec![(var, -1.0)], cap));
    tag(ParamField::Capacity, Dual::Ineq(qp.ineq.len() - 1), -1.0);
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub objective: f64,
    pub p: ScheduleTensor,
    pub theta: ScheduleTensor,
    /// `−y` of the balance rows; slices sharing one row split its dual evenly.
    pub prices: NodeTensor,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Solves the assembled QP. Certified infeasibility is an error.
pub fn solve_exact(problem: &Problem, m: &MonolithicQp, tol: f64) -> Result<OracleSolution> {
    let opts = IpmOptions {
        tol,
        ..IpmOptions::default()
    };
    let sol = ipm::solve(&m.qp, &opts)?;
    if sol.status == IpmStatus::Infeasible {
        return Err(Error::Infeasible(
            "the primal-dual iteration certified infeasibility".into(),
        ));
    }
    let topo = &problem.topology;
    let mut p = ScheduleTensor::zeros(topo, &problem.schedule_slices());
    let mut theta = p.clone();
    for (g, (pg, tg)) in p.groups.iter_mut().zip(theta.groups.iter_mut()).enumerate() {
        let block = pg.block();
        for (b, &base) in m.blocks[g].iter().enumerate() {
            pg.data[b * block..(b + 1) * block].copy_from_slice(&sol.x[base..base + block]);
            tg.data[b * block..(b + 1) * block]
                .copy_from_slice(&sol.x[base + block..base + 2 * block]);
        }
    }
    let mut prices = NodeTensor::zeros(m.slices, m.nodes, m.horizon);
    for (out, &(row, copies)) in prices.data.iter_mut().zip(&m.balance) {
        *out = -sol.y[row] / copies as f64;
    }
    let reg: f64 = m
        .theta_vars
        .iter()
        .map(|&v| THETA_REG * sol.x[v] * sol.x[v])
        .sum();
    Ok(OracleSolution {
        objective: sol.objective - reg,
        p,
        theta,
        prices,
        x: sol.x,
        y: sol.y,
        z: sol.z,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

/// Assemble and solve.
pub fn solve_problem(problem: &Problem, tol: f64) -> Result<(MonolithicQp, OracleSolution)> {
    let m = assemble(problem);
    let sol = solve_exact(problem, &m, tol)?;
    Ok((m, sol))
}

impl OracleSolution {
    /// `∂f*/∂x` for a parameter of device `d` in group `g`, with series fields shifted
    /// uniformly over time. Base parameters of the contingency group count in every slice
    /// that does not override the device. `None` for fields the kind lacks or parameters
    /// sitting on a degenerate (zero-width) constraint.
    pub fn param_gradient(
        &self,
        problem: &Problem,
        m: &MonolithicQp,
        g: usize,
        d: usize,
        field: ParamField,
    ) -> Option<f64> {
        let kind = problem.params(g, 0).kind();
        field.slot(kind)?;
        let k1 = problem.num_slices() as f64;
        let weight = if g == problem.contingency_group() {
            1.0 / k1
        } else {
            1.0
        };
        let horizon = problem.horizon();
        let mut total = 0.0;
        for k in 0..problem.group_slices(g) {
            if g == problem.contingency_group() && problem.is_overridden(k, d) {
                continue;
            }
            let devices = problem.topology.shapes[g].0;
            let base = m.blocks[g][k * devices + d];
            match field {
                ParamField::QuadraticCost => {
                    total += weight * (0..horizon).map(|t| self.x[base + t].powi(2)).sum::<f64>();
                }
                ParamField::LinearCost => {
                    total += weight * (0..horizon).map(|t| self.x[base + t]).sum::<f64>();
                }
                ParamField::Susceptance => {
                    // y·(p₂ − b(θ₁ − θ₂)): ∂/∂b = −y(θ₁ − θ₂)
                    let rows = m.param_rows.get(&(g, k, d, field))?;
                    let tb = base + 2 * horizon;
                    for (t, &(dual, _)) in rows.iter().enumerate() {
                        let Dual::Eq(r) = dual else { return None };
                        total -= self.y[r] * (self.x[tb + t] - self.x[tb + horizon + t]);
                    }
                }
                _ => {
                    let rows = m.param_rows.get(&(g, k, d, field))?;
                    for &(dual, coef) in rows {
                        total += coef
                            * match dual {
                                Dual::Eq(r) => self.y[r],
                                Dual::Ineq(r) => self.z[r],
                            };
                    }
                    if (field == ParamField::PMax || field == ParamField::PMin)
                        && rows.iter().any(|(d, _)| matches!(d, Dual::Eq(_)))
                    {
                        return None;
                    }
                }
            }
        }
        Some(total)
    }
}
