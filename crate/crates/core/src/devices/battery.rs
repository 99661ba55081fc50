//! Storage device with charge `c`, discharge `δ` and state of charge `s`:
//!
//! ```text
//! p = δ − c,  s₁ = 0,  s_{t+1} = s_t + β c_t − δ_t,  s_{T+1} = 0,
//! 0 ≤ c, δ ≤ P,  0 ≤ s ≤ λP,  cost α Σ δ
//! ```

use super::{BatteryParams, FEAS_TOL};
use crate::qp::{QpDeviceForm, SparseRow};

/// QP encoding with locals `(c[T], δ[T], s[T+1])`.
pub fn form(b: &BatteryParams, horizon: usize) -> QpDeviceForm {
    let t_n = horizon;
    let p = |t: usize| t;
    let off = 2 * t_n;
    let c = |t: usize| off + t;
    let d = |t: usize| off + t_n + t;
    let s = |t: usize| off + 2 * t_n + t;
    let mut rows = Vec::with_capacity(8 * t_n + 4);
    for t in 0..t_n {
        rows.push(SparseRow {
            entries: vec![(p(t), 1.0), (d(t), -1.0), (c(t), 1.0)],
            rhs: 0.0,
        });
    }
    for t in 0..t_n {
        rows.push(SparseRow {
            entries: vec![
                (s(t + 1), 1.0),
                (s(t), -1.0),
                (c(t), -b.efficiency),
                (d(t), 1.0),
            ],
            rhs: 0.0,
        });
    }
    rows.push(SparseRow {
        entries: vec![(s(0), 1.0)],
        rhs: 0.0,
    });
    rows.push(SparseRow {
        entries: vec![(s(t_n), 1.0)],
        rhs: 0.0,
    });
    let num_eq = rows.len();
    let energy = b.duration * b.power_capacity;
    for t in 0..t_n {
        for (col, hi) in [(c(t), b.power_capacity), (d(t), b.power_capacity)] {
            rows.push(SparseRow {
                entries: vec![(col, -1.0)],
                rhs: 0.0,
            });
            rows.push(SparseRow {
                entries: vec![(col, 1.0)],
                rhs: hi,
            });
        }
    }
    for t in 0..=t_n {
        rows.push(SparseRow {
            entries: vec![(s(t), -1.0)],
            rhs: 0.0,
        });
        rows.push(SparseRow {
            entries: vec![(s(t), 1.0)],
            rhs: energy,
        });
    }
    let mut lin = vec![0.0; 3 * t_n + 1];
    for t in 0..t_n {
        lin[t_n + t] = b.discharge_cost;
    }
    QpDeviceForm {
        terminals: 1,
        horizon,
        local_dim: 3 * t_n + 1,
        quad: vec![],
        lin,
        rows,
        num_eq,
    }
}

/// Exact cost of a power schedule, minimizing over the local variables.
///
/// Any feasible `(c, δ)` is the greedy split `c⁰ = max(−p, 0)`, `δ⁰ = max(p, 0)` plus a
/// simultaneous charge/discharge `e_t ≥ 0`. With `β < 1` the total `Σe` is pinned by the
/// terminal state of charge and feasibility of its cumulative path is an interval recursion.
pub fn cost(b: &BatteryParams, p: &[f64]) -> f64 {
    let cap = b.power_capacity;
    let energy = b.duration * cap;
    let beta = b.efficiency;
    if p.iter().any(|&x| x.abs() > cap + FEAS_TOL) {
        return f64::INFINITY;
    }
    let mut s0 = vec![0.0; p.len() + 1];
    let mut discharge = 0.0;
    for (t, &x) in p.iter().enumerate() {
        let (c, d) = (x.min(0.0).abs(), x.max(0.0));
        discharge += d;
        s0[t + 1] = s0[t] + beta * c - d;
    }
    let last = *s0.last().unwrap();
    if beta >= 1.0 {
        let ok =
            last.abs() <= FEAS_TOL && s0.iter().all(|&s| s >= -FEAS_TOL && s <= energy + FEAS_TOL);
        return if ok {
            b.discharge_cost * discharge
        } else {
            f64::INFINITY
        };
    }
    let loss = 1.0 - beta;
    let total = last / loss;
    if total < -FEAS_TOL / loss {
        return f64::INFINITY;
    }
    let total = total.max(0.0);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for (t, &x) in p.iter().enumerate() {
        let room = (cap - x.abs()).max(0.0);
        let upper = (s0[t + 1] + FEAS_TOL) / loss;
        let lower = (s0[t + 1] - energy - FEAS_TOL) / loss;
        lo = lo.max(lower);
        hi = (hi + room).min(upper);
        if lo > hi + FEAS_TOL / loss {
            return f64::INFINITY;
        }
    }
    if total < lo - FEAS_TOL / loss || total > hi + FEAS_TOL / loss {
        return f64::INFINITY;
    }
    b.discharge_cost * (discharge + total)
}
