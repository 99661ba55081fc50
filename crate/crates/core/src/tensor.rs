//! Node averages and residuals as scatter/gather over per-group schedule tensors.
//!
//! A [`GroupTensor`] stores `slices × devices × τ × T` entries at
//! `((k·devices + d)·τ + i)·T + t`. Shared groups carry one slice that broadcasts
//! against every contingency; broadcasting is index arithmetic only.
//!
//! Scatter sums run group-major, then slot, then device, so every reduction is
//! bitwise reproducible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Topology;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTensor {
    pub slices: usize,
    pub devices: usize,
    pub terminals: usize,
    pub horizon: usize,
    pub data: Vec<f64>,
}

impl GroupTensor {
    pub fn zeros(slices: usize, devices: usize, terminals: usize, horizon: usize) -> Self {
        Self {
            slices,
            devices,
            terminals,
            horizon,
            data: vec![0.0; slices * devices * terminals * horizon],
        }
    }

    /// Entries per slice.
    pub fn slice_len(&self) -> usize {
        self.devices * self.terminals * self.horizon
    }

    /// Entries per device block.
    pub fn block(&self) -> usize {
        self.terminals * self.horizon
    }

    #[inline]
    pub fn index(&self, k: usize, d: usize, i: usize, t: usize) -> usize {
        ((k * self.devices + d) * self.terminals + i) * self.horizon + t
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.slice_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.slice_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn device(&self, k: usize, d: usize) -> &[f64] {
        let b = self.block();
        let start = (k * self.devices + d) * b;
        &self.data[start..start + b]
    }
}

/// Per-group schedules (`p`, `θ`, `z`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTensor {
    pub groups: Vec<GroupTensor>,
}

impl ScheduleTensor {
    /// Zero tensor with `slices[g]` slices for group `g`.
    pub fn zeros(topo: &Topology, slices: &[usize]) -> Self {
        Self {
            groups: topo
                .shapes
                .iter()
                .zip(slices)
                .map(|(&(d, tau), &k)| GroupTensor::zeros(k, d, tau, topo.horizon))
                .collect(),
        }
    }

    /// Zero tensor with `k` slices in every group.
    pub fn zeros_uniform(topo: &Topology, k: usize) -> Self {
        Self::zeros(topo, &vec![k; topo.shapes.len()])
    }

    pub fn slice_counts(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.slices).collect()
    }

    pub fn fill(&mut self, v: f64) {
        for g in &mut self.groups {
            g.data.fill(v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.groups.iter().flat_map(|g| g.data.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.groups.iter_mut().flat_map(|g| g.data.iter_mut())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.groups.len() == other.groups.len()
            && self.groups.iter().zip(&other.groups).all(|(a, b)| {
                (a.slices, a.devices, a.terminals, a.horizon)
                    == (b.slices, b.devices, b.terminals, b.horizon)
            })
    }

    /// `self += a·x` (shapes must agree).
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (u, v) in self.iter_mut().zip(x.iter()) {
            *u += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for u in self.iter_mut() {
            *u *= a;
        }
    }
}

/// `(K+1) × N × T` node quantities (`p̄`, `θ̄`, `u`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTensor {
    pub slices: usize,
    pub nodes: usize,
    pub horizon: usize,
    pub data: Vec<f64>,
}

impl NodeTensor {
    pub fn zeros(slices: usize, nodes: usize, horizon: usize) -> Self {
        Self {
            slices,
            nodes,
            horizon,
            data: vec![0.0; slices * nodes * horizon],
        }
    }

    #[inline]
    pub fn index(&self, k: usize, n: usize, t: usize) -> usize {
        (k * self.nodes + n) * self.horizon + t
    }

    pub fn get(&self, k: usize, n: usize, t: usize) -> f64 {
        self.data[self.index(k, n, t)]
    }

    pub fn slice_len(&self) -> usize {
        self.nodes * self.horizon
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Norm with every node counted once per attached terminal, i.e. the norm of the
    /// gathered terminal field.
    pub fn terminal_norm(&self, degree: &[usize]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.slices {
            for (n, &deg) in degree.iter().enumerate() {
                for t in 0..self.horizon {
                    let v = self.get(k, n, t);
                    s += deg as f64 * v * v;
                }
            }
        }
        s.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        for u in &mut self.data {
            *u *= a;
        }
    }
}

fn check_schedule(x: &ScheduleTensor, topo: &Topology) -> Result<()> {
    if x.groups.len() != topo.shapes.len() {
        return Err(Error::Shape(format!(
            "schedule tensor has {} groups, network has {}",
            x.groups.len(),
            topo.shapes.len()
        )));
    }
    for (g, (gt, &(d, tau))) in x.groups.iter().zip(&topo.shapes).enumerate() {
        if gt.devices != d || gt.terminals != tau || gt.horizon != topo.horizon {
            return Err(Error::Shape(format!(
                "group {g}: tensor is {}×{}×{}, network expects {}×{}×{}",
                gt.devices, gt.terminals, gt.horizon, d, tau, topo.horizon
            )));
        }
        if gt.data.len() != gt.slices * gt.slice_len() {
            return Err(Error::Shape(format!("group {g}: data length mismatch")));
        }
    }
    Ok(())
}

fn slices_of(x: &ScheduleTensor) -> usize {
    x.groups.iter().map(|g| g.slices).max().unwrap_or(1)
}

/// Node sums `Σ_{j∈n} x[k, j, t]` into `out` (one `(k, ·, ·)` slice per contingency).
fn scatter_into(x: &ScheduleTensor, topo: &Topology, out: &mut NodeTensor) {
    let horizon = topo.horizon;
    let slice = out.slice_len();
    out.data
        .par_chunks_mut(slice.max(1))
        .enumerate()
        .for_each(|(k, acc)| {
            acc.fill(0.0);
            for (g, gt) in x.groups.iter().enumerate() {
                let kk = if gt.slices == 1 { 0 } else { k };
                let tau = gt.terminals;
                let map = &topo.node_of[g];
                for i in 0..tau {
                    for d in 0..gt.devices {
                        let n = map[d * tau + i];
                        let src = &gt.data[gt.index(kk, d, i, 0)..][..horizon];
                        let dst = &mut acc[n * horizon..(n + 1) * horizon];
                        for (a, b) in dst.iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
            }
        });
}

/// Sum of terminal values per node.
pub fn scatter_sum(x: &ScheduleTensor, topo: &Topology) -> Result<NodeTensor> {
    check_schedule(x, topo)?;
    let mut out = NodeTensor::zeros(slices_of(x), topo.num_nodes, topo.horizon);
    scatter_into(x, topo, &mut out);
    Ok(out)
}

/// `x̄[k, n, t] = (1/|n|) Σ_{j∈n} x[k, j, t]`, shared groups broadcast across `k`.
pub fn node_average(x: &ScheduleTensor, topo: &Topology) -> Result<NodeTensor> {
    check_schedule(x, topo)?;
    let mut out = NodeTensor::zeros(slices_of(x), topo.num_nodes, topo.horizon);
    node_average_into(x, topo, &mut out);
    Ok(out)
}

/// Allocation-free [`node_average`]; `out` must already have the right shape.
pub fn node_average_into(x: &ScheduleTensor, topo: &Topology, out: &mut NodeTensor) {
    scatter_into(x, topo, out);
    let horizon = topo.horizon;
    let slice = out.slice_len();
    out.data.par_chunks_mut(slice.max(1)).for_each(|acc| {
        for (n, &deg) in topo.degree.iter().enumerate() {
            let inv = 1.0 / deg as f64;
            for v in &mut acc[n * horizon..(n + 1) * horizon] {
                *v *= inv;
            }
        }
    });
}

/// `out[k, j, t] = y[k, node(j), t]`; every group gets `y.slices` slices.
pub fn gather_to_terminals(y: &NodeTensor, topo: &Topology) -> Result<ScheduleTensor> {
    check_node(y, topo)?;
    let mut out = ScheduleTensor::zeros_uniform(topo, y.slices);
    gather_into(y, topo, &mut out, 1.0);
    Ok(out)
}

fn check_node(y: &NodeTensor, topo: &Topology) -> Result<()> {
    if y.nodes != topo.num_nodes || y.horizon != topo.horizon {
        return Err(Error::Shape(format!(
            "node tensor is {}×{}, network has {} nodes and horizon {}",
            y.nodes, y.horizon, topo.num_nodes, topo.horizon
        )));
    }
    Ok(())
}

/// `out[k, j, t] = s · y[k, node(j), t]` for every slice of `out`.
pub fn gather_into(y: &NodeTensor, topo: &Topology, out: &mut ScheduleTensor, s: f64) {
    let horizon = topo.horizon;
    for (g, gt) in out.groups.iter_mut().enumerate() {
        let map = &topo.node_of[g];
        let len = gt.slice_len();
        gt.data
            .par_chunks_mut(len.max(1))
            .enumerate()
            .for_each(|(k, dst)| {
                for (b, row) in dst.chunks_mut(horizon).enumerate() {
                    let n = map[b];
                    let src = &y.data[y.index(k, n, 0)..][..horizon];
                    for (a, v) in row.iter_mut().zip(src) {
                        *a = s * v;
                    }
                }
            });
    }
}

/// `x[k, j, t] − avg[k, node(j), t]`; every group gets `avg.slices` slices.
pub fn node_residual(
    x: &ScheduleTensor,
    avg: &NodeTensor,
    topo: &Topology,
) -> Result<ScheduleTensor> {
    check_schedule(x, topo)?;
    check_node(avg, topo)?;
    let mut out = ScheduleTensor::zeros_uniform(topo, avg.slices);
    node_residual_into(x, avg, topo, &mut out);
    Ok(out)
}

/// Allocation-free [`node_residual`].
pub fn node_residual_into(
    x: &ScheduleTensor,
    avg: &NodeTensor,
    topo: &Topology,
    out: &mut ScheduleTensor,
) {
    let horizon = topo.horizon;
    for (g, (gt, src)) in out.groups.iter_mut().zip(&x.groups).enumerate() {
        let map = &topo.node_of[g];
        let len = gt.slice_len();
        gt.data
            .par_chunks_mut(len.max(1))
            .enumerate()
            .for_each(|(k, dst)| {
                let kk = if src.slices == 1 { 0 } else { k };
                let xs = src.slice(kk);
                for (b, row) in dst.chunks_mut(horizon).enumerate() {
                    let n = map[b];
                    let a = &avg.data[avg.index(k, n, 0)..][..horizon];
                    let xr = &xs[b * horizon..(b + 1) * horizon];
                    for t in 0..horizon {
                        row[t] = xr[t] - a[t];
                    }
                }
            });
    }
}

/// Adjoint of [`node_average`] for an input with per-group slice counts `slices`:
/// `g_x[k_j, j, t] += g[k, node(j), t] / |n|`, summed over `k` for shared groups.
pub fn average_adjoint(g: &NodeTensor, topo: &Topology, slices: &[usize]) -> ScheduleTensor {
    let mut out = ScheduleTensor::zeros(topo, slices);
    let horizon = topo.horizon;
    for (gi, gt) in out.groups.iter_mut().enumerate() {
        let map = &topo.node_of[gi];
        let len = gt.slice_len();
        let shared = gt.slices == 1 && g.slices > 1;
        for k in 0..g.slices {
            let kk = if shared { 0 } else { k };
            let dst = &mut gt.data[kk * len..(kk + 1) * len];
            for (b, row) in dst.chunks_mut(horizon).enumerate() {
                let n = map[b];
                let inv = 1.0 / topo.degree[n] as f64;
                let src = &g.data[g.index(k, n, 0)..][..horizon];
                for (a, v) in row.iter_mut().zip(src) {
                    *a += v * inv;
                }
            }
        }
    }
    out
}

/// Sums slices of `x` (K+1 slices everywhere) into per-group `slices` counts: identity
/// for contingency groups, sum over `k` for shared groups. Adjoint of broadcasting.
pub fn reduce_broadcast(x: &ScheduleTensor, slices: &[usize]) -> ScheduleTensor {
    ScheduleTensor {
        groups: x
            .groups
            .iter()
            .zip(slices)
            .map(|(gt, &s)| {
                if s == gt.slices {
                    gt.clone()
                } else {
                    let mut out = GroupTensor::zeros(1, gt.devices, gt.terminals, gt.horizon);
                    for k in 0..gt.slices {
                        for (a, b) in out.data.iter_mut().zip(gt.slice(k)) {
                            *a += b;
                        }
                    }
                    out
                }
            })
            .collect(),
    }
}
