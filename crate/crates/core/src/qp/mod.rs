//! Proximal operators for devices whose cost is the optimal value of a small QP:
//!
//! ```text
//! f(p, θ) = min_s  sᵀQs + qᵀs   s.t.  A [p; θ; s] (= | ≤) b
//! ```
//!
//! The prox is evaluated with an inner ADMM that splits the inequality rows through
//! a slack `β ≤ 0`. Its first step is an equality-constrained QP whose bordered KKT
//! matrix depends only on the form and the penalties, so it is factorized once and
//! reused until a penalty changes.

pub mod banded;
pub mod ordering;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use banded::{BandLu, BandMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    /// `(column, coefficient)` over the stacked vector `(p, θ, s)`.
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, a)| a * w[j]).sum()
    }
}

/// A device cost in quadratic-program form.
///
/// Columns of the constraint rows index the stacked vector `w = (p, θ, s)` where
/// `p[i·T + t]` is the power on terminal `i` at time `t`, `θ` follows the same layout
/// at offset `τT` and the local variables start at `2τT`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpDeviceForm {
    pub terminals: usize,
    pub horizon: usize,
    pub local_dim: usize,
    /// Upper-triangle entries `(i, j, Q_ij)` with `i ≤ j`, indices into `s`.
    #[serde(default)]
    pub quad: Vec<(usize, usize, f64)>,
    /// Linear cost on `s`; empty means zero.
    #[serde(default)]
    pub lin: Vec<f64>,
    /// Equality rows first, then inequality rows (`row · w ≤ rhs`).
    #[serde(default)]
    pub rows: Vec<SparseRow>,
    #[serde(default)]
    pub num_eq: usize,
}

impl QpDeviceForm {
    /// Inequality-only form from dense blocks: `A₁ p + A₂ θ + A₃ s ≤ b`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_dense(
        terminals: usize,
        horizon: usize,
        q_mat: &[Vec<f64>],
        q: &[f64],
        a1: &[Vec<f64>],
        a2: &[Vec<f64>],
        a3: &[Vec<f64>],
        b: &[f64],
    ) -> Self {
        let n = terminals * horizon;
        let mu = q.len();
        let mut quad = Vec::new();
        for (i, row) in q_mat.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().skip(i) {
                if v != 0.0 {
                    quad.push((i, j, v));
                }
            }
        }
        let rows = b
            .iter()
            .enumerate()
            .map(|(r, &rhs)| {
                let mut entries = Vec::new();
                for (block, off) in [(a1, 0), (a2, n), (a3, 2 * n)] {
                    if let Some(row) = block.get(r) {
                        for (j, &v) in row.iter().enumerate() {
                            if v != 0.0 {
                                entries.push((off + j, v));
                            }
                        }
                    }
                }
                SparseRow { entries, rhs }
            })
            .collect();
        Self {
            terminals,
            horizon,
            local_dim: mu,
            quad,
            lin: q.to_vec(),
            rows,
            num_eq: 0,
        }
    }

    /// τT
    pub fn power_dim(&self) -> usize {
        self.terminals * self.horizon
    }

    /// 2τT + μ
    pub fn var_dim(&self) -> usize {
        2 * self.power_dim() + self.local_dim
    }

    pub fn num_ineq(&self) -> usize {
        self.rows.len() - self.num_eq
    }

    pub fn kkt_dim(&self) -> usize {
        self.var_dim() + self.rows.len()
    }

    pub fn eq_rows(&self) -> &[SparseRow] {
        &self.rows[..self.num_eq]
    }

    pub fn ineq_rows(&self) -> &[SparseRow] {
        &self.rows[self.num_eq..]
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        let nv = self.var_dim();
        if self.terminals == 0 {
            return Err("QP form needs at least one terminal".into());
        }
        if self.num_eq > self.rows.len() {
            return Err("num_eq exceeds the number of rows".into());
        }
        if !self.lin.is_empty() && self.lin.len() != self.local_dim {
            return Err(format!(
                "linear cost has length {}, expected {}",
                self.lin.len(),
                self.local_dim
            ));
        }
        if !self.lin.iter().all(|v| v.is_finite()) {
            return Err("linear cost must be finite".into());
        }
        for &(i, j, v) in &self.quad {
            if i > j || j >= self.local_dim {
                return Err(format!(
                    "quadratic entry ({i}, {j}) outside the upper triangle"
                ));
            }
            if !v.is_finite() || (i == j && v < 0.0) {
                return Err(format!(
                    "quadratic entry ({i}, {j}) = {v} is not admissible"
                ));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(format!("row {r} has non-finite right-hand side"));
            }
            for &(j, v) in &row.entries {
                if j >= nv || !v.is_finite() {
                    return Err(format!("row {r} has invalid entry ({j}, {v})"));
                }
            }
        }
        Ok(())
    }

    /// `sᵀQs + qᵀs`
    pub fn local_cost(&self, s: &[f64]) -> f64 {
        let quad: f64 = self
            .quad
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * s[i] * s[i]
                } else {
                    2.0 * v * s[i] * s[j]
                }
            })
            .sum();
        let lin: f64 = self.lin.iter().zip(s).map(|(a, b)| a * b).sum();
        quad + lin
    }

    /// Largest constraint violation of the stacked vector `w`.
    pub fn max_violation(&self, w: &[f64]) -> f64 {
        let eq = self
            .eq_rows()
            .iter()
            .map(|r| (r.dot(w) - r.rhs).abs())
            .fold(0.0, f64::max);
        let ineq = self
            .ineq_rows()
            .iter()
            .map(|r| (r.dot(w) - r.rhs).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq)
    }

    /// True when both forms produce the same KKT sparsity pattern.
    pub fn same_pattern(&self, other: &QpDeviceForm) -> bool {
        self.terminals == other.terminals
            && self.horizon == other.horizon
            && self.local_dim == other.local_dim
            && self.num_eq == other.num_eq
            && self.rows.len() == other.rows.len()
            && self.quad.len() == other.quad.len()
            && self
                .quad
                .iter()
                .zip(&other.quad)
                .all(|(a, b)| (a.0, a.1) == (b.0, b.1))
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.entries.len() == b.entries.len()
                    && a.entries.iter().zip(&b.entries).all(|(x, y)| x.0 == y.0)
            })
    }

    fn kkt_adjacency(&self) -> Vec<Vec<usize>> {
        let nv = self.var_dim();
        let mut adj = vec![Vec::new(); self.kkt_dim()];
        let mut link = |a: usize, b: usize| {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        };
        let off = 2 * self.power_dim();
        for &(i, j, _) in &self.quad {
            link(off + i, off + j);
        }
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, _) in &row.entries {
                link(nv + r, j);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// Stopping rule of the inner ADMM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStop {
    Fixed(usize),
    Tolerance { tol: f64, max_iter: usize },
}

impl Default for InnerStop {
    fn default() -> Self {
        InnerStop::Fixed(10)
    }
}

/// Symbolic data shared by every factorization of one form: fill-reducing order and band.
#[derive(Clone, Debug)]
struct Symbolic {
    perm: Vec<usize>,
    inv: Vec<usize>,
    band: usize,
}

/// Factorized step-1 KKT system of one form at fixed penalties.
#[derive(Clone, Debug)]
pub struct QpFactor {
    form: Arc<QpDeviceForm>,
    symbolic: Arc<Symbolic>,
    lu: BandLu,
    pub rho_p: f64,
    pub rho_theta: f64,
    pub omega: f64,
}

/// Factorizes the bordered KKT matrix
///
/// ```text
/// [ P      A_inᵀ   A_eqᵀ ]
/// [ A_in   -I/ω    0     ]
/// [ A_eq   0       0     ]
/// ```
///
/// with `P = diag(ρ_p I, ρ_θ I, 2Q)`.
pub fn build_workspace(
    form: &QpDeviceForm,
    rho_p: f64,
    rho_theta: f64,
    omega: f64,
) -> Result<QpFactor> {
    form.check().map_err(Error::Config)?;
    let adj = form.kkt_adjacency();
    let perm = ordering::reverse_cuthill_mckee(&adj);
    let band = ordering::bandwidth(&adj, &perm);
    let mut inv = vec![0usize; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let symbolic = Arc::new(Symbolic { perm, inv, band });
    factor_with(Arc::new(form.clone()), symbolic, rho_p, rho_theta, omega)
}

fn factor_with(
    form: Arc<QpDeviceForm>,
    symbolic: Arc<Symbolic>,
    rho_p: f64,
    rho_theta: f64,
    omega: f64,
) -> Result<QpFactor> {
    if !(rho_p > 0.0 && rho_theta > 0.0 && omega > 0.0) {
        return Err(Error::Config(format!(
            "penalties must be positive (rho_p {rho_p}, rho_theta {rho_theta}, omega {omega})"
        )));
    }
    let n = form.kkt_dim();
    let nv = form.var_dim();
    let np = form.power_dim();
    let inv = &symbolic.inv;
    let mut m = BandMatrix::zeros(n, symbolic.band, symbolic.band);
    for j in 0..np {
        m.add(inv[j], inv[j], rho_p);
        m.add(inv[np + j], inv[np + j], rho_theta);
    }
    let off = 2 * np;
    for &(i, j, v) in &form.quad {
        let (a, b) = (inv[off + i], inv[off + j]);
        if i == j {
            m.add(a, a, 2.0 * v);
        } else {
            m.add(a, b, 2.0 * v);
            m.add(b, a, 2.0 * v);
        }
    }
    for (r, row) in form.rows.iter().enumerate() {
        let rr = inv[nv + r];
        for &(j, v) in &row.entries {
            m.add(rr, inv[j], v);
            m.add(inv[j], rr, v);
        }
        if r >= form.num_eq {
            m.add(rr, rr, -1.0 / omega);
        }
    }
    let lu = m.factor()?;
    Ok(QpFactor {
        form,
        symbolic,
        lu,
        rho_p,
        rho_theta,
        omega,
    })
}

impl QpFactor {
    pub fn form(&self) -> &QpDeviceForm {
        &self.form
    }

    pub fn kkt_dim(&self) -> usize {
        self.lu.dim()
    }

    /// Half bandwidth of the reordered KKT matrix.
    pub fn bandwidth(&self) -> usize {
        self.symbolic.band
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio()
    }

    /// Factorizes another form with the same pattern, reusing this ordering.
    pub fn with_form(&self, form: &QpDeviceForm) -> Result<QpFactor> {
        if !self.form.same_pattern(form) {
            return build_workspace(form, self.rho_p, self.rho_theta, self.omega);
        }
        form.check().map_err(Error::Config)?;
        factor_with(
            Arc::new(form.clone()),
            self.symbolic.clone(),
            self.rho_p,
            self.rho_theta,
            self.omega,
        )
    }

    /// Same form and ordering, new penalties.
    pub fn refactor(&self, rho_p: f64, rho_theta: f64) -> Result<QpFactor> {
        factor_with(
            self.form.clone(),
            self.symbolic.clone(),
            rho_p,
            rho_theta,
            self.omega,
        )
    }

    /// Step 1: the equality-constrained QP. Returns the stacked `w = (p, θ, s)`.
    pub fn solve_step(&self, x: &[f64], y: &[f64], beta: &[f64], lambda: &[f64]) -> Vec<f64> {
        let f = &*self.form;
        let np = f.power_dim();
        let nv = f.var_dim();
        let mut rhs = vec![0.0; f.kkt_dim()];
        for j in 0..np {
            rhs[j] = self.rho_p * x[j];
            rhs[np + j] = self.rho_theta * y[j];
        }
        for (j, &c) in f.lin.iter().enumerate() {
            rhs[2 * np + j] = -c;
        }
        for (r, row) in f.eq_rows().iter().enumerate() {
            rhs[nv + r] = row.rhs;
        }
        for (r, row) in f.ineq_rows().iter().enumerate() {
            rhs[nv + f.num_eq + r] = row.rhs + beta[r] - lambda[r];
        }
        let perm = &self.symbolic.perm;
        let mut b: Vec<f64> = perm.iter().map(|&old| rhs[old]).collect();
        self.lu.solve_in_place(&mut b);
        let mut w = vec![0.0; nv];
        for (new, &old) in perm.iter().enumerate() {
            if old < nv {
                w[old] = b[new];
            }
        }
        w
    }
}

/// Inner iterates carried between prox calls of one device.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QpWarm {
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl QpWarm {
    pub fn new(form: &QpDeviceForm) -> Self {
        Self {
            beta: vec![0.0; form.num_ineq()],
            lambda: vec![0.0; form.num_ineq()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
    pub s: Vec<f64>,
    /// `‖α − β‖∞` after the last inner iteration.
    pub primal_residual: f64,
    pub iters: usize,
}

/// Runs the inner ADMM from the warm iterates and leaves the final ones in `warm`.
pub fn qp_prox(
    factor: &QpFactor,
    warm: &mut QpWarm,
    x: &[f64],
    y: &[f64],
    stop: InnerStop,
) -> QpSolution {
    let f = factor.form();
    let np = f.power_dim();
    let m = f.num_ineq();
    if warm.beta.len() != m {
        *warm = QpWarm::new(f);
    }
    let (max_iter, tol) = match stop {
        InnerStop::Fixed(n) => (n.max(1), None),
        InnerStop::Tolerance { tol, max_iter } => (max_iter.max(1), Some(tol)),
    };
    let mut w = Vec::new();
    let mut primal = 0.0;
    let mut iters = 0;
    for _ in 0..max_iter {
        iters += 1;
        w = factor.solve_step(x, y, &warm.beta, &warm.lambda);
        primal = 0.0f64;
        let mut dual = 0.0f64;
        for (r, row) in f.ineq_rows().iter().enumerate() {
            let alpha = row.dot(&w) - row.rhs;
            let beta = (alpha + warm.lambda[r]).min(0.0);
            dual = dual.max((beta - warm.beta[r]).abs());
            warm.beta[r] = beta;
            warm.lambda[r] += alpha - beta;
            primal = primal.max((alpha - beta).abs());
        }
        if let Some(tol) = tol {
            if primal <= tol && factor.omega * dual <= tol {
                break;
            }
        }
    }
    QpSolution {
        p: w[..np].to_vec(),
        theta: w[np..2 * np].to_vec(),
        s: w[2 * np..].to_vec(),
        primal_residual: primal,
        iters,
    }
}

/// A factorization together with one device's inner iterates.
#[derive(Clone, Debug)]
pub struct QpProxWorkspace {
    pub factor: Arc<QpFactor>,
    pub warm: QpWarm,
}

impl QpProxWorkspace {
    pub fn new(factor: Arc<QpFactor>) -> Self {
        let warm = QpWarm::new(factor.form());
        Self { factor, warm }
    }

    pub fn prox(&mut self, x: &[f64], y: &[f64], stop: InnerStop) -> QpSolution {
        qp_prox(&self.factor, &mut self.warm, x, y, stop)
    }
}
