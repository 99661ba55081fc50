//! Dense primal–dual interior-point method (Mehrotra predictor–corrector) for
//!
//! ```text
//! min ½ xᵀHx + cᵀx   s.t.  A x = b,  G x ≤ h
//! ```
//!
//! Dual convention: the Lagrangian is `½xᵀHx + cᵀx + yᵀ(Ax − b) + zᵀ(Gx − h)` with `z ≥ 0`,
//! so `∂f*/∂b = −y` and `∂f*/∂h = −z`.

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};

/// Sparse linear constraint row.
#[derive(Clone, Debug, PartialEq)]
pub struct LinRow {
    pub coef: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinRow {
    pub fn new(coef: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coef, rhs }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.coef.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct DenseQp {
    pub n: usize,
    /// Entries of H; duplicates accumulate. Both triangles must be supplied.
    pub hess: Vec<(usize, usize, f64)>,
    pub c: Vec<f64>,
    pub eq: Vec<LinRow>,
    pub ineq: Vec<LinRow>,
}

impl DenseQp {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            c: vec![0.0; n],
            ..Default::default()
        }
    }

    /// Adds `v·x_i·x_j` to the objective (`i ≠ j` contributes both triangles).
    pub fn add_quad(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            self.hess.push((i, i, 2.0 * v));
        } else {
            self.hess.push((i, j, v));
            self.hess.push((j, i, v));
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let quad: f64 = self
            .hess
            .iter()
            .map(|&(i, j, v)| 0.5 * v * x[i] * x[j])
            .sum();
        quad + self.c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest scaled KKT residual at exit.
    pub kkt_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub regularization: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            regularization: 1e-9,
        }
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Residuals {
    dual: Vec<f64>,
    eq: Vec<f64>,
    ineq: Vec<f64>,
}

fn residuals(qp: &DenseQp, x: &[f64], y: &[f64], z: &[f64], s: &[f64]) -> Residuals {
    let mut dual = qp.c.clone();
    for &(i, j, v) in &qp.hess {
        dual[i] += v * x[j];
    }
    for (row, &yi) in qp.eq.iter().zip(y) {
        for &(j, a) in &row.coef {
            dual[j] += a * yi;
        }
    }
    for (row, &zi) in qp.ineq.iter().zip(z) {
        for &(j, a) in &row.coef {
            dual[j] += a * zi;
        }
    }
    let eq = qp.eq.iter().map(|r| r.dot(x) - r.rhs).collect();
    let ineq = qp
        .ineq
        .iter()
        .zip(s)
        .map(|(r, si)| r.dot(x) + si - r.rhs)
        .collect();
    Residuals { dual, eq, ineq }
}

struct Scales {
    dual: f64,
    eq: f64,
    ineq: f64,
}

/// Solves the QP. Infeasibility is reported through [`IpmStatus::Infeasible`] when a
/// Farkas certificate is found; failure to converge otherwise is an error.
pub fn solve(qp: &DenseQp, opts: &IpmOptions) -> Result<IpmSolution> {
    let n = qp.n;
    let me = qp.eq.len();
    let mi = qp.ineq.len();
    let scales = Scales {
        dual: 1.0 + norm_inf(&qp.c),
        eq: 1.0 + qp.eq.iter().fold(0.0f64, |m, r| m.max(r.rhs.abs())),
        ineq: 1.0 + qp.ineq.iter().fold(0.0f64, |m, r| m.max(r.rhs.abs())),
    };

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; me];
    let mut s: Vec<f64> = qp.ineq.iter().map(|r| r.rhs.abs().max(1.0)).collect();
    let mut z = vec![1.0; mi];
    let dim = n + me;

    for iter in 0..=opts.max_iter {
        let r = residuals(qp, &x, &y, &z, &s);
        let mu = if mi > 0 {
            s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / mi as f64
        } else {
            0.0
        };
        let obj = qp.objective(&x);
        let kkt = (norm_inf(&r.dual) / scales.dual)
            .max(norm_inf(&r.eq) / scales.eq)
            .max(norm_inf(&r.ineq) / scales.ineq);
        if kkt <= opts.tol && mu <= opts.tol * (1.0 + obj.abs()) {
            return Ok(IpmSolution {
                status: IpmStatus::Optimal,
                x,
                y,
                z,
                objective: obj,
                iterations: iter,
                kkt_residual: kkt.max(mu),
            });
        }
        if let Some(sol) = farkas(qp, &y, &z) {
            return Ok(IpmSolution {
                iterations: iter,
                ..sol
            });
        }
        if iter == opts.max_iter {
            break;
        }

        // Reduced system [[H + GᵀWG + δI, Aᵀ], [A, −δI]].
        let w: Vec<f64> = z.iter().zip(&s).map(|(zi, si)| zi / si).collect();
        let mut k = Mat::<f64>::zeros(dim, dim);
        for &(i, j, v) in &qp.hess {
            k[(i, j)] += v;
        }
        for (row, &wi) in qp.ineq.iter().zip(&w) {
            for &(i, a) in &row.coef {
                for &(j, b) in &row.coef {
                    k[(i, j)] += wi * a * b;
                }
            }
        }
        for i in 0..n {
            k[(i, i)] += opts.regularization;
        }
        for (r_i, row) in qp.eq.iter().enumerate() {
            for &(j, a) in &row.coef {
                k[(n + r_i, j)] += a;
                k[(j, n + r_i)] += a;
            }
            k[(n + r_i, n + r_i)] -= opts.regularization;
        }
        let lu = k.partial_piv_lu();

        let direction = |rsz: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            // dz = W G dx + S⁻¹(Z r_i − r_sz);  ds = −r_i − G dx
            let t: Vec<f64> = (0..mi)
                .map(|i| (z[i] * r.ineq[i] - rsz[i]) / s[i])
                .collect();
            let mut rhs = vec![0.0; dim];
            for j in 0..n {
                rhs[j] = -r.dual[j];
            }
            for (row, &ti) in qp.ineq.iter().zip(&t) {
                for &(j, a) in &row.coef {
                    rhs[j] -= a * ti;
                }
            }
            for i in 0..me {
                rhs[n + i] = -r.eq[i];
            }
            let sol = refine(qp, &lu, &w, &rhs, opts.regularization);
            let dx = sol[..n].to_vec();
            let dy = sol[n..].to_vec();
            let mut dz = vec![0.0; mi];
            let mut ds = vec![0.0; mi];
            for (i, row) in qp.ineq.iter().enumerate() {
                let gdx = row.dot(&dx);
                dz[i] = w[i] * gdx + t[i];
                ds[i] = -r.ineq[i] - gdx;
            }
            (dx, dy, dz, ds)
        };

        let step = |ds: &[f64], dz: &[f64]| -> f64 {
            let mut a = 1.0f64;
            for i in 0..mi {
                if ds[i] < 0.0 {
                    a = a.min(-s[i] / ds[i]);
                }
                if dz[i] < 0.0 {
                    a = a.min(-z[i] / dz[i]);
                }
            }
            a
        };

        let rsz_aff: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a * b).collect();
        let (dx_a, dy_a, dz_a, ds_a) = direction(&rsz_aff);
        let (dx, dy, dz, ds) = if mi == 0 {
            (dx_a, dy_a, dz_a, ds_a)
        } else {
            let a_aff = step(&ds_a, &dz_a);
            let mu_aff = (0..mi)
                .map(|i| (s[i] + a_aff * ds_a[i]) * (z[i] + a_aff * dz_a[i]))
                .sum::<f64>()
                / mi as f64;
            let sigma = (mu_aff / mu).powi(3).min(1.0);
            let rsz: Vec<f64> = (0..mi)
                .map(|i| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu)
                .collect();
            direction(&rsz)
        };
        if dx.iter().chain(&dy).chain(&dz).any(|v| !v.is_finite()) {
            return Err(Error::Oracle(format!(
                "interior-point direction is not finite at iteration {iter}"
            )));
        }
        let alpha = if mi == 0 {
            1.0
        } else {
            (0.99 * step(&ds, &dz)).min(1.0)
        };
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for i in 0..me {
            y[i] += alpha * dy[i];
        }
        for i in 0..mi {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
    }
    Err(Error::Oracle(format!(
        "interior point did not converge in {} iterations",
        opts.max_iter
    )))
}

/// Iterative refinement against the unregularized reduced matrix.
fn refine(
    qp: &DenseQp,
    lu: &faer::linalg::solvers::PartialPivLu<f64>,
    w: &[f64],
    rhs: &[f64],
    delta: f64,
) -> Vec<f64> {
    let n = qp.n;
    let dim = rhs.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, j, h) in &qp.hess {
            out[i] += h * v[j];
        }
        for (row, &wi) in qp.ineq.iter().zip(w) {
            let g = row.dot(&v[..n]);
            for &(j, a) in &row.coef {
                out[j] += wi * a * g;
            }
        }
        for (r, row) in qp.eq.iter().enumerate() {
            out[n + r] += row.dot(&v[..n]);
            for &(j, a) in &row.coef {
                out[j] += a * v[n + r];
            }
        }
        out
    };
    let solve = |b: &[f64]| -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(dim, 1, |i, _| b[i]);
        lu.solve_in_place(&mut m);
        (0..dim).map(|i| m[(i, 0)]).collect()
    };
    let mut sol = solve(rhs);
    if delta > 0.0 {
        for _ in 0..3 {
            let ax = apply(&sol);
            let res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let corr = solve(&res);
            for (a, c) in sol.iter_mut().zip(&corr) {
                *a += c;
            }
        }
    }
    sol
}

/// `bᵀy + hᵀz < 0` with `Aᵀy + Gᵀz ≈ 0`, `z ≥ 0` certifies that no feasible point exists.
fn farkas(qp: &DenseQp, y: &[f64], z: &[f64]) -> Option<IpmSolution> {
    let scale = norm_inf(y).max(norm_inf(z));
    if scale < 1e8 {
        return None;
    }
    let mut t = vec![0.0; qp.n];
    for (row, &yi) in qp.eq.iter().zip(y) {
        for &(j, a) in &row.coef {
            t[j] += a * yi / scale;
        }
    }
    for (row, &zi) in qp.ineq.iter().zip(z) {
        for &(j, a) in &row.coef {
            t[j] += a * zi / scale;
        }
    }
    let gap: f64 = qp
        .eq
        .iter()
        .zip(y)
        .map(|(r, yi)| r.rhs * yi / scale)
        .sum::<f64>()
        + qp.ineq
            .iter()
            .zip(z)
            .map(|(r, zi)| r.rhs * zi / scale)
            .sum::<f64>();
    if norm_inf(&t) <= 1e-6 && gap < -1e-6 {
        Some(IpmSolution {
            status: IpmStatus::Infeasible,
            x: vec![],
            y: y.to_vec(),
            z: z.to_vec(),
            objective: f64::INFINITY,
            iterations: 0,
            kkt_residual: f64::INFINITY,
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_only_matches_direct_solve() {
        // min ½(x₀² + 2x₁²) − x₀  s.t. x₀ + x₁ = 1
        let mut qp = DenseQp::new(2);
        qp.add_quad(0, 0, 0.5);
        qp.add_quad(1, 1, 1.0);
        qp.c = vec![-1.0, 0.0];
        qp.eq.push(LinRow::new(vec![(0, 1.0), (1, 1.0)], 1.0));
        let sol = solve(&qp, &IpmOptions::default()).unwrap();
        // KKT: x₀ − 1 + y = 0, 2x₁ + y = 0, x₀ + x₁ = 1  →  x₁ = 0, x₀ = 1, y = 0
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!(sol.x[1].abs() < 1e-9);
        assert!(sol.y[0].abs() < 1e-9);
    }

    #[test]
    fn toy_dispatch_price() {
        // gen p_g ∈ [0, 10] at cost p_g, load fixed at −4, balance p_g + p_l = 0
        let mut qp = DenseQp::new(2);
        qp.c = vec![1.0, 0.0];
        qp.eq.push(LinRow::new(vec![(0, 1.0), (1, 1.0)], 0.0));
        qp.eq.push(LinRow::new(vec![(1, 1.0)], -4.0));
        qp.ineq.push(LinRow::new(vec![(0, 1.0)], 10.0));
        qp.ineq.push(LinRow::new(vec![(0, -1.0)], 0.0));
        let sol = solve(&qp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!((sol.x[0] - 4.0).abs() < 1e-7);
        assert!((sol.objective - 4.0).abs() < 1e-7);
        // 1 + y_bal = 0
        assert!((sol.y[0] + 1.0).abs() < 1e-7);
    }

    #[test]
    fn binding_capacity_dual() {
        // cheap gen (b=1, cap 3), expensive gen (b=5, cap 10), load 4
        let mut qp = DenseQp::new(2);
        qp.c = vec![1.0, 5.0];
        qp.eq.push(LinRow::new(vec![(0, 1.0), (1, 1.0)], 4.0));
        qp.ineq.push(LinRow::new(vec![(0, 1.0)], 3.0));
        qp.ineq.push(LinRow::new(vec![(0, -1.0)], 0.0));
        qp.ineq.push(LinRow::new(vec![(1, 1.0)], 10.0));
        qp.ineq.push(LinRow::new(vec![(1, -1.0)], 0.0));
        let sol = solve(&qp, &IpmOptions::default()).unwrap();
        assert!((sol.objective - 8.0).abs() < 1e-7);
        // ∂f/∂cap = −z = 1 − 5
        assert!((-sol.z[0] - (1.0 - 5.0)).abs() < 1e-6);
    }

    #[test]
    fn infeasible_certified() {
        let mut qp = DenseQp::new(1);
        qp.c = vec![1.0];
        qp.eq.push(LinRow::new(vec![(0, 1.0)], 5.0));
        qp.ineq.push(LinRow::new(vec![(0, 1.0)], 3.0));
        let sol = solve(&qp, &IpmOptions::default()).unwrap();
        assert_eq!(sol.status, IpmStatus::Infeasible);
    }
}
