use super::{GeneratorParams, FEAS_TOL};

/// Σ_t a p² + b p, or +∞ outside the box.
pub fn cost(g: &GeneratorParams, p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (t, &pt) in p.iter().enumerate() {
        if pt < g.p_min[t] - FEAS_TOL || pt > g.p_max[t] + FEAS_TOL {
            return f64::INFINITY;
        }
        total += g.quadratic_cost * pt * pt + g.linear_cost * pt;
    }
    total
}

/// Unclamped minimizer of a p² + b p + (ρ/2)(p − x)².
#[inline]
fn unclamped(g: &GeneratorParams, x: f64, rho: f64) -> f64 {
    (rho * x - g.linear_cost) / (2.0 * g.quadratic_cost + rho)
}

pub fn prox(g: &GeneratorParams, x: &[f64], rho: f64, p: &mut [f64]) {
    for t in 0..x.len() {
        p[t] = unclamped(g, x[t], rho).max(g.p_min[t]).min(g.p_max[t]);
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Branch {
    Free,
    Lower,
    Upper,
}

fn branch(g: &GeneratorParams, x: f64, rho: f64, t: usize) -> Branch {
    let u = unclamped(g, x, rho);
    if u <= g.p_min[t] {
        Branch::Lower
    } else if u >= g.p_max[t] {
        Branch::Upper
    } else {
        Branch::Free
    }
}

/// Parameter tangent/cotangent order: `[a, b, p_min, p_max]`, the box entries acting
/// as a uniform shift of the whole series.
pub const PARAMS: usize = 4;

/// Tangent of the prox output for input tangent `dx` and parameter tangent `dparam`.
pub fn jvp(
    g: &GeneratorParams,
    x: &[f64],
    rho: f64,
    dx: &[f64],
    dparam: &[f64; PARAMS],
    dp: &mut [f64],
) {
    let den = 2.0 * g.quadratic_cost + rho;
    for t in 0..x.len() {
        dp[t] = match branch(g, x[t], rho, t) {
            Branch::Free => {
                let u = unclamped(g, x[t], rho);
                (rho * dx[t] - dparam[1] - 2.0 * u * dparam[0]) / den
            }
            Branch::Lower => dparam[2],
            Branch::Upper => dparam[3],
        };
    }
}

/// Adjoint of [`jvp`]: accumulates into `gx` and `gparam`.
pub fn vjp(
    g: &GeneratorParams,
    x: &[f64],
    rho: f64,
    gp: &[f64],
    gx: &mut [f64],
    gparam: &mut [f64; PARAMS],
) {
    let den = 2.0 * g.quadratic_cost + rho;
    for t in 0..x.len() {
        match branch(g, x[t], rho, t) {
            Branch::Free => {
                let u = unclamped(g, x[t], rho);
                gx[t] += rho / den * gp[t];
                gparam[1] -= gp[t] / den;
                gparam[0] -= 2.0 * u / den * gp[t];
            }
            Branch::Lower => gparam[2] += gp[t],
            Branch::Upper => gparam[3] += gp[t],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(a: f64, b: f64, lo: f64, hi: f64) -> GeneratorParams {
        GeneratorParams {
            quadratic_cost: a,
            linear_cost: b,
            p_min: vec![lo],
            p_max: vec![hi],
        }
    }

    #[test]
    fn cost_formula() {
        assert_eq!(cost(&gen(1.0, 2.0, 0.0, 10.0), &[3.0]), 15.0);
        assert_eq!(cost(&gen(1.0, 2.0, 0.0, 2.0), &[3.0]), f64::INFINITY);
        assert_eq!(cost(&gen(1.0, 2.0, 0.0, 3.0 - 5e-7), &[3.0]), 15.0);
    }

    #[test]
    fn prox_examples() {
        let mut p = [0.0];
        prox(&gen(0.0, 0.0, -10.0, 10.0), &[3.5], 1.0, &mut p);
        assert_eq!(p[0], 3.5);
        prox(&gen(1.0, 0.0, -10.0, 10.0), &[2.0], 2.0, &mut p);
        assert_eq!(p[0], 1.0);
        prox(&gen(0.0, 0.0, -10.0, 5.0), &[100.0], 1.0, &mut p);
        assert_eq!(p[0], 5.0);
    }
}
