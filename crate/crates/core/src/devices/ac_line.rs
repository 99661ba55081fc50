//! Lossless line: `p₁ + p₂ = 0`, `p₂ = b(θ₁ − θ₂)`, `|p₂| ≤ u`.
//!
//! Schedules are laid out per terminal, `[terminal 1 (T entries), terminal 2 (T entries)]`.

use super::{AcLineParams, FEAS_TOL};

pub fn cost(l: &AcLineParams, p: &[f64], theta: &[f64]) -> f64 {
    let t = p.len() / 2;
    let ok = (0..t).all(|i| {
        let p2 = p[t + i];
        (p[i] + p2).abs() <= FEAS_TOL
            && (p2 - l.susceptance * (theta[i] - theta[t + i])).abs() <= FEAS_TOL
            && p2.abs() <= l.capacity + FEAS_TOL
    });
    if ok {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug)]
struct Quotient {
    num: f64,
    den: f64,
}

#[inline]
fn quotient(l: &AcLineParams, x1: f64, x2: f64, y1: f64, y2: f64, rp: f64, rt: f64) -> Quotient {
    let b = l.susceptance;
    Quotient {
        num: rp * (x2 - x1) + rt * (y1 - y2) / (2.0 * b),
        den: 2.0 * rp + rt / (2.0 * b * b),
    }
}

pub fn prox(
    l: &AcLineParams,
    x: &[f64],
    y: &[f64],
    rho_p: f64,
    rho_theta: f64,
    p: &mut [f64],
    theta: &mut [f64],
) {
    let t = x.len() / 2;
    let b = l.susceptance;
    for i in 0..t {
        if b == 0.0 {
            p[i] = 0.0;
            p[t + i] = 0.0;
            theta[i] = y[i];
            theta[t + i] = y[t + i];
            continue;
        }
        let q = quotient(l, x[i], x[t + i], y[i], y[t + i], rho_p, rho_theta);
        let p2 = (q.num / q.den).clamp(-l.capacity, l.capacity);
        let mid = 0.5 * (y[i] + y[t + i]);
        p[i] = -p2;
        p[t + i] = p2;
        theta[t + i] = mid - p2 / (2.0 * b);
        theta[i] = mid + p2 / (2.0 * b);
    }
}

/// Parameter order: `[capacity, susceptance]`.
pub const PARAMS: usize = 2;

/// Local derivative data of one time step: `∂p₂` with respect to `(x₁, x₂, y₁, y₂, u, b)`.
fn partials(
    l: &AcLineParams,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
    rp: f64,
    rt: f64,
) -> (f64, [f64; 6]) {
    let b = l.susceptance;
    let q = quotient(l, x1, x2, y1, y2, rp, rt);
    let raw = q.num / q.den;
    if raw >= l.capacity {
        return (l.capacity, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }
    if raw <= -l.capacity {
        return (-l.capacity, [0.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
    }
    let dnum_db = -rt * (y1 - y2) / (2.0 * b * b);
    let dden_db = -rt / (b * b * b);
    let db = (dnum_db * q.den - q.num * dden_db) / (q.den * q.den);
    let c = rt / (2.0 * b * q.den);
    (raw, [-rp / q.den, rp / q.den, c, -c, 0.0, db])
}

pub fn jvp(
    l: &AcLineParams,
    x: &[f64],
    y: &[f64],
    rho_p: f64,
    rho_theta: f64,
    dx: &[f64],
    dy: &[f64],
    dparam: &[f64; PARAMS],
    dp: &mut [f64],
    dtheta: &mut [f64],
) {
    let t = x.len() / 2;
    let b = l.susceptance;
    for i in 0..t {
        if b == 0.0 {
            dp[i] = 0.0;
            dp[t + i] = 0.0;
            dtheta[i] = dy[i];
            dtheta[t + i] = dy[t + i];
            continue;
        }
        let (p2, d) = partials(l, x[i], x[t + i], y[i], y[t + i], rho_p, rho_theta);
        let dp2 = d[0] * dx[i]
            + d[1] * dx[t + i]
            + d[2] * dy[i]
            + d[3] * dy[t + i]
            + d[4] * dparam[0]
            + d[5] * dparam[1];
        let dmid = 0.5 * (dy[i] + dy[t + i]);
        // d(p₂ / 2b) = dp₂ / 2b − p₂ db / 2b²
        let dshift = dp2 / (2.0 * b) - p2 * dparam[1] / (2.0 * b * b);
        dp[i] = -dp2;
        dp[t + i] = dp2;
        dtheta[t + i] = dmid - dshift;
        dtheta[i] = dmid + dshift;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn vjp(
    l: &AcLineParams,
    x: &[f64],
    y: &[f64],
    rho_p: f64,
    rho_theta: f64,
    gp: &[f64],
    gtheta: &[f64],
    gx: &mut [f64],
    gy: &mut [f64],
    gparam: &mut [f64; PARAMS],
) {
    let t = x.len() / 2;
    let b = l.susceptance;
    for i in 0..t {
        if b == 0.0 {
            gy[i] += gtheta[i];
            gy[t + i] += gtheta[t + i];
            continue;
        }
        let (p2, d) = partials(l, x[i], x[t + i], y[i], y[t + i], rho_p, rho_theta);
        let gmid = gtheta[i] + gtheta[t + i];
        let gshift = gtheta[i] - gtheta[t + i];
        let gp2 = gp[t + i] - gp[i] + gshift / (2.0 * b);
        gparam[1] -= gshift * p2 / (2.0 * b * b);
        gy[i] += 0.5 * gmid;
        gy[t + i] += 0.5 * gmid;
        gx[i] += d[0] * gp2;
        gx[t + i] += d[1] * gp2;
        gy[i] += d[2] * gp2;
        gy[t + i] += d[3] * gp2;
        gparam[0] += d[4] * gp2;
        gparam[1] += d[5] * gp2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(u: f64, b: f64) -> AcLineParams {
        AcLineParams {
            capacity: u,
            susceptance: b,
        }
    }

    #[test]
    fn zero_targets() {
        let mut p = [1.0; 2];
        let mut th = [1.0; 2];
        prox(
            &line(10.0, 1.0),
            &[0.0, 0.0],
            &[0.0, 0.0],
            1.0,
            1.0,
            &mut p,
            &mut th,
        );
        assert_eq!(p, [0.0, 0.0]);
        assert_eq!(th, [0.0, 0.0]);
    }

    #[test]
    fn documented_example() {
        let mut p = [0.0; 2];
        let mut th = [0.0; 2];
        prox(
            &line(10.0, 1.0),
            &[0.0, 2.0],
            &[0.0, 0.0],
            1.0,
            1.0,
            &mut p,
            &mut th,
        );
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(p[1], 0.8) && close(p[0], -0.8));
        assert!(close(th[1], -0.4) && close(th[0], 0.4));
        assert_eq!(cost(&line(10.0, 1.0), &p, &th), 0.0);
    }

    #[test]
    fn limit_binds() {
        let mut p = [0.0; 2];
        let mut th = [0.0; 2];
        let l = line(3.0, 2.0);
        prox(&l, &[-1e6, 1e6], &[0.0, 0.0], 1.0, 1.0, &mut p, &mut th);
        assert_eq!(p[1], 3.0);
        assert_eq!(cost(&l, &p, &th), 0.0);
    }

    #[test]
    fn open_line_passes_phases() {
        let mut p = [1.0; 2];
        let mut th = [0.0; 2];
        prox(
            &line(0.0, 0.0),
            &[3.0, 1.0],
            &[0.2, -0.7],
            1.0,
            1.0,
            &mut p,
            &mut th,
        );
        assert_eq!(p, [0.0, 0.0]);
        assert_eq!(th, [0.2, -0.7]);
    }
}
