use super::{DcLineParams, FEAS_TOL};

/// `p` holds both terminals: `p[..T]` then `p[T..]`.
pub fn cost(l: &DcLineParams, p: &[f64]) -> f64 {
    let t = p.len() / 2;
    let ok = (0..t)
        .all(|i| (p[i] + p[t + i]).abs() <= FEAS_TOL && p[t + i].abs() <= l.capacity + FEAS_TOL);
    if ok {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn prox(l: &DcLineParams, x: &[f64], p: &mut [f64]) {
    let t = x.len() / 2;
    for i in 0..t {
        let p2 = (0.5 * (x[t + i] - x[i])).clamp(-l.capacity, l.capacity);
        p[i] = -p2;
        p[t + i] = p2;
    }
}

/// Parameter order: `[capacity]`.
pub const PARAMS: usize = 1;

#[inline]
fn sign_of_bound(l: &DcLineParams, x: &[f64], t: usize, i: usize) -> f64 {
    let q = 0.5 * (x[t + i] - x[i]);
    if q >= l.capacity {
        1.0
    } else if q <= -l.capacity {
        -1.0
    } else {
        0.0
    }
}

pub fn jvp(l: &DcLineParams, x: &[f64], dx: &[f64], dparam: &[f64; PARAMS], dp: &mut [f64]) {
    let t = x.len() / 2;
    for i in 0..t {
        let s = sign_of_bound(l, x, t, i);
        let d2 = if s == 0.0 {
            0.5 * (dx[t + i] - dx[i])
        } else {
            s * dparam[0]
        };
        dp[i] = -d2;
        dp[t + i] = d2;
    }
}

pub fn vjp(l: &DcLineParams, x: &[f64], gp: &[f64], gx: &mut [f64], gparam: &mut [f64; PARAMS]) {
    let t = x.len() / 2;
    for i in 0..t {
        let g2 = gp[t + i] - gp[i];
        let s = sign_of_bound(l, x, t, i);
        if s == 0.0 {
            gx[t + i] += 0.5 * g2;
            gx[i] -= 0.5 * g2;
        } else {
            gparam[0] += s * g2;
        }
    }
}
