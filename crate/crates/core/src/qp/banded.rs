//! Banded LU factorization with partial pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl` columns hold the
//! fill produced by row interchanges.

use crate::error::{Error, Result};

/// Pivot ratio below which a factorization is reported as singular.
pub const SINGULAR_RATIO: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    /// Adds `v` at `(i, j)`, which must lie inside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band"
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Factorizes in place. Fails when a pivot vanishes or the pivot spread exceeds
    /// `1 / SINGULAR_RATIO`.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            pmin = pmin.min(pivot.abs());
            pmax = pmax.max(pivot.abs());
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularKkt { ratio: 0.0, dim: n });
            }
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        let ratio = if n == 0 { 1.0 } else { pmin / pmax };
        if ratio < SINGULAR_RATIO {
            return Err(Error::SingularKkt { ratio, dim: n });
        }
        Ok(BandLu {
            band: self,
            pivots,
            pivot_ratio: ratio,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    band: BandMatrix,
    pivots: Vec<usize>,
    pivot_ratio: f64,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    /// Smallest over largest absolute pivot.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.band;
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                    b[i] -= a.data[a.idx(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= a.data[a.idx(k, j)] * b[j];
            }
            b[k] = s / a.data[a.idx(k, k)];
        }
    }
}
