//! Banded symmetric matrices with Cholesky and pivoted LU factorizations.
//!
//! Every nodal operator on the grid couples node `i` only with nodes
//! `i +- 1` (1D) or `i +- 1, i +- (n-1)` (2D), so natural ordering gives a
//! half bandwidth of 1 or `n - 1`.

use crate::error::{Error, Result};

/// Symmetric matrix with half bandwidth `bw`, lower band stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // requires j <= i, i - j <= bw
        i * (self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)` (once if `i == j`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        debug_assert!(i - j <= self.bw, "entry outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        let k = self.idx(i, i);
        self.data[k] += v;
    }

    /// Replaces row and column `i` by the identity.
    pub fn pin(&mut self, i: usize) {
        let lo = i.saturating_sub(self.bw);
        let hi = (i + self.bw).min(self.n - 1);
        for j in lo..=hi {
            let (a, b) = if j > i { (j, i) } else { (i, j) };
            let k = self.idx(a, b);
            self.data[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let bw = self.bw;
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let mut acc = self.data[self.idx(i, i)] * x[i];
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.data.clone();
        let w = bw + 1;
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = l[at(i, j)];
                for k in klo..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::LinearAlgebra(format!(
                            "matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    pub fn lu(&self) -> Result<BandLu> {
        BandLu::factor(self)
    }
}

/// `A = L L^T` in band storage.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn solve_upper(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let x = b[i] / self.at(i, i);
            b[i] = x;
            let lo = i.saturating_sub(self.bw);
            for k in lo..i {
                b[k] -= self.at(i, k) * x;
            }
        }
    }

    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }
}

/// Partial-pivoting LU of a banded matrix (band `bw` below, `2 bw` above after fill).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    bw: usize,
    // row i holds columns i - bw ..= i + 2 bw
    u: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn factor(a: &SymBand) -> Result<Self> {
        let n = a.n;
        let bw = a.bw;
        let w = 3 * bw + 1;
        let mut u = vec![0.0; n * w];
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            for j in lo..=hi {
                u[at(i, j)] = a.get(i, j);
            }
        }
        let scale = a.max_abs_diag().max(1e-300);
        let mut mult = vec![0.0; n * bw.max(1)];
        let mut piv = vec![0; n];
        for i in 0..n {
            let last = (i + bw).min(n - 1);
            let mut r = i;
            let mut best = u[at(i, i)].abs();
            for k in i + 1..=last {
                let v = u[at(k, i)].abs();
                if v > best {
                    best = v;
                    r = k;
                }
            }
            piv[i] = r;
            let jmax = (i + 2 * bw).min(n - 1);
            if r != i {
                for j in i..=jmax {
                    u.swap(at(i, j), at(r, j));
                }
            }
            let mut p = u[at(i, i)];
            if p.abs() <= 1e-300 {
                // exactly singular pivot: perturb at round-off level
                p = f64::EPSILON * scale;
                u[at(i, i)] = p;
            }
            for k in i + 1..=last {
                let m = u[at(k, i)] / p;
                mult[i * bw.max(1) + (k - i - 1)] = m;
                if m != 0.0 {
                    u[at(k, i)] = 0.0;
                    for j in i + 1..=jmax {
                        let v = u[at(i, j)];
                        if v != 0.0 {
                            u[at(k, j)] -= m * v;
                        }
                    }
                }
            }
        }
        Ok(Self { n, bw, u, mult, piv })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        let w = 3 * bw + 1;
        for i in 0..n {
            let r = self.piv[i];
            if r != i {
                b.swap(i, r);
            }
            let last = (i + bw).min(n - 1);
            let bi = b[i];
            for k in i + 1..=last {
                b[k] -= self.mult[i * bw.max(1) + (k - i - 1)] * bi;
            }
        }
        for i in (0..n).rev() {
            let jmax = (i + 2 * bw).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=jmax {
                s -= self.u[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s / self.u[i * w + bw];
        }
    }
}

/// Modified Gram-Schmidt (twice) on the columns of `basis`; returns the
/// number of columns kept, dropping numerically dependent ones.
pub(crate) fn orthonormalize(basis: &mut Vec<Vec<f64>>, tol: f64) -> usize {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for mut v in basis.drain(..) {
        let norm0 = norm(&v);
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &kept {
                let c = crate::grid::dot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let nv = norm(&v);
        if nv > tol * norm0 {
            for x in v.iter_mut() {
                *x /= nv;
            }
            kept.push(v);
        }
    }
    *basis = kept;
    basis.len()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
