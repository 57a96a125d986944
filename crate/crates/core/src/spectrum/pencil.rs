//! The quadratic case: `A u = lambda B u` with `A` the stiffness plus
//! potential (SPD after pinning) and `B` the diagonal net weight, possibly
//! indefinite.
//!
//! With `A = L L^T` the pencil is congruent to the symmetric problem
//! `C y = theta y`, `C = L^-1 B L^-T`, `lambda = 1/theta`. Positive `theta`
//! are the feasible eigenvalues, and their count equals the number of
//! positive entries of `B`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::grid::dot;
use crate::linalg::{orthonormalize, BandCholesky, SymBand};

const DENSE_LIMIT: usize = 600;
const MAX_SWEEPS: usize = 3000;

pub(crate) struct Pencil {
    pub a: SymBand,
    pub b: Vec<f64>,
}

impl Pencil {
    pub fn assemble(ctx: &EnergyContext) -> Result<Self> {
        if ctx.p() != 2.0 {
            return Err(Error::InvalidArgument("linear pencil needs p = 2".into()));
        }
        let n = ctx.grid().n_nodes();
        let a = ctx.energy_hessian(&vec![0.0; n]);
        let mut b = ctx.net_weight();
        for (v, c) in b.iter_mut().zip(ctx.constrained()) {
            if *c {
                *v = 0.0;
            }
        }
        Ok(Self { a, b })
    }

    fn dense_a(&self) -> DMatrix<f64> {
        let n = self.a.n();
        let bw = self.a.bandwidth();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = self.a.get(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// An eigenpair with `u^T B u / 2 = 1`.
#[derive(Debug, Clone)]
pub(crate) struct LinearPair {
    pub lambda: f64,
    pub u: Vec<f64>,
}

/// The `k` smallest positive eigenvalues (fewer if fewer exist).
pub(crate) fn lowest_pairs(ctx: &EnergyContext, k: usize, warm: Option<&[Vec<f64>]>) -> Result<Vec<LinearPair>> {
    let pencil = Pencil::assemble(ctx)?;
    let positive = pencil.b.iter().filter(|v| **v > 0.0).count();
    let k = k.min(positive);
    if k == 0 {
        return Ok(Vec::new());
    }
    let n = pencil.b.len();
    let mut pairs = if n <= DENSE_LIMIT {
        dense_pairs(&pencil, k)?
    } else {
        iterative_pairs(&pencil, k, warm)?
    };
    for pr in pairs.iter_mut() {
        let q: f64 = pr.u.iter().zip(&pencil.b).map(|(x, b)| b * x * x).sum();
        let t = (2.0 / q).sqrt();
        pr.u.iter_mut().for_each(|x| *x *= t);
        fix_sign(&mut pr.u);
    }
    Ok(pairs)
}

/// Makes the largest-magnitude entry positive (first one on ties).
pub(crate) fn fix_sign(u: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for v in u.iter() {
        if v.abs() > best * (1.0 + 1e-9) {
            best = v.abs();
            sign = v.signum();
        }
    }
    if sign < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dense_pairs(pencil: &Pencil, k: usize) -> Result<Vec<LinearPair>> {
    let n = pencil.b.len();
    let a = pencil.dense_a();
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::LinearAlgebra("stiffness matrix not positive definite".into()))?;
    let l = chol.l();
    // C = L^-1 B L^-T
    let mut lb = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&pencil.b));
    l.solve_lower_triangular_mut(&mut lb);
    let mut c = lb.transpose();
    l.solve_lower_triangular_mut(&mut c);
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).filter(|i| eig.eigenvalues[*i] > 0.0).collect();
    order.sort_by(|x, y| eig.eigenvalues[*y].total_cmp(&eig.eigenvalues[*x]).then(x.cmp(y)));
    let lt = l.transpose();
    let mut out = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut y = eig.eigenvectors.column(i).into_owned();
        if !lt.solve_upper_triangular_mut(&mut y) {
            return Err(Error::LinearAlgebra("singular factor".into()));
        }
        out.push(LinearPair {
            lambda: 1.0 / eig.eigenvalues[i],
            u: y.as_slice().to_vec(),
        });
    }
    Ok(out)
}

struct Operator<'a> {
    chol: &'a BandCholesky,
    b: &'a [f64],
}

impl Operator<'_> {
    fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        self.chol.solve_upper(&mut x);
        for (v, b) in x.iter_mut().zip(self.b) {
            *v *= b;
        }
        self.chol.solve_lower(&mut x);
        x
    }
}

fn iterative_pairs(pencil: &Pencil, k: usize, warm: Option<&[Vec<f64>]>) -> Result<Vec<LinearPair>> {
    let n = pencil.b.len();
    let chol = pencil.a.cholesky()?;
    let op = Operator { chol: &chol, b: &pencil.b };
    let mut block = (2 * k).max(k + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(block);
    if let Some(w) = warm {
        for u in w.iter().take(block) {
            // y = L^T u
            basis.push(lt_mul(&chol, &pencil.a, u));
        }
    }
    let fill = |basis: &mut Vec<Vec<f64>>, block: usize, rng: &mut ChaCha8Rng| {
        while basis.len() < block {
            basis.push((0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
        }
    };
    fill(&mut basis, block, &mut rng);
    orthonormalize(&mut basis, 1e-10);
    fill(&mut basis, block, &mut rng);
    orthonormalize(&mut basis, 1e-10);
    let mut images: Vec<Vec<f64>> = basis.iter().map(|y| op.apply(y)).collect();
    let tol = 1e-11;
    for sweep in 0..MAX_SWEEPS {
        // Rayleigh-Ritz on span(images): orthonormalize, project
        let mut z = images;
        let kept = orthonormalize(&mut z, 1e-12);
        if kept < block {
            let mut extra = Vec::new();
            fill(&mut extra, block - kept, &mut rng);
            z.extend(extra);
            orthonormalize(&mut z, 1e-12);
        }
        let b = z.len();
        let w: Vec<Vec<f64>> = z.iter().map(|v| op.apply(v)).collect();
        let mut t = DMatrix::zeros(b, b);
        for i in 0..b {
            for j in 0..=i {
                let v = 0.5 * (dot(&z[i], &w[j]) + dot(&z[j], &w[i]));
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|x, y| eig.eigenvalues[*y].total_cmp(&eig.eigenvalues[*x]).then(x.cmp(y)));
        let theta: Vec<f64> = order.iter().map(|i| eig.eigenvalues[*i]).collect();
        let ritz: Vec<Vec<f64>> = order.iter().map(|&c| combine(&z, eig.eigenvectors.column(c).as_slice())).collect();
        let imgs: Vec<Vec<f64>> = order.iter().map(|&c| combine(&w, eig.eigenvectors.column(c).as_slice())).collect();
        let theta_max = theta.iter().map(|t| t.abs()).fold(0.0, f64::max).max(1e-300);
        let npos = theta.iter().filter(|t| **t > 0.0).count();
        let positives_done = npos >= k;
        let converged = positives_done
            && (0..k).all(|i| {
                let r: f64 = imgs[i]
                    .iter()
                    .zip(&ritz[i])
                    .map(|(a, y)| (a - theta[i] * y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                r <= tol * theta[i].abs().max(1e-3 * theta_max)
            });
        if converged {
            let mut out = Vec::with_capacity(k);
            for i in 0..k {
                let mut u = ritz[i].clone();
                chol.solve_upper(&mut u);
                out.push(LinearPair {
                    lambda: 1.0 / theta[i],
                    u,
                });
            }
            return Ok(out);
        }
        // negative theta of large magnitude crowd the block: enlarge it
        let crowding = theta.iter().filter(|t| **t < 0.0 && t.abs() >= theta.get(k.saturating_sub(1)).copied().unwrap_or(0.0).abs()).count();
        if (crowding + k + 2 > b || !positives_done) && block < n && sweep % 20 == 19 {
            block = (block + 8).min(n);
        }
        images = imgs;
        if images.len() < block {
            fill(&mut images, block, &mut rng);
        }
    }
    Err(Error::NotConverged("subspace iteration".into()))
}

fn combine(vs: &[Vec<f64>], coef: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vs[0].len()];
    for (v, c) in vs.iter().zip(coef) {
        if *c != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
    }
    out
}

/// `L^T u` from `A u` by one lower solve: `L (L^T u) = A u`.
fn lt_mul(chol: &BandCholesky, a: &SymBand, u: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; u.len()];
    a.matvec(u, &mut y);
    chol.solve_lower(&mut y);
    y
}
