//! Variational eigenvalues `lambda_m` of `-Delta_p u + mu |u|^{p-2} u =
//! lambda (nu1 - nu2) |u|^{p-2} u`.
//!
//! `lambda_m` is the inf over `m`-dimensional subspaces of the sup of the
//! Rayleigh quotient on their unit sphere, restricted to the cone where
//! `g1 > g2`. For `p = 2` this is the generalized eigenvalue problem and is
//! solved exactly. For other exponents the eigenpairs are obtained by
//! continuation from `p = 2`, polished by Newton, and reported together
//! with the sup over the span of the first `m` of them, which bounds
//! `lambda_m` from above.

mod nonlinear;
mod pencil;

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::energy::{certification_scale, EnergyContext};
use crate::error::{Error, Result};
use crate::grid::{dot, Field};

use nonlinear::Polished;
pub(crate) use pencil::lowest_pairs;

/// Largest supported number of eigenvalues per call.
pub const MAX_M: usize = 6;

/// Default relative certification tolerance.
pub const CERT_REL: f64 = 1e-6;

/// Basis of an `m`-dimensional trial subspace.
#[derive(Debug, Clone)]
pub struct SubspaceCandidate {
    basis: Vec<Field>,
}

impl SubspaceCandidate {
    pub fn new(basis: Vec<Field>) -> Result<Self> {
        let m = basis.len();
        if m == 0 || m > MAX_M {
            return Err(Error::InvalidSubspace(format!("dimension must be in 1..={MAX_M}, got {m}")));
        }
        let grid = *basis[0].grid();
        if basis.iter().any(|f| f.grid() != &grid) {
            return Err(Error::GridMismatch);
        }
        let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| dot(&basis[i].values, &basis[j].values));
        let sv = gram.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smax > 0.0 && smin >= 1e-8 * smax) {
            return Err(Error::InvalidSubspace("basis is numerically dependent".into()));
        }
        Ok(Self { basis })
    }

    pub fn m(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Field] {
        &self.basis
    }
}

/// Per-index outcome of [`eigen_minimax`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenStatus {
    /// A certified eigenpair.
    Finite,
    /// No `m`-dimensional subspace lies in the cone `g1 > g2`: `lambda_m = +inf`.
    Infeasible,
    /// Only an upper bound was found.
    Unresolved,
}

/// Eigenvalues `lambda_1 <= ... <= lambda_m`; `eigenfields` and `residuals`
/// cover the finite entries, which come first.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    #[serde(serialize_with = "ser_extended")]
    pub lambdas: Vec<f64>,
    #[serde(skip)]
    pub eigenfields: Vec<Field>,
    /// dual-norm defect over `|lambda| ||u||_p^(p-1)`
    pub residuals: Vec<f64>,
    pub status: Vec<EigenStatus>,
    /// sup of the quotient on the span of the first `m` eigenfields
    #[serde(serialize_with = "ser_extended")]
    pub upper_bounds: Vec<f64>,
}

fn ser_extended<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else if *x > 0.0 {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element("nan")?;
        }
    }
    seq.end()
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn finite_count(&self) -> usize {
        self.eigenfields.len()
    }

    pub fn all_finite_certified(&self) -> bool {
        self.status.iter().all(|s| *s != EigenStatus::Unresolved)
    }
}

/// Tuning knobs of the spectral solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumOptions {
    /// Multistart count for the inner sup when `p != 2`.
    pub starts: usize,
    pub seed: u64,
    /// Largest step in `p` during continuation.
    pub continuation_step: f64,
    pub newton_max_iter: usize,
    pub inverse_power_iter: usize,
    /// Extra branches followed beyond `m_max`, so that reordering between
    /// `p = 2` and the target exponent is caught.
    pub extra_branches: usize,
    /// Compute `upper_bounds` (the inner sup) for `p != 2`.
    pub upper_bounds: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0,
            continuation_step: 0.25,
            newton_max_iter: 60,
            inverse_power_iter: 200,
            extra_branches: 2,
            upper_bounds: true,
        }
    }
}

fn check_candidate(ctx: &EnergyContext, cand: &SubspaceCandidate) -> Result<()> {
    if cand.basis[0].grid().n_nodes() != ctx.grid().n_nodes() || cand.basis[0].grid().dim() != ctx.grid().dim() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Max of the Rayleigh quotient over the unit sphere of `span(candidate)`
/// within the cone `g1 > g2`, with the maximizing coefficients. `+inf` when
/// the sphere leaves the cone.
pub fn sup_on_sphere(ctx: &EnergyContext, candidate: &SubspaceCandidate) -> Result<(f64, Vec<f64>)> {
    sup_on_sphere_with(ctx, candidate, &SpectrumOptions::default())
}

pub fn sup_on_sphere_with(ctx: &EnergyContext, candidate: &SubspaceCandidate, opts: &SpectrumOptions) -> Result<(f64, Vec<f64>)> {
    check_candidate(ctx, candidate)?;
    let basis: Vec<Vec<f64>> = candidate
        .basis
        .iter()
        .map(|f| {
            let mut v = f.values.clone();
            ctx.project(&mut v);
            v
        })
        .collect();
    sup_values(ctx, &basis, opts)
}

fn sup_values(ctx: &EnergyContext, basis: &[Vec<f64>], opts: &SpectrumOptions) -> Result<(f64, Vec<f64>)> {
    let m = basis.len();
    if m == 1 {
        let g = ctx.constraint_values(&basis[0]);
        if !(g > 0.0) {
            return Err(Error::InfeasibleSubspace);
        }
        return Ok((ctx.rayleigh_values(&basis[0])?, vec![1.0]));
    }
    if ctx.p() == 2.0 {
        return sup_quadratic(ctx, basis);
    }
    let s = nonlinear::sup_ascent(ctx, basis, opts.starts, opts.seed)?;
    Ok((s.value, s.coefficients))
}

/// Exact restricted pencil `(V^T A V, V^T B V)`.
fn sup_quadratic(ctx: &EnergyContext, basis: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    use nalgebra::{DMatrix, SymmetricEigen};
    let m = basis.len();
    let n = basis[0].len();
    let a = ctx.energy_hessian(&vec![0.0; n]);
    let w = ctx.net_weight();
    let mut av = vec![0.0; n];
    let mut ar = DMatrix::zeros(m, m);
    let mut br = DMatrix::zeros(m, m);
    for i in 0..m {
        a.matvec(&basis[i], &mut av);
        for j in 0..m {
            ar[(i, j)] = dot(&av, &basis[j]);
            br[(i, j)] = basis[i]
                .iter()
                .zip(&basis[j])
                .zip(&w)
                .zip(ctx.constrained())
                .filter(|(_, c)| !**c)
                .map(|(((x, y), b), _)| b * x * y)
                .sum::<f64>();
        }
    }
    let ar = (&ar + ar.transpose()) * 0.5;
    let br = (&br + br.transpose()) * 0.5;
    let eb = SymmetricEigen::new(br.clone());
    let bmax = eb.eigenvalues.max();
    let (imin, bmin) = eb.eigenvalues.argmin();
    if !(bmax > 0.0) {
        return Err(Error::InfeasibleSubspace);
    }
    if bmin <= crate::energy::FEASIBILITY_TOL * bmax {
        return Ok((f64::INFINITY, eb.eigenvectors.column(imin).iter().copied().collect()));
    }
    let l = br.cholesky().ok_or_else(|| Error::LinearAlgebra("restricted weight".into()))?;
    let lm = l.l();
    let mut c = ar.clone();
    lm.solve_lower_triangular_mut(&mut c);
    let mut c = c.transpose();
    lm.solve_lower_triangular_mut(&mut c);
    let c = (&c + c.transpose()) * 0.5;
    let ec = SymmetricEigen::new(c);
    let (imax, vmax) = ec.eigenvalues.argmax();
    let mut y = ec.eigenvectors.column(imax).into_owned();
    lm.transpose().solve_upper_triangular_mut(&mut y);
    let nrm = y.norm();
    Ok((vmax, y.iter().map(|v| v / nrm).collect()))
}

/// Whether `(u, lambda)` satisfies the eigen-equation to the default tolerance.
pub fn certify(ctx: &EnergyContext, u: &Field, lambda: f64) -> bool {
    certify_with(ctx, u, lambda, CERT_REL)
}

pub fn certify_with(ctx: &EnergyContext, u: &Field, lambda: f64, rel: f64) -> bool {
    match ctx.residual(u, lambda) {
        Ok(r) => r <= rel * certification_scale(ctx, &u.values, lambda),
        Err(_) => false,
    }
}

/// Ground state `(lambda_1, u_1, residual)` with `g1(u_1) - g2(u_1) = 1`.
pub fn eigen_first(ctx: &EnergyContext) -> Result<(f64, Field, f64)> {
    eigen_first_with(ctx, &SpectrumOptions::default())
}

pub fn eigen_first_with(ctx: &EnergyContext, opts: &SpectrumOptions) -> Result<(f64, Field, f64)> {
    if ctx.feasible_dimension() == 0 {
        return Err(Error::Infeasible("no function satisfies g1 > g2".into()));
    }
    let pol = first_pair(ctx, opts, None)?;
    Ok((pol.lambda, Field::new(*ctx.grid(), pol.u)?, pol.residual))
}

fn to_polished(ctx: &EnergyContext, u: Vec<f64>, lambda: f64) -> Polished {
    let residual = ctx.residual_values(&u, lambda);
    let scale = certification_scale(ctx, &u, lambda).max(1e-300);
    Polished {
        relative: residual / scale,
        u,
        lambda,
        residual,
    }
}

fn first_pair(ctx: &EnergyContext, opts: &SpectrumOptions, warm: Option<&[Vec<f64>]>) -> Result<Polished> {
    let quad = ctx.with_p(2.0)?;
    let lin = lowest_pairs(&quad, 1, warm)?;
    let first = lin.into_iter().next().ok_or_else(|| Error::Infeasible("no feasible direction".into()))?;
    if ctx.p() == 2.0 {
        return Ok(to_polished(ctx, first.u, first.lambda));
    }
    let (u, lambda) = nonlinear::inverse_power(ctx, &first.u, opts.inverse_power_iter)
        .ok_or_else(|| Error::NotConverged("inverse power iteration".into()))?;
    let start = to_polished(ctx, u.clone(), lambda);
    let pol = nonlinear::bordered_newton(ctx, &u, opts.newton_max_iter, 1e-9).unwrap_or(start.clone());
    // keep the descent result if polishing wandered to another branch
    if pol.lambda <= lambda * (1.0 + 1e-6) || pol.relative <= start.relative {
        Ok(if pol.relative <= start.relative { pol } else { start })
    } else {
        Ok(start)
    }
}

/// `lambda_1 <= ... <= lambda_{m_max}` with certified eigenpairs.
pub fn eigen_minimax(ctx: &EnergyContext, m_max: usize) -> Result<SpectralResult> {
    eigen_minimax_with(ctx, m_max, &SpectrumOptions::default(), None)
}

/// As [`eigen_minimax`]; `warm` optionally seeds the `p = 2` eigensolver
/// with fields from a nearby problem.
pub fn eigen_minimax_with(
    ctx: &EnergyContext,
    m_max: usize,
    opts: &SpectrumOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<SpectralResult> {
    if m_max == 0 || m_max > MAX_M {
        return Err(Error::InvalidArgument(format!("m_max must be in 1..={MAX_M}, got {m_max}")));
    }
    let feas = ctx.feasible_dimension();
    let k = m_max.min(feas);
    let pairs: Vec<Polished> = if k == 0 {
        Vec::new()
    } else if ctx.p() == 2.0 {
        lowest_pairs(ctx, k, warm)?
            .into_iter()
            .map(|pr| to_polished(ctx, pr.u, pr.lambda))
            .collect()
    } else {
        nonlinear_branches(ctx, k, feas, opts, warm)?
    };
    let mut lambdas = Vec::with_capacity(m_max);
    let mut eigenfields = Vec::new();
    let mut residuals = Vec::new();
    let mut status = Vec::with_capacity(m_max);
    let mut upper_bounds = Vec::with_capacity(m_max);
    let mut unresolved = false;
    for m in 1..=m_max {
        if m > feas {
            lambdas.push(f64::INFINITY);
            status.push(EigenStatus::Infeasible);
            upper_bounds.push(f64::INFINITY);
            continue;
        }
        let prev = lambdas.last().copied().unwrap_or(f64::NEG_INFINITY);
        let Some(pol) = pairs.get(m - 1).filter(|_| !unresolved) else {
            // fewer branches than feasible indices: nothing certified from here
            unresolved = true;
            let fields: Vec<Vec<f64>> = pairs.iter().map(|p| p.u.clone()).collect();
            let ub = if fields.is_empty() { f64::INFINITY } else { sup_values(ctx, &fields, opts).map(|s| s.0).unwrap_or(f64::INFINITY) };
            lambdas.push(ub.max(prev));
            status.push(EigenStatus::Unresolved);
            upper_bounds.push(ub);
            continue;
        };
        let fields: Vec<Vec<f64>> = pairs[..m].iter().map(|p| p.u.clone()).collect();
        let ub = if ctx.p() == 2.0 || !opts.upper_bounds {
            pol.lambda
        } else {
            match sup_values(ctx, &fields, opts) {
                Ok((v, _)) => v,
                Err(Error::InfeasibleSubspace) => f64::INFINITY,
                Err(e) => return Err(e),
            }
        };
        let certified = pol.relative <= CERT_REL;
        let tol = 1e-6 * pol.lambda.abs();
        if certified && pol.lambda <= ub + tol && pol.lambda >= prev - tol {
            lambdas.push(pol.lambda.max(prev));
            eigenfields.push(Field::new(*ctx.grid(), pol.u.clone())?);
            residuals.push(pol.relative);
            status.push(EigenStatus::Finite);
            upper_bounds.push(ub.max(pol.lambda));
        } else {
            unresolved = true;
            let v = if ub.is_finite() { ub } else { pol.lambda };
            lambdas.push(v.max(prev));
            status.push(EigenStatus::Unresolved);
            upper_bounds.push(ub);
        }
    }
    Ok(SpectralResult {
        lambdas,
        eigenfields,
        residuals,
        status,
        upper_bounds,
    })
}

/// Eigenpairs at `p != 2` following the `p = 2` branches, sorted and
/// deduplicated.
fn nonlinear_branches(
    ctx: &EnergyContext,
    k: usize,
    feas: usize,
    opts: &SpectrumOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<Vec<Polished>> {
    use rayon::prelude::*;
    let quad = ctx.with_p(2.0)?;
    let branches = (k + opts.extra_branches).min(feas);
    let lin = lowest_pairs(&quad, branches, warm)?;
    let mut found: Vec<Polished> = lin
        .par_iter()
        .enumerate()
        .filter_map(|(j, pr)| {
            if j == 0 {
                first_pair(ctx, opts, warm).ok()
            } else {
                nonlinear::continue_in_p(&quad, ctx, &pr.u, opts.continuation_step, opts.newton_max_iter)
            }
        })
        .filter(|p| p.relative <= CERT_REL)
        .collect();
    found.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut out: Vec<Polished> = Vec::with_capacity(found.len());
    for p in found {
        let dup = out.iter().any(|q| {
            (q.lambda - p.lambda).abs() <= 1e-7 * p.lambda.abs() && {
                let c = dot(&q.u, &p.u);
                let nq = dot(&q.u, &q.u).sqrt();
                let np = dot(&p.u, &p.u).sqrt();
                c.abs() >= (1.0 - 1e-6) * nq * np
            }
        });
        if !dup {
            out.push(p);
        }
    }
    out.truncate(k);
    Ok(out)
}
