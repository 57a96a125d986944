//! Eigenpairs for `p != 2`: inverse power iteration for the ground state,
//! bordered Newton polishing, continuation in `p`, and the inner sup of the
//! Rayleigh quotient over a subspace sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::NewtonOptions;
use crate::energy::{certification_scale, EnergyContext, Weight};
use crate::error::{Error, Result};
use crate::grid::dot;
use crate::torsion::{ray_start, solve_tilt, LinearTilt};

#[derive(Debug, Clone)]
pub(crate) struct Polished {
    pub u: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    /// residual relative to the certification scale
    pub relative: f64,
}

fn polished(ctx: &EnergyContext, u: Vec<f64>, lambda: f64) -> Polished {
    let residual = ctx.residual_values(&u, lambda);
    let scale = certification_scale(ctx, &u, lambda).max(1e-300);
    Polished {
        relative: residual / scale,
        u,
        lambda,
        residual,
    }
}

/// Normalized copy with its Rayleigh quotient, if feasible.
fn normalized(ctx: &EnergyContext, u: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut v = u.to_vec();
    ctx.project(&mut v);
    ctx.normalize(&mut v).ok()?;
    let lambda = ctx.rayleigh_values(&v).ok()?;
    lambda.is_finite().then_some((v, lambda))
}

/// Inverse power iteration `v = argmin f(v) + lambda g2(v) - <g1'(u), v>`.
/// Each accepted step lowers the Rayleigh quotient.
pub(crate) fn inverse_power(ctx: &EnergyContext, u0: &[f64], max_iter: usize) -> Option<(Vec<f64>, f64)> {
    let (mut u, mut lambda) = normalized(ctx, u0)?;
    let opts = NewtonOptions::default();
    let mut rhs = vec![0.0; u.len()];
    for _ in 0..max_iter {
        ctx.g_gradient_into(&u, Weight::Nu1, &mut rhs);
        let nu2 = if ctx.weights().nu2_is_zero() { 0.0 } else { lambda };
        let obj = LinearTilt::new(ctx, rhs.clone(), nu2);
        let start = ray_start(&obj, &u);
        let (v, _) = solve_tilt(&obj, &start, &opts);
        let Some((v, lv)) = normalized(ctx, &v) else { break };
        if !(lv < lambda) {
            break;
        }
        let rel = (lambda - lv) / lambda;
        u = v;
        lambda = lv;
        if rel < 1e-12 {
            break;
        }
    }
    Some((u, lambda))
}

/// Newton on `f'(u) = lambda (g1 - g2)'(u)`, `g1(u) - g2(u) = 1`.
///
/// The Jacobian block `H = f'' - lambda (g1 - g2)''` annihilates `u` at a
/// solution, so the bordered system is solved by block elimination and the
/// iterate is renormalized after every step, which removes the error the
/// near-singular direction carries.
pub(crate) fn bordered_newton(ctx: &EnergyContext, u0: &[f64], max_iter: usize, target: f64) -> Option<Polished> {
    let (u, lambda) = normalized(ctx, u0)?;
    let mut cur = polished(ctx, u, lambda);
    let n = cur.u.len();
    let mut c = vec![0.0; n];
    for _ in 0..max_iter {
        if cur.relative <= target {
            break;
        }
        let f = ctx.defect(&cur.u, cur.lambda);
        let mut h = ctx.energy_hessian(&cur.u);
        for (i, d) in ctx.constraint_hessian_diag(&cur.u).iter().enumerate() {
            if *d != 0.0 {
                h.add_diag(i, -cur.lambda * d);
            }
        }
        let Ok(lu) = h.lu() else { break };
        ctx.constraint_gradient_into(&cur.u, &mut c);
        let mut x1: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve(&mut x1);
        let mut x2 = c.clone();
        lu.solve(&mut x2);
        let den = dot(&c, &x2);
        if !(den.is_finite() && den != 0.0) {
            break;
        }
        let resid_g = ctx.constraint_values(&cur.u) - 1.0;
        let dl = -(resid_g + dot(&c, &x1)) / den;
        let du: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + dl * b).collect();
        if du.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..12 {
            let trial: Vec<f64> = cur.u.iter().zip(&du).map(|(a, b)| a + t * b).collect();
            if let Some((v, lv)) = normalized(ctx, &trial) {
                let cand = polished(ctx, v, lv);
                if cand.relative < cur.relative {
                    next = Some(cand);
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some(p) => cur = p,
            None => break,
        }
    }
    Some(cur)
}

/// Follows an eigenpair of `from` (same measures, another exponent) to the
/// exponent of `to`, polishing at every intermediate exponent.
pub(crate) fn continue_in_p(from: &EnergyContext, to: &EnergyContext, u: &[f64], step: f64, max_newton: usize) -> Option<Polished> {
    let p0 = from.p();
    let p1 = to.p();
    let mut u = u.to_vec();
    let mut q = p0;
    let mut h = step.min((p1 - p0).abs()).max(1e-3);
    let mut last: Option<Polished> = None;
    while (q - p1).abs() > 1e-12 {
        let dir = (p1 - q).signum();
        let next = if (p1 - q).abs() <= h * (1.0 + 1e-9) { p1 } else { q + dir * h };
        let ctx = if next == p1 { to.clone() } else { to.with_p(next).ok()? };
        let tgt = if next == p1 { 1e-9 } else { 1e-5 };
        match bordered_newton(&ctx, &u, max_newton, tgt) {
            Some(pol) if pol.relative <= 1e-4 || (next == p1 && pol.relative <= 1e-3) => {
                u = pol.u.clone();
                q = next;
                last = Some(pol);
                h = (h * 1.5).min(step);
            }
            _ => {
                h *= 0.5;
                if h < 1e-3 {
                    return last.filter(|_| q == p1);
                }
            }
        }
    }
    match last {
        Some(p) if q == p1 => Some(p),
        None => bordered_newton(to, &u, max_newton, 1e-9),
        _ => None,
    }
}

/// Outcome of the inner maximization over `span(basis)`.
#[derive(Debug, Clone)]
pub(crate) struct SphereMax {
    pub value: f64,
    pub coefficients: Vec<f64>,
}

fn combine(basis: &[Vec<f64>], xi: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; basis[0].len()];
    for (v, c) in basis.iter().zip(xi) {
        for (o, x) in u.iter_mut().zip(v) {
            *o += c * x;
        }
    }
    u
}

fn unit(mut xi: Vec<f64>) -> Vec<f64> {
    let n = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    xi.iter_mut().for_each(|v| *v /= n);
    xi
}

fn starts(m: usize, total: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(total.max(2 * m));
    for j in 0..m {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; m];
            e[j] = s;
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < total.max(2 * m) {
        let v: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            out.push(unit(v));
        }
    }
    out
}

/// Projected gradient ascent of `phi` on the unit sphere; `phi` returns the
/// value and the Euclidean gradient or `None` outside its domain.
fn sphere_ascent<F>(phi: F, xi0: Vec<f64>, max_iter: usize) -> Option<(f64, Vec<f64>)>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut xi = unit(xi0);
    let (mut val, mut grad) = phi(&xi)?;
    let mut tau = 0.1;
    for _ in 0..max_iter {
        // tangential part, relative to the value (phi is homogeneous of degree 0)
        let radial = dot(&grad, &xi);
        let tang: Vec<f64> = grad.iter().zip(&xi).map(|(g, x)| g - radial * x).collect();
        let tn = tang.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tn <= 1e-13 * val.abs().max(1e-300) {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let trial = unit(xi.iter().zip(&tang).map(|(x, g)| x + tau * g / tn).collect());
            if let Some((v, g)) = phi(&trial) {
                if v > val {
                    let gain = (v - val) / val.abs().max(1e-300);
                    xi = trial;
                    val = v;
                    grad = g;
                    tau = (tau * 1.5).min(1.0);
                    improved = true;
                    if gain < 1e-14 {
                        return Some((val, xi));
                    }
                    break;
                }
            }
            tau *= 0.5;
            if tau < 1e-14 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    Some((val, xi))
}

/// `max R` over the unit sphere of `span(basis)` for a general exponent.
pub(crate) fn sup_ascent(ctx: &EnergyContext, basis: &[Vec<f64>], n_starts: usize, seed: u64) -> Result<SphereMax> {
    let m = basis.len();
    let n = basis[0].len();
    let cone = |xi: &[f64], sign: f64| -> Option<(f64, Vec<f64>)> {
        let u = combine(basis, xi);
        let g = ctx.constraint_values(&u);
        let mut dg = vec![0.0; n];
        ctx.constraint_gradient_into(&u, &mut dg);
        Some((sign * g, basis.iter().map(|v| sign * dot(v, &dg)).collect()))
    };
    let st = starts(m, n_starts, seed);
    // extent of the feasible cone on the sphere
    let mut gmax = f64::NEG_INFINITY;
    let mut gmin = (f64::INFINITY, st[0].clone());
    for s in &st {
        if let Some((v, _)) = sphere_ascent(|x| cone(x, 1.0), s.clone(), 200) {
            gmax = gmax.max(v);
        }
        if m > 1 {
            if let Some((v, x)) = sphere_ascent(|x| cone(x, -1.0), s.clone(), 200) {
                if -v < gmin.0 {
                    gmin = (-v, x);
                }
            }
        } else {
            let (v, _) = cone(s, 1.0).unwrap();
            if v < gmin.0 {
                gmin = (v, s.clone());
            }
        }
    }
    if !(gmax > 0.0) {
        return Err(Error::InfeasibleSubspace);
    }
    if gmin.0 <= crate::energy::FEASIBILITY_TOL * gmax {
        // the sphere leaves the cone: the quotient blows up at its boundary
        return Ok(SphereMax {
            value: f64::INFINITY,
            coefficients: gmin.1,
        });
    }
    let ray = |xi: &[f64]| -> Option<(f64, Vec<f64>)> {
        let u = combine(basis, xi);
        let g = ctx.constraint_values(&u);
        if !(g > 0.0) {
            return None;
        }
        let f = ctx.f_values(&u);
        if !f.is_finite() {
            return None;
        }
        let r = f / g;
        let d = ctx.defect(&u, r);
        Some((r, basis.iter().map(|v| dot(v, &d) / g).collect()))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in &st {
        if let Some((v, x)) = sphere_ascent(ray, s.clone(), 500) {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, x));
            }
        }
    }
    let (value, coefficients) = best.ok_or(Error::InfeasibleSubspace)?;
    Ok(SphereMax { value, coefficients })
}
