//! Damped Newton minimization of smooth strictly convex objectives with
//! banded Hessians.

use serde::Serialize;

use crate::grid::dot;
use crate::linalg::SymBand;

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_decrement: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Relative objective decrement threshold.
    pub decrement_tol: f64,
    /// Gradient dual-norm threshold, relative to the objective's scale.
    pub gradient_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            decrement_tol: 1e-10,
            gradient_tol: 1e-8,
        }
    }
}

pub(crate) trait ConvexObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64]) -> SymBand;
    fn project(&self, x: &mut [f64]);
    fn dual_norm(&self, g: &[f64]) -> f64;
    /// Reference size of the gradient the tolerance is relative to.
    fn gradient_scale(&self) -> f64;
}

pub(crate) fn minimize<O: ConvexObjective>(obj: &O, x0: &[f64], opts: &NewtonOptions) -> (Vec<f64>, SolveReport) {
    let n = x0.len();
    let mut x = x0.to_vec();
    obj.project(&mut x);
    let scale = obj.gradient_scale().max(1e-300);
    let mut j = obj.value(&x);
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut gtrial = vec![0.0; n];
    let mut decrement = f64::INFINITY;
    let mut gnorm;
    let mut iterations = 0;
    let mut stalled = 0;
    loop {
        obj.gradient(&x, &mut grad);
        gnorm = obj.dual_norm(&grad);
        let small_grad = gnorm <= opts.gradient_tol * scale;
        if small_grad && (decrement <= opts.decrement_tol || iterations == 0) {
            return (
                x,
                SolveReport {
                    iterations,
                    final_decrement: if iterations == 0 { 0.0 } else { decrement },
                    gradient_norm: gnorm / scale,
                    converged: true,
                },
            );
        }
        if iterations >= opts.max_iter || stalled >= 3 {
            break;
        }
        iterations += 1;
        let dir = newton_direction(obj, &x, &grad);
        let slope = dot(&grad, &dir);
        let (dir, slope) = if slope < 0.0 && slope.is_finite() {
            (dir, slope)
        } else {
            let d: Vec<f64> = grad.iter().map(|g| -g).collect();
            let s = -dot(&grad, &grad);
            (d, s)
        };
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            for i in 0..n {
                trial[i] = x[i] + t * dir[i];
            }
            obj.project(&mut trial);
            let jt = obj.value(&trial);
            if jt.is_finite() && jt <= j + 1e-4 * t * slope {
                accepted = Some(jt);
                break;
            }
            // below round-off in the value: fall back to the gradient as merit
            if jt.is_finite() && (jt - j).abs() <= 64.0 * f64::EPSILON * j.abs().max(1e-300) {
                obj.gradient(&trial, &mut gtrial);
                if obj.dual_norm(&gtrial) < gnorm {
                    accepted = Some(jt.min(j));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(jt) => {
                decrement = (j - jt).abs() / j.abs().max(jt.abs()).max(1e-300);
                if jt == j {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                std::mem::swap(&mut x, &mut trial);
                j = jt;
            }
            None => {
                // no decrease representable: round-off floor
                decrement = 0.0;
                obj.gradient(&x, &mut grad);
                gnorm = obj.dual_norm(&grad);
                let converged = gnorm <= opts.gradient_tol * scale;
                return (
                    x,
                    SolveReport {
                        iterations,
                        final_decrement: decrement,
                        gradient_norm: gnorm / scale,
                        converged,
                    },
                );
            }
        }
    }
    (
        x,
        SolveReport {
            iterations,
            final_decrement: decrement,
            gradient_norm: gnorm / scale,
            converged: stalled >= 3 && gnorm <= opts.gradient_tol * scale,
        },
    )
}

fn newton_direction<O: ConvexObjective>(obj: &O, x: &[f64], grad: &[f64]) -> Vec<f64> {
    let h = obj.hessian(x);
    let mut shift = 0.0;
    let base = h.max_abs_diag().max(1e-300);
    for _ in 0..12 {
        let mut hs = h.clone();
        if shift > 0.0 {
            for i in 0..hs.n() {
                hs.add_diag(i, shift);
            }
        }
        if let Ok(ch) = hs.cholesky() {
            let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
            ch.solve(&mut d);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        shift = if shift == 0.0 { 1e-12 * base } else { shift * 100.0 };
    }
    grad.iter().map(|g| -g).collect()
}
