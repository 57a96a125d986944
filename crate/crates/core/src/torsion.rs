//! Torsion functions, the torsion distance between measures and the
//! Moreau-Yosida proximal map of `f_mu`.

use crate::convex::{minimize, ConvexObjective, NewtonOptions, SolveReport};
use crate::energy::{signed_pow, EnergyContext};
use crate::error::{Error, Result};
use crate::grid::{dot, Field, GridSpec};
use crate::linalg::SymBand;
use crate::measure::{CapacitaryMeasure, WeightPair};

fn context(mu: &CapacitaryMeasure) -> Result<EnergyContext> {
    EnergyContext::new(mu.clone(), WeightPair::lebesgue(*mu.grid()))
}

/// `f_mu(v) - <b, v>` for a fixed nodal covector `b`.
pub(crate) struct LinearTilt<'a> {
    pub ctx: &'a EnergyContext,
    /// `lambda * g2` is added when nonzero
    pub nu2_factor: f64,
    pub rhs: Vec<f64>,
    pub scale: f64,
}

impl<'a> LinearTilt<'a> {
    pub fn new(ctx: &'a EnergyContext, rhs: Vec<f64>, nu2_factor: f64) -> Self {
        let scale = ctx.grid().dual_norm(&rhs, ctx.p());
        Self {
            ctx,
            nu2_factor,
            rhs,
            scale,
        }
    }

    fn nu2(&self) -> &[f64] {
        self.ctx.weight_nodal(crate::energy::Weight::Nu2)
    }
}

impl ConvexObjective for LinearTilt<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.ctx.f_values_reg(x) - dot(&self.rhs, x);
        if self.nu2_factor != 0.0 {
            v += self.nu2_factor * self.ctx.g_values(x, crate::energy::Weight::Nu2);
        }
        v
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.ctx.energy_gradient_into(x, out);
        let p = self.ctx.p();
        for (i, o) in out.iter_mut().enumerate() {
            if self.ctx.constrained()[i] {
                continue;
            }
            *o -= self.rhs[i];
            if self.nu2_factor != 0.0 {
                let b = self.nu2()[i];
                if b != 0.0 {
                    *o += self.nu2_factor * b * signed_pow(x[i], p - 1.0);
                }
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> SymBand {
        let mut h = self.ctx.energy_hessian(x);
        if self.nu2_factor != 0.0 {
            let p = self.ctx.p();
            let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let eps = (1e-14 * m * m).max(1e-300);
            for (i, b) in self.nu2().iter().enumerate() {
                if *b != 0.0 && !self.ctx.constrained()[i] {
                    let c = if p == 2.0 { 1.0 } else { (x[i] * x[i] + eps).powf((p - 2.0) / 2.0) };
                    h.add_diag(i, self.nu2_factor * b * (p - 1.0) * c);
                }
            }
        }
        h
    }

    fn project(&self, x: &mut [f64]) {
        self.ctx.project(x);
    }

    fn dual_norm(&self, g: &[f64]) -> f64 {
        self.ctx.grid().dual_norm(g, self.ctx.p())
    }

    fn gradient_scale(&self) -> f64 {
        self.scale
    }
}

/// Best multiple of `dir` for `t^p A - t B` (both homogeneous parts known).
pub(crate) fn ray_start(obj: &LinearTilt<'_>, dir: &[f64]) -> Vec<f64> {
    let p = obj.ctx.p();
    let lin = dot(&obj.rhs, dir);
    let quad = obj.value(dir) + lin; // homogeneous part at t = 1
    if !(lin > 0.0 && quad > 0.0 && quad.is_finite()) {
        return vec![0.0; dir.len()];
    }
    let t = (lin / (p * quad)).powf(1.0 / (p - 1.0));
    dir.iter().map(|v| v * t).collect()
}

pub(crate) fn solve_tilt(obj: &LinearTilt<'_>, start: &[f64], opts: &NewtonOptions) -> (Vec<f64>, SolveReport) {
    minimize(obj, start, opts)
}

/// Torsion function of `mu`: the minimizer of `f_mu(v) - integral v`.
pub fn torsion(mu: &CapacitaryMeasure) -> Result<(Field, SolveReport)> {
    torsion_with(mu, &NewtonOptions::default())
}

pub fn torsion_with(mu: &CapacitaryMeasure, opts: &NewtonOptions) -> Result<(Field, SolveReport)> {
    let ctx = context(mu)?;
    let grid = *ctx.grid();
    let mut rhs = vec![grid.cell_volume(); grid.n_nodes()];
    ctx.project(&mut rhs);
    if rhs.iter().all(|v| *v == 0.0) {
        let rep = SolveReport {
            iterations: 0,
            final_decrement: 0.0,
            gradient_norm: 0.0,
            converged: true,
        };
        return Ok((Field::zeros(grid), rep));
    }
    let start = if ctx.p() == 2.0 {
        vec![0.0; grid.n_nodes()]
    } else {
        let quad = ctx.with_p(2.0)?;
        let lin = LinearTilt::new(&quad, rhs.clone(), 0.0);
        let (w2, _) = solve_tilt(&lin, &vec![0.0; grid.n_nodes()], opts);
        ray_start(&LinearTilt::new(&ctx, rhs.clone(), 0.0), &w2)
    };
    let obj = LinearTilt::new(&ctx, rhs, 0.0);
    let (mut w, rep) = solve_tilt(&obj, &start, opts);
    // the minimizer is nonnegative; clear round-off of the wrong sign
    for v in w.iter_mut() {
        if *v < 0.0 && v.abs() < 1e-14 {
            *v = 0.0;
        }
    }
    Ok((Field::new(grid, w)?, rep))
}

/// Discrete `L^p` distance between the torsion functions of two measures.
pub fn gamma_distance(mu1: &CapacitaryMeasure, mu2: &CapacitaryMeasure) -> Result<f64> {
    if mu1.grid() != mu2.grid() {
        return Err(Error::GridMismatch);
    }
    if mu1 == mu2 {
        return Ok(0.0);
    }
    let (w1, r1) = torsion(mu1)?;
    let (w2, r2) = torsion(mu2)?;
    if !(r1.converged && r2.converged) {
        return Err(Error::NotConverged("torsion solve".into()));
    }
    let diff: Vec<f64> = w1.values.iter().zip(&w2.values).map(|(a, b)| a - b).collect();
    Ok(mu1.grid().lp_norm(&diff, mu1.grid().p()))
}

/// `(k/p) integral |z - u|^p b` with the same corner quadrature as the energies.
pub fn prox_penalty(grid: &GridSpec, z: &Field, u: &Field, k: f64, b: &[f64]) -> f64 {
    let p = grid.p();
    let beta = grid.lump_to_nodes(b);
    beta.iter()
        .zip(z.values.iter().zip(&u.values))
        .map(|(w, (x, y))| w * (x - y).abs().powf(p))
        .sum::<f64>()
        * k
        / p
}

struct ProxObjective<'a> {
    ctx: &'a EnergyContext,
    z: &'a [f64],
    k: f64,
    beta: Vec<f64>,
    scale: f64,
}

impl ConvexObjective for ProxObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let p = self.ctx.p();
        let pen: f64 = self
            .beta
            .iter()
            .zip(x.iter().zip(self.z))
            .map(|(w, (a, b))| w * (a - b).abs().powf(p))
            .sum();
        self.k * pen / p + self.ctx.f_values_reg(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let p = self.ctx.p();
        self.ctx.energy_gradient_into(x, out);
        for i in 0..x.len() {
            if !self.ctx.constrained()[i] {
                out[i] += self.k * self.beta[i] * signed_pow(x[i] - self.z[i], p - 1.0);
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> SymBand {
        let p = self.ctx.p();
        let mut h = self.ctx.energy_hessian(x);
        let m = x.iter().chain(self.z).fold(0.0f64, |a, v| a.max(v.abs()));
        let eps = (1e-14 * m * m).max(1e-300);
        for i in 0..x.len() {
            if !self.ctx.constrained()[i] {
                let d = x[i] - self.z[i];
                let c = if p == 2.0 { 1.0 } else { (d * d + eps).powf((p - 2.0) / 2.0) };
                h.add_diag(i, self.k * self.beta[i] * (p - 1.0) * c);
            }
        }
        h
    }

    fn project(&self, x: &mut [f64]) {
        self.ctx.project(x);
    }

    fn dual_norm(&self, g: &[f64]) -> f64 {
        self.ctx.grid().dual_norm(g, self.ctx.p())
    }

    fn gradient_scale(&self) -> f64 {
        self.scale
    }
}

/// Moreau-Yosida proximal point `argmin (k/p) integral |u - z|^p b + f_mu(u)`.
///
/// Pass `None` for `b` to use the unit weight.
pub fn prox(z: &Field, k: f64, mu: &CapacitaryMeasure, b: Option<&[f64]>) -> Result<(Field, SolveReport)> {
    prox_with(z, k, mu, b, &NewtonOptions::default())
}

pub fn prox_with(
    z: &Field,
    k: f64,
    mu: &CapacitaryMeasure,
    b: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<(Field, SolveReport)> {
    let grid = *mu.grid();
    if z.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("k must be positive, got {k}")));
    }
    let ones = vec![1.0; grid.n_cells()];
    let b = b.unwrap_or(&ones);
    if b.len() != grid.n_cells() || b.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("b must be positive on every cell".into()));
    }
    let ctx = context(mu)?;
    let beta = grid.lump_to_nodes(b);
    // gradient at u = 0 sets the scale
    let mut g0: Vec<f64> = beta
        .iter()
        .zip(&z.values)
        .map(|(w, x)| -k * w * signed_pow(*x, grid.p() - 1.0))
        .collect();
    ctx.project(&mut g0);
    let scale = grid.dual_norm(&g0, grid.p()).max(f64::MIN_POSITIVE);
    let obj = ProxObjective {
        ctx: &ctx,
        z: &z.values,
        k,
        beta,
        scale,
    };
    if g0.iter().all(|v| *v == 0.0) {
        let rep = SolveReport {
            iterations: 0,
            final_decrement: 0.0,
            gradient_norm: 0.0,
            converged: true,
        };
        return Ok((Field::zeros(grid), rep));
    }
    let (u, rep) = minimize(&obj, &z.values, opts);
    Ok((Field::new(grid, u)?, rep))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_torsion_is_parabola() {
        let g = GridSpec::line(64, 1.0, 2.0).unwrap();
        let (w, rep) = torsion(&CapacitaryMeasure::zero(g)).unwrap();
        assert!(rep.converged);
        for (i, v) in w.values.iter().enumerate() {
            let x = g.node_position(i)[0];
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blocked_measure_has_zero_torsion() {
        let g = GridSpec::line(16, 1.0, 3.0).unwrap();
        let mu = CapacitaryMeasure::from_potential(g, &[f64::INFINITY; 16]).unwrap();
        let (w, rep) = torsion(&mu).unwrap();
        assert!(rep.converged);
        assert!(w.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn p_torsion_satisfies_optimality() {
        for p in [1.5, 3.0] {
            let g = GridSpec::line(128, 1.0, p).unwrap();
            let (w, rep) = torsion(&CapacitaryMeasure::zero(g)).unwrap();
            assert!(rep.converged, "p = {p}: {rep:?}");
            assert!(w.values.iter().all(|v| *v >= 0.0));
            // closed form max: ((p-1)/p) * (1/2)^{p/(p-1)}
            let q = p / (p - 1.0);
            let exact = (1.0 / q) * 0.5f64.powf(q);
            assert!((w.max_value() - exact).abs() / exact < 2e-2, "p = {p}");
        }
    }

    #[test]
    fn prox_of_zero_is_zero() {
        let g = GridSpec::line(16, 1.0, 2.0).unwrap();
        let mu = CapacitaryMeasure::from_potential(g, &[3.0; 16]).unwrap();
        let (u, _) = prox(&Field::zeros(g), 2.0, &mu, None).unwrap();
        assert!(u.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn prox_with_blocked_measure_is_zero() {
        let g = GridSpec::line(16, 1.0, 2.0).unwrap();
        let mu = CapacitaryMeasure::from_potential(g, &[f64::INFINITY; 16]).unwrap();
        let z = Field::from_fn(g, |x| x[0]);
        let (u, _) = prox(&z, 10.0, &mu, None).unwrap();
        assert!(u.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn prox_rejects_bad_parameters() {
        let g = GridSpec::line(8, 1.0, 2.0).unwrap();
        let mu = CapacitaryMeasure::zero(g);
        let z = Field::zeros(g);
        assert!(prox(&z, 0.0, &mu, None).is_err());
        assert!(prox(&z, 1.0, &mu, Some(&[0.0; 8])).is_err());
    }
}
