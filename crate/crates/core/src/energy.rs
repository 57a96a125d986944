//! The energies `f_mu`, `g_1`, `g_2`, the Rayleigh functional, their
//! derivatives and the eigen-equation residual.
//!
//! With nodal weights obtained by lumping cell densities onto corners,
//!
//! ```text
//! f(u)   = 1/p sum_c h^d |grad_c u|^p + 1/p sum_i a_i |u_i|^p
//! g_j(u) = 1/p sum_i b_ij |u_i|^p
//! ```
//!
//! where `a` collects the finite density of `mu` and its atoms and `b_1`,
//! `b_2` those of `nu1`, `nu2`. Nodes touching a blocked cell are pinned to 0.

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::linalg::SymBand;
use crate::measure::{CapacitaryMeasure, WeightPair};

/// Which half of the weight pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Nu1,
    Nu2,
}

/// Triple `(mu, nu1, nu2)` on one grid.
#[derive(Debug, Clone)]
pub struct EnergyContext {
    grid: GridSpec,
    mu: CapacitaryMeasure,
    weights: WeightPair,
    eps_reg: f64,
    constrained: Vec<bool>,
    mu_nodal: Vec<f64>,
    w1_nodal: Vec<f64>,
    w2_nodal: Vec<f64>,
}

/// Relative margin used for the strict inequality `g1 - g2 > 0`.
pub const FEASIBILITY_TOL: f64 = 1e-12;

impl EnergyContext {
    pub fn new(mu: CapacitaryMeasure, weights: WeightPair) -> Result<Self> {
        let eps = 1e-12 * mu.grid().min_spacing().powi(2);
        Self::with_regularization(mu, weights, eps)
    }

    pub fn with_regularization(mu: CapacitaryMeasure, weights: WeightPair, eps_reg: f64) -> Result<Self> {
        if mu.grid() != weights.grid() {
            return Err(Error::GridMismatch);
        }
        if !(eps_reg >= 0.0 && eps_reg.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps_reg must be >= 0, got {eps_reg}")));
        }
        let grid = *mu.grid();
        let constrained = mu.constrained_nodes();
        let mut mu_nodal = grid.lump_to_nodes(&mu.finite_density());
        for a in mu.atoms() {
            mu_nodal[a.node] += a.mass;
        }
        let mut w1_nodal = grid.lump_to_nodes(&weights.w1);
        for a in &weights.w1_atoms {
            w1_nodal[a.node] += a.mass;
        }
        let w2_nodal = grid.lump_to_nodes(&weights.w2);
        Ok(Self {
            grid,
            mu,
            weights,
            eps_reg,
            constrained,
            mu_nodal,
            w1_nodal,
            w2_nodal,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn p(&self) -> f64 {
        self.grid.p()
    }

    pub fn mu(&self) -> &CapacitaryMeasure {
        &self.mu
    }

    pub fn weights(&self) -> &WeightPair {
        &self.weights
    }

    pub fn eps_reg(&self) -> f64 {
        self.eps_reg
    }

    /// Nodes forced to zero by blocked cells.
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn free_count(&self) -> usize {
        self.constrained.iter().filter(|c| !**c).count()
    }

    pub(crate) fn weight_nodal(&self, which: Weight) -> &[f64] {
        match which {
            Weight::Nu1 => &self.w1_nodal,
            Weight::Nu2 => &self.w2_nodal,
        }
    }

    /// Net nodal weight of `nu1 - nu2`.
    pub(crate) fn net_weight(&self) -> Vec<f64> {
        self.w1_nodal.iter().zip(&self.w2_nodal).map(|(a, b)| a - b).collect()
    }

    /// Number of free nodes carrying positive net weight. An `m`-dimensional
    /// subspace with `g1 > g2` on its whole unit sphere exists iff this is `>= m`.
    pub fn feasible_dimension(&self) -> usize {
        self.w1_nodal
            .iter()
            .zip(&self.w2_nodal)
            .zip(&self.constrained)
            .filter(|((a, b), c)| !**c && **a - **b > 0.0)
            .count()
    }

    /// Same measures and weights with another exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        let grid = self.grid.with_p(p)?;
        let mut ctx = self.clone();
        ctx.grid = grid;
        ctx.mu = self.mu.regrid(grid);
        ctx.weights = self.weights.regrid(grid);
        Ok(ctx)
    }

    fn check(&self, u: &Field) {
        debug_assert_eq!(u.grid().n_nodes(), self.grid.n_nodes());
        debug_assert_eq!(u.len(), self.grid.n_nodes());
    }

    /// Whether `u` vanishes on every pinned node.
    pub fn admissible(&self, u: &[f64]) -> bool {
        u.iter().zip(&self.constrained).all(|(v, c)| !*c || *v == 0.0)
    }

    /// Zeroes `u` on the pinned nodes.
    pub fn project(&self, u: &mut [f64]) {
        for (v, c) in u.iter_mut().zip(&self.constrained) {
            if *c {
                *v = 0.0;
            }
        }
    }

    /// `f_mu(u)`, `+inf` if `u` is nonzero next to a blocked cell.
    pub fn f_energy(&self, u: &Field) -> f64 {
        self.check(u);
        self.f_values(&u.values)
    }

    pub(crate) fn f_values(&self, u: &[f64]) -> f64 {
        self.f_values_eps(u, 0.0)
    }

    /// `f_mu` with the same gradient regularization the derivatives use,
    /// so that value, gradient and Hessian are mutually consistent.
    pub(crate) fn f_values_reg(&self, u: &[f64]) -> f64 {
        if self.p() < 2.0 {
            self.f_values_eps(u, self.eps_reg)
        } else {
            self.f_values(u)
        }
    }

    fn f_values_eps(&self, u: &[f64], eps: f64) -> f64 {
        if !self.admissible(u) {
            return f64::INFINITY;
        }
        let p = self.p();
        let vol = self.grid.cell_volume();
        let g = &self.grid;
        let hx = g.spacing(0);
        let hy = g.spacing(1);
        let at = |i: Option<usize>| i.map_or(0.0, |i| u[i]);
        let eps0 = eps.powf(p / 2.0);
        let mut cells = 0.0;
        for c in 0..g.n_cells() {
            let (b, x, y) = g.stencil(c);
            let u0 = at(b);
            let gx = (at(x) - u0) / hx;
            let gy = if g.dim() == 2 { (at(y) - u0) / hy } else { 0.0 };
            let s = gx * gx + gy * gy;
            if eps > 0.0 {
                cells += (s + eps).powf(p / 2.0) - eps0;
            } else if s > 0.0 {
                cells += if p == 2.0 { s } else { s.powf(p / 2.0) };
            }
        }
        cells *= vol;
        let pot: f64 = self
            .mu_nodal
            .iter()
            .zip(u)
            .filter(|(a, _)| **a != 0.0)
            .map(|(a, x)| a * x.abs().powf(p))
            .sum();
        (cells + pot) / p
    }

    pub fn g_energy(&self, u: &Field, which: Weight) -> f64 {
        self.check(u);
        self.g_values(&u.values, which)
    }

    pub(crate) fn g_values(&self, u: &[f64], which: Weight) -> f64 {
        let p = self.p();
        self.weight_nodal(which)
            .iter()
            .zip(u)
            .filter(|(b, _)| **b != 0.0)
            .map(|(b, x)| b * x.abs().powf(p))
            .sum::<f64>()
            / p
    }

    /// `g1(u) - g2(u)`.
    pub(crate) fn constraint_values(&self, u: &[f64]) -> f64 {
        self.g_values(u, Weight::Nu1) - self.g_values(u, Weight::Nu2)
    }

    fn feasible_margin(&self, u: &[f64]) -> Result<f64> {
        let g1 = self.g_values(u, Weight::Nu1);
        let g = g1 - self.g_values(u, Weight::Nu2);
        if g > FEASIBILITY_TOL * g1 && g > 0.0 {
            Ok(g)
        } else {
            Err(Error::ConstraintViolated(g))
        }
    }

    /// `f(u) / (g1(u) - g2(u))` on the feasible cone.
    pub fn rayleigh(&self, u: &Field) -> Result<f64> {
        self.check(u);
        self.rayleigh_values(&u.values)
    }

    pub(crate) fn rayleigh_values(&self, u: &[f64]) -> Result<f64> {
        let g = self.feasible_margin(u)?;
        let f = self.f_values(u);
        Ok(if f.is_infinite() { f64::INFINITY } else { f / g })
    }

    /// Derivative of `f_mu`, zero on pinned nodes.
    pub fn energy_gradient(&self, u: &Field) -> Field {
        self.check(u);
        let mut out = vec![0.0; u.len()];
        self.energy_gradient_into(&u.values, &mut out);
        Field::new(self.grid, out).expect("length")
    }

    pub(crate) fn energy_gradient_into(&self, u: &[f64], out: &mut [f64]) {
        let p = self.p();
        let g = &self.grid;
        let vol = g.cell_volume();
        let hx = g.spacing(0);
        let hy = g.spacing(1);
        let at = |i: Option<usize>| i.map_or(0.0, |i| u[i]);
        out.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..g.n_cells() {
            let (b, x, y) = g.stencil(c);
            let u0 = at(b);
            let gx = (at(x) - u0) / hx;
            let gy = if g.dim() == 2 { (at(y) - u0) / hy } else { 0.0 };
            let s = gx * gx + gy * gy;
            if s == 0.0 && p >= 2.0 {
                continue;
            }
            let coef = vol * flux_coefficient(s, p, self.eps_reg);
            let fx = coef * gx / hx;
            if let Some(i) = x {
                out[i] += fx;
            }
            if let Some(i) = b {
                out[i] -= fx;
            }
            if g.dim() == 2 {
                let fy = coef * gy / hy;
                if let Some(i) = y {
                    out[i] += fy;
                }
                if let Some(i) = b {
                    out[i] -= fy;
                }
            }
        }
        for (i, a) in self.mu_nodal.iter().enumerate() {
            if *a != 0.0 {
                out[i] += a * signed_pow(u[i], p - 1.0);
            }
        }
        self.project(out);
    }

    /// Derivative of `g_1` or `g_2`, zero on pinned nodes.
    pub fn g_gradient(&self, u: &Field, which: Weight) -> Field {
        self.check(u);
        let mut out = vec![0.0; u.len()];
        self.g_gradient_into(&u.values, which, &mut out);
        Field::new(self.grid, out).expect("length")
    }

    pub(crate) fn g_gradient_into(&self, u: &[f64], which: Weight, out: &mut [f64]) {
        let p = self.p();
        for ((o, b), x) in out.iter_mut().zip(self.weight_nodal(which)).zip(u) {
            *o = if *b != 0.0 { b * signed_pow(*x, p - 1.0) } else { 0.0 };
        }
        self.project(out);
    }

    /// Derivative of `g1 - g2`.
    pub(crate) fn constraint_gradient_into(&self, u: &[f64], out: &mut [f64]) {
        let p = self.p();
        for (i, o) in out.iter_mut().enumerate() {
            let b = self.w1_nodal[i] - self.w2_nodal[i];
            *o = if b != 0.0 && !self.constrained[i] {
                b * signed_pow(u[i], p - 1.0)
            } else {
                0.0
            };
        }
    }

    /// `f'(u) - lambda (g1'(u) - g2'(u))` as a nodal covector.
    pub(crate) fn defect(&self, u: &[f64], lambda: f64) -> Vec<f64> {
        let mut r = vec![0.0; u.len()];
        self.energy_gradient_into(u, &mut r);
        let mut gc = vec![0.0; u.len()];
        self.constraint_gradient_into(u, &mut gc);
        for (a, b) in r.iter_mut().zip(&gc) {
            *a -= lambda * b;
        }
        r
    }

    /// Discrete `L^{p'}` norm of `f'(u) - lambda (g1'(u) - g2'(u))`.
    pub fn residual(&self, u: &Field, lambda: f64) -> Result<f64> {
        self.check(u);
        self.feasible_margin(&u.values)?;
        Ok(self.residual_values(&u.values, lambda))
    }

    pub(crate) fn residual_values(&self, u: &[f64], lambda: f64) -> f64 {
        self.grid.dual_norm(&self.defect(u, lambda), self.p())
    }

    /// Hessian of `f_mu`, regularized where it degenerates. Pinned rows are the identity.
    pub(crate) fn energy_hessian(&self, u: &[f64]) -> SymBand {
        let p = self.p();
        let g = &self.grid;
        let vol = g.cell_volume();
        let hx = g.spacing(0);
        let hy = g.spacing(1);
        let at = |i: Option<usize>| i.map_or(0.0, |i| u[i]);
        let mut h = SymBand::zeros(g.n_nodes(), g.bandwidth());
        // floor for degenerate cells (p > 2, vanishing gradient)
        let mut smax: f64 = 0.0;
        let mut cells = Vec::with_capacity(g.n_cells());
        for c in 0..g.n_cells() {
            let (b, x, y) = g.stencil(c);
            let u0 = at(b);
            let gx = (at(x) - u0) / hx;
            let gy = if g.dim() == 2 { (at(y) - u0) / hy } else { 0.0 };
            let s = gx * gx + gy * gy;
            smax = smax.max(s);
            cells.push((b, x, y, gx, gy, s));
        }
        let eps_h = if p < 2.0 {
            self.eps_reg.max(1e-300)
        } else {
            (1e-10 * smax).max(1e-300)
        };
        for (b, x, y, gx, gy, s) in cells {
            let se = s + eps_h;
            let a = se.powf((p - 2.0) / 2.0);
            let k = (p - 2.0) * se.powf((p - 4.0) / 2.0);
            // H_g = a I + k g g^T; J maps (b, x, y) to (gx, gy)
            let hxx = vol * (a + k * gx * gx) / (hx * hx);
            let hyy = vol * (a + k * gy * gy) / (hy * hy);
            let hxy = vol * (k * gx * gy) / (hx * hy);
            // gx = (u_x - u_b)/hx, gy = (u_y - u_b)/hy
            let by0 = if g.dim() == 2 { -1.0 } else { 0.0 };
            let nodes = [(b, -1.0, by0), (x, 1.0, 0.0), (y, 0.0, 1.0)];
            for (ni, ax, ay) in nodes {
                let Some(i) = ni else { continue };
                for (nj, bx, by) in nodes {
                    let Some(j) = nj else { continue };
                    if j > i {
                        continue;
                    }
                    let v = ax * bx * hxx + ay * by * hyy + (ax * by + ay * bx) * hxy;
                    if v != 0.0 {
                        if i == j {
                            h.add_diag(i, v);
                        } else {
                            h.add(i, j, v);
                        }
                    }
                }
            }
        }
        let ueps = nodal_eps(u);
        for (i, a) in self.mu_nodal.iter().enumerate() {
            if *a != 0.0 {
                h.add_diag(i, a * (p - 1.0) * pow_reg(u[i], p, ueps));
            }
        }
        for (i, c) in self.constrained.iter().enumerate() {
            if *c {
                h.pin(i);
            }
        }
        h
    }

    /// Diagonal Hessian of `g1 - g2` (free nodes only).
    pub(crate) fn constraint_hessian_diag(&self, u: &[f64]) -> Vec<f64> {
        let p = self.p();
        let ueps = nodal_eps(u);
        (0..u.len())
            .map(|i| {
                let b = self.w1_nodal[i] - self.w2_nodal[i];
                if b == 0.0 || self.constrained[i] {
                    0.0
                } else {
                    b * (p - 1.0) * pow_reg(u[i], p, ueps)
                }
            })
            .collect()
    }

    /// Cellwise `|u|^p` averaged over corners, the density of `d f / d V`.
    pub(crate) fn cell_power_density(&self, u: &[f64]) -> Vec<f64> {
        let p = self.p();
        let pw: Vec<f64> = u.iter().map(|x| x.abs().powf(p)).collect();
        self.grid.cell_average(&pw)
    }

    /// Scales `u` so that `g1 - g2 = 1`.
    pub(crate) fn normalize(&self, u: &mut [f64]) -> Result<()> {
        let g = self.feasible_margin(u)?;
        let t = g.powf(-1.0 / self.p());
        u.iter_mut().for_each(|x| *x *= t);
        Ok(())
    }
}

/// `(s + eps)^{(p-2)/2}` for `p < 2`, `s^{(p-2)/2}` otherwise.
#[inline]
fn flux_coefficient(s: f64, p: f64, eps: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if p < 2.0 {
        (s + eps).powf((p - 2.0) / 2.0)
    } else {
        s.powf((p - 2.0) / 2.0)
    }
}

#[inline]
pub(crate) fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e)
    }
}

#[inline]
fn pow_reg(x: f64, p: f64, eps: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else {
        (x * x + eps).powf((p - 2.0) / 2.0)
    }
}

fn nodal_eps(u: &[f64]) -> f64 {
    let m = u.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    (1e-14 * m * m).max(1e-300)
}

/// Certification tolerance `rel * lambda * ||u||_p^{p-1}`.
pub(crate) fn certification_scale(ctx: &EnergyContext, u: &[f64], lambda: f64) -> f64 {
    let p = ctx.p();
    lambda.abs() * ctx.grid().lp_norm(u, p).powf(p - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn ctx_line(n: usize, p: f64) -> EnergyContext {
        let g = GridSpec::line(n, 1.0, p).unwrap();
        EnergyContext::new(CapacitaryMeasure::zero(g), WeightPair::lebesgue(g)).unwrap()
    }

    #[test]
    fn sine_energy() {
        let ctx = ctx_line(512, 2.0);
        let u = Field::from_fn(*ctx.grid(), |x| (PI * x[0]).sin());
        assert!((ctx.f_energy(&u) - PI * PI / 4.0).abs() < 1e-3);
        assert!((ctx.g_energy(&u, Weight::Nu1) - 0.25).abs() < 1e-3);
        let r = ctx.rayleigh(&u).unwrap();
        assert!((r - PI * PI).abs() / (PI * PI) < 0.01);
        assert_eq!(ctx.rayleigh(&u.scaled(2.0)).unwrap(), r);
    }

    #[test]
    fn blocked_adjacent_value_is_infinite() {
        let g = GridSpec::line(8, 1.0, 2.0).unwrap();
        let mut mask = [true; 8];
        mask[6] = false;
        let ctx = EnergyContext::new(
            CapacitaryMeasure::from_quasi_open(g, &mask).unwrap(),
            WeightPair::lebesgue(g),
        )
        .unwrap();
        let u = Field::new(g, vec![1.0; 7]).unwrap();
        assert_eq!(ctx.f_energy(&u), f64::INFINITY);
        assert_eq!(ctx.rayleigh(&u).unwrap(), f64::INFINITY);
    }

    #[test]
    fn homogeneity() {
        for p in [1.5, 2.0, 3.0] {
            let ctx = ctx_line(32, p);
            let u = Field::from_fn(*ctx.grid(), |x| (3.0 * x[0]).sin() * x[0]);
            assert_relative_eq!(ctx.f_energy(&u.scaled(2.0)), 2f64.powf(p) * ctx.f_energy(&u), max_relative = 1e-12);
        }
    }

    #[test]
    fn atom_evaluation() {
        let g = GridSpec::line(4, 1.0, 3.0).unwrap();
        let w = WeightPair::atomic(g, &[Atom { node: 1, mass: 1.0 }]).unwrap();
        let ctx = EnergyContext::new(CapacitaryMeasure::zero(g), w).unwrap();
        let hat = Field::new(g, vec![0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(ctx.g_energy(&hat, Weight::Nu1), 1.0 / 3.0);
        assert_eq!(ctx.g_energy(&Field::zeros(g), Weight::Nu1), 0.0);
    }

    #[test]
    fn degenerate_weights_always_violate() {
        let g = GridSpec::line(8, 1.0, 2.0).unwrap();
        let w = WeightPair::new(g, vec![0.0; 8], &[], vec![0.0; 8]).unwrap();
        assert!(w.is_degenerate());
        let ctx = EnergyContext::new(CapacitaryMeasure::zero(g), w).unwrap();
        let u = Field::from_fn(g, |x| x[0] * (1.0 - x[0]));
        assert!(matches!(ctx.rayleigh(&u), Err(Error::ConstraintViolated(_))));
    }

    #[test]
    fn quadratic_gradient_is_three_point_laplacian() {
        let ctx = ctx_line(10, 2.0);
        let h = ctx.grid().spacing(0);
        let u = Field::from_fn(*ctx.grid(), |x| x[0].powi(3) - x[0]);
        let grad = ctx.energy_gradient(&u);
        let v = &u.values;
        for i in 0..v.len() {
            let l = if i > 0 { v[i - 1] } else { 0.0 };
            let r = if i + 1 < v.len() { v[i + 1] } else { 0.0 };
            assert_relative_eq!(grad.values[i], (2.0 * v[i] - l - r) / h, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_scales_with_power() {
        let ctx = ctx_line(16, 3.0);
        let u = Field::from_fn(*ctx.grid(), |x| (PI * x[0]).sin());
        let r1 = ctx.residual(&u, 5.0).unwrap();
        let r2 = ctx.residual(&u.scaled(2.0), 5.0).unwrap();
        assert_relative_eq!(r2, 4.0 * r1, max_relative = 1e-10);
    }
}
