//! Uniform grids on boxes `[0, L_1] x ... x [0, L_d]`, `d` in {1, 2}, with
//! homogeneous Dirichlet data.
//!
//! Unknowns live on interior nodes; cells are the `n^d` boxes of the grid.
//! Gradients are forward differences taken per cell from its lower corner,
//! so `|grad u|^p` is a cell quantity and the discrete p-energy is convex in
//! the nodal values. Interior node `(a, b)` (grid coordinates `1..n`) has
//! index `(a - 1) + (n - 1) * (b - 1)`; cell `(i, j)` (lower corner at grid
//! coordinates `(i, j)`, `0..n`) has index `i + n * j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid description together with the exponent `p` of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    dim: usize,
    n: usize,
    lengths: [f64; 2],
    p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: usize,
    n: usize,
    lengths: Vec<f64>,
    p: f64,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.dim, raw.n, &raw.lengths, raw.p)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid {
            dim: g.dim,
            n: g.n,
            lengths: g.lengths[..g.dim].to_vec(),
            p: g.p,
        }
    }
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, lengths: &[f64], p: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!("n must be at least 3, got {n}")));
        }
        if lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} lengths, got {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidGrid("lengths must be positive and finite".into()));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidGrid(format!("p must satisfy 1 < p < inf, got {p}")));
        }
        let mut l = [1.0; 2];
        l[..dim].copy_from_slice(lengths);
        Ok(Self { dim, n, lengths: l, p })
    }

    /// One-dimensional grid on `[0, length]`.
    pub fn line(n: usize, length: f64, p: f64) -> Result<Self> {
        Self::new(1, n, &[length], p)
    }

    /// Two-dimensional grid on `[0, lx] x [0, ly]`.
    pub fn rect(n: usize, lx: f64, ly: f64, p: f64) -> Result<Self> {
        Self::new(2, n, &[lx, ly], p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    /// Same grid with a different exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.dim, self.n, self.lengths(), p)
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.n as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// `h^d`, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn box_volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    pub fn n_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn n_nodes(&self) -> usize {
        (self.n - 1).pow(self.dim as u32)
    }

    /// Number of corners of a cell, `2^d`.
    pub fn corners_per_cell(&self) -> usize {
        1 << self.dim
    }

    /// Half bandwidth of nodal operators built from the cell stencil.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n - 1
        }
    }

    /// Interior node index for grid coordinates, `None` on the boundary.
    pub fn node_at(&self, a: usize, b: usize) -> Option<usize> {
        let m = self.n;
        if a == 0 || a >= m {
            return None;
        }
        if self.dim == 1 {
            return Some(a - 1);
        }
        if b == 0 || b >= m {
            return None;
        }
        Some((a - 1) + (m - 1) * (b - 1))
    }

    /// Grid coordinates of an interior node.
    pub fn node_coords(&self, node: usize) -> (usize, usize) {
        if self.dim == 1 {
            (node + 1, 0)
        } else {
            let w = self.n - 1;
            (node % w + 1, node / w + 1)
        }
    }

    /// Physical position of an interior node.
    pub fn node_position(&self, node: usize) -> [f64; 2] {
        let (a, b) = self.node_coords(node);
        [a as f64 * self.spacing(0), b as f64 * self.spacing(1)]
    }

    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        if self.dim == 1 {
            (cell, 0)
        } else {
            (cell % self.n, cell / self.n)
        }
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let (i, j) = self.cell_coords(cell);
        let c = [
            (i as f64 + 0.5) * self.spacing(0),
            (j as f64 + 0.5) * self.spacing(1),
        ];
        if self.dim == 1 {
            [c[0], 0.0]
        } else {
            c
        }
    }

    /// Interior corner nodes of a cell; boundary corners are `None`.
    pub fn cell_corners(&self, cell: usize) -> [Option<usize>; 4] {
        let (i, j) = self.cell_coords(cell);
        if self.dim == 1 {
            [self.node_at(i, 0), self.node_at(i + 1, 0), None, None]
        } else {
            [
                self.node_at(i, j),
                self.node_at(i + 1, j),
                self.node_at(i, j + 1),
                self.node_at(i + 1, j + 1),
            ]
        }
    }

    /// The nodes entering the forward-difference gradient of a cell:
    /// `(base, +x neighbour, +y neighbour)`.
    pub(crate) fn stencil(&self, cell: usize) -> (Option<usize>, Option<usize>, Option<usize>) {
        let (i, j) = self.cell_coords(cell);
        if self.dim == 1 {
            (self.node_at(i, 0), self.node_at(i + 1, 0), None)
        } else {
            (
                self.node_at(i, j),
                self.node_at(i + 1, j),
                self.node_at(i, j + 1),
            )
        }
    }

    /// Distributes `h^d * value` of every cell equally onto its interior corners.
    pub fn lump_to_nodes(&self, cell_values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(cell_values.len(), self.n_cells());
        let share = self.cell_volume() / self.corners_per_cell() as f64;
        let mut out = vec![0.0; self.n_nodes()];
        for (c, v) in cell_values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            for node in self.cell_corners(c).into_iter().flatten() {
                out[node] += share * v;
            }
        }
        out
    }

    /// Mean of a nodal quantity over each cell's corners (boundary corners count as 0).
    pub fn cell_average(&self, nodal: &[f64]) -> Vec<f64> {
        let k = self.corners_per_cell() as f64;
        (0..self.n_cells())
            .map(|c| {
                self.cell_corners(c)
                    .into_iter()
                    .flatten()
                    .map(|i| nodal[i])
                    .sum::<f64>()
                    / k
            })
            .collect()
    }

    /// Quadrature `sum(values) * h^d` of a per-cell quantity.
    pub fn integrate(&self, cell_values: &[f64]) -> f64 {
        cell_values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Forward-difference gradient of `u` on every cell.
    pub fn discrete_gradient(&self, u: &Field) -> CellGradients {
        let d = self.dim;
        let hx = self.spacing(0);
        let hy = self.spacing(1);
        let at = |i: Option<usize>| i.map_or(0.0, |i| u.values[i]);
        let mut data = vec![0.0; d * self.n_cells()];
        for c in 0..self.n_cells() {
            let (b, x, y) = self.stencil(c);
            let u0 = at(b);
            data[d * c] = (at(x) - u0) / hx;
            if d == 2 {
                data[d * c + 1] = (at(y) - u0) / hy;
            }
        }
        CellGradients { dim: d, data }
    }

    /// Discrete `L^p` norm `(sum h^d |u_i|^p)^(1/p)` of nodal values.
    pub fn lp_norm(&self, values: &[f64], p: f64) -> f64 {
        let s: f64 = values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.cell_volume()).powf(1.0 / p)
    }

    /// Dual norm of a nodal covector (a derivative of a quadrature sum):
    /// the discrete `L^{p'}` norm of its Riesz representative `r_i / h^d`.
    pub fn dual_norm(&self, covector: &[f64], p: f64) -> f64 {
        let q = p / (p - 1.0);
        let vol = self.cell_volume();
        let s: f64 = covector.iter().map(|r| (r / vol).abs().powf(q)).sum();
        (s * vol).powf(1.0 / q)
    }
}

/// Per-cell gradient vectors, `dim` components each.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGradients {
    dim: usize,
    data: Vec<f64>,
}

impl CellGradients {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, cell: usize) -> &[f64] {
        &self.data[self.dim * cell..self.dim * (cell + 1)]
    }

    /// Euclidean norm of the gradient on each cell.
    pub fn norms(&self) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }
}

/// A discrete function on the interior nodes of a grid, zero on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    #[serde(skip)]
    grid: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::FieldLength {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    /// Samples `f` at the interior node positions.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.n_nodes()).map(|i| f(grid.node_position(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    pub fn dot(&self, other: &Field) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.grid.lp_norm(&self.values, p)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(3, 8, &[1.0, 1.0, 1.0], 2.0).is_err());
        assert!(GridSpec::line(2, 1.0, 2.0).is_err());
        assert!(GridSpec::line(8, 0.0, 2.0).is_err());
        assert!(GridSpec::line(8, 1.0, 1.0).is_err());
        assert!(GridSpec::new(2, 8, &[1.0], 2.0).is_err());
    }

    #[test]
    fn counts() {
        let g = GridSpec::rect(5, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(g.n_nodes(), 16);
        assert_eq!(g.n_cells(), 25);
        assert_relative_eq!(g.cell_volume(), 0.2 * 0.4);
        let l = GridSpec::line(4, 1.0, 2.0).unwrap();
        assert_eq!(l.n_nodes(), 3);
    }

    #[test]
    fn gradient_of_zero_is_zero() {
        let g = GridSpec::rect(6, 1.0, 1.0, 2.0).unwrap();
        let grad = g.discrete_gradient(&Field::zeros(g));
        assert!(grad.norms().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn hat_slopes() {
        let g = GridSpec::line(4, 1.0, 2.0).unwrap();
        let h = g.spacing(0);
        // interior nodes x = h, 2h, 3h; the peak is the middle one
        let u = Field::new(g, vec![0.0, 1.0, 0.0]).unwrap();
        let grad = g.discrete_gradient(&u);
        let slopes: Vec<f64> = (0..4).map(|c| grad.get(c)[0]).collect();
        assert_eq!(slopes, vec![0.0, 1.0 / h, -1.0 / h, 0.0]);
    }

    #[test]
    fn separable_gradient() {
        let n = 4;
        let g = GridSpec::rect(n, 1.0, 1.0, 2.0).unwrap();
        let h = g.spacing(0);
        let hat = |a: usize| if a == 2 { 1.0 } else { 0.0 };
        let mut values = vec![0.0; g.n_nodes()];
        for (i, v) in values.iter_mut().enumerate() {
            let (a, b) = g.node_coords(i);
            *v = hat(a) * hat(b);
        }
        let u = Field::new(g, values).unwrap();
        let grad = g.discrete_gradient(&u);
        let slope = |i: usize| match i {
            1 => 1.0 / h,
            2 => -1.0 / h,
            _ => 0.0,
        };
        for c in 0..g.n_cells() {
            let (i, j) = g.cell_coords(c);
            assert_relative_eq!(grad.get(c)[0], slope(i) * hat(j));
            assert_relative_eq!(grad.get(c)[1], hat(i) * slope(j));
        }
    }

    #[test]
    fn quadrature_examples() {
        let g = GridSpec::rect(10, 1.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(g.integrate(&vec![1.0; g.n_cells()]), 1.0, epsilon = 1e-12);
        assert_eq!(g.integrate(&vec![0.0; g.n_cells()]), 0.0);
        let half: Vec<f64> = (0..g.n_cells())
            .map(|c| if g.cell_center(c)[0] < 0.5 { 1.0 } else { 0.0 })
            .collect();
        assert!((g.integrate(&half) - 0.5).abs() <= g.spacing(0));
    }

    #[test]
    fn sine_energy_converges_first_order_or_better() {
        let err = |n: usize| {
            let g = GridSpec::line(n, 1.0, 2.0).unwrap();
            let u = Field::from_fn(g, |x| (PI * x[0]).sin());
            let sq: Vec<f64> = g.discrete_gradient(&u).norms().iter().map(|v| v * v).collect();
            (g.integrate(&sq) - PI * PI / 2.0).abs()
        };
        let (e1, e2, e3) = (err(32), err(64), err(128));
        assert!(e2 < e1 && e3 < e2);
        // O(h): halving h at least halves the error up to slack
        assert!(e1 / e2 > 1.8 && e2 / e3 > 1.8);
    }

    #[test]
    fn lumping_matches_cell_average_quadrature() {
        let g = GridSpec::rect(7, 1.0, 1.5, 2.0).unwrap();
        let w: Vec<f64> = (0..g.n_cells()).map(|c| (c % 5) as f64).collect();
        let u: Vec<f64> = (0..g.n_nodes()).map(|i| (i as f64 * 0.37).sin()).collect();
        let lumped = g.lump_to_nodes(&w);
        let a: f64 = lumped.iter().zip(&u).map(|(l, x)| l * x).sum();
        let avg = g.cell_average(&u);
        let b = g.integrate(&avg.iter().zip(&w).map(|(x, y)| x * y).collect::<Vec<_>>());
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn serde_round_trip_rejects_unknown_keys() {
        let g: GridSpec =
            serde_json::from_str(r#"{"dim": 2, "n": 64, "lengths": [1.0, 1.0], "p": 2.0}"#).unwrap();
        assert_eq!(g.n(), 64);
        assert!(serde_json::from_str::<GridSpec>(
            r#"{"dim": 1, "n": 64, "lengths": [1.0], "p": 2.0, "x": 1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<GridSpec>(r#"{"dim": 1, "n": 64, "lengths": [1.0], "p": 0.5}"#)
            .is_err());
    }
}
