//! Grid model of p-capacitary measures.
//!
//! A measure is `inf` on a set of blocked cells, has a finite density on the
//! remaining cells, and may carry finitely many atoms at interior nodes. Atoms
//! are only admissible for `p > d`, the range where points have positive
//! capacity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Cell value of a capacitary measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Finite(f64),
    Blocked,
}

impl Density {
    pub fn is_blocked(self) -> bool {
        matches!(self, Density::Blocked)
    }

    /// The density as an extended real, `inf` when blocked.
    pub fn value(self) -> f64 {
        match self {
            Density::Finite(v) => v,
            Density::Blocked => f64::INFINITY,
        }
    }

    fn le(self, other: Density) -> bool {
        match (self, other) {
            (_, Density::Blocked) => true,
            (Density::Blocked, Density::Finite(_)) => false,
            (Density::Finite(a), Density::Finite(b)) => a <= b,
        }
    }
}

/// `mass * delta_{node}` for an interior node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, f64)", into = "(usize, f64)")]
pub struct Atom {
    pub node: usize,
    pub mass: f64,
}

impl From<(usize, f64)> for Atom {
    fn from((node, mass): (usize, f64)) -> Self {
        Atom { node, mass }
    }
}

impl From<Atom> for (usize, f64) {
    fn from(a: Atom) -> Self {
        (a.node, a.mass)
    }
}

/// Validates atoms for `grid` and returns them sorted by node with
/// duplicates merged and zero masses dropped.
pub(crate) fn canonical_atoms(grid: &GridSpec, atoms: &[Atom]) -> Result<Vec<Atom>> {
    if atoms.is_empty() {
        return Ok(Vec::new());
    }
    if grid.p() <= grid.dim() as f64 {
        return Err(Error::InvalidMeasure(format!(
            "atoms require p > d (p = {}, d = {})",
            grid.p(),
            grid.dim()
        )));
    }
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        if a.node >= grid.n_nodes() {
            return Err(Error::InvalidMeasure(format!(
                "atom node {} out of range (interior nodes: {})",
                a.node,
                grid.n_nodes()
            )));
        }
        if !(a.mass.is_finite() && a.mass >= 0.0) {
            return Err(Error::InvalidMeasure(format!("atom mass {} must be finite and >= 0", a.mass)));
        }
    }
    let mut sorted = atoms.to_vec();
    sorted.sort_by_key(|a| a.node);
    for a in sorted {
        match out.last_mut() {
            Some(last) if last.node == a.node => last.mass += a.mass,
            _ => out.push(a),
        }
    }
    out.retain(|a| a.mass > 0.0);
    Ok(out)
}

fn atoms_le(a: &[Atom], b: &[Atom]) -> bool {
    // both canonical (sorted, merged, positive)
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j].node < x.node {
            j += 1;
        }
        if j == b.len() || b[j].node != x.node || b[j].mass < x.mass {
            return false;
        }
    }
    true
}

/// Strictly decreasing continuous `Psi: [0, inf] -> [0, inf]` used for
/// potential budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    /// `exp(-beta s)`
    Exp { beta: f64 },
    /// `s^(-beta)`
    Power { beta: f64 },
}

impl PsiSpec {
    pub fn validate(&self) -> Result<()> {
        let beta = match self {
            PsiSpec::Exp { beta } | PsiSpec::Power { beta } => *beta,
        };
        if beta.is_finite() && beta > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidPsi(format!("beta must be positive, got {beta}")))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            PsiSpec::Exp { beta } => {
                if s == f64::INFINITY {
                    0.0
                } else {
                    (-beta * s).exp()
                }
            }
            PsiSpec::Power { beta } => {
                if s == 0.0 {
                    f64::INFINITY
                } else if s == f64::INFINITY {
                    0.0
                } else {
                    s.powf(-beta)
                }
            }
        }
    }

    /// `Psi(0)`, which is `inf` for the power family.
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// Inverse on `[0, Psi(0)]`; values outside are clamped.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::INFINITY;
        }
        match *self {
            PsiSpec::Exp { beta } => {
                if y >= 1.0 {
                    0.0
                } else {
                    -y.ln() / beta
                }
            }
            PsiSpec::Power { beta } => {
                if y == f64::INFINITY {
                    0.0
                } else {
                    y.powf(-1.0 / beta)
                }
            }
        }
    }
}

/// Discrete p-capacitary measure on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitaryMeasure {
    grid: GridSpec,
    density: Vec<Density>,
    atoms: Vec<Atom>,
}

impl CapacitaryMeasure {
    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            density: vec![Density::Finite(0.0); grid.n_cells()],
            atoms: Vec::new(),
        }
    }

    /// `inf` outside the set described by `mask` (one flag per cell), zero inside.
    pub fn from_quasi_open(grid: GridSpec, mask: &[bool]) -> Result<Self> {
        if mask.len() != grid.n_cells() {
            return Err(Error::InvalidMeasure(format!(
                "mask has {} entries, grid has {} cells",
                mask.len(),
                grid.n_cells()
            )));
        }
        if !mask.iter().any(|b| *b) {
            return Err(Error::EmptySet);
        }
        let density = mask
            .iter()
            .map(|inside| if *inside { Density::Finite(0.0) } else { Density::Blocked })
            .collect();
        Ok(Self {
            grid,
            density,
            atoms: Vec::new(),
        })
    }

    /// `V * L^N`; `+inf` entries become blocked cells.
    pub fn from_potential(grid: GridSpec, potential: &[f64]) -> Result<Self> {
        if potential.len() != grid.n_cells() {
            return Err(Error::InvalidMeasure(format!(
                "potential has {} entries, grid has {} cells",
                potential.len(),
                grid.n_cells()
            )));
        }
        let density = potential
            .iter()
            .map(|&v| {
                if v.is_nan() || v < 0.0 {
                    Err(Error::InvalidMeasure(format!("potential entry {v} is negative or NaN")))
                } else if v == f64::INFINITY {
                    Ok(Density::Blocked)
                } else {
                    Ok(Density::Finite(v))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            density,
            atoms: Vec::new(),
        })
    }

    pub fn from_densities(grid: GridSpec, density: Vec<Density>, atoms: &[Atom]) -> Result<Self> {
        if density.len() != grid.n_cells() {
            return Err(Error::InvalidMeasure("density length does not match cell count".into()));
        }
        if density
            .iter()
            .any(|d| matches!(d, Density::Finite(v) if !(v.is_finite() && *v >= 0.0)))
        {
            return Err(Error::InvalidMeasure("densities must be finite and >= 0".into()));
        }
        let atoms = canonical_atoms(&grid, atoms)?;
        Ok(Self { grid, density, atoms })
    }

    pub fn with_atoms(mut self, atoms: &[Atom]) -> Result<Self> {
        let mut all = self.atoms.clone();
        all.extend_from_slice(atoms);
        self.atoms = canonical_atoms(&self.grid, &all)?;
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn density(&self) -> &[Density] {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Finite part of the density, 0 on blocked cells.
    pub fn finite_density(&self) -> Vec<f64> {
        self.density
            .iter()
            .map(|d| match d {
                Density::Finite(v) => *v,
                Density::Blocked => 0.0,
            })
            .collect()
    }

    /// Density as extended reals (`inf` on blocked cells).
    pub fn extended_density(&self) -> Vec<f64> {
        self.density.iter().map(|d| d.value()).collect()
    }

    pub fn add(&self, other: &CapacitaryMeasure) -> Result<CapacitaryMeasure> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let density = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| match (a, b) {
                (Density::Finite(x), Density::Finite(y)) => Density::Finite(x + y),
                _ => Density::Blocked,
            })
            .collect();
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Ok(CapacitaryMeasure {
            grid: self.grid,
            density,
            atoms: canonical_atoms(&self.grid, &atoms)?,
        })
    }

    /// Cellwise order with blocked as `+inf`, atom masses ordered nodewise.
    pub fn leq(&self, other: &CapacitaryMeasure) -> Result<bool> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let cells = self.density.iter().zip(&other.density).all(|(a, b)| a.le(*b));
        Ok(cells && atoms_le(&self.atoms, &other.atoms))
    }

    /// Cells where the measure is finite (the set of sigma-finiteness).
    pub fn sigma_finite_set(&self) -> Vec<bool> {
        self.density.iter().map(|d| !d.is_blocked()).collect()
    }

    pub fn blocked_count(&self) -> usize {
        self.density.iter().filter(|d| d.is_blocked()).count()
    }

    /// Interior nodes that are a corner of some blocked cell; every function
    /// of finite energy vanishes there.
    pub fn constrained_nodes(&self) -> Vec<bool> {
        let mut out = vec![false; self.grid.n_nodes()];
        for (c, d) in self.density.iter().enumerate() {
            if d.is_blocked() {
                for node in self.grid.cell_corners(c).into_iter().flatten() {
                    out[node] = true;
                }
            }
        }
        out
    }

    /// `integral Psi(V_mu)` with `Psi(blocked) = Psi(inf) = 0`.
    pub fn psi_volume(&self, psi: &PsiSpec) -> Result<f64> {
        psi.validate()?;
        let vals: Vec<f64> = self.density.iter().map(|d| psi.eval(d.value())).collect();
        Ok(self.grid.integrate(&vals))
    }
}

/// Sign-changing right-hand side `nu1 - nu2` with `nu1 = w1 L^N + atoms`
/// and `nu2 = w2 L^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    grid: GridSpec,
    pub w1: Vec<f64>,
    pub w1_atoms: Vec<Atom>,
    pub w2: Vec<f64>,
}

impl WeightPair {
    pub fn new(grid: GridSpec, w1: Vec<f64>, w1_atoms: &[Atom], w2: Vec<f64>) -> Result<Self> {
        let n = grid.n_cells();
        if w1.len() != n || w2.len() != n {
            return Err(Error::InvalidWeights(format!("weights need {n} cell entries")));
        }
        if w1.iter().chain(&w2).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidWeights("weights must be finite and >= 0".into()));
        }
        let w1_atoms =
            canonical_atoms(&grid, w1_atoms).map_err(|e| Error::InvalidWeights(e.to_string()))?;
        Ok(Self { grid, w1, w1_atoms, w2 })
    }

    /// `nu1 = L^N`, `nu2 = 0`.
    pub fn lebesgue(grid: GridSpec) -> Self {
        Self {
            grid,
            w1: vec![1.0; grid.n_cells()],
            w1_atoms: Vec::new(),
            w2: vec![0.0; grid.n_cells()],
        }
    }

    /// `nu1 = sum of atoms`, no density.
    pub fn atomic(grid: GridSpec, atoms: &[Atom]) -> Result<Self> {
        Self::new(grid, vec![0.0; grid.n_cells()], atoms, vec![0.0; grid.n_cells()])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `w1` identically zero with no atoms: no function can satisfy `g1 > g2`.
    pub fn is_degenerate(&self) -> bool {
        self.w1.iter().all(|v| *v == 0.0) && self.w1_atoms.is_empty()
    }

    pub fn nu2_is_zero(&self) -> bool {
        self.w2.iter().all(|v| *v == 0.0)
    }

    /// Both parts multiplied by `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        let atoms: Vec<Atom> = self
            .w1_atoms
            .iter()
            .map(|a| Atom { node: a.node, mass: a.mass * t })
            .collect();
        Self::new(
            self.grid,
            self.w1.iter().map(|v| v * t).collect(),
            &atoms,
            self.w2.iter().map(|v| v * t).collect(),
        )
    }

    /// The same weights on a grid with a different exponent (same geometry).
    pub(crate) fn regrid(&self, grid: GridSpec) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }
}

impl CapacitaryMeasure {
    pub(crate) fn regrid(&self, grid: GridSpec) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }
}

/// Total order on cells used for deterministic tie-breaking: larger value first,
/// then lower index.
pub(crate) fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}
