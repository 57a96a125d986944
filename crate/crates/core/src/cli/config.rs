//! Run configuration: JSON schema, validation and conversion into solver inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measure::{Atom, CapacitaryMeasure, Density, PsiSpec, WeightPair};
use crate::optimize::ObjectiveSpec;
use crate::spectrum::SpectrumOptions;

pub const CONFIG_VERSION: u32 = 1;

/// A cell value that may be `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extended {
    Number(f64),
    Word(String),
}

impl Extended {
    fn value(&self) -> Result<f64> {
        match self {
            Extended::Number(v) => Ok(*v),
            Extended::Word(w) if w == "inf" => Ok(f64::INFINITY),
            Extended::Word(w) => Err(Error::InvalidMeasure(format!("unknown density value {w:?}"))),
        }
    }
}

/// Either one value for every cell or one per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValues<T> {
    Uniform(T),
    PerCell(Vec<T>),
}

impl<T: Clone> CellValues<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            CellValues::Uniform(v) => Ok(vec![v.clone(); n]),
            CellValues::PerCell(v) if v.len() == n => Ok(v.clone()),
            CellValues::PerCell(v) => Err(Error::InvalidArgument(format!("{what}: expected {n} cell values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Potential `V` per cell; `"inf"` blocks a cell.
    #[serde(default = "zero_density")]
    pub density: CellValues<Extended>,
    /// 0/1 per cell: cells marked 0 are blocked on top of the density.
    #[serde(default)]
    pub mask: Option<Vec<u8>>,
    #[serde(default)]
    pub atoms: Vec<Atom>,
}

fn zero_density() -> CellValues<Extended> {
    CellValues::Uniform(Extended::Number(0.0))
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            density: zero_density(),
            mask: None,
            atoms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default = "one")]
    pub w1: CellValues<f64>,
    #[serde(default)]
    pub w1_atoms: Vec<Atom>,
    #[serde(default = "zero")]
    pub w2: CellValues<f64>,
}

fn one() -> CellValues<f64> {
    CellValues::Uniform(1.0)
}

fn zero() -> CellValues<f64> {
    CellValues::Uniform(0.0)
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            w1: one(),
            w1_atoms: Vec::new(),
            w2: zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub starts: usize,
    pub continuation_step: f64,
    pub newton_max_iter: usize,
    pub inverse_power_iter: usize,
    pub extra_branches: usize,
    pub upper_bounds: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SpectrumOptions::default();
        Self {
            starts: d.starts,
            continuation_step: d.continuation_step,
            newton_max_iter: d.newton_max_iter,
            inverse_power_iter: d.inverse_power_iter,
            extra_branches: d.extra_branches,
            upper_bounds: d.upper_bounds,
        }
    }
}

impl SolverConfig {
    pub fn options(&self, seed: u64) -> Result<SpectrumOptions> {
        if self.starts == 0 || !(self.continuation_step > 0.0 && self.continuation_step <= 1.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidArgument("solver: starts and newton_max_iter must be positive, continuation_step in (0, 1]".into()));
        }
        Ok(SpectrumOptions {
            starts: self.starts,
            seed,
            continuation_step: self.continuation_step,
            newton_max_iter: self.newton_max_iter,
            inverse_power_iter: self.inverse_power_iter,
            extra_branches: self.extra_branches,
            upper_bounds: self.upper_bounds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub m_max: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { m_max: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorsionConfig {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    /// 0/1 per cell, the set `A` of `V_s = s (1 - chi_A)`.
    pub mask: Vec<u8>,
    pub s_values: Vec<f64>,
    #[serde(default = "one_usize")]
    pub m: usize,
    #[serde(default)]
    pub psi: Option<PsiSpec>,
    #[serde(default = "three")]
    pub tail: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn one_usize() -> usize {
    1
}

fn three() -> usize {
    3
}

fn default_slack() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub objective: ObjectiveSpec,
    pub c: f64,
    pub psi: PsiSpec,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default = "patience")]
    pub patience: usize,
}

fn max_iter() -> usize {
    200
}

fn patience() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub objective: ObjectiveSpec,
    pub c: f64,
    /// Seeds of the independent runs; defaults to the run seed alone.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "s_schedule")]
    pub s_schedule: Vec<f64>,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default = "patience")]
    pub patience: usize,
}

fn s_schedule() -> Vec<f64> {
    vec![1e2, 1e4]
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "version")]
    pub version: u32,
    pub grid: GridSpec,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub torsion: Option<TorsionConfig>,
    #[serde(default)]
    pub gamma_diag: Option<GammaConfig>,
    #[serde(default)]
    pub optimize_potential: Option<PotentialConfig>,
    #[serde(default)]
    pub optimize_set: Option<SetConfig>,
}

fn version() -> u32 {
    CONFIG_VERSION
}

pub fn mask_from(grid: &GridSpec, mask: &[u8], what: &str) -> Result<Vec<bool>> {
    if mask.len() != grid.n_cells() {
        return Err(Error::InvalidArgument(format!("{what}: expected {} cells, got {}", grid.n_cells(), mask.len())));
    }
    mask.iter()
        .map(|v| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::InvalidArgument(format!("{what}: entries must be 0 or 1"))),
        })
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::InvalidArgument(format!("config: unsupported version {}", cfg.version)));
        }
        Ok(cfg)
    }

    pub fn measure(&self) -> Result<CapacitaryMeasure> {
        let g = self.grid;
        let vals = self.measure.density.expand(g.n_cells(), "measure.density")?;
        let mut density = Vec::with_capacity(vals.len());
        for v in vals {
            let x = v.value()?;
            density.push(if x == f64::INFINITY {
                Density::Blocked
            } else if x.is_finite() && x >= 0.0 {
                Density::Finite(x)
            } else {
                return Err(Error::InvalidMeasure(format!("density must be >= 0 or \"inf\", got {x}")));
            });
        }
        if let Some(mask) = &self.measure.mask {
            for (d, keep) in density.iter_mut().zip(mask_from(&g, mask, "measure.mask")?) {
                if !keep {
                    *d = Density::Blocked;
                }
            }
        }
        CapacitaryMeasure::from_densities(g, density, &self.measure.atoms)
    }

    pub fn weights(&self) -> Result<WeightPair> {
        let g = self.grid;
        WeightPair::new(
            g,
            self.weights.w1.expand(g.n_cells(), "weights.w1")?,
            &self.weights.w1_atoms,
            self.weights.w2.expand(g.n_cells(), "weights.w2")?,
        )
    }

    pub fn spectrum_options(&self) -> Result<SpectrumOptions> {
        self.solver.options(self.seed)
    }

    /// SHA-256 of the canonical (sorted-key, defaults filled) JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
