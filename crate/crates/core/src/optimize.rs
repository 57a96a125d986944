//! Minimization of spectral functionals `F(lambda_1, ..., lambda_k)` over
//! potentials with a Psi-budget and over sets with a volume constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measure::{rank_desc, CapacitaryMeasure, PsiSpec, WeightPair};
use crate::spectrum::{eigen_minimax_with, EigenStatus, SpectralResult, SpectrumOptions, MAX_M};

/// Nondecreasing functional of the first `k` eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `lambda_k`
    Single { k: usize },
    /// `sum_j w_j lambda_j`
    WeightedSum { weights: Vec<f64> },
    /// `max_{j <= k} lambda_j`
    MaxOf { k: usize },
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || k > MAX_M {
            return Err(Error::InvalidObjective(format!("k must be in 1..={MAX_M}, got {k}")));
        }
        if let ObjectiveSpec::WeightedSum { weights } = self {
            if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::InvalidObjective("weights must be finite and >= 0".into()));
            }
            if weights.iter().all(|w| *w == 0.0) {
                return Err(Error::InvalidObjective("all weights are zero".into()));
            }
        }
        Ok(())
    }

    /// Number of eigenvalues the functional reads.
    pub fn k(&self) -> usize {
        match self {
            ObjectiveSpec::Single { k } | ObjectiveSpec::MaxOf { k } => *k,
            ObjectiveSpec::WeightedSum { weights } => weights.len(),
        }
    }

    /// A subgradient with respect to `(lambda_1, ..., lambda_k)`. For
    /// `max_of` the attaining index is used, the lowest one on ties.
    pub fn coefficients(&self, lambdas: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut c = vec![0.0; k];
        match self {
            ObjectiveSpec::Single { k } => c[k - 1] = 1.0,
            ObjectiveSpec::WeightedSum { weights } => c.copy_from_slice(weights),
            ObjectiveSpec::MaxOf { k } => {
                let mut best = 0;
                for j in 1..*k {
                    if lambdas[j] > lambdas[best] {
                        best = j;
                    }
                }
                c[best] = 1.0;
            }
        }
        c
    }
}

/// `F(lambda)`; `+inf` if a needed entry is infinite.
pub fn objective_eval(objective: &ObjectiveSpec, lambdas: &[f64]) -> Result<f64> {
    objective.validate()?;
    let k = objective.k();
    if lambdas.len() < k {
        return Err(Error::InvalidArgument(format!("objective needs {k} eigenvalues, got {}", lambdas.len())));
    }
    let l = &lambdas[..k];
    if l.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("eigenvalue is NaN".into()));
    }
    Ok(match objective {
        ObjectiveSpec::Single { k } => l[k - 1],
        ObjectiveSpec::MaxOf { .. } => l.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ObjectiveSpec::WeightedSum { weights } => {
            let mut s = 0.0;
            for (w, v) in weights.iter().zip(l) {
                if *w != 0.0 {
                    s += w * v;
                }
            }
            s
        }
    })
}

/// Constraint on the admissible class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    /// `|A| = c`
    Volume { c: f64 },
    /// `integral Psi(V) = c`
    PsiBudget { c: f64, psi: PsiSpec },
}

impl ConstraintSpec {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let omega = grid.box_volume();
        match self {
            ConstraintSpec::Volume { c } => {
                if !(*c > 0.0 && *c <= omega * (1.0 + 1e-12)) {
                    return Err(Error::InvalidConstraint(format!("volume must be in (0, {omega}], got {c}")));
                }
            }
            ConstraintSpec::PsiBudget { c, psi } => {
                psi.validate()?;
                let cap = psi.at_zero() * omega;
                if !(*c > 0.0 && c.is_finite() && *c <= cap * (1.0 + 1e-12)) {
                    return Err(Error::InvalidConstraint(format!("budget must be in (0, {cap}], got {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Restores `integral Psi(V') = c` through `V' = Psi^-1(clamp(Psi(V) + t, 0, Psi(0)))`
/// with `t` found by bisection. Returns `V` itself when already saturated.
pub fn project_psi_budget(grid: &GridSpec, v: &[f64], c: f64, psi: &PsiSpec) -> Result<Vec<f64>> {
    psi.validate()?;
    if v.len() != grid.n_cells() {
        return Err(Error::FieldLength {
            expected: grid.n_cells(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| x.is_nan() || *x < 0.0) {
        return Err(Error::InvalidArgument("potential must be >= 0".into()));
    }
    let omega = grid.box_volume();
    let top = psi.at_zero();
    if !(c > 0.0 && c.is_finite() && c <= top * omega * (1.0 + 1e-12)) {
        return Err(Error::Unattainable(format!("budget {c} outside (0, {}]", top * omega)));
    }
    let vol = grid.cell_volume();
    let y: Vec<f64> = v.iter().map(|x| psi.eval(*x)).collect();
    let total = |t: f64| -> f64 { y.iter().map(|yi| (yi + t).clamp(0.0, top)).sum::<f64>() * vol };
    let now = total(0.0);
    if (now - c).abs() <= 1e-9 * c {
        return Ok(v.to_vec());
    }
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = if now < c {
        (0.0, (c / omega - ymin).max(0.0) + 1e-300)
    } else {
        (-ymax, 0.0)
    };
    if top.is_finite() {
        hi = hi.min(top - ymin).max(lo);
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = if (total(lo) - c).abs() <= (total(hi) - c).abs() { lo } else { hi };
    Ok(y.iter().map(|yi| psi.inverse((yi + t).clamp(0.0, top))).collect())
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub objective: f64,
    /// Psi-volume or set volume
    pub constraint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    /// Consecutive rejected steps before stopping.
    pub patience: usize,
    pub spectrum: SpectrumOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            patience: 10,
            spectrum: SpectrumOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialOutcome {
    /// Optimized per-cell potential, `inf` on blocked cells.
    pub potential: Vec<f64>,
    pub objective: f64,
    pub baseline_objective: f64,
    pub spectrum: SpectralResult,
    pub history: Vec<HistoryEntry>,
    /// Stopped by stagnation rather than the iteration cap.
    pub converged: bool,
}

struct Evaluation {
    objective: f64,
    spectrum: SpectralResult,
}

fn evaluate(
    mu: CapacitaryMeasure,
    weights: &WeightPair,
    objective: &ObjectiveSpec,
    opts: &SpectrumOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<(Evaluation, EnergyContext)> {
    let ctx = EnergyContext::new(mu, weights.clone())?;
    let k = objective.k();
    let spectrum = eigen_minimax_with(&ctx, k, opts, warm)?;
    let ok = spectrum.status[..k].iter().all(|s| *s == EigenStatus::Finite);
    let objective = if ok {
        objective_eval(objective, &spectrum.lambdas)?
    } else {
        f64::INFINITY
    };
    Ok((Evaluation { objective, spectrum }, ctx))
}

fn warm_fields(s: &SpectralResult) -> Vec<Vec<f64>> {
    s.eigenfields.iter().map(|f| f.values.clone()).collect()
}

/// Derivative of the objective with respect to the cell potentials:
/// `d lambda_j / d V_c = h^d avg_c |u_j|^p / (p (g1 - g2)(u_j))`.
fn potential_gradient(ctx: &EnergyContext, s: &SpectralResult, objective: &ObjectiveSpec) -> Vec<f64> {
    let coef = objective.coefficients(&s.lambdas);
    let grid = ctx.grid();
    let p = ctx.p();
    let mut g = vec![0.0; grid.n_cells()];
    for (j, w) in coef.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let u = &s.eigenfields[j].values;
        let norm = ctx.constraint_values(u);
        let dens = ctx.cell_power_density(u);
        for (gc, d) in g.iter_mut().zip(dens) {
            *gc += w * grid.cell_volume() * d / (p * norm);
        }
    }
    g
}

/// Projected descent on `V` under `integral Psi(V) = c`, from the uniform
/// potential `Psi^-1(c / |Omega|)`. `nu2` is the `w2` part of `weights`.
pub fn optimize_potential(
    grid: &GridSpec,
    weights: &WeightPair,
    objective: &ObjectiveSpec,
    constraint: &ConstraintSpec,
    opts: &OptimizeOptions,
) -> Result<PotentialOutcome> {
    objective.validate()?;
    constraint.validate(grid)?;
    let ConstraintSpec::PsiBudget { c, psi } = constraint else {
        return Err(Error::InvalidConstraint("potential optimization needs a psi budget".into()));
    };
    let (c, psi) = (*c, *psi);
    if weights.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let ctx0 = EnergyContext::new(CapacitaryMeasure::zero(*grid), weights.clone())?;
    if ctx0.feasible_dimension() < objective.k() {
        return Err(Error::Infeasible("weights admit fewer feasible directions than the objective needs".into()));
    }
    let uniform = psi.inverse((c / grid.box_volume()).min(psi.at_zero()));
    let mut v = project_psi_budget(grid, &vec![uniform; grid.n_cells()], c, &psi)?;
    let measure = |v: &[f64]| CapacitaryMeasure::from_potential(*grid, v);
    let (mut cur, mut ctx) = evaluate(measure(&v)?, weights, objective, &opts.spectrum, None)?;
    let baseline = cur.objective;
    let budget = |v: &[f64]| -> f64 { grid.integrate(&v.iter().map(|x| psi.eval(*x)).collect::<Vec<_>>()) };
    let mut history = vec![HistoryEntry {
        iteration: 0,
        objective: cur.objective,
        constraint: budget(&v),
    }];
    if !cur.objective.is_finite() {
        return Err(Error::NotConverged("baseline eigenvalues not certified".into()));
    }
    let vmax = v.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
    let mut tau = vmax.max(1.0);
    let mut rejected = 0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        if rejected >= opts.patience || tau < 1e-10 {
            converged = true;
            break;
        }
        let grad = potential_gradient(&ctx, &cur.spectrum, objective);
        let gmax = grad.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if gmax == 0.0 {
            converged = true;
            break;
        }
        let trial: Vec<f64> = v
            .iter()
            .zip(&grad)
            .map(|(x, g)| if x.is_finite() { (x - tau * g / gmax).max(0.0) } else { *x })
            .collect();
        let trial = project_psi_budget(grid, &trial, c, &psi)?;
        let warm = warm_fields(&cur.spectrum);
        let (next, next_ctx) = evaluate(measure(&trial)?, weights, objective, &opts.spectrum, Some(&warm))?;
        if next.objective < cur.objective - 1e-12 * cur.objective.abs() {
            v = trial;
            cur = next;
            ctx = next_ctx;
            tau *= 1.5;
            rejected = 0;
            history.push(HistoryEntry {
                iteration: it,
                objective: cur.objective,
                constraint: budget(&v),
            });
        } else {
            tau *= 0.5;
            rejected += 1;
        }
    }
    if rejected >= opts.patience {
        converged = true;
    }
    Ok(PotentialOutcome {
        potential: v,
        objective: cur.objective,
        baseline_objective: baseline,
        spectrum: cur.spectrum,
        history,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetOptions {
    pub optimize: OptimizeOptions,
    /// One independent run per seed; the best result wins.
    pub seeds: Vec<u64>,
    /// Soft-wall heights used before the hard wall.
    pub s_schedule: Vec<f64>,
}

impl Default for SetOptions {
    fn default() -> Self {
        Self {
            optimize: OptimizeOptions::default(),
            seeds: vec![0],
            s_schedule: vec![1e2, 1e4],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SetOutcome {
    pub mask: Vec<bool>,
    pub objective: f64,
    pub spectrum: SpectralResult,
    /// accepted iterates of the winning seed
    pub history: Vec<HistoryEntry>,
    pub seed: u64,
    /// final objective of every seed, in input order
    pub seed_objectives: Vec<f64>,
    pub converged: bool,
}

fn top_k(values: &[f64], k: usize) -> Vec<bool> {
    let mut mask = vec![false; values.len()];
    for i in rank_desc(values).into_iter().take(k) {
        mask[i] = true;
    }
    mask
}

fn mask_density(ctx: &EnergyContext, s: &SpectralResult, objective: &ObjectiveSpec) -> Vec<f64> {
    let coef = objective.coefficients(&s.lambdas);
    let mut d = vec![0.0; ctx.grid().n_cells()];
    for (j, w) in coef.iter().enumerate() {
        if *w == 0.0 || j >= s.eigenfields.len() {
            continue;
        }
        for (o, x) in d.iter_mut().zip(ctx.cell_power_density(&s.eigenfields[j].values)) {
            *o += w * x;
        }
    }
    d
}

fn soft_wall(grid: &GridSpec, mask: &[bool], s: f64) -> Result<CapacitaryMeasure> {
    let v: Vec<f64> = mask.iter().map(|a| if *a { 0.0 } else { s }).collect();
    CapacitaryMeasure::from_potential(*grid, &v)
}

struct SeedRun {
    mask: Vec<bool>,
    objective: f64,
    spectrum: SpectralResult,
    history: Vec<HistoryEntry>,
    converged: bool,
}

fn run_seed(
    grid: &GridSpec,
    weights: &WeightPair,
    objective: &ObjectiveSpec,
    k_cells: usize,
    base_density: &[f64],
    seed: u64,
    opts: &SetOptions,
) -> Result<SeedRun> {
    let vol = grid.cell_volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dmax = base_density.iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut start = base_density.to_vec();
    if seed != 0 {
        // a few random bumps move the starting set away from the box mode
        for _ in 0..3 {
            let centre = [
                rng.gen::<f64>() * grid.lengths()[0],
                if grid.dim() == 2 { rng.gen::<f64>() * grid.lengths()[1] } else { 0.0 },
            ];
            let radius = 0.1 + 0.3 * rng.gen::<f64>();
            let amp = dmax * rng.gen::<f64>();
            for (c, d) in start.iter_mut().enumerate() {
                let x = grid.cell_center(c);
                let r2 = (x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2);
                *d += amp * (-r2 / (radius * radius)).exp();
            }
        }
    }
    let mut mask = top_k(&start, k_cells);
    let hard = |m: &[bool]| CapacitaryMeasure::from_quasi_open(*grid, m);
    let (mut cur, _) = evaluate(hard(&mask)?, weights, objective, &opts.optimize.spectrum, None)?;
    let mut history = vec![HistoryEntry {
        iteration: 0,
        objective: cur.objective,
        constraint: k_cells as f64 * vol,
    }];
    let mut it = 0;
    let mut rejected_total = 0;
    let mut converged = false;
    let mut soft_warm: Option<Vec<Vec<f64>>> = None;
    'stages: for &s in opts.s_schedule.iter().chain(std::iter::once(&f64::INFINITY)) {
        let mut rejected = 0;
        loop {
            if it >= opts.optimize.max_iter {
                break 'stages;
            }
            it += 1;
            let mu = if s.is_finite() { soft_wall(grid, &mask, s)? } else { hard(&mask)? };
            let (relaxed, rctx) = evaluate(mu, weights, objective, &opts.optimize.spectrum, soft_warm.as_deref())?;
            if relaxed.spectrum.eigenfields.len() < objective.k() {
                break;
            }
            soft_warm = Some(warm_fields(&relaxed.spectrum));
            let next_mask = top_k(&mask_density(&rctx, &relaxed.spectrum, objective), k_cells);
            if next_mask == mask {
                break;
            }
            let warm = warm_fields(&cur.spectrum);
            let (next, _) = evaluate(hard(&next_mask)?, weights, objective, &opts.optimize.spectrum, Some(&warm))?;
            if next.objective < cur.objective - 1e-12 * cur.objective.abs() {
                mask = next_mask;
                cur = next;
                rejected = 0;
                rejected_total = 0;
                history.push(HistoryEntry {
                    iteration: it,
                    objective: cur.objective,
                    constraint: k_cells as f64 * vol,
                });
            } else {
                rejected += 1;
                rejected_total += 1;
                if rejected_total >= opts.optimize.patience {
                    converged = true;
                    break 'stages;
                }
                // a rejected threshold leaves the mask unchanged: move on to a stiffer wall
                if rejected >= 1 {
                    break;
                }
            }
        }
    }
    if it < opts.optimize.max_iter {
        converged = true;
    }
    Ok(SeedRun {
        mask,
        objective: cur.objective,
        spectrum: cur.spectrum,
        history,
        converged,
    })
}

/// Iterative thresholding over sets `A` with `|A| = c` (in whole cells),
/// relaxed through soft walls `s (1 - chi_A)` and finished on the hard wall.
pub fn optimize_set(
    grid: &GridSpec,
    weights: &WeightPair,
    objective: &ObjectiveSpec,
    constraint: &ConstraintSpec,
    opts: &SetOptions,
) -> Result<SetOutcome> {
    objective.validate()?;
    constraint.validate(grid)?;
    let ConstraintSpec::Volume { c } = constraint else {
        return Err(Error::InvalidConstraint("set optimization needs a volume constraint".into()));
    };
    if weights.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if opts.seeds.is_empty() {
        return Err(Error::InvalidArgument("no seeds".into()));
    }
    if opts.s_schedule.iter().any(|s| !(s.is_finite() && *s > 0.0)) || opts.s_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("s schedule must be positive and increasing".into()));
    }
    let n = grid.n_cells();
    let vol = grid.cell_volume();
    let k_cells = (c / vol).round() as usize;
    let full = CapacitaryMeasure::zero(*grid);
    let (box_eval, box_ctx) = evaluate(full, weights, objective, &opts.optimize.spectrum, None)?;
    if k_cells >= n {
        if *c < grid.box_volume() - vol * 0.5 {
            return Err(Error::InvalidConstraint("volume between |Omega| - h^d and |Omega|".into()));
        }
        let objective_value = box_eval.objective;
        return Ok(SetOutcome {
            mask: vec![true; n],
            objective: objective_value,
            history: vec![HistoryEntry {
                iteration: 0,
                objective: objective_value,
                constraint: grid.box_volume(),
            }],
            spectrum: box_eval.spectrum,
            seed: opts.seeds[0],
            seed_objectives: vec![objective_value; opts.seeds.len()],
            converged: true,
        });
    }
    if *c > grid.box_volume() - vol * (1.0 - 1e-9) || k_cells == 0 {
        return Err(Error::InvalidConstraint(format!("volume {c} must be at most |Omega| - h^d and at least h^d / 2")));
    }
    if box_eval.spectrum.eigenfields.len() < objective.k() {
        return Err(Error::Infeasible("box spectrum not available".into()));
    }
    let base = mask_density(&box_ctx, &box_eval.spectrum, objective);
    let runs: Vec<Result<SeedRun>> = opts
        .seeds
        .par_iter()
        .map(|&s| run_seed(grid, weights, objective, k_cells, &base, s, opts))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let seed_objectives: Vec<f64> = runs.iter().map(|r| r.objective).collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.objective < runs[best].objective {
            best = i;
        }
    }
    let seed = opts.seeds[best];
    let r = runs.into_iter().nth(best).expect("nonempty");
    if !r.objective.is_finite() {
        return Err(Error::Infeasible("no admissible set with certified eigenvalues".into()));
    }
    Ok(SetOutcome {
        mask: r.mask,
        objective: r.objective,
        spectrum: r.spectrum,
        history: r.history,
        seed,
        seed_objectives,
        converged: r.converged,
    })
}
