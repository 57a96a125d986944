//! Semicontinuity checks for eigenvalues and Psi-volumes along sequences of
//! measures that converge in the torsion sense.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measure::{CapacitaryMeasure, PsiSpec, WeightPair};
use crate::spectrum::{eigen_minimax_with, EigenStatus, SpectrumOptions};
use crate::torsion::gamma_distance;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceKind {
    /// `V_s = s (1 - chi_A)` with limit `inf` off `A`.
    GrowingPotential { s_values: Vec<f64> },
    /// Shrinking admissible sets `A_n` with limit `A`.
    ShrinkingSet,
    Custom,
}

/// Measures `mu^(n)` with their declared limit.
#[derive(Debug, Clone)]
pub struct MeasureSequence {
    pub kind: SequenceKind,
    pub elements: Vec<CapacitaryMeasure>,
    pub limit: CapacitaryMeasure,
}

impl MeasureSequence {
    pub fn custom(elements: Vec<CapacitaryMeasure>, limit: CapacitaryMeasure) -> Result<Self> {
        Self::build(SequenceKind::Custom, elements, limit)
    }

    fn build(kind: SequenceKind, elements: Vec<CapacitaryMeasure>, limit: CapacitaryMeasure) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidArgument("sequence has no elements".into()));
        }
        if elements.iter().any(|e| e.grid() != limit.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { kind, elements, limit })
    }

    pub fn grid(&self) -> &GridSpec {
        self.limit.grid()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// `V_s = s (1 - chi_A)` for increasing `s`, with limit `inf` on the complement of `A`.
pub fn blocked_limit_sequence(grid: GridSpec, mask: &[bool], s_values: &[f64]) -> Result<MeasureSequence> {
    let limit = CapacitaryMeasure::from_quasi_open(grid, mask)?;
    if s_values.is_empty() {
        return Err(Error::InvalidArgument("no s values".into()));
    }
    if s_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidArgument("s values must be finite and >= 0".into()));
    }
    if s_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("s values must be increasing".into()));
    }
    let elements = s_values
        .iter()
        .map(|&s| {
            let v: Vec<f64> = mask.iter().map(|a| if *a { 0.0 } else { s }).collect();
            CapacitaryMeasure::from_potential(grid, &v)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasureSequence::build(
        SequenceKind::GrowingPotential {
            s_values: s_values.to_vec(),
        },
        elements,
        limit,
    )
}

/// `inf` off each `A_n`, for sets shrinking to `limit`.
pub fn shrinking_set_sequence(grid: GridSpec, masks: &[Vec<bool>], limit: &[bool]) -> Result<MeasureSequence> {
    let limit = CapacitaryMeasure::from_quasi_open(grid, limit)?;
    let elements = masks
        .iter()
        .map(|m| CapacitaryMeasure::from_quasi_open(grid, m))
        .collect::<Result<Vec<_>>>()?;
    for w in elements.windows(2) {
        if !w[0].leq(&w[1])? {
            return Err(Error::InvalidArgument("sets must be nested decreasing".into()));
        }
    }
    MeasureSequence::build(SequenceKind::ShrinkingSet, elements, limit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Number of trailing elements standing in for the lim inf / lim sup.
    /// A monotone tail is represented by its last element.
    pub tail: usize,
    /// Relative slack of the inequality.
    pub slack: f64,
    pub spectrum: SpectrumOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            tail: 3,
            slack: 1e-3,
            spectrum: SpectrumOptions::default(),
        }
    }
}

/// Outcome of a semicontinuity check.
#[derive(Debug, Clone, Serialize)]
pub struct SemicontinuityReport {
    pub m: usize,
    #[serde(serialize_with = "ser_f64")]
    pub limit_value: f64,
    #[serde(serialize_with = "ser_vec")]
    pub values: Vec<f64>,
    /// lim inf (lsc) or lim sup (usc) estimate from the tail
    #[serde(serialize_with = "ser_f64")]
    pub tail_value: f64,
    /// nonnegative when the inequality holds without slack
    #[serde(serialize_with = "ser_f64")]
    pub margin: f64,
    /// torsion distances of the elements to the limit
    pub distances: Vec<f64>,
    pub pass: bool,
    /// some eigenvalue unresolved, or distances not decreasing
    pub inconclusive: bool,
}

/// Outcome of the Psi-volume check.
#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    #[serde(serialize_with = "ser_f64")]
    pub limit_value: f64,
    #[serde(serialize_with = "ser_vec")]
    pub values: Vec<f64>,
    #[serde(serialize_with = "ser_f64")]
    pub tail_value: f64,
    #[serde(serialize_with = "ser_f64")]
    pub margin: f64,
    pub pass: bool,
}

fn ser_f64<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else if *v < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

fn ser_vec<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else if *x > 0.0 {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element("-inf")?;
        }
    }
    seq.end()
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Lower,
    Upper,
}

fn eigen_at(mu: &CapacitaryMeasure, weights: &WeightPair, m: usize, opts: &SpectrumOptions) -> Result<(f64, bool)> {
    let ctx = EnergyContext::new(mu.clone(), weights.clone())?;
    let r = eigen_minimax_with(&ctx, m, opts, None)?;
    Ok((r.lambdas[m - 1], r.status[m - 1] == EigenStatus::Unresolved))
}

fn tail(values: &[f64], n: usize) -> &[f64] {
    &values[values.len() - n.min(values.len()).max(1)..]
}

/// Finite stand-in for lim inf (`lower`) or lim sup of a sequence: a
/// monotone tail converges to its last element, otherwise the tail min / max.
fn tail_estimate(values: &[f64], n: usize, lower: bool) -> f64 {
    let t = tail(values, n);
    let up = t.windows(2).all(|w| w[0] <= w[1]);
    let down = t.windows(2).all(|w| w[0] >= w[1]);
    if up || down {
        *t.last().expect("nonempty tail")
    } else if lower {
        t.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        t.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check(seq: &MeasureSequence, weights: &WeightPair, m: usize, side: Side, opts: &CheckOptions) -> Result<SemicontinuityReport> {
    if weights.grid() != seq.grid() {
        return Err(Error::GridMismatch);
    }
    let all: Vec<&CapacitaryMeasure> = std::iter::once(&seq.limit).chain(&seq.elements).collect();
    let solved: Vec<Result<(f64, bool)>> = all.par_iter().map(|mu| eigen_at(mu, weights, m, &opts.spectrum)).collect();
    let solved = solved.into_iter().collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = seq
        .elements
        .par_iter()
        .map(|e| gamma_distance(e, &seq.limit))
        .collect::<Result<Vec<_>>>()?;
    let (limit_value, limit_unresolved) = solved[0];
    let values: Vec<f64> = solved[1..].iter().map(|s| s.0).collect();
    let unresolved = limit_unresolved || solved[1..].iter().any(|s| s.1);
    let (tail_value, margin, pass) = match side {
        Side::Lower => {
            let tv = tail_estimate(&values, opts.tail, true);
            let margin = if tv == limit_value { 0.0 } else { tv - limit_value };
            let pass = limit_value <= tv || limit_value <= tv + opts.slack * tv.abs();
            (tv, margin, pass)
        }
        Side::Upper => {
            let tv = tail_estimate(&values, opts.tail, false);
            let margin = if tv == limit_value { 0.0 } else { limit_value - tv };
            let pass = limit_value >= tv || limit_value >= tv - opts.slack * tv.abs();
            (tv, margin, pass)
        }
    };
    let decreasing = distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
    Ok(SemicontinuityReport {
        m,
        limit_value,
        values,
        tail_value,
        margin,
        distances,
        pass,
        inconclusive: unresolved || !decreasing,
    })
}

/// `lambda_m(limit) <= liminf lambda_m(mu^(n))`, the lim inf taken over the tail.
pub fn lsc_check(seq: &MeasureSequence, weights: &WeightPair, m: usize) -> Result<SemicontinuityReport> {
    lsc_check_with(seq, weights, m, &CheckOptions::default())
}

pub fn lsc_check_with(seq: &MeasureSequence, weights: &WeightPair, m: usize, opts: &CheckOptions) -> Result<SemicontinuityReport> {
    check(seq, weights, m, Side::Lower, opts)
}

/// `lambda_m(limit) >= limsup lambda_m(mu^(n))`; only valid when `nu2 = 0`.
pub fn usc_check(seq: &MeasureSequence, weights: &WeightPair, m: usize) -> Result<SemicontinuityReport> {
    usc_check_with(seq, weights, m, &CheckOptions::default())
}

pub fn usc_check_with(seq: &MeasureSequence, weights: &WeightPair, m: usize, opts: &CheckOptions) -> Result<SemicontinuityReport> {
    if !weights.nu2_is_zero() {
        return Err(Error::UscRequiresZeroNu2);
    }
    check(seq, weights, m, Side::Upper, opts)
}

/// `integral Psi(V_limit) <= liminf integral Psi(V_n)`.
pub fn psi_lsc_check(seq: &MeasureSequence, psi: &PsiSpec) -> Result<PsiReport> {
    psi_lsc_check_with(seq, psi, &CheckOptions::default())
}

pub fn psi_lsc_check_with(seq: &MeasureSequence, psi: &PsiSpec, opts: &CheckOptions) -> Result<PsiReport> {
    let limit_value = seq.limit.psi_volume(psi)?;
    let values = seq.elements.iter().map(|e| e.psi_volume(psi)).collect::<Result<Vec<_>>>()?;
    let tv = tail_estimate(&values, opts.tail, true);
    // inf <= inf passes
    let pass = limit_value <= tv || (tv.is_finite() && limit_value <= tv + opts.slack * tv.abs());
    let margin = if limit_value == tv { 0.0 } else { tv - limit_value };
    Ok(PsiReport {
        limit_value,
        values,
        tail_value: tv,
        margin,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn half_mask(n: usize) -> Vec<bool> {
        (0..n).map(|c| c < n / 2).collect()
    }

    #[test]
    fn full_mask_gives_zero_measures() {
        let g = GridSpec::line(16, 1.0, 2.0).unwrap();
        let seq = blocked_limit_sequence(g, &[true; 16], &[1.0, 10.0]).unwrap();
        assert!(seq.elements.iter().all(|e| *e == CapacitaryMeasure::zero(g)));
        let seq = blocked_limit_sequence(g, &half_mask(16), &[0.0, 5.0]).unwrap();
        assert_eq!(seq.elements[0], CapacitaryMeasure::zero(g));
        assert!(seq.elements[0].leq(&seq.elements[1]).unwrap());
        assert!(blocked_limit_sequence(g, &[false; 16], &[1.0]).is_err());
        assert!(blocked_limit_sequence(g, &half_mask(16), &[2.0, 1.0]).is_err());
    }

    #[test]
    fn constant_sequence_has_zero_margin() {
        let g = GridSpec::line(32, 1.0, 2.0).unwrap();
        let mu = CapacitaryMeasure::from_potential(g, &[3.0; 32]).unwrap();
        let seq = MeasureSequence::custom(vec![mu.clone(), mu.clone()], mu).unwrap();
        let w = WeightPair::lebesgue(g);
        let lo = lsc_check(&seq, &w, 1).unwrap();
        let hi = usc_check(&seq, &w, 1).unwrap();
        assert!(lo.pass && hi.pass && !lo.inconclusive);
        assert_eq!(lo.margin, 0.0);
        assert_eq!(hi.margin, 0.0);
        let psi = psi_lsc_check(&seq, &PsiSpec::Exp { beta: 1.0 }).unwrap();
        assert!(psi.pass);
        assert_eq!(psi.margin, 0.0);
    }

    #[test]
    fn usc_needs_zero_nu2() {
        let g = GridSpec::line(8, 1.0, 2.0).unwrap();
        let mu = CapacitaryMeasure::zero(g);
        let seq = MeasureSequence::custom(vec![mu.clone()], mu).unwrap();
        let w = WeightPair::new(g, vec![2.0; 8], &[], vec![1.0; 8]).unwrap();
        assert_eq!(usc_check(&seq, &w, 1).unwrap_err(), Error::UscRequiresZeroNu2);
    }

    #[test]
    fn shrinking_intervals_increase_to_half_interval_value() {
        let n = 96;
        let g = GridSpec::line(n, 1.0, 2.0).unwrap();
        // A_j = (0, 1/2 + 1/j) in whole cells; eventually equal to the limit
        let masks: Vec<Vec<bool>> = [4usize, 8, 16, 32, 200, 400]
            .iter()
            .map(|k| (0..n).map(|c| c < n / 2 + n / k).collect())
            .collect();
        let seq = shrinking_set_sequence(g, &masks, &half_mask(n)).unwrap();
        let r = lsc_check(&seq, &WeightPair::lebesgue(g), 1).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.values.windows(2).all(|w| w[0] <= w[1]));
        assert!((r.limit_value - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 1e-2);
    }

    #[test]
    fn power_psi_is_infinite_on_blocked_limit() {
        let g = GridSpec::line(8, 1.0, 2.0).unwrap();
        let seq = blocked_limit_sequence(g, &half_mask(8), &[1.0, 10.0]).unwrap();
        let r = psi_lsc_check(&seq, &PsiSpec::Power { beta: 1.0 }).unwrap();
        assert!(r.limit_value.is_infinite());
        assert!(r.pass);
    }
}
