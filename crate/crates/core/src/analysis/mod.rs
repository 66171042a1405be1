//! Physics extracted from states and records: phonon statistics,
//! conditioning and jump detection, record-based phonon estimation and
//! ensemble bands.

mod ensemble;
mod estimator;

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use thiserror::Error;

use crate::layout::{SpaceLayout, RESONATOR};
use crate::operator::OperatorError;
use crate::state::DensityMatrix;

pub use ensemble::{ensemble_stats, percentile, mann_whitney_greater, Band, Comparison, EnsembleStats, ObservableKind, RankTest};
pub use estimator::{estimate_phonon_from_record, EstimatorConfig, EstimatorMethod, PhononEstimate};

/// Populations below this are treated as rounding noise and clipped.
pub const NEGATIVE_POPULATION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("records come from different equations or settings")]
    FingerprintMismatch,
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Resonator level populations.
#[derive(Clone, Debug, PartialEq)]
pub struct FockDistribution {
    pub probabilities: Vec<f64>,
    /// Total magnitude of negative populations that were clipped to zero.
    /// Anything beyond `NEGATIVE_POPULATION_TOL` signals a non-positive state.
    pub clipped: f64,
}

impl FockDistribution {
    /// `(Σ n p_n, Σ n² p_n - (Σ n p_n)²)`
    pub fn moments(&self) -> (f64, f64) {
        phonon_moments(&self.probabilities)
    }
}

/// `p_n = <n|ρ_r|n>` of the resonator reduced state. A layout without other
/// factors is used as is.
pub fn fock_distribution(rho: &DensityMatrix, layout: &SpaceLayout) -> Result<FockDistribution, AnalysisError> {
    let reduced = if layout.factors().len() == 1 && layout.dim_of(RESONATOR).is_some() {
        rho.clone()
    } else {
        rho.partial_trace(layout, &[RESONATOR])?
    };
    let mut clipped = 0.0;
    let probabilities = reduced
        .populations()
        .into_iter()
        .map(|p| {
            if p < 0.0 {
                clipped -= p;
                0.0
            } else {
                p
            }
        })
        .collect();
    Ok(FockDistribution { probabilities, clipped })
}

/// Mean and variance of the level index under `p`.
pub fn phonon_moments(p: &[f64]) -> (f64, f64) {
    let mean: f64 = p.iter().enumerate().map(|(n, w)| n as f64 * w).sum();
    let second: f64 = p.iter().enumerate().map(|(n, w)| (n * n) as f64 * w).sum();
    (mean, (second - mean * mean).max(0.0))
}

/// `(⟨n⟩, ⟨n²⟩)` pairs to `(mean, variance)` pairs, variance clipped at 0.
pub fn phonon_stats(moments: &[(f64, f64)]) -> Vec<(f64, f64)> {
    moments.iter().map(|&(m, s)| (m, (s - m * m).max(0.0))).collect()
}

/// Mean and variance of the phonon number for each state.
pub fn phonon_stats_of_states(states: &[DensityMatrix], layout: &SpaceLayout) -> Result<Vec<(f64, f64)>, AnalysisError> {
    states.iter().map(|s| Ok(fock_distribution(s, layout)?.moments())).collect()
}

/// Root mean square of `var` over samples at or after `t_from`; `None` if
/// there are none.
pub fn fluctuation_rms(times: &[f64], var: &[f64], t_from: f64) -> Option<f64> {
    let tail: Vec<f64> = times.iter().zip(var).filter(|(t, _)| **t >= t_from).map(|(_, v)| *v).collect();
    (!tail.is_empty()).then(|| (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt())
}

/// First time after which `var` stays below `threshold` for `hold`.
///
/// The entry time is interpolated linearly between the bracketing samples
/// (or is the first sample if the series starts below). The series must
/// extend at least `hold` past that time.
pub fn detect_conditioning(times: &[f64], var: &[f64], threshold: f64, hold: f64) -> Result<Option<f64>, AnalysisError> {
    if times.len() != var.len() {
        return Err(AnalysisError::InvalidArgument("times and values differ in length"));
    }
    if !(threshold > 0.0) || !(hold >= 0.0) {
        return Err(AnalysisError::InvalidArgument("threshold must be positive and hold non-negative"));
    }
    let mut entry: Option<f64> = None;
    for i in 0..times.len() {
        if var[i] < threshold {
            let start = *entry.get_or_insert_with(|| {
                if i == 0 {
                    times[0]
                } else {
                    let (t0, t1, v0, v1) = (times[i - 1], times[i], var[i - 1], var[i]);
                    t0 + (t1 - t0) * (v0 - threshold) / (v0 - v1)
                }
            });
            if times[i] - start >= hold * (1.0 - 1e-9) {
                return Ok(Some(start));
            }
        } else {
            entry = None;
        }
    }
    Ok(None)
}

/// An integer change of the phonon level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub n_before: usize,
    pub n_after: usize,
    /// 1 for single-quantum steps, `1/k²` for steps of `k` quanta.
    pub confidence: f64,
}

/// Change-points of the rounded level that persist for `debounce`.
///
/// A change at sample `i` to level `L` is accepted when every sample in
/// `[t_i, t_i + debounce]` rounds to `L` and the series reaches
/// `t_i + debounce`. Non-finite samples are skipped.
pub fn detect_jumps(times: &[f64], levels: &[f64], debounce: f64) -> Result<Vec<JumpEvent>, AnalysisError> {
    if times.len() != levels.len() {
        return Err(AnalysisError::InvalidArgument("times and values differ in length"));
    }
    if !(debounce >= 0.0) {
        return Err(AnalysisError::InvalidArgument("debounce must be non-negative"));
    }
    let round = |x: f64| x.max(0.0).round() as usize;
    let valid: Vec<usize> = (0..times.len()).filter(|&i| levels[i].is_finite()).collect();
    let Some(&first) = valid.first() else {
        return Ok(Vec::new());
    };
    let mut current = round(levels[first]);
    let mut events = Vec::new();
    let mut k = 1;
    while k < valid.len() {
        let i = valid[k];
        let level = round(levels[i]);
        if level == current {
            k += 1;
            continue;
        }
        let t0 = times[i];
        let mut held = false;
        let mut j = k;
        while j < valid.len() {
            let s = valid[j];
            if round(levels[s]) != level {
                break;
            }
            if times[s] - t0 >= debounce * (1.0 - 1e-9) {
                held = true;
                break;
            }
            j += 1;
        }
        if held {
            let step = level.abs_diff(current) as f64;
            events.push(JumpEvent { time: t0, n_before: current, n_after: level, confidence: 1.0 / (step * step) });
            current = level;
        }
        k += 1;
    }
    Ok(events)
}
