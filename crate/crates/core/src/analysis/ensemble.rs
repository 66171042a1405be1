//! Pointwise statistics over trajectory ensembles.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;

use super::AnalysisError;
use crate::engine::{Observables, TrajectoryRecord, UnconditionalRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObservableKind {
    NMean,
    NVar,
    Sx,
    Sy,
    Sz,
    Purity,
}

impl ObservableKind {
    pub const ALL: [ObservableKind; 6] = [Self::NMean, Self::NVar, Self::Sx, Self::Sy, Self::Sz, Self::Purity];

    pub fn value(self, o: &Observables) -> f64 {
        match self {
            Self::NMean => o.n_mean,
            Self::NVar => o.n_var,
            Self::Sx => o.sx,
            Self::Sy => o.sy,
            Self::Sz => o.sz,
            Self::Purity => o.purity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::NMean => "n_mean",
            Self::NVar => "n_var",
            Self::Sx => "sx",
            Self::Sy => "sy",
            Self::Sz => "sz",
            Self::Purity => "purity",
        }
    }

    /// Linear in the state, so the ensemble mean must follow the
    /// unconditional evolution.
    pub fn is_linear(self) -> bool {
        matches!(self, Self::NMean | Self::Sx | Self::Sy | Self::Sz)
    }
}

/// Pointwise statistics of one observable.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Band {
    pub mean: Vec<f64>,
    /// Standard error of the mean.
    pub se: Vec<f64>,
    pub p10: Vec<f64>,
    pub p50: Vec<f64>,
    pub p90: Vec<f64>,
}

/// Sample indices where the unconditional curve leaves `mean ± 3 se`.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub kind: ObservableKind,
    pub unconditional: Vec<f64>,
    /// `|mean - unconditional| / se` (infinite where `se = 0` and they differ).
    pub z: Vec<f64>,
    pub mismatches: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub size: usize,
    pub bands: Vec<(ObservableKind, Band)>,
    /// One entry per linear observable when an unconditional run was given.
    pub comparisons: Vec<Comparison>,
}

impl EnsembleStats {
    pub fn band(&self, kind: ObservableKind) -> &Band {
        &self.bands.iter().find(|(k, _)| *k == kind).expect("every kind has a band").1
    }

    pub fn consistent(&self) -> bool {
        self.comparisons.iter().all(|c| c.mismatches.is_empty())
    }
}

/// Aggregates records of one equation. Records are ordered by
/// `(seed, trajectory)` first, so the result does not depend on the order in
/// which they were produced.
pub fn ensemble_stats(records: &[&TrajectoryRecord], unconditional: Option<&UnconditionalRun>) -> Result<EnsembleStats, AnalysisError> {
    if records.len() < 2 {
        return Err(AnalysisError::InvalidArgument("need at least two trajectories"));
    }
    let mut sorted: Vec<&TrajectoryRecord> = records.to_vec();
    sorted.sort_by_key(|r| (r.seed, r.trajectory));
    let head = sorted[0];
    if sorted.iter().any(|r| r.fingerprint != head.fingerprint) {
        return Err(AnalysisError::FingerprintMismatch);
    }
    if sorted.iter().any(|r| r.times != head.times) {
        return Err(AnalysisError::InvalidArgument("records are sampled at different times"));
    }
    if let Some(u) = unconditional {
        if u.times.len() != head.times.len() || u.times.iter().zip(&head.times).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1e-300)) {
            return Err(AnalysisError::InvalidArgument("unconditional run is sampled at different times"));
        }
    }

    let k = sorted.len() as f64;
    let mut column = Vec::with_capacity(sorted.len());
    let mut bands = Vec::new();
    let mut comparisons = Vec::new();
    for kind in ObservableKind::ALL {
        let mut band = Band::default();
        for i in 0..head.times.len() {
            column.clear();
            column.extend(sorted.iter().map(|r| kind.value(&r.observables[i])));
            let x0 = column[0];
            let mean = x0 + column.iter().map(|x| x - x0).sum::<f64>() / k;
            let ss: f64 = column.iter().map(|x| (x - mean) * (x - mean)).sum();
            band.mean.push(mean);
            band.se.push((ss / (k - 1.0) / k).sqrt());
            column.sort_by(f64::total_cmp);
            band.p10.push(percentile(&column, 0.1));
            band.p50.push(percentile(&column, 0.5));
            band.p90.push(percentile(&column, 0.9));
        }
        if let (Some(u), true) = (unconditional, kind.is_linear()) {
            let reference: Vec<f64> = u.observables.iter().map(|o| kind.value(o)).collect();
            let z: Vec<f64> = reference
                .iter()
                .zip(band.mean.iter().zip(&band.se))
                .map(|(r, (m, se))| {
                    let diff = (m - r).abs();
                    if diff <= 1e-12 * r.abs().max(1.0) {
                        0.0
                    } else {
                        diff / se
                    }
                })
                .collect();
            let mismatches = z.iter().enumerate().filter(|(_, z)| !(**z <= 3.0)).map(|(i, _)| i).collect();
            comparisons.push(Comparison { kind, unconditional: reference, z, mismatches });
        }
        bands.push((kind, band));
    }
    Ok(EnsembleStats { times: head.times.clone(), size: sorted.len(), bands, comparisons })
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One-sided Mann-Whitney U test of `x` stochastically greater than `y`,
/// normal approximation with tie and continuity corrections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankTest {
    /// U statistic of `x`.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> Result<RankTest, AnalysisError> {
    if x.is_empty() || y.is_empty() || x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidArgument("both samples must be non-empty and finite"));
    }
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let mut pooled: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_x += midrank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let u = rank_x - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Ok(RankTest { u, z: 0.0, p_value: 1.0 });
    }
    let z = (u - n1 * n2 / 2.0 - 0.5) / var.sqrt();
    Ok(RankTest { u, z, p_value: 0.5 * libm::erfc(z / core::f64::consts::SQRT_2) })
}
