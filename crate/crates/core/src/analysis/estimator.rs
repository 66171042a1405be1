//! Phonon number from the homodyne record.
//!
//! `⟨σy⟩` precesses at `2(δ + χn)` while the resonator holds `n` quanta, so
//! the record carries a line on a known comb. Each window is split into
//! Hann-tapered segments whose powers are averaged (Welch) and either
//! evaluated on the comb (lock-in bank) or on a uniform grid (periodogram).

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float as _;

use super::AnalysisError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorMethod {
    /// Powers at `2(δ + χn)`, `n = 0..=n_max`.
    LockIn,
    /// Powers on a uniform grid over `[0, 2(|δ| + χ(n_max + 1))]`; the peak
    /// frequency is mapped back to the nearest level.
    Periodogram,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    /// Window length (s).
    pub window: f64,
    /// Segments averaged per window.
    pub segments: usize,
    /// Distance between window starts (s); `None` means back-to-back windows.
    pub hop: Option<f64>,
    pub n_max: usize,
    /// Estimates with lower confidence are reported as undetermined.
    pub threshold: f64,
    pub method: EstimatorMethod,
    /// Periodogram grid spacing (rad/s); `None` uses `χ/8`.
    pub resolution: Option<f64>,
}

impl EstimatorConfig {
    pub fn lock_in(window: f64, n_max: usize) -> Self {
        Self { window, segments: 4, hop: None, n_max, threshold: 0.8, method: EstimatorMethod::LockIn, resolution: None }
    }

    pub fn periodogram(window: f64, n_max: usize) -> Self {
        Self { method: EstimatorMethod::Periodogram, ..Self::lock_in(window, n_max) }
    }
}

/// One analysis window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhononEstimate {
    pub start: f64,
    pub end: f64,
    /// `None` when the confidence is below the threshold.
    pub level: Option<usize>,
    /// Level of the strongest line regardless of confidence.
    pub raw_level: usize,
    /// `max(0, 1 - 1/r)` with `r` the ratio of the strongest to the
    /// second-strongest peak power.
    pub confidence: f64,
}

impl PhononEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Sliding-window phonon estimates from record increments `dr` sampled every
/// `dt`, starting at `t = 0`.
pub fn estimate_phonon_from_record(
    dr: &[f64],
    dt: f64,
    chi: f64,
    delta: f64,
    cfg: &EstimatorConfig,
) -> Result<Vec<PhononEstimate>, AnalysisError> {
    if !(dt > 0.0) || !(cfg.window > 0.0) || !(chi != 0.0 && chi.is_finite()) || !delta.is_finite() {
        return Err(AnalysisError::InvalidArgument("dt, window and χ must be positive and finite"));
    }
    if cfg.segments == 0 || !(cfg.threshold >= 0.0 && cfg.threshold <= 1.0) {
        return Err(AnalysisError::InvalidArgument("need at least one segment and a threshold in [0, 1]"));
    }
    if 2.0 * chi.abs() * cfg.window < 2.0 * PI {
        return Err(AnalysisError::InvalidArgument("window cannot resolve the level spacing"));
    }
    let window_len = (cfg.window / dt).round() as usize;
    let seg_len = window_len / cfg.segments;
    if seg_len < 2 {
        return Err(AnalysisError::InvalidArgument("segments shorter than two samples"));
    }
    if window_len > dr.len() {
        return Err(AnalysisError::InvalidArgument("record shorter than one window"));
    }
    let hop_len = match cfg.hop {
        Some(h) if h > 0.0 => ((h / dt).round() as usize).max(1),
        Some(_) => return Err(AnalysisError::InvalidArgument("hop must be positive")),
        None => window_len,
    };

    let comb: Vec<f64> = (0..=cfg.n_max).map(|n| 2.0 * (delta + chi * n as f64)).collect();
    let freqs = match cfg.method {
        EstimatorMethod::LockIn => comb.clone(),
        EstimatorMethod::Periodogram => {
            let step = cfg.resolution.unwrap_or(chi.abs() / 8.0);
            let top = 2.0 * (delta.abs() + chi.abs() * (cfg.n_max as f64 + 1.0));
            if !(step > 0.0) || step > top {
                return Err(AnalysisError::InvalidArgument("window shorter than one grid sample"));
            }
            let k = (top / step).ceil() as usize;
            (0..=k).map(|i| i as f64 * step).collect()
        }
    };
    let taper: Vec<f64> =
        (0..seg_len).map(|j| 0.5 - 0.5 * (2.0 * PI * (j as f64 + 0.5) / seg_len as f64).cos()).collect();
    let rotors: Vec<Complex64> = freqs.iter().map(|w| Complex64::from_polar(1.0, -w * dt)).collect();

    let mut out = Vec::new();
    let mut power = alloc::vec![0.0; freqs.len()];
    let mut start = 0;
    while start + window_len <= dr.len() {
        power.iter_mut().for_each(|p| *p = 0.0);
        for s in 0..cfg.segments {
            let seg = &dr[start + s * seg_len..start + (s + 1) * seg_len];
            for (p, rot) in power.iter_mut().zip(&rotors) {
                let mut phasor = Complex64::new(1.0, 0.0);
                let mut acc = Complex64::new(0.0, 0.0);
                for (x, w) in seg.iter().zip(&taper) {
                    acc += phasor * (x * w);
                    phasor *= rot;
                }
                *p += acc.norm_sqr();
            }
        }
        let (raw_level, confidence) = match cfg.method {
            EstimatorMethod::LockIn => {
                let (best, second) = top_two(&power);
                (best, ratio_confidence(power[best], second))
            }
            EstimatorMethod::Periodogram => {
                let peaks = local_maxima(&power);
                let (best, second) = top_two(&peaks.iter().map(|&i| power[i]).collect::<Vec<_>>());
                let best = peaks[best];
                let level = ((freqs[best].abs() / 2.0 - delta) / chi).round().clamp(0.0, cfg.n_max as f64) as usize;
                (level, ratio_confidence(power[best], second))
            }
        };
        let level = (confidence >= cfg.threshold).then_some(raw_level);
        out.push(PhononEstimate {
            start: start as f64 * dt,
            end: (start + window_len) as f64 * dt,
            level,
            raw_level,
            confidence,
        });
        start += hop_len;
    }
    Ok(out)
}

/// Index of the largest entry and the value of the runner-up (0 if absent).
fn top_two(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let second = values.iter().enumerate().filter(|&(i, _)| i != best).map(|(_, v)| *v).fold(0.0, f64::max);
    (best, second)
}

fn ratio_confidence(peak: f64, second: f64) -> f64 {
    if !(peak > 0.0) {
        return 0.0;
    }
    if second <= 0.0 {
        return 1.0;
    }
    (1.0 - second / peak).max(0.0)
}

/// Indices of local maxima, endpoints included; never empty.
fn local_maxima(p: &[f64]) -> Vec<usize> {
    let n = p.len();
    let mut out: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || p[i] > p[i - 1]) && (i + 1 == n || p[i] >= p[i + 1]))
        .collect();
    if out.is_empty() {
        out.push(0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    // Effective rates of the paper-sec6 preset.
    const GAMMA: f64 = 2.29e5;
    const MU: f64 = 1e7;
    const CHI: f64 = 2.56e3;

    fn synthetic(levels: &[(f64, usize)], dt: f64, n: usize, noise: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = (GAMMA / MU).sqrt();
        let mut phase = 0.0;
        (0..n)
            .map(|j| {
                let t = j as f64 * dt;
                let level = levels.iter().rev().find(|(t0, _)| t >= *t0).unwrap().1;
                phase += 2.0 * CHI * level as f64 * dt;
                let z: f64 = StandardNormal.sample(&mut rng);
                amp * phase.cos() * dt + noise * dt.sqrt() * z / MU.sqrt()
            })
            .collect()
    }

    #[test]
    fn recovers_a_noisy_line() {
        let dt = 1e-6;
        let dr = synthetic(&[(0.0, 3)], dt, 200_000, 1.0, 7);
        let est = estimate_phonon_from_record(&dr, dt, CHI, 0.0, &EstimatorConfig::lock_in(0.01, 10)).unwrap();
        assert_eq!(est.len(), 20);
        let hits = est.iter().filter(|e| e.level == Some(3)).count();
        assert!(hits as f64 >= 0.95 * est.len() as f64, "{est:?}");
    }

    #[test]
    fn noise_alone_is_undetermined() {
        let dt = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dr: Vec<f64> = (0..200_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * dt.sqrt() / MU.sqrt()
            })
            .collect();
        for cfg in [EstimatorConfig::lock_in(0.01, 10), EstimatorConfig::periodogram(0.01, 10)] {
            let est = estimate_phonon_from_record(&dr, dt, CHI, 0.0, &cfg).unwrap();
            assert!(est.iter().all(|e| e.level.is_none() && e.confidence < cfg.threshold), "{est:?}");
        }
    }

    #[test]
    fn follows_a_level_change() {
        let dt = 1e-6;
        let switch = 0.1;
        let dr = synthetic(&[(0.0, 2), (switch, 3)], dt, 200_000, 1.0, 11);
        let cfg = EstimatorConfig::lock_in(0.01, 10);
        let est = estimate_phonon_from_record(&dr, dt, CHI, 0.0, &cfg).unwrap();
        let first_three = est.iter().find(|e| e.level == Some(3)).unwrap();
        assert!(first_three.end - switch <= 2.0 * cfg.window, "{est:?}");
        assert!(est.iter().filter(|e| e.end <= switch).all(|e| e.level == Some(2)));
    }

    #[test]
    fn periodogram_agrees_with_lock_in() {
        let dt = 1e-6;
        let dr = synthetic(&[(0.0, 4)], dt, 100_000, 1.0, 5);
        let est = estimate_phonon_from_record(&dr, dt, CHI, 0.0, &EstimatorConfig::periodogram(0.01, 10)).unwrap();
        assert!(est.iter().all(|e| e.level == Some(4)), "{est:?}");
    }

    #[test]
    fn detuning_shifts_the_comb() {
        let dt = 1e-6;
        let delta = 1.7 * CHI;
        let dr: Vec<f64> = (0..50_000).map(|j| (2.0 * (delta + 2.0 * CHI) * j as f64 * dt).sin() * dt).collect();
        let est = estimate_phonon_from_record(&dr, dt, CHI, delta, &EstimatorConfig::lock_in(0.01, 8)).unwrap();
        assert!(est.iter().all(|e| e.level == Some(2)));
    }

    #[test]
    fn rejects_bad_windows() {
        let dr = [0.0; 1000];
        let cfg = EstimatorConfig::lock_in(1e-4, 5);
        assert!(estimate_phonon_from_record(&dr, 1e-6, CHI, 0.0, &cfg).is_err());
        let cfg = EstimatorConfig::lock_in(0.01, 5);
        assert!(estimate_phonon_from_record(&dr, 1e-6, CHI, 0.0, &cfg).is_err());
        let cfg = EstimatorConfig { resolution: Some(1e9), ..EstimatorConfig::periodogram(0.01, 5) };
        assert!(estimate_phonon_from_record(&[0.0; 20_000], 1e-6, CHI, 0.0, &cfg).is_err());
    }

    #[test]
    fn overlapping_windows() {
        let dr = synthetic(&[(0.0, 1)], 1e-6, 30_000, 0.0, 0);
        let cfg = EstimatorConfig { hop: Some(0.005), ..EstimatorConfig::lock_in(0.01, 4) };
        let est = estimate_phonon_from_record(&dr, 1e-6, CHI, 0.0, &cfg).unwrap();
        assert_eq!(est.len(), 5);
        assert!((est[1].start - 0.005).abs() < 1e-12 && (est[1].midpoint() - 0.01).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn noiseless_lines_are_exact(n in 0usize..=12, periodogram in any::<bool>()) {
            let dt = 1e-6;
            let dr = synthetic(&[(0.0, n)], dt, 40_000, 0.0, 0);
            let cfg = if periodogram { EstimatorConfig::periodogram(0.02, 12) } else { EstimatorConfig::lock_in(0.02, 12) };
            let est = estimate_phonon_from_record(&dr, dt, CHI, 0.0, &cfg).unwrap();
            for e in est {
                prop_assert_eq!(e.level, Some(n));
                prop_assert!(e.confidence >= 0.99, "{:?}", e);
            }
        }
    }
}
