//! Coupled-path strong-convergence measurement.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{IntegratorConfig, IntegratorError, Scheme, Trajectory};
use crate::model::SmeSpec;
use crate::state::DensityMatrix;

/// Mean strong error at each step size and the fitted log-log slope.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    /// `(dt, mean over paths of max |ρ_dt(T) - ρ_ref(T)|)`
    pub errors: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Integrates each path at `reference_dt` and at every `reference_dt · m`
/// for `m` in `multiples`, summing the fine Wiener increments so all step
/// sizes see the same Brownian path.
pub fn strong_convergence(
    spec: &SmeSpec,
    rho0: &DensityMatrix,
    t_final: f64,
    reference_dt: f64,
    multiples: &[usize],
    paths: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<ConvergenceStudy, IntegratorError> {
    if multiples.len() < 2 || paths == 0 || multiples.contains(&0) {
        return Err(IntegratorError::Config("need at least two step multiples and one path"));
    }
    let n_fine = (t_final / reference_dt).round() as usize;
    if multiples.iter().any(|&m| n_fine % m != 0) {
        return Err(IntegratorError::Config("every multiple must divide the number of reference steps"));
    }
    let mut sums = vec![0.0; multiples.len()];
    let mut dws = vec![0.0; n_fine];
    for path in 0..paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        let sd = reference_dt.sqrt();
        for w in dws.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * sd;
        }
        let integrate = |m: usize| -> Result<DensityMatrix, IntegratorError> {
            let mut cfg = IntegratorConfig::new(reference_dt * m as f64, t_final, seed);
            cfg.diag_every = u64::MAX;
            cfg.scheme = scheme;
            let mut traj = Trajectory::new(spec, rho0, &cfg)?;
            for chunk in dws.chunks(m) {
                traj.step_with_increment(chunk.iter().sum())?;
            }
            Ok(traj.state())
        };
        let reference = integrate(1)?;
        for (sum, &m) in sums.iter_mut().zip(multiples) {
            *sum += integrate(m)?.operator().max_abs_diff(reference.operator())?;
        }
    }
    let errors: Vec<(f64, f64)> =
        multiples.iter().zip(&sums).map(|(&m, s)| (reference_dt * m as f64, s / paths as f64)).collect();
    let slope = fit_slope(&errors);
    Ok(ConvergenceStudy { errors, slope })
}

/// Least-squares slope of `ln err` against `ln dt`.
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
