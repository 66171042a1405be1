//! Turning a [`RunConfig`] into core objects.

use std::f64::consts::PI;

use qnd_core::analysis::{EstimatorConfig, EstimatorMethod};
use qnd_core::engine::{IntegratorConfig, Scheme};
use qnd_core::layout::{CAVITY, QUBIT, RESONATOR};
use qnd_core::model::{build_full_sme, build_reduced_sme, derive_params, DerivedParams, FullModelOptions, ModelError, SmeSpec};
use qnd_core::operator::{sigma_y_eigenvector, EXCITED, GROUND};
use qnd_core::{thermal_state, DensityMatrix, SpaceLayout};

use crate::config::{EstimatorName, Mode, QubitInit, RunConfig, SchemeName};

pub fn derived(cfg: &RunConfig) -> Result<DerivedParams, ModelError> {
    derive_params(&cfg.params.physical())
}

/// Qubit ⊗ resonator equation with or without feedback.
pub fn reduced_spec(cfg: &RunConfig) -> Result<SmeSpec, ModelError> {
    let pp = cfg.params.physical();
    let dp = derive_params(&pp)?;
    let feedback = cfg.model.feedback && !cfg.model.drift_only;
    let mut spec = build_reduced_sme(&dp, &pp, feedback, cfg.model.n_levels)?;
    if cfg.model.drift_only {
        strip_to_hamiltonian(&mut spec);
    }
    Ok(spec)
}

/// Qubit ⊗ resonator ⊗ cavity equation.
pub fn full_spec(cfg: &RunConfig) -> Result<SmeSpec, ModelError> {
    let pp = cfg.params.physical();
    let dp = derive_params(&pp)?;
    let opts = FullModelOptions { theta: cfg.model.theta, ..FullModelOptions::new(cfg.model.n_levels, cfg.model.n_cavity) };
    let mut spec = build_full_sme(&dp, &pp, opts)?;
    if cfg.model.drift_only {
        strip_to_hamiltonian(&mut spec);
    }
    Ok(spec)
}

/// The equation a mode integrates: the full model for `full-model` and
/// `validate`, the reduced model otherwise.
pub fn build_spec(cfg: &RunConfig) -> Result<SmeSpec, ModelError> {
    match cfg.mode {
        Mode::FullModel | Mode::Validate => full_spec(cfg),
        _ => reduced_spec(cfg),
    }
}

fn strip_to_hamiltonian(spec: &mut SmeSpec) {
    spec.channels.clear();
    spec.measurement = None;
    spec.record = None;
}

pub fn qubit_state(init: QubitInit) -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match init {
        QubitInit::Ground => DensityMatrix::fock(GROUND, 2),
        QubitInit::Excited => DensityMatrix::fock(EXCITED, 2),
        QubitInit::PlusY => DensityMatrix::pure(&sigma_y_eigenvector(true)),
        QubitInit::MinusY => DensityMatrix::pure(&sigma_y_eigenvector(false)),
        QubitInit::PlusX => DensityMatrix::pure(&[s.into(), s.into()]),
    }
    .expect("qubit states are valid")
}

/// Product initial state on `layout`; a cavity starts in vacuum.
pub fn initial_state(cfg: &RunConfig, layout: &SpaceLayout) -> Result<DensityMatrix, ModelError> {
    let n = cfg.model.n_levels;
    let resonator = match cfg.model.initial_fock {
        Some(k) => DensityMatrix::fock(k, n)?,
        None => thermal_state(cfg.model.initial_nbar, n)?,
    };
    let qubit = qubit_state(cfg.model.qubit_init);
    let parts: Vec<DensityMatrix> = layout
        .factors()
        .iter()
        .map(|f| match f.label.as_str() {
            QUBIT => Ok(qubit.clone()),
            RESONATOR => Ok(resonator.clone()),
            CAVITY => Ok(DensityMatrix::fock(0, f.dim)?),
            _ => Ok(DensityMatrix::maximally_mixed(f.dim)?),
        })
        .collect::<Result<_, ModelError>>()?;
    let refs: Vec<&DensityMatrix> = parts.iter().collect();
    Ok(DensityMatrix::product(&refs)?)
}

/// Step size actually used for `spec`.
pub fn resolved_dt(cfg: &RunConfig, spec: &SmeSpec) -> f64 {
    cfg.integrator.dt.unwrap_or_else(|| match cfg.integrator.scheme {
        SchemeName::Milstein => spec.default_dt(),
        SchemeName::Split => spec.default_split_dt(),
    })
}

pub fn integrator_config(cfg: &RunConfig, spec: &SmeSpec, trajectory: u64) -> IntegratorConfig {
    let it = &cfg.integrator;
    let mut ic = IntegratorConfig::new(resolved_dt(cfg, spec), it.t_final.unwrap_or(0.0), it.seed);
    ic.trajectory = trajectory;
    ic.renorm_every = it.renorm_every;
    ic.diag_every = it.diag_every;
    ic.sample_every = it.sample_stride;
    ic.leakage_abort = it.leakage_bound;
    ic.repair_negative = it.repair_negative;
    ic.scheme = match it.scheme {
        SchemeName::Milstein => Scheme::Milstein,
        SchemeName::Split => Scheme::SplitHamiltonian,
    };
    ic
}

/// Estimator window (s): configured, or the longer of five periods of the
/// level spacing `2χ` and two such periods per segment.
pub fn resolved_window(cfg: &RunConfig, dp: &DerivedParams) -> f64 {
    cfg.analysis.estimator_window.unwrap_or_else(|| {
        let period = 2.0 * PI / (2.0 * dp.chi.abs());
        let segs = cfg.analysis.estimator_segments as f64;
        (5.0 * period).max(segs * 2.0 * period)
    })
}

pub fn estimator_config(cfg: &RunConfig, dp: &DerivedParams) -> EstimatorConfig {
    let a = &cfg.analysis;
    EstimatorConfig {
        window: resolved_window(cfg, dp),
        segments: a.estimator_segments,
        hop: None,
        n_max: cfg.model.n_levels - 1,
        threshold: a.estimator_threshold,
        method: match a.estimator {
            EstimatorName::LockIn => EstimatorMethod::LockIn,
            EstimatorName::Periodogram => EstimatorMethod::Periodogram,
        },
        resolution: None,
    }
}

/// Jump debounce (s): configured, or five estimator windows.
pub fn resolved_debounce(cfg: &RunConfig, dp: &DerivedParams) -> f64 {
    cfg.analysis.debounce.unwrap_or_else(|| 5.0 * resolved_window(cfg, dp))
}

/// Conditioning hold (s): configured, or ten stored samples.
pub fn resolved_hold(cfg: &RunConfig, dt: f64) -> f64 {
    cfg.analysis.hold.unwrap_or(10.0 * dt * cfg.integrator.sample_stride as f64)
}

/// Qubit ⊗ resonator marginal; reduced layouts are returned unchanged.
pub fn qubit_resonator_part(rho: &DensityMatrix, layout: &SpaceLayout) -> Result<DensityMatrix, ModelError> {
    if layout.dim_of(CAVITY).is_none() {
        return Ok(rho.clone());
    }
    Ok(rho.partial_trace(layout, &[QUBIT, RESONATOR])?)
}
