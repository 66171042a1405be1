//! Run configuration: TOML text, built-in presets and command-line overrides.
//!
//! Precedence, lowest first: built-in defaults, the preset, the file, flags.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use qnd_core::model::{derive_params, EffectiveOverrides, MechanicalDamping, PhysicalParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PRESETS: [&str; 2] = ["paper-sec6", "paper-sec6-scaled"];

/// Factor applied to χ and γ by the scaled preset.
pub const SCALED_PRESET_FACTOR: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Syntax(String),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("unknown preset `{0}` (known: paper-sec6, paper-sec6-scaled)")]
    UnknownPreset(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("regime check failed in strict mode: {0}")]
    Regime(String),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Trajectory,
    Ensemble,
    Unconditional,
    FullModel,
    Validate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Trajectory => "trajectory",
            Mode::Ensemble => "ensemble",
            Mode::Unconditional => "unconditional",
            Mode::FullModel => "full-model",
            Mode::Validate => "validate",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "trajectory" => Ok(Mode::Trajectory),
            "ensemble" => Ok(Mode::Ensemble),
            "unconditional" => Ok(Mode::Unconditional),
            "full-model" => Ok(Mode::FullModel),
            "validate" => Ok(Mode::Validate),
            "" => Err(ConfigError::MissingKey("mode")),
            other => Err(invalid("mode", format!("`{other}` is not one of trajectory, ensemble, unconditional, full-model, validate"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QubitInit {
    Ground,
    Excited,
    PlusY,
    MinusY,
    PlusX,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Milstein,
    Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorName {
    LockIn,
    Periodogram,
}

/// Mechanical damping as configured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damping {
    QualityFactor(f64),
    Rate(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub omega_m: f64,
    pub mass: Option<f64>,
    pub delta: f64,
    pub epsilon: f64,
    pub omega_c: f64,
    pub mu: f64,
    pub damping: Damping,
    pub gamma_q: f64,
    pub n0m: f64,
    pub eta: f64,
    pub g: f64,
    pub lambda: f64,
    pub chi_override: Option<f64>,
    pub gprime_override: Option<f64>,
    pub gamma_override: Option<f64>,
}

impl Params {
    pub fn physical(&self) -> PhysicalParams {
        PhysicalParams {
            omega_c: self.omega_c,
            omega_m: self.omega_m,
            josephson: self.delta,
            charge_bias: self.epsilon,
            g: self.g,
            lambda: self.lambda,
            mu: self.mu,
            damping: match self.damping {
                Damping::QualityFactor(q) => MechanicalDamping::QualityFactor(q),
                Damping::Rate(r) => MechanicalDamping::Rate(r),
            },
            gamma_q: self.gamma_q,
            n0m: self.n0m,
            eta: self.eta,
            mass: self.mass,
            overrides: EffectiveOverrides {
                chi: self.chi_override,
                gprime: self.gprime_override,
                gamma_meas: self.gamma_override,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub n_levels: usize,
    pub n_cavity: usize,
    /// Local-oscillator phase of the full model (rad).
    pub theta: f64,
    pub feedback: bool,
    /// Keep only the Hamiltonian (no channels, no measurement).
    pub drift_only: bool,
    pub initial_nbar: f64,
    /// Start in this Fock state instead of a thermal one.
    pub initial_fock: Option<usize>,
    pub qubit_init: QubitInit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Integrator {
    /// `None` picks the scheme's default step.
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub seed: u64,
    pub renorm_every: u64,
    pub diag_every: u64,
    pub sample_stride: u64,
    pub leakage_bound: Option<f64>,
    pub scheme: SchemeName,
    pub repair_negative: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub var_threshold: f64,
    /// Conditioning hold (s); `None` means ten samples.
    pub hold: Option<f64>,
    /// Estimator window (s); `None` means five level-spacing periods.
    pub estimator_window: Option<f64>,
    pub estimator_segments: usize,
    pub estimator_threshold: f64,
    pub estimator: EstimatorName,
    /// Jump debounce (s); `None` means five estimator windows.
    pub debounce: Option<f64>,
    /// Second efficiency for the variance comparison figure.
    pub compare_eta: Option<f64>,
    /// Persist the full-rate record.
    pub write_record: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub path: PathBuf,
}

/// A fully resolved run description.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub preset: Option<String>,
    pub strict: bool,
    pub params: Params,
    pub model: Model,
    pub integrator: Integrator,
    pub ensemble: Ensemble,
    pub analysis: Analysis,
    pub output: Output,
}

// On-disk form: every key optional so layers can be merged.

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    #[serde(default)]
    pub params: RawParams,
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub integrator: RawIntegrator,
    #[serde(default)]
    pub ensemble: RawEnsemble,
    #[serde(default)]
    pub analysis: RawAnalysis,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(rename = "Delta", skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(rename = "Q_m", skip_serializing_if = "Option::is_none")]
    pub q_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_m: Option<f64>,
    #[serde(rename = "Gamma_q", skip_serializing_if = "Option::is_none")]
    pub gamma_q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_override: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gprime_override: Option<f64>,
    #[serde(rename = "Gamma_override", skip_serializing_if = "Option::is_none")]
    pub gamma_override: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_cavity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_only: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_nbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_fock: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubit_init: Option<QubitInit>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIntegrator {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renorm_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diag_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_stride: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leakage_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repair_negative: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnsemble {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAnalysis {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator_window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator_segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debounce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub write_record: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl RawConfig {
    /// Values of `top` replace those of `self`. Either damping key in `top`
    /// replaces both damping keys of `self`.
    pub fn overlay(mut self, top: &RawConfig) -> RawConfig {
        overlay!(self, top; mode, preset, strict);
        if top.params.q_m.is_some() || top.params.gamma_m.is_some() {
            self.params.q_m = top.params.q_m;
            self.params.gamma_m = top.params.gamma_m;
        }
        overlay!(self.params, top.params; omega_m, mass, delta, epsilon, omega_c, mu, gamma_q, n0m, eta, g, lambda,
            chi_override, gprime_override, gamma_override);
        overlay!(self.model, top.model; n_levels, n_cavity, theta, feedback, drift_only, initial_nbar, initial_fock,
            qubit_init);
        overlay!(self.integrator, top.integrator; dt, t_final, seed, renorm_every, diag_every, sample_stride,
            leakage_bound, scheme, repair_negative);
        overlay!(self.ensemble, top.ensemble; size);
        overlay!(self.analysis, top.analysis; var_threshold, hold, estimator_window, estimator_segments,
            estimator_threshold, estimator, debounce, compare_eta, write_record);
        overlay!(self.output, top.output; path);
        self
    }
}

/// Parameter block of a named preset.
pub fn preset(name: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let p = &mut raw.params;
    p.omega_m = Some(2.0 * PI * 1e7);
    p.mass = Some(1e-15);
    p.delta = Some(5e10);
    p.epsilon = Some(0.0);
    p.omega_c = Some(5e10);
    p.mu = Some(1e7);
    p.gamma_q = Some(1e4);
    p.n0m = Some(2.0);
    p.eta = Some(1.0);
    p.g = Some(2.0 * PI * 2e5);
    p.lambda = Some(2.0 * PI * 1.5e6);
    p.gprime_override = Some(-7.56e5);
    raw.model.initial_nbar = Some(2.0);
    match name {
        "paper-sec6" => {
            p.q_m = Some(2e7);
            p.chi_override = Some(2.56e3);
            raw.model.n_levels = Some(24);
            raw.integrator.t_final = Some(0.02);
            raw.integrator.scheme = Some(SchemeName::Milstein);
            raw.analysis.estimator_window = Some(0.01);
            raw.analysis.hold = Some(1e-3);
        }
        "paper-sec6-scaled" => {
            let k = SCALED_PRESET_FACTOR;
            p.gamma_m = Some(k * 2.0 * PI * 1e7 / 2e7);
            p.chi_override = Some(k * 2.56e3);
            raw.model.n_levels = Some(16);
            raw.integrator.t_final = Some(0.02);
            raw.integrator.scheme = Some(SchemeName::Split);
            raw.integrator.repair_negative = Some(true);
            raw.integrator.diag_every = Some(100);
            raw.integrator.sample_stride = Some(10);
            raw.analysis.estimator_window = Some(1.2e-4);
            raw.analysis.estimator_threshold = Some(0.6);
            raw.analysis.hold = Some(2e-5);
        }
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    }
    Ok(raw)
}

fn require<T: Copy>(v: Option<T>, key: &'static str) -> Result<T, ConfigError> {
    v.ok_or(ConfigError::MissingKey(key))
}

/// Parses TOML text into a raw layer (no preset applied, nothing validated
/// beyond syntax and key names).
pub fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))
}

/// Applies the preset named in `file` (or `flags`), then the file, then the
/// flags, and validates the result.
pub fn resolve(file: &RawConfig, flags: &RawConfig) -> Result<RunConfig, ConfigError> {
    let preset_name = flags.preset.clone().or_else(|| file.preset.clone());
    let base = match &preset_name {
        Some(name) => preset(name)?,
        None => RawConfig::default(),
    };
    let mut merged = base.overlay(file).overlay(flags);
    merged.preset = preset_name;
    from_raw(&merged)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    resolve(&parse_raw(text)?, &RawConfig::default())
}

fn from_raw(raw: &RawConfig) -> Result<RunConfig, ConfigError> {
    let mode = Mode::parse(raw.mode.as_deref().unwrap_or(""))?;
    let rp = &raw.params;
    let damping = match (rp.q_m, rp.gamma_m) {
        (Some(q), None) => Damping::QualityFactor(q),
        (None, Some(g)) => Damping::Rate(g),
        (Some(_), Some(_)) => return Err(invalid("Q_m", "give either Q_m or gamma_m, not both")),
        (None, None) => return Err(ConfigError::MissingKey("Q_m")),
    };
    let bare_needed = rp.chi_override.is_none() || (rp.gprime_override.is_none() && rp.gamma_override.is_none());
    let (g, lambda) = if bare_needed {
        (require(rp.g, "g")?, require(rp.lambda, "lambda")?)
    } else {
        (rp.g.unwrap_or(0.0), rp.lambda.unwrap_or(0.0))
    };
    let params = Params {
        omega_m: require(rp.omega_m, "omega_m")?,
        mass: rp.mass,
        delta: require(rp.delta, "Delta")?,
        epsilon: require(rp.epsilon, "epsilon")?,
        omega_c: require(rp.omega_c, "omega_c")?,
        mu: require(rp.mu, "mu")?,
        damping,
        gamma_q: require(rp.gamma_q, "Gamma_q")?,
        n0m: require(rp.n0m, "n0m")?,
        eta: require(rp.eta, "eta")?,
        g,
        lambda,
        chi_override: rp.chi_override,
        gprime_override: rp.gprime_override,
        gamma_override: rp.gamma_override,
    };
    let rm = &raw.model;
    let model = Model {
        n_levels: rm.n_levels.unwrap_or(24),
        n_cavity: rm.n_cavity.unwrap_or(6),
        theta: rm.theta.unwrap_or(-PI),
        feedback: rm.feedback.unwrap_or(true),
        drift_only: rm.drift_only.unwrap_or(false),
        initial_nbar: rm.initial_nbar.unwrap_or(2.0),
        initial_fock: rm.initial_fock,
        qubit_init: rm.qubit_init.unwrap_or(QubitInit::Ground),
    };
    let ri = &raw.integrator;
    let integrator = Integrator {
        dt: ri.dt,
        t_final: ri.t_final,
        seed: ri.seed.unwrap_or(0),
        renorm_every: ri.renorm_every.unwrap_or(1),
        diag_every: ri.diag_every.unwrap_or(1000),
        sample_stride: ri.sample_stride.unwrap_or(100),
        leakage_bound: ri.leakage_bound,
        scheme: ri.scheme.unwrap_or(SchemeName::Milstein),
        repair_negative: ri.repair_negative.unwrap_or(false),
    };
    let ra = &raw.analysis;
    let analysis = Analysis {
        var_threshold: ra.var_threshold.unwrap_or(0.1),
        hold: ra.hold,
        estimator_window: ra.estimator_window,
        estimator_segments: ra.estimator_segments.unwrap_or(4),
        estimator_threshold: ra.estimator_threshold.unwrap_or(0.8),
        estimator: ra.estimator.unwrap_or(EstimatorName::LockIn),
        debounce: ra.debounce,
        compare_eta: ra.compare_eta,
        write_record: ra.write_record.unwrap_or(true),
    };
    let cfg = RunConfig {
        mode,
        preset: raw.preset.clone(),
        strict: raw.strict.unwrap_or(false),
        params,
        model,
        integrator,
        ensemble: Ensemble { size: raw.ensemble.size.unwrap_or(if mode == Mode::Ensemble { 2 } else { 1 }) },
        analysis,
        output: Output { path: raw.output.path.clone().unwrap_or_else(|| PathBuf::from("out")) },
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pp = self.params.physical();
        pp.validate().map_err(|e| invalid("params", e.to_string()))?;
        let dp = derive_params(&pp).map_err(|e| invalid("params", e.to_string()))?;
        if self.strict && !dp.regime.all_ok() {
            return Err(ConfigError::Regime(format!(
                "adiabatic ratio {} (needs >= 10), dispersive parameter {} (needs <= 0.05)",
                dp.regime.adiabatic_ratio, dp.regime.sw_parameter
            )));
        }
        if self.model.feedback && self.params.eta == 0.0 && !self.model.drift_only && self.mode != Mode::FullModel {
            return Err(invalid("eta", "feedback needs a non-zero detection efficiency"));
        }
        if self.model.n_levels < 2 {
            return Err(invalid("n_levels", "must be at least 2"));
        }
        if self.model.n_cavity < 2 {
            return Err(invalid("n_cavity", "must be at least 2"));
        }
        if !(self.model.initial_nbar >= 0.0 && self.model.initial_nbar.is_finite()) {
            return Err(invalid("initial_nbar", "must be finite and non-negative"));
        }
        if let Some(n) = self.model.initial_fock {
            if n >= self.model.n_levels {
                return Err(invalid("initial_fock", "must be below n_levels"));
            }
        }
        let it = &self.integrator;
        if let Some(dt) = it.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("dt", "must be positive"));
            }
        }
        match it.t_final {
            Some(t) if !(t > 0.0 && t.is_finite()) => return Err(invalid("t_final", "must be positive")),
            None if self.mode != Mode::Validate => return Err(ConfigError::MissingKey("t_final")),
            _ => {}
        }
        if it.sample_stride == 0 {
            return Err(invalid("sample_stride", "must be at least 1"));
        }
        if it.renorm_every == 0 || it.diag_every == 0 {
            return Err(invalid("renorm_every", "cadences must be at least 1"));
        }
        if let Some(b) = it.leakage_bound {
            if !(b > 0.0) {
                return Err(invalid("leakage_bound", "must be positive"));
            }
        }
        if self.mode == Mode::Ensemble && self.ensemble.size < 2 {
            return Err(invalid("size", "an ensemble needs at least two trajectories"));
        }
        if self.ensemble.size == 0 {
            return Err(invalid("size", "must be at least 1"));
        }
        let a = &self.analysis;
        if !(a.var_threshold > 0.0) {
            return Err(invalid("var_threshold", "must be positive"));
        }
        for (key, v) in [("hold", a.hold), ("estimator_window", a.estimator_window), ("debounce", a.debounce)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(key, "must be positive"));
                }
            }
        }
        if a.estimator_segments == 0 {
            return Err(invalid("estimator_segments", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&a.estimator_threshold) {
            return Err(invalid("estimator_threshold", "must lie in [0, 1]"));
        }
        if let Some(e) = a.compare_eta {
            if !(e > 0.0 && e <= 1.0) {
                return Err(invalid("compare_eta", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn to_raw(&self) -> RawConfig {
        let p = &self.params;
        let (q_m, gamma_m) = match p.damping {
            Damping::QualityFactor(q) => (Some(q), None),
            Damping::Rate(r) => (None, Some(r)),
        };
        RawConfig {
            mode: Some(self.mode.as_str().to_string()),
            preset: self.preset.clone(),
            strict: Some(self.strict),
            params: RawParams {
                omega_m: Some(p.omega_m),
                mass: p.mass,
                delta: Some(p.delta),
                epsilon: Some(p.epsilon),
                omega_c: Some(p.omega_c),
                mu: Some(p.mu),
                q_m,
                gamma_m,
                gamma_q: Some(p.gamma_q),
                n0m: Some(p.n0m),
                eta: Some(p.eta),
                g: Some(p.g),
                lambda: Some(p.lambda),
                chi_override: p.chi_override,
                gprime_override: p.gprime_override,
                gamma_override: p.gamma_override,
            },
            model: RawModel {
                n_levels: Some(self.model.n_levels),
                n_cavity: Some(self.model.n_cavity),
                theta: Some(self.model.theta),
                feedback: Some(self.model.feedback),
                drift_only: Some(self.model.drift_only),
                initial_nbar: Some(self.model.initial_nbar),
                initial_fock: self.model.initial_fock,
                qubit_init: Some(self.model.qubit_init),
            },
            integrator: RawIntegrator {
                dt: self.integrator.dt,
                t_final: self.integrator.t_final,
                seed: Some(self.integrator.seed),
                renorm_every: Some(self.integrator.renorm_every),
                diag_every: Some(self.integrator.diag_every),
                sample_stride: Some(self.integrator.sample_stride),
                leakage_bound: self.integrator.leakage_bound,
                scheme: Some(self.integrator.scheme),
                repair_negative: Some(self.integrator.repair_negative),
            },
            ensemble: RawEnsemble { size: Some(self.ensemble.size) },
            analysis: RawAnalysis {
                var_threshold: Some(self.analysis.var_threshold),
                hold: self.analysis.hold,
                estimator_window: self.analysis.estimator_window,
                estimator_segments: Some(self.analysis.estimator_segments),
                estimator_threshold: Some(self.analysis.estimator_threshold),
                estimator: Some(self.analysis.estimator),
                debounce: self.analysis.debounce,
                compare_eta: self.analysis.compare_eta,
                write_record: Some(self.analysis.write_record),
            },
            output: RawOutput { path: Some(self.output.path.clone()) },
        }
    }

    /// TOML text that parses back to `self`.
    pub fn serialize(&self) -> String {
        toml::to_string(&self.to_raw()).expect("configuration is always representable")
    }

    /// Copy with a different detection efficiency.
    pub fn with_eta(&self, eta: f64) -> RunConfig {
        let mut c = self.clone();
        c.params.eta = eta;
        c
    }
}
