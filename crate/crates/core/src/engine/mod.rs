//! Stochastic master equation integration.
//!
//! Conditional trajectories use an explicit strong-order-1 Milstein scheme
//! for the single-noise equation `dρ = A(ρ)dt + B(ρ)dW`:
//!
//! ```text
//! ρ' = ρ + A(ρ)dt + B(ρ)ΔW + ½ B′[ρ; B(ρ)](ΔW² - dt)
//! ```
//!
//! where `B(ρ) = c (Mρ + ρM† - tr((M + M†)ρ) ρ)` and the directional
//! derivative is taken analytically,
//! `B′[ρ; h] = c (Mh + hM† - tr((M + M†)h) ρ - tr((M + M†)ρ) h)`.
//! Unconditional (ensemble-mean) evolution drops the noise and uses RK4.

mod convergence;
mod feedback;
pub(crate) mod kernel;
mod trajectory;
mod unconditional;

use core::fmt;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float as _;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ModelError, SmeSpec};
use crate::operator::{Operator, OperatorError};
use crate::state::DensityMatrix;
use crate::superop::{dissipator, meas_superop};

pub use convergence::{strong_convergence, ConvergenceStudy};
pub use feedback::{assemble_feedback_me, FeedbackTerms};
pub use trajectory::{run_trajectory, Diagnostics, Observables, StepOutcome, Trajectory, TrajectoryRecord};
pub use unconditional::{run_unconditional, UnconditionalRun};

/// Default bound above which truncation leakage is flagged.
pub const LEAKAGE_FLAG: f64 = 1e-3;
/// Eigenvalues below this count as a positivity violation.
pub const POSITIVITY_TOL: f64 = 1e-6;
/// Trace drift tolerated by the unconditional integrator.
pub const UNCONDITIONAL_TRACE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("non-finite state at step {step} of trajectory {trajectory}")]
    NonFinite { trajectory: u64, step: u64 },
    #[error("truncation leakage {leakage:e} exceeds {bound:e} at step {step} of trajectory {trajectory}")]
    Leakage { trajectory: u64, step: u64, leakage: f64, bound: f64 },
    #[error("trace drift {drift:e} at step {step}: step size too large")]
    TraceDrift { step: u64, drift: f64 },
    #[error("invalid integrator configuration: {0}")]
    Config(&'static str),
    #[error("feedback terms do not match the base equation: {0}")]
    FeedbackMismatch(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Time-stepping scheme for conditional trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Milstein on the full drift.
    #[default]
    Milstein,
    /// `ρ → UρU†` with `U = exp(-iH dt)` followed by a Milstein step of the
    /// remaining equation. Removes the step-size limit set by the Hamiltonian
    /// frequencies while keeping strong order 1.
    SplitHamiltonian,
}

/// Step-size, horizon, seeding and diagnostic cadence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// Step (s).
    pub dt: f64,
    /// Horizon (s).
    pub t_final: f64,
    pub seed: u64,
    /// Index of the trajectory within an ensemble; selects the RNG stream.
    pub trajectory: u64,
    /// Steps between trace renormalizations.
    pub renorm_every: u64,
    /// Steps between positivity/leakage diagnostics.
    pub diag_every: u64,
    /// Steps between stored observable samples.
    pub sample_every: u64,
    /// Abort when truncation leakage exceeds this.
    pub leakage_abort: Option<f64>,
    /// Clip negative eigenvalues when a diagnostic finds one below `-POSITIVITY_TOL`.
    pub repair_negative: bool,
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64, seed: u64) -> Self {
        Self {
            dt,
            t_final,
            seed,
            trajectory: 0,
            renorm_every: 1,
            diag_every: 1000,
            sample_every: 100,
            leakage_abort: None,
            repair_negative: false,
            scheme: Scheme::Milstein,
        }
    }

    /// Step size from the spec's fastest rate.
    pub fn with_default_dt(spec: &SmeSpec, t_final: f64, seed: u64) -> Self {
        Self::new(spec.default_dt(), t_final, seed)
    }

    /// Split scheme with the step set by the fastest dissipative rate only.
    pub fn split_with_default_dt(spec: &SmeSpec, t_final: f64, seed: u64) -> Self {
        Self { scheme: Scheme::SplitHamiltonian, ..Self::new(spec.default_split_dt(), t_final, seed) }
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(IntegratorError::Config("dt must be positive"));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(IntegratorError::Config("t_final must be at least dt"));
        }
        if self.renorm_every == 0 || self.diag_every == 0 || self.sample_every == 0 {
            return Err(IntegratorError::Config("cadences must be at least 1"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_final / self.dt).round() as u64
    }
}

/// Hash identifying the equation and integrator settings (seed excluded), so
/// trajectories that differ only in their noise realization share it.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(spec: &SmeSpec, cfg: &IntegratorConfig) -> Self {
        let mut h = Sha256::new();
        h.update(spec.digest());
        for x in [cfg.dt, cfg.t_final] {
            h.update(x.to_bits().to_le_bytes());
        }
        for x in [cfg.renorm_every, cfg.diag_every, cfg.sample_every] {
            h.update(x.to_le_bytes());
        }
        h.update([cfg.scheme as u8]);
        Self(h.finalize().into())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..16] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({self})")
    }
}

fn check_dim(spec: &SmeSpec, rho: &Operator) -> Result<(), IntegratorError> {
    if spec.dim() == rho.dim() {
        Ok(())
    } else {
        Err(OperatorError::DimensionMismatch { left: spec.dim(), right: rho.dim() }.into())
    }
}

/// `A(ρ) = -i[H, ρ] + Σ rate D[op]ρ`, dense reference evaluation.
pub fn drift(spec: &SmeSpec, rho: &DensityMatrix) -> Result<Operator, IntegratorError> {
    let rho = rho.operator();
    check_dim(spec, rho)?;
    let mut out = spec.hamiltonian.commutator(rho)?.scale(Complex64::new(0.0, -1.0));
    for ch in &spec.channels {
        out = &out + &dissipator(&ch.op, rho)?.scale_real(ch.rate);
    }
    Ok(out)
}

/// `B(ρ) = sqrt(η k) H[M]ρ`, dense reference evaluation.
pub fn diffusion(spec: &SmeSpec, rho: &DensityMatrix) -> Result<Operator, IntegratorError> {
    let rho = rho.operator();
    check_dim(spec, rho)?;
    match &spec.measurement {
        Some(m) => Ok(meas_superop(&m.op, rho)?.scale_real(m.amplitude())),
        None => Ok(Operator::zeros(rho.dim())),
    }
}

/// `B′[ρ; h]`, dense reference evaluation.
pub fn diffusion_derivative(spec: &SmeSpec, rho: &DensityMatrix, h: &Operator) -> Result<Operator, IntegratorError> {
    let rho = rho.operator();
    check_dim(spec, rho)?;
    let Some(m) = &spec.measurement else {
        return Ok(Operator::zeros(rho.dim()));
    };
    let sum = |x: &Operator| &(&m.op * x) + &(x * &m.op.adjoint());
    let sh = sum(h);
    let t_h = sh.trace();
    let t_rho = sum(rho).trace();
    let out = &(&sh - &rho.scale(t_h)) - &h.scale(t_rho);
    Ok(out.scale_real(m.amplitude()))
}

/// One Milstein step followed by Hermitization and renormalization.
pub fn milstein_step(spec: &SmeSpec, rho: &DensityMatrix, dt: f64, dw: f64) -> Result<DensityMatrix, IntegratorError> {
    if !(dt > 0.0) || !dw.is_finite() {
        return Err(IntegratorError::Config("dt must be positive and dW finite"));
    }
    let a = drift(spec, rho)?;
    let b = diffusion(spec, rho)?;
    let bp = diffusion_derivative(spec, rho, &b)?;
    let next = &(&(rho.operator() + &a.scale_real(dt)) + &b.scale_real(dw)) + &bp.scale_real(0.5 * (dw * dw - dt));
    if next.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(IntegratorError::NonFinite { trajectory: 0, step: 0 });
    }
    Ok(DensityMatrix::new(next)?)
}

/// `dr = gain <O> dt + noise dW` using the same `dW` as the state update.
pub fn record_increment(spec: &SmeSpec, rho: &DensityMatrix, dt: f64, dw: f64) -> Result<Option<f64>, IntegratorError> {
    check_dim(spec, rho.operator())?;
    match &spec.record {
        Some(r) => Ok(Some(r.gain * rho.expectation(&r.observable)?.re * dt + r.noise * dw)),
        None => Ok(None),
    }
}
