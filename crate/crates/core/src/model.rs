//! Circuit-QED readout model: parameter derivation and assembly of the
//! conditional master equations as data.
//!
//! Three variants are assembled:
//!
//! * the full qubit ⊗ resonator ⊗ cavity equation with homodyne detection of
//!   the cavity output ([`build_full_sme`]),
//! * the reduced qubit ⊗ resonator equation after adiabatic elimination of
//!   the cavity ([`build_reduced_sme`] with `feedback = false`),
//! * the reduced equation with Markovian homodyne feedback chosen so that the
//!   measurement becomes a non-dissipative `σy` measurement
//!   ([`build_reduced_sme`] with `feedback = true`).
//!
//! All rates and frequencies are in s⁻¹ (angular frequencies in rad/s); the
//! Hamiltonian is stored divided by ħ.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float as _;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::layout::{SpaceLayout, CAVITY, QUBIT, RESONATOR};
use crate::operator::{annihilation_op, number_op, pauli_ops, Operator, OperatorError};

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Minimum ratio of cavity damping to the slow rates for adiabatic elimination.
pub const ADIABATIC_RATIO_MIN: f64 = 10.0;
/// Largest `λΔ/Ω²` treated as a valid dispersive expansion parameter.
pub const SW_PARAMETER_MAX: f64 = 0.05;
/// Hard limit for `sw_dispersive_check`.
pub const SW_CHECK_PARAMETER_MAX: f64 = 0.1;
/// Largest Hilbert-space dimension accepted by [`build_full_sme`].
pub const FULL_MODEL_MAX_DIM: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` is invalid: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
    #[error("qubit splitting Ω vanishes")]
    ZeroQubitSplitting,
    #[error("cavity damping rate μ vanishes")]
    ZeroCavityDamping,
    #[error("feedback requires a nonzero detection efficiency")]
    FeedbackWithoutDetection,
    #[error("expansion parameter λΔ/Ω² = {0} is too large for the dispersive check")]
    DispersiveParameterTooLarge(f64),
    #[error("full model dimension {dim} exceeds the budget {max}")]
    DimensionBudget { dim: usize, max: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// How mechanical damping is specified.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MechanicalDamping {
    /// Quality factor `Q_m`, giving `γ = ω_m / Q_m`.
    QualityFactor(f64),
    /// Energy damping rate `γ` (s⁻¹).
    Rate(f64),
}

/// Direct effective-parameter overrides. When present they replace the
/// values the bare couplings would produce.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EffectiveOverrides {
    pub chi: Option<f64>,
    pub gprime: Option<f64>,
    pub gamma_meas: Option<f64>,
}

/// Experiment-level parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Cavity angular frequency ω_c (rad/s).
    pub omega_c: f64,
    /// Mechanical angular frequency ω_m (rad/s).
    pub omega_m: f64,
    /// Josephson splitting Δ (rad/s).
    pub josephson: f64,
    /// Charge-bias splitting ε (rad/s).
    pub charge_bias: f64,
    /// Bare qubit–cavity coupling g (rad/s).
    pub g: f64,
    /// Bare qubit–resonator coupling λ (rad/s).
    pub lambda: f64,
    /// Cavity amplitude decay rate μ (s⁻¹).
    pub mu: f64,
    pub damping: MechanicalDamping,
    /// Qubit spontaneous emission Γ_q (s⁻¹).
    pub gamma_q: f64,
    /// Mechanical bath occupation n⁰_m.
    pub n0m: f64,
    /// Detection efficiency η ∈ [0, 1].
    pub eta: f64,
    /// Resonator mass (kg), only needed for the zero-point width.
    pub mass: Option<f64>,
    pub overrides: EffectiveOverrides,
}

fn nonneg(name: &'static str, v: f64) -> Result<(), ModelError> {
    if !v.is_finite() {
        Err(ModelError::InvalidParameter { name, reason: "must be finite" })
    } else if v < 0.0 {
        Err(ModelError::InvalidParameter { name, reason: "must be non-negative" })
    } else {
        Ok(())
    }
}

fn positive(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, reason: "must be positive and finite" })
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        nonneg("omega_c", self.omega_c)?;
        nonneg("omega_m", self.omega_m)?;
        if !self.josephson.is_finite() {
            return Err(ModelError::InvalidParameter { name: "Delta", reason: "must be finite" });
        }
        if !self.charge_bias.is_finite() {
            return Err(ModelError::InvalidParameter { name: "epsilon", reason: "must be finite" });
        }
        if !self.g.is_finite() || !self.lambda.is_finite() {
            return Err(ModelError::InvalidParameter { name: "g/lambda", reason: "must be finite" });
        }
        nonneg("mu", self.mu)?;
        match self.damping {
            MechanicalDamping::QualityFactor(q) => positive("Q_m", q)?,
            MechanicalDamping::Rate(g) => nonneg("gamma", g)?,
        }
        nonneg("Gamma_q", self.gamma_q)?;
        nonneg("n0m", self.n0m)?;
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ModelError::InvalidParameter { name: "eta", reason: "must lie in [0, 1]" });
        }
        if let Some(m) = self.mass {
            positive("mass", m)?;
        }
        if let Some(chi) = self.overrides.chi {
            nonneg("chi_override", chi)?;
        }
        if let Some(gp) = self.overrides.gprime {
            if !gp.is_finite() {
                return Err(ModelError::InvalidParameter { name: "gprime_override", reason: "must be finite" });
            }
        }
        if let Some(gm) = self.overrides.gamma_meas {
            nonneg("Gamma_override", gm)?;
        }
        Ok(())
    }

    pub fn mechanical_damping_rate(&self) -> f64 {
        match self.damping {
            MechanicalDamping::QualityFactor(q) => self.omega_m / q,
            MechanicalDamping::Rate(g) => g,
        }
    }
}

/// Circuit-level inputs for the bare couplings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitParams {
    /// Charging energy E_C (J).
    pub charging_energy: f64,
    /// Dimensionless gate charge from the resonator, n_g^m ∈ [0, 1].
    pub gate_charge: f64,
    /// Capacitance ratio C_g / C_Σ.
    pub capacitance_ratio: f64,
    /// Cavity capacitance per unit length (F/m).
    pub capacitance_per_length: f64,
    /// Cavity length (m).
    pub cavity_length: f64,
    /// Resonator–box separation (m).
    pub separation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitCouplings {
    /// Qubit–cavity coupling g (rad/s).
    pub g: f64,
    /// Qubit–resonator coupling λ (rad/s).
    pub lambda: f64,
    /// Ground-state half-width Δx (m).
    pub zero_point_width: f64,
}

/// `Δx = sqrt(ħ / (2 m ω_m))`
pub fn zero_point_width(mass: f64, omega_m: f64) -> Result<f64, ModelError> {
    positive("mass", mass)?;
    positive("omega_m", omega_m)?;
    Ok((HBAR / (2.0 * mass * omega_m)).sqrt())
}

/// Bare couplings from circuit parameters:
/// `ħg = e (C_g/C_Σ) sqrt(ħω_c / (cL))`, `ħλ = 4 E_C n_g^m Δx / d`.
pub fn couplings_from_circuit(
    cp: &CircuitParams,
    omega_c: f64,
    mass: f64,
    omega_m: f64,
) -> Result<CircuitCouplings, ModelError> {
    positive("E_C", cp.charging_energy)?;
    positive("n_g^m", cp.gate_charge)?;
    if cp.gate_charge > 1.0 {
        return Err(ModelError::InvalidParameter { name: "n_g^m", reason: "must lie in [0, 1]" });
    }
    positive("C_g/C_Sigma", cp.capacitance_ratio)?;
    positive("c", cp.capacitance_per_length)?;
    positive("L", cp.cavity_length)?;
    positive("d", cp.separation)?;
    positive("omega_c", omega_c)?;
    let dx = zero_point_width(mass, omega_m)?;
    let vrms = (HBAR * omega_c / (cp.capacitance_per_length * cp.cavity_length)).sqrt();
    let g = ELEMENTARY_CHARGE * cp.capacitance_ratio * vrms / HBAR;
    let lambda = 4.0 * cp.charging_energy * cp.gate_charge * dx / (cp.separation * HBAR);
    Ok(CircuitCouplings { g, lambda, zero_point_width: dx })
}

/// Regime diagnostics. Failing a condition is a warning, not an error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeCheck {
    /// `μ / max(|δ|, χ, |g′|)`
    pub adiabatic_ratio: f64,
    pub adiabatic_ok: bool,
    /// `λΔ/Ω²`
    pub sw_parameter: f64,
    pub sw_ok: bool,
}

impl RegimeCheck {
    pub fn all_ok(&self) -> bool {
        self.adiabatic_ok && self.sw_ok
    }
}

/// Effective constants of the dispersive qubit–resonator model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedParams {
    /// Ω = sqrt(ε² + Δ²)
    pub qubit_splitting: f64,
    /// δ = (Ω - ω_c)/2
    pub detuning: f64,
    /// g′ = -gΔ/Ω unless overridden
    pub gprime: f64,
    /// χ = 4λ²Δ²/Ω³ unless overridden
    pub chi: f64,
    /// Γ = 4g′²/μ unless overridden
    pub gamma_meas: f64,
    /// γ = ω_m / Q_m (or given directly)
    pub gamma_m: f64,
    /// Δx, when a mass was supplied
    pub zero_point_width: Option<f64>,
    /// s = λΔ/Ω²
    pub sw_parameter: f64,
    pub regime: RegimeCheck,
}

impl DerivedParams {
    /// Amplitude of the charge-bias modulation that realizes `λF = (ηΓ/2)σx`
    /// in the lab frame, `E_fb(t) = (ηΓΩ/Δ) I(t)`, in s⁻¹ per unit current.
    pub fn feedback_drive_gain(&self, pp: &PhysicalParams) -> f64 {
        pp.eta * self.gamma_meas * self.qubit_splitting / pp.josephson
    }
}

pub fn derive_params(pp: &PhysicalParams) -> Result<DerivedParams, ModelError> {
    pp.validate()?;
    let omega = pp.charge_bias.hypot(pp.josephson);
    if omega == 0.0 {
        return Err(ModelError::ZeroQubitSplitting);
    }
    if pp.mu == 0.0 {
        return Err(ModelError::ZeroCavityDamping);
    }
    let detuning = (omega - pp.omega_c) / 2.0;
    let gprime = pp.overrides.gprime.unwrap_or(-pp.g * pp.josephson / omega);
    let chi = pp
        .overrides
        .chi
        .unwrap_or(4.0 * pp.lambda * pp.lambda * pp.josephson * pp.josephson / (omega * omega * omega));
    let gamma_meas = pp.overrides.gamma_meas.unwrap_or(4.0 * gprime * gprime / pp.mu);
    let sw_parameter = (pp.lambda * pp.josephson / (omega * omega)).abs();
    let slow = detuning.abs().max(chi).max(gprime.abs());
    let adiabatic_ratio = if slow == 0.0 { f64::INFINITY } else { pp.mu / slow };
    let zero_point_width = match pp.mass {
        Some(m) if pp.omega_m > 0.0 => Some(zero_point_width(m, pp.omega_m)?),
        _ => None,
    };
    Ok(DerivedParams {
        qubit_splitting: omega,
        detuning,
        gprime,
        chi,
        gamma_meas,
        gamma_m: pp.mechanical_damping_rate(),
        zero_point_width,
        sw_parameter,
        regime: RegimeCheck {
            adiabatic_ratio,
            adiabatic_ok: adiabatic_ratio >= ADIABATIC_RATIO_MIN,
            sw_parameter,
            sw_ok: sw_parameter <= SW_PARAMETER_MAX,
        },
    })
}

/// Numerical dispersive coupling from an explicit unitary conjugation.
///
/// Builds the cavity-free qubit–resonator Hamiltonian
/// `ω_m b†b + (Ω/2)σz + λ(b + b†)((ε/Ω)σz - (Δ/Ω)σx)`, conjugates it by
/// `S = exp[i s σy (b + b†)]` with `s = λΔ/Ω²`, and reads the coefficient of
/// `b†b ⊗ σz` from the `σz`-odd diagonal part between Fock levels 0 and 1,
/// away from the truncation edge.
pub fn sw_dispersive_check(
    lambda: f64,
    josephson: f64,
    charge_bias: f64,
    omega_m: f64,
    n_levels: usize,
) -> Result<f64, ModelError> {
    if n_levels < 6 {
        return Err(ModelError::InvalidParameter { name: "n_levels", reason: "must be at least 6" });
    }
    let omega = charge_bias.hypot(josephson);
    if omega == 0.0 {
        return Err(ModelError::ZeroQubitSplitting);
    }
    let s = lambda * josephson / (omega * omega);
    if !s.is_finite() || s.abs() > SW_CHECK_PARAMETER_MAX {
        return Err(ModelError::DispersiveParameterTooLarge(s));
    }
    let layout = SpaceLayout::qubit_resonator(n_levels)?;
    let p = pauli_ops();
    let b = annihilation_op(n_levels)?;
    let x = &b + &b.adjoint();
    let n = number_op(n_levels)?;
    let qubit_coupling = &p.z.scale_real(charge_bias / omega) - &p.x.scale_real(josephson / omega);
    let h = &(&layout.embed(RESONATOR, &n)?.scale_real(omega_m) + &layout.embed(QUBIT, &p.z)?.scale_real(omega / 2.0))
        + &layout.embed_many(&[(QUBIT, &qubit_coupling), (RESONATOR, &x)])?.scale_real(lambda);
    let generator = layout.embed_many(&[(QUBIT, &p.y), (RESONATOR, &x)])?.scale(Complex64::new(0.0, s));
    let u = generator.expm();
    let transformed = &(&u.adjoint() * &h) * &u;
    let odd = |k: usize| 0.5 * (transformed.get(k, k).re - transformed.get(n_levels + k, n_levels + k).re);
    Ok(odd(1) - odd(0))
}

/// Dissipative channel roles, kept so channels can be located after assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    QubitDecay,
    PhononLoss,
    PhononGain,
    /// The dissipator accompanying the homodyne measurement.
    Measurement,
    /// Extra dephasing from feeding back an inefficiently detected current.
    FeedbackNoise,
    CavityDecay,
    Other,
}

/// `rate · D[op]`
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub kind: ChannelKind,
    pub rate: f64,
    pub op: Operator,
}

impl Channel {
    pub fn new(kind: ChannelKind, rate: f64, op: Operator) -> Self {
        Self { kind, rate, op }
    }

    /// Operator scaled so its largest entry is real and positive. Two channels
    /// with equal rates and equal canonical operators generate the same
    /// dissipator.
    pub fn canonical_op(&self) -> Operator {
        canonical_phase(&self.op)
    }
}

/// `op` multiplied by the unit phase that makes its largest entry real positive.
pub fn canonical_phase(op: &Operator) -> Operator {
    let mut best = Complex64::new(0.0, 0.0);
    for z in op.as_slice() {
        if z.norm() > best.norm() * (1.0 + 1e-9) {
            best = *z;
        }
    }
    if best.norm() == 0.0 {
        return op.clone();
    }
    op.scale(best.conj() / best.norm())
}

/// Homodyne channel contributing `sqrt(efficiency · rate) H[op] dW`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementChannel {
    pub rate: f64,
    pub op: Operator,
    pub efficiency: f64,
}

impl MeasurementChannel {
    /// Prefactor of `H[op]` in the stochastic term.
    pub fn amplitude(&self) -> f64 {
        (self.efficiency * self.rate).sqrt()
    }
}

/// `dr = gain · <observable> dt + noise · dW`
#[derive(Clone, Debug, PartialEq)]
pub struct RecordSpec {
    pub observable: Operator,
    pub gain: f64,
    pub noise: f64,
}

/// A fully assembled stochastic master equation
/// `dρ = -i[H, ρ]dt + Σ rate D[op]ρ dt + sqrt(ηk) H[M]ρ dW`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmeSpec {
    pub layout: SpaceLayout,
    /// Hamiltonian divided by ħ (s⁻¹).
    pub hamiltonian: Operator,
    pub channels: Vec<Channel>,
    pub measurement: Option<MeasurementChannel>,
    pub record: Option<RecordSpec>,
    /// Fastest retained rate (s⁻¹), used for the default step size.
    pub rate_scale: f64,
}

impl SmeSpec {
    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dim = self.dim();
        let check = |op: &Operator| {
            if op.dim() == dim {
                Ok(())
            } else {
                Err(ModelError::Operator(OperatorError::DimensionMismatch { left: dim, right: op.dim() }))
            }
        };
        check(&self.hamiltonian)?;
        for ch in &self.channels {
            check(&ch.op)?;
            nonneg("channel rate", ch.rate)?;
        }
        if let Some(m) = &self.measurement {
            check(&m.op)?;
            nonneg("measurement rate", m.rate)?;
            if !(0.0..=1.0).contains(&m.efficiency) {
                return Err(ModelError::InvalidParameter { name: "efficiency", reason: "must lie in [0, 1]" });
            }
        }
        if let Some(r) = &self.record {
            check(&r.observable)?;
        }
        Ok(())
    }

    pub fn channel(&self, kind: ChannelKind) -> Option<&Channel> {
        self.channels.iter().find(|c| c.kind == kind)
    }

    /// Default integration step: 1/50 of the inverse fastest rate.
    pub fn default_dt(&self) -> f64 {
        1.0 / (50.0 * self.rate_scale)
    }

    /// Fastest dissipative rate `rate · ‖L†L‖`, or the measurement rate if larger.
    pub fn dissipative_rate_scale(&self) -> f64 {
        let strength = |c: &Channel| c.rate * (&c.op.adjoint() * &c.op).norm_inf();
        let scale = self.channels.iter().map(strength).fold(0.0, f64::max);
        match &self.measurement {
            Some(m) => scale.max(m.rate),
            None => scale,
        }
    }

    /// Default step when the Hamiltonian is propagated exactly.
    pub fn default_split_dt(&self) -> f64 {
        let scale = self.dissipative_rate_scale();
        if scale > 0.0 {
            1.0 / (50.0 * scale)
        } else {
            self.default_dt()
        }
    }

    /// SHA-256 over every number that defines the equation.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for f in self.layout.factors() {
            h.update(f.label.as_bytes());
            h.update((f.dim as u64).to_le_bytes());
        }
        let op_bytes = |h: &mut Sha256, op: &Operator| {
            for z in op.as_slice() {
                h.update(z.re.to_bits().to_le_bytes());
                h.update(z.im.to_bits().to_le_bytes());
            }
        };
        op_bytes(&mut h, &self.hamiltonian);
        for ch in &self.channels {
            h.update([ch.kind as u8]);
            h.update(ch.rate.to_bits().to_le_bytes());
            op_bytes(&mut h, &ch.op);
        }
        if let Some(m) = &self.measurement {
            h.update(b"meas");
            h.update(m.rate.to_bits().to_le_bytes());
            h.update(m.efficiency.to_bits().to_le_bytes());
            op_bytes(&mut h, &m.op);
        }
        if let Some(r) = &self.record {
            h.update(b"record");
            h.update(r.gain.to_bits().to_le_bytes());
            h.update(r.noise.to_bits().to_le_bytes());
            op_bytes(&mut h, &r.observable);
        }
        h.finalize().into()
    }
}

fn push_channel(channels: &mut Vec<Channel>, kind: ChannelKind, rate: f64, op: Operator) {
    if rate != 0.0 {
        channels.push(Channel::new(kind, rate, op));
    }
}

/// Reduced qubit ⊗ resonator equation.
///
/// `feedback = false`: measurement of `iσ-` (local-oscillator phase θ = -π)
/// with its dissipator `Γ D[σ-]`. `feedback = true`: the current is fed back
/// through `λF = (ηΓ/2)σx`, turning the measurement into `sqrt(ηΓ) H[σy/2]`
/// with channels `Γ D[σ- - (η/2)σx]` and `(1-η)(Γη/4) D[σx]`. Zero-rate
/// channels are omitted.
pub fn build_reduced_sme(
    dp: &DerivedParams,
    pp: &PhysicalParams,
    feedback: bool,
    n_levels: usize,
) -> Result<SmeSpec, ModelError> {
    if n_levels < 2 {
        return Err(ModelError::InvalidParameter { name: "n_levels", reason: "must be at least 2" });
    }
    pp.validate()?;
    let eta = pp.eta;
    if feedback && eta == 0.0 {
        return Err(ModelError::FeedbackWithoutDetection);
    }
    let layout = SpaceLayout::qubit_resonator(n_levels)?;
    let p = pauli_ops();
    let b = annihilation_op(n_levels)?;
    let n = number_op(n_levels)?;

    let level_shift = &Operator::identity(n_levels).scale_real(dp.detuning) + &n.scale_real(dp.chi);
    let hamiltonian = layout.embed_many(&[(QUBIT, &p.z), (RESONATOR, &level_shift)])?;

    let gamma = dp.gamma_m;
    let sigma_minus = layout.embed(QUBIT, &p.minus)?;
    let mut channels = Vec::new();
    push_channel(&mut channels, ChannelKind::QubitDecay, pp.gamma_q, sigma_minus.clone());
    push_channel(&mut channels, ChannelKind::PhononLoss, gamma * (pp.n0m + 1.0), layout.embed(RESONATOR, &b)?);
    push_channel(&mut channels, ChannelKind::PhononGain, gamma * pp.n0m, layout.embed(RESONATOR, &b.adjoint())?);

    let measurement = if feedback {
        let shifted = &p.minus - &p.x.scale_real(eta / 2.0);
        push_channel(&mut channels, ChannelKind::Measurement, dp.gamma_meas, layout.embed(QUBIT, &shifted)?);
        push_channel(
            &mut channels,
            ChannelKind::FeedbackNoise,
            (1.0 - eta) * dp.gamma_meas * eta / 4.0,
            layout.embed(QUBIT, &p.x)?,
        );
        MeasurementChannel { rate: dp.gamma_meas, op: layout.embed(QUBIT, &p.y.scale_real(0.5))?, efficiency: eta }
    } else {
        push_channel(&mut channels, ChannelKind::Measurement, dp.gamma_meas, sigma_minus.clone());
        // θ = -π: σ- e^{-i(θ + π/2)} = iσ-
        MeasurementChannel { rate: dp.gamma_meas, op: sigma_minus.scale(Complex64::new(0.0, 1.0)), efficiency: eta }
    };

    let record = (eta > 0.0).then(|| -> Result<RecordSpec, ModelError> {
        Ok(RecordSpec {
            observable: layout.embed(QUBIT, &p.y)?,
            gain: (dp.gamma_meas / pp.mu).sqrt(),
            noise: 1.0 / (eta * pp.mu).sqrt(),
        })
    });
    let record = record.transpose()?;

    let rate_scale = [
        dp.gamma_meas,
        dp.detuning.abs() + dp.chi * n_levels as f64,
        pp.gamma_q,
        gamma * (2.0 * pp.n0m + 1.0) * n_levels as f64,
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let spec = SmeSpec { layout, hamiltonian, channels, measurement: Some(measurement), record, rate_scale };
    spec.validate()?;
    Ok(spec)
}

/// Options for the three-mode model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullModelOptions {
    pub n_levels: usize,
    pub n_cavity: usize,
    /// Local-oscillator phase θ (rad).
    pub theta: f64,
}

impl FullModelOptions {
    pub fn new(n_levels: usize, n_cavity: usize) -> Self {
        Self { n_levels, n_cavity, theta: -PI }
    }
}

/// Full qubit ⊗ resonator ⊗ cavity equation with Jaynes–Cummings coupling
/// `g′(aσ+ + a†σ-)` and homodyne detection of `a e^{-iθ}`.
pub fn build_full_sme(dp: &DerivedParams, pp: &PhysicalParams, opts: FullModelOptions) -> Result<SmeSpec, ModelError> {
    if opts.n_levels < 2 {
        return Err(ModelError::InvalidParameter { name: "n_levels", reason: "must be at least 2" });
    }
    if opts.n_cavity < 2 {
        return Err(ModelError::InvalidParameter { name: "n_cavity", reason: "must be at least 2" });
    }
    if !opts.theta.is_finite() {
        return Err(ModelError::InvalidParameter { name: "theta", reason: "must be finite" });
    }
    pp.validate()?;
    let dim = 2 * opts.n_levels * opts.n_cavity;
    if dim > FULL_MODEL_MAX_DIM {
        return Err(ModelError::DimensionBudget { dim, max: FULL_MODEL_MAX_DIM });
    }
    let layout = SpaceLayout::new(&[(QUBIT, 2), (RESONATOR, opts.n_levels), (CAVITY, opts.n_cavity)])?;
    let p = pauli_ops();
    let b = annihilation_op(opts.n_levels)?;
    let a = annihilation_op(opts.n_cavity)?;
    let n = number_op(opts.n_levels)?;

    let level_shift = &Operator::identity(opts.n_levels).scale_real(dp.detuning) + &n.scale_real(dp.chi);
    let dispersive = layout.embed_many(&[(QUBIT, &p.z), (RESONATOR, &level_shift)])?;
    let jc = &layout.embed_many(&[(QUBIT, &p.plus), (CAVITY, &a)])?
        + &layout.embed_many(&[(QUBIT, &p.minus), (CAVITY, &a.adjoint())])?;
    let hamiltonian = &dispersive + &jc.scale_real(dp.gprime);

    let gamma = dp.gamma_m;
    let a_full = layout.embed(CAVITY, &a)?;
    let mut channels = Vec::new();
    push_channel(&mut channels, ChannelKind::PhononLoss, gamma * (pp.n0m + 1.0), layout.embed(RESONATOR, &b)?);
    push_channel(&mut channels, ChannelKind::PhononGain, gamma * pp.n0m, layout.embed(RESONATOR, &b.adjoint())?);
    push_channel(&mut channels, ChannelKind::CavityDecay, pp.mu, a_full.clone());
    push_channel(&mut channels, ChannelKind::QubitDecay, pp.gamma_q, layout.embed(QUBIT, &p.minus)?);

    let phase = Complex64::from_polar(1.0, -opts.theta);
    let meas_op = a_full.scale(phase);
    let observable = &meas_op + &meas_op.adjoint();
    let measurement = MeasurementChannel { rate: pp.mu, op: meas_op, efficiency: pp.eta };
    let record = (pp.eta > 0.0).then(|| RecordSpec { observable, gain: 1.0, noise: 1.0 / (pp.eta * pp.mu).sqrt() });

    let rate_scale = [
        pp.mu,
        dp.gamma_meas,
        dp.detuning.abs() + dp.chi * opts.n_levels as f64,
        dp.gprime.abs() * (opts.n_cavity as f64).sqrt(),
        pp.gamma_q,
        gamma * (2.0 * pp.n0m + 1.0) * opts.n_levels as f64,
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let spec = SmeSpec { layout, hamiltonian, channels, measurement: Some(measurement), record, rate_scale };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn paper_params() -> PhysicalParams {
        PhysicalParams {
            omega_c: 5e10,
            omega_m: 2.0 * PI * 1e7,
            josephson: 5e10,
            charge_bias: 0.0,
            g: 2.0 * PI * 2e5,
            lambda: 2.0 * PI * 1.5e6,
            mu: 1e7,
            damping: MechanicalDamping::QualityFactor(2e7),
            gamma_q: 1e4,
            n0m: 2.0,
            eta: 1.0,
            mass: Some(1e-15),
            overrides: EffectiveOverrides { chi: Some(2.56e3), gprime: Some(-7.56e5), gamma_meas: None },
        }
    }

    #[test]
    fn zero_point_width_of_paper_resonator() {
        let dx = zero_point_width(1e-15, 2.0 * PI * 1e7).unwrap();
        assert!((dx - 29e-15).abs() / 29e-15 < 0.02, "{dx}");
    }

    #[test]
    fn resonant_qubit_has_zero_detuning() {
        let dp = derive_params(&paper_params()).unwrap();
        assert_eq!(dp.qubit_splitting, 5e10);
        assert_eq!(dp.detuning, 0.0);
    }

    #[test]
    fn measurement_rate_from_quoted_gprime() {
        let dp = derive_params(&paper_params()).unwrap();
        assert!((dp.gamma_meas - 2.286e5).abs() / 2.286e5 < 0.01);
        assert!((dp.gamma_meas - 2.29e5).abs() / 2.29e5 < 0.01);
    }

    #[test]
    fn chi_formula_at_zero_bias() {
        let mut pp = paper_params();
        pp.overrides = EffectiveOverrides::default();
        pp.lambda = 1e6;
        let dp = derive_params(&pp).unwrap();
        assert!((dp.chi - 80.0).abs() < 1e-9);
    }

    #[test]
    fn bare_paper_couplings_do_not_reproduce_quoted_values() {
        let mut pp = paper_params();
        pp.overrides = EffectiveOverrides::default();
        let dp = derive_params(&pp).unwrap();
        assert!((dp.chi - 7.106e3).abs() < 5.0);
        assert!((dp.gprime + 1.2566e6).abs() < 1e2);
    }

    #[test]
    fn derive_rejects_degenerate_inputs() {
        let mut pp = paper_params();
        pp.josephson = 0.0;
        assert_eq!(derive_params(&pp), Err(ModelError::ZeroQubitSplitting));
        let mut pp = paper_params();
        pp.mu = 0.0;
        assert_eq!(derive_params(&pp), Err(ModelError::ZeroCavityDamping));
        let mut pp = paper_params();
        pp.eta = 1.5;
        assert!(matches!(derive_params(&pp), Err(ModelError::InvalidParameter { name: "eta", .. })));
    }

    #[test]
    fn regime_flags() {
        let dp = derive_params(&paper_params()).unwrap();
        assert!(dp.regime.sw_ok);
        assert!((dp.regime.adiabatic_ratio - 1e7 / 7.56e5).abs() < 1e-9);
        assert!(dp.regime.adiabatic_ok);
        let mut pp = paper_params();
        pp.mu = 1e6;
        assert!(!derive_params(&pp).unwrap().regime.adiabatic_ok);
    }

    #[test]
    fn derived_params_scale_linearly() {
        let mut pp = paper_params();
        pp.overrides = EffectiveOverrides::default();
        pp.charge_bias = 1e10;
        pp.damping = MechanicalDamping::Rate(3.0);
        let base = derive_params(&pp).unwrap();
        let k = 3.7;
        let mut scaled = pp.clone();
        for v in [
            &mut scaled.omega_c,
            &mut scaled.omega_m,
            &mut scaled.josephson,
            &mut scaled.charge_bias,
            &mut scaled.g,
            &mut scaled.lambda,
            &mut scaled.mu,
            &mut scaled.gamma_q,
        ] {
            *v *= k;
        }
        scaled.damping = MechanicalDamping::Rate(3.0 * k);
        let d = derive_params(&scaled).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(d.qubit_splitting, k * base.qubit_splitting) < 1e-14);
        assert!(rel(d.detuning, k * base.detuning) < 1e-12);
        assert!(rel(d.gprime, k * base.gprime) < 1e-14);
        assert!(rel(d.chi, k * base.chi) < 1e-13);
        assert!(rel(d.gamma_meas, k * base.gamma_meas) < 1e-13);
        assert!(rel(d.gamma_m, k * base.gamma_m) < 1e-14);
        assert!(rel(d.sw_parameter, base.sw_parameter) < 1e-14);
    }

    #[test]
    fn gprime_sign_follows_coupling() {
        let mut pp = paper_params();
        pp.overrides = EffectiveOverrides::default();
        assert!(derive_params(&pp).unwrap().gprime < 0.0);
        pp.g = -pp.g;
        assert!(derive_params(&pp).unwrap().gprime > 0.0);
    }

    #[test]
    fn circuit_couplings() {
        let cp = CircuitParams {
            charging_energy: 1e-23,
            gate_charge: 0.5,
            capacitance_ratio: 0.01,
            capacitance_per_length: 1.6e-10,
            cavity_length: 0.01,
            separation: 1e-7,
        };
        let c = couplings_from_circuit(&cp, 5e10, 1e-15, 2.0 * PI * 1e7).unwrap();
        // Frozen from an independent unit-tracked evaluation (eV and GHz units).
        assert!((c.g - 2.758_019_4e7).abs() / 2.758e7 < 1e-6, "{}", c.g);
        let far = CircuitParams { separation: 2e-7, ..cp };
        let c2 = couplings_from_circuit(&far, 5e10, 1e-15, 2.0 * PI * 1e7).unwrap();
        assert!((c2.lambda - c.lambda / 2.0).abs() / c.lambda < 1e-14);
        assert!(couplings_from_circuit(&CircuitParams { separation: 0.0, ..cp }, 5e10, 1e-15, 1.0).is_err());
    }

    #[test]
    fn dispersive_check_without_coupling() {
        assert_eq!(sw_dispersive_check(0.0, 5e10, 0.0, 2.0 * PI * 1e7, 10).unwrap(), 0.0);
    }

    #[test]
    fn dispersive_check_matches_independent_conjugation() {
        // Values frozen from an independent dense expm conjugation (scipy).
        let cases = [(5e8, 9_994_000.999_912_262), (2.5e8, 2_499_625.015_628_814_7), (1.25e8, 624_976.562_744_140_6)];
        for (lambda, expected) in cases {
            let chi = sw_dispersive_check(lambda, 5e10, 0.0, 2.0 * PI * 1e7, 10).unwrap();
            assert!((chi - expected).abs() / expected < 1e-7, "{lambda}: {chi} vs {expected}");
        }
    }

    #[test]
    fn dispersive_residual_is_quartic() {
        // Against the second-order Schrieffer–Wolff coefficient 2λ²Δ²/Ω³.
        let omega = 5e10;
        let residual = |l: f64| {
            (sw_dispersive_check(l, omega, 0.0, 2.0 * PI * 1e7, 10).unwrap() - 2.0 * l * l / omega).abs()
        };
        let ratio = residual(5e8) / residual(2.5e8);
        assert!((ratio - 16.0).abs() < 16.0 * 0.3, "{ratio}");
    }

    #[test]
    fn dispersive_check_rejects_strong_coupling() {
        assert!(matches!(
            sw_dispersive_check(1e10, 5e10, 0.0, 1e7, 10),
            Err(ModelError::DispersiveParameterTooLarge(_))
        ));
        assert!(sw_dispersive_check(1e8, 5e10, 0.0, 1e7, 4).is_err());
    }

    #[test]
    fn reduced_feedback_channels() {
        let pp = PhysicalParams { eta: 0.6, ..paper_params() };
        let dp = derive_params(&pp).unwrap();
        let spec = build_reduced_sme(&dp, &pp, true, 5).unwrap();
        assert_eq!(spec.dim(), 10);
        let kinds: Vec<ChannelKind> = spec.channels.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            [
                ChannelKind::QubitDecay,
                ChannelKind::PhononLoss,
                ChannelKind::PhononGain,
                ChannelKind::Measurement,
                ChannelKind::FeedbackNoise
            ]
        );
        let noise = spec.channel(ChannelKind::FeedbackNoise).unwrap();
        assert!((noise.rate - 0.4 * dp.gamma_meas * 0.6 / 4.0).abs() < 1e-9);
        let rec = spec.record.as_ref().unwrap();
        assert!((rec.gain - (dp.gamma_meas / 1e7).sqrt()).abs() < 1e-15);
        assert!((rec.noise - 1.0 / (0.6f64 * 1e7).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unit_efficiency_has_no_feedback_dephasing() {
        let pp = paper_params();
        let dp = derive_params(&pp).unwrap();
        let spec = build_reduced_sme(&dp, &pp, true, 5).unwrap();
        assert!(spec.channel(ChannelKind::FeedbackNoise).is_none());
    }

    #[test]
    fn feedback_requires_detection() {
        let pp = PhysicalParams { eta: 0.0, ..paper_params() };
        let dp = derive_params(&pp).unwrap();
        assert_eq!(build_reduced_sme(&dp, &pp, true, 5), Err(ModelError::FeedbackWithoutDetection));
        assert!(build_reduced_sme(&dp, &pp, false, 5).unwrap().record.is_none());
    }

    #[test]
    fn reduced_hamiltonian_is_dispersive() {
        let pp = PhysicalParams { overrides: EffectiveOverrides { chi: Some(3.0), ..paper_params().overrides }, ..paper_params() };
        let dp = derive_params(&pp).unwrap();
        let spec = build_reduced_sme(&dp, &pp, false, 4).unwrap();
        // |e,2> and |g,2>
        assert_eq!(spec.hamiltonian.get(2, 2).re, 6.0);
        assert_eq!(spec.hamiltonian.get(6, 6).re, -6.0);
        assert_eq!(spec.hamiltonian.hermiticity_deviation(), 0.0);
    }

    #[test]
    fn full_model_layout_and_budget() {
        let pp = paper_params();
        let dp = derive_params(&pp).unwrap();
        let spec = build_full_sme(&dp, &pp, FullModelOptions::new(4, 3)).unwrap();
        assert_eq!(spec.dim(), 24);
        assert_eq!(spec.layout.dim_of(CAVITY), Some(3));
        assert!(spec.channel(ChannelKind::CavityDecay).is_some());
        assert!(matches!(
            build_full_sme(&dp, &pp, FullModelOptions::new(40, 40)),
            Err(ModelError::DimensionBudget { .. })
        ));
        assert!(build_full_sme(&dp, &pp, FullModelOptions::new(4, 1)).is_err());
    }

    #[test]
    fn canonical_phase_removes_global_phase() {
        let p = pauli_ops();
        let a = canonical_phase(&p.minus.scale(Complex64::new(0.0, 1.0)));
        assert!(a.max_abs_diff(&p.minus).unwrap() < 1e-15);
    }

    #[test]
    fn digest_tracks_parameters() {
        let pp = paper_params();
        let dp = derive_params(&pp).unwrap();
        let a = build_reduced_sme(&dp, &pp, true, 4).unwrap();
        let pp2 = PhysicalParams { eta: 0.9, ..paper_params() };
        let b = build_reduced_sme(&derive_params(&pp2).unwrap(), &pp2, true, 4).unwrap();
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
