//! Markovian current feedback folded into the master equation.

use num_complex::Complex64;

use super::IntegratorError;
use crate::model::{Channel, ChannelKind, MeasurementChannel, SmeSpec};
use crate::operator::Operator;

/// Homodyne feedback of the current `J = sqrt(ηk)<c + c†> + ξ` through the
/// Hamiltonian `J λ F / (η k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackTerms {
    /// Measurement rate.
    pub k: f64,
    /// Measured operator, including the local-oscillator phase.
    pub c: Operator,
    /// Hermitian feedback operator.
    pub f: Operator,
    pub lambda: f64,
    pub eta: f64,
}

const MATCH_TOL: f64 = 1e-12;

/// Folds the feedback into `base`, which must measure `terms.c` at rate
/// `terms.k` and carry a `Measurement` channel proportional to `c`.
///
/// The result has Hamiltonian `H + (λ/2)(c†F + Fc)`, measurement channel
/// `k D[L - i(λ/k)e^{iφ}F]` where `L = e^{iφ}c`, an extra
/// `(λ²/k)(1-η)/η D[F]`, and stochastic term `sqrt(ηk) H[c - iλF/(ηk)]`.
/// With `λ = 0` the base equation is returned unchanged.
pub fn assemble_feedback_me(base: &SmeSpec, terms: &FeedbackTerms) -> Result<SmeSpec, IntegratorError> {
    let FeedbackTerms { k, c, f, lambda, eta } = terms;
    let (k, lambda, eta) = (*k, *lambda, *eta);
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(IntegratorError::FeedbackMismatch("feedback needs a detection efficiency in (0, 1]"));
    }
    if !(k > 0.0) || !k.is_finite() || !lambda.is_finite() {
        return Err(IntegratorError::FeedbackMismatch("rate must be positive and gain finite"));
    }
    let d = base.dim();
    if c.dim() != d || f.dim() != d {
        return Err(IntegratorError::FeedbackMismatch("operator dimensions differ from the base equation"));
    }
    if !f.is_hermitian(MATCH_TOL * f.max_abs().max(1.0)) {
        return Err(IntegratorError::FeedbackMismatch("feedback operator is not Hermitian"));
    }
    let meas = base.measurement.as_ref().ok_or(IntegratorError::FeedbackMismatch("base equation has no measurement"))?;
    let scale = c.max_abs().max(1.0);
    if meas.rate != k || meas.efficiency != eta || meas.op.max_abs_diff(c)? > MATCH_TOL * scale {
        return Err(IntegratorError::FeedbackMismatch("base measurement differs from the feedback terms"));
    }
    let idx = base
        .channels
        .iter()
        .position(|ch| ch.kind == ChannelKind::Measurement)
        .ok_or(IntegratorError::FeedbackMismatch("base equation has no measurement channel"))?;
    let l_base = &base.channels[idx].op;
    let phase = relative_phase(l_base, c)?;

    let mut spec = base.clone();
    let i = Complex64::new(0.0, 1.0);
    let cd = c.adjoint();
    let h_fb = (&(&cd * f) + &(f * c)).scale_real(lambda / 2.0);
    spec.hamiltonian = &spec.hamiltonian + &h_fb;
    spec.channels[idx].op = l_base - &f.scale(i * phase * (lambda / k));
    let noise_rate = lambda * lambda / k * (1.0 - eta) / eta;
    if noise_rate != 0.0 {
        spec.channels.push(Channel::new(ChannelKind::FeedbackNoise, noise_rate, f.clone()));
    }
    spec.measurement = Some(MeasurementChannel { rate: k, op: c - &f.scale(i * (lambda / (eta * k))), efficiency: eta });
    spec.rate_scale = spec.rate_scale.max(noise_rate).max(lambda.abs());
    spec.validate()?;
    Ok(spec)
}

/// Unit `e^{iφ}` with `l = e^{iφ} c`.
fn relative_phase(l: &Operator, c: &Operator) -> Result<Complex64, IntegratorError> {
    let (mut best, mut at) = (0.0, 0);
    for (n, z) in c.as_slice().iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            at = n;
        }
    }
    if best == 0.0 {
        return Err(IntegratorError::FeedbackMismatch("measured operator vanishes"));
    }
    let phase = l.as_slice()[at] / c.as_slice()[at];
    if (phase.norm() - 1.0).abs() > 1e-9 || l.max_abs_diff(&c.scale(phase))? > MATCH_TOL * best.max(1.0) {
        return Err(IntegratorError::FeedbackMismatch("measurement channel is not a phase multiple of the measured operator"));
    }
    Ok(phase)
}
