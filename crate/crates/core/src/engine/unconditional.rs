//! Ensemble-mean evolution: the drift alone, integrated with classical RK4.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::kernel::{CompiledSme, Scratch};
use super::trajectory::{Observables, Probes};
use super::{IntegratorConfig, IntegratorError, UNCONDITIONAL_TRACE_TOL};
use crate::model::SmeSpec;
use crate::operator::{Operator, ZERO};
use crate::state::DensityMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct UnconditionalRun {
    pub times: Vec<f64>,
    pub observables: Vec<Observables>,
    /// States at the sample times, kept only when requested.
    pub states: Vec<DensityMatrix>,
    pub final_state: DensityMatrix,
    /// Largest `|tr ρ - 1|` seen; the trace is never renormalized.
    pub max_trace_dev: f64,
}

/// Integrates `dρ/dt = A(ρ)` to `cfg.t_final`, sampling every
/// `cfg.sample_every` steps. Fails once the trace drifts by more than 1e-6.
pub fn run_unconditional(
    spec: &SmeSpec,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    keep_states: bool,
) -> Result<UnconditionalRun, IntegratorError> {
    cfg.validate()?;
    spec.validate()?;
    super::check_dim(spec, rho0.operator())?;
    let kernel = CompiledSme::new(spec);
    let probes = Probes::new(&spec.layout);
    let d = kernel.dim;
    let dt = cfg.dt;
    let mut rho = rho0.operator().as_slice().to_vec();
    let mut s = Scratch::new(d);
    let mut k = [vec![ZERO; d * d], vec![ZERO; d * d], vec![ZERO; d * d], vec![ZERO; d * d]];
    let mut stage = vec![ZERO; d * d];

    let snapshot = |rho: &[Complex64]| {
        let mut op = Operator::zeros(d);
        op.as_mut_slice().copy_from_slice(rho);
        DensityMatrix::from_normalized(op)
    };
    let trace_dev = |rho: &[Complex64]| ((0..d).map(|i| rho[i + i * d]).sum::<Complex64>() - 1.0).norm();

    let n_steps = cfg.n_steps();
    let mut times = vec![0.0];
    let mut observables = vec![probes.measure(&rho, 0.0)];
    let mut states = if keep_states { vec![snapshot(&rho)] } else { Vec::new() };
    let mut max_dev: f64 = 0.0;
    for step in 1..=n_steps {
        for (j, (coef, from)) in [(0.0, None), (0.5, Some(0)), (0.5, Some(1)), (1.0, Some(2))].into_iter().enumerate() {
            let input: &[Complex64] = match from {
                None => &rho,
                Some(p) => {
                    for ((st, r), kp) in stage.iter_mut().zip(&rho).zip(&k[p]) {
                        *st = r + kp * (coef * dt);
                    }
                    &stage
                }
            };
            kernel.drift_into(input, &mut k[j], &mut s.tmp);
        }
        for i in 0..rho.len() {
            rho[i] += (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]) * (dt / 6.0);
        }
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(IntegratorError::NonFinite { trajectory: 0, step });
        }
        let dev = trace_dev(&rho);
        max_dev = max_dev.max(dev);
        if dev > UNCONDITIONAL_TRACE_TOL {
            return Err(IntegratorError::TraceDrift { step, drift: dev });
        }
        if step % cfg.sample_every == 0 || step == n_steps {
            times.push(step as f64 * dt);
            observables.push(probes.measure(&rho, dev));
            if keep_states {
                states.push(snapshot(&rho));
            }
        }
    }
    Ok(UnconditionalRun { times, observables, states, final_state: snapshot(&rho), max_trace_dev: max_dev })
}
