//! Lindblad dissipator and homodyne measurement superoperators.

use crate::operator::{Operator, OperatorError};

fn check(s: &Operator, rho: &Operator) -> Result<(), OperatorError> {
    if s.dim() == rho.dim() {
        Ok(())
    } else {
        Err(OperatorError::DimensionMismatch { left: s.dim(), right: rho.dim() })
    }
}

/// `D[s]ρ = sρs† - (1/2)s†sρ - (1/2)ρs†s`
pub fn dissipator<R: AsRef<Operator>>(s: &Operator, rho: &R) -> Result<Operator, OperatorError> {
    let rho = rho.as_ref();
    check(s, rho)?;
    let sd = s.adjoint();
    let sds = &sd * s;
    let jump = &(s * rho) * &sd;
    let anti = sds.anticommutator(rho)?;
    Ok(&jump - &anti.scale_real(0.5))
}

/// `H[s]ρ = sρ + ρs† - tr(sρ + ρs†)ρ`
pub fn meas_superop<R: AsRef<Operator>>(s: &Operator, rho: &R) -> Result<Operator, OperatorError> {
    let rho = rho.as_ref();
    check(s, rho)?;
    let sum = &(s * rho) + &(rho * &s.adjoint());
    let tr = sum.trace();
    Ok(&sum - &rho.scale(tr))
}
