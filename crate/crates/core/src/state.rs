//! Density matrices and state functionals.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::layout::SpaceLayout;
use crate::operator::{tensor, Operator, OperatorError};

/// Hermiticity slack accepted on construction before symmetrizing.
const HERMITIAN_INPUT_TOL: f64 = 1e-9;
/// Traces below this are refused rather than normalized.
const MIN_TRACE: f64 = 1e-12;

/// Hermitian, unit-trace operator. Positivity is checked on demand with
/// [`DensityMatrix::min_eigenvalue`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl AsRef<Operator> for DensityMatrix {
    fn as_ref(&self) -> &Operator {
        &self.op
    }
}

impl DensityMatrix {
    /// Symmetrizes and normalizes `op` by its trace.
    pub fn new(op: Operator) -> Result<Self, OperatorError> {
        let deviation = op.hermiticity_deviation();
        let scale = op.max_abs().max(1.0);
        if deviation > HERMITIAN_INPUT_TOL * scale {
            return Err(OperatorError::NotHermitian { deviation });
        }
        let op = op.hermitian_part();
        let trace = op.trace().re;
        if trace.abs() < MIN_TRACE {
            return Err(OperatorError::VanishingTrace { trace });
        }
        Ok(Self { op: op.scale_real(1.0 / trace) })
    }

    /// Wraps an operator already known to be Hermitian with unit trace.
    pub(crate) fn from_normalized(op: Operator) -> Self {
        Self { op }
    }

    /// `|psi><psi|` for a (not necessarily normalized) state vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self, OperatorError> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 <= 0.0 || !norm2.is_finite() {
            return Err(OperatorError::ZeroNorm);
        }
        Self::new(Operator::outer(psi, psi)?)
    }

    /// Fock projector `|n><n|` in an `n_levels`-dimensional space.
    pub fn fock(n: usize, n_levels: usize) -> Result<Self, OperatorError> {
        if n >= n_levels {
            return Err(OperatorError::InvalidArgument("Fock index outside the truncated space"));
        }
        let mut diag = alloc::vec![0.0; n_levels];
        diag[n] = 1.0;
        Ok(Self { op: Operator::from_real_diagonal(&diag) })
    }

    /// Diagonal state with the given (unnormalized) populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self, OperatorError> {
        if populations.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(OperatorError::InvalidArgument("populations must be finite and non-negative"));
        }
        Self::new(Operator::from_real_diagonal(populations))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self, OperatorError> {
        if dim == 0 {
            return Err(OperatorError::ZeroDimension);
        }
        Ok(Self { op: Operator::identity(dim).scale_real(1.0 / dim as f64) })
    }

    /// Tensor product of states, in order.
    pub fn product(parts: &[&DensityMatrix]) -> Result<Self, OperatorError> {
        let (first, rest) = parts.split_first().ok_or(OperatorError::ZeroDimension)?;
        let mut acc = first.op.clone();
        for p in rest {
            acc = tensor(&acc, &p.op)?;
        }
        Ok(Self { op: acc })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    /// `tr(A ρ)`
    pub fn expectation(&self, a: &Operator) -> Result<Complex64, OperatorError> {
        expectation(a, self)
    }

    /// `tr ρ²`
    pub fn purity(&self) -> f64 {
        self.op.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    /// Smallest eigenvalue; negative values signal loss of positivity.
    pub fn min_eigenvalue(&self) -> f64 {
        self.op.eigenvalues_hermitian().first().copied().unwrap_or(0.0)
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// `(1/2) Σ |λ_i(ρ - σ)|`
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64, OperatorError> {
        let diff = self.op.difference(&other.op)?;
        Ok(0.5 * diff.eigenvalues_hermitian().iter().map(|l| l.abs()).sum::<f64>())
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.op.get(i, i).re).collect()
    }

    /// Reduced state on the factors in `keep`.
    pub fn partial_trace(&self, layout: &SpaceLayout, keep: &[&str]) -> Result<DensityMatrix, OperatorError> {
        let (red, _) = layout.partial_trace(&self.op, keep)?;
        Ok(Self { op: red })
    }

    /// Clips negative eigenvalues to zero and renormalizes.
    pub fn clip_negative_eigenvalues(&self) -> Result<DensityMatrix, OperatorError> {
        let herm = self.op.hermitian_part();
        let eig = herm.matrix().clone().symmetric_eigen();
        let clipped = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0), 0.0));
        let v = &eig.eigenvectors;
        let recon = v * nalgebra::DMatrix::from_diagonal(&clipped) * v.adjoint();
        Self::new(Operator::from_matrix(recon)?)
    }
}

/// `tr(A ρ)`
pub fn expectation<R: AsRef<Operator>>(a: &Operator, rho: &R) -> Result<Complex64, OperatorError> {
    let rho = rho.as_ref();
    if a.dim() != rho.dim() {
        return Err(OperatorError::DimensionMismatch { left: a.dim(), right: rho.dim() });
    }
    let d = a.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            acc += a.get(i, k) * rho.get(k, i);
        }
    }
    Ok(acc)
}

/// Truncated thermal state with `p_n ∝ (nbar / (nbar + 1))^n`.
pub fn thermal_state(nbar: f64, n_levels: usize) -> Result<DensityMatrix, OperatorError> {
    if n_levels == 0 {
        return Err(OperatorError::ZeroDimension);
    }
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(OperatorError::InvalidArgument("thermal occupation must be finite and non-negative"));
    }
    let ratio = nbar / (nbar + 1.0);
    let weights: Vec<f64> = (0..n_levels).map(|n| ratio.powi(n as i32)).collect();
    DensityMatrix::diagonal(&weights)
}
