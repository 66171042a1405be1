//! Dense complex operators on a truncated Hilbert space.
//!
//! Qubit basis ordering is `(|e>, |g>)`: index 0 is the excited state, so
//! `σz = diag(+1, -1)` and `σ- = |g><e|` has its single entry at `(1, 0)`.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float as _;
use thiserror::Error;

/// Index of `|e>` in the qubit factor.
pub const EXCITED: usize = 0;
/// Index of `|g>` in the qubit factor.
pub const GROUND: usize = 1;

/// Largest Hilbert-space dimension `tensor` will build by default.
pub const DEFAULT_MAX_DIM: usize = 4096;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operator dimension must be at least 1")]
    ZeroDimension,
    #[error("tensor product dimension {dim} exceeds the configured maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("trace {trace:e} is too small to normalize")]
    VanishingTrace { trace: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("unknown factor label `{0}`")]
    UnknownFactor(alloc::string::String),
    #[error("state vector has zero norm")]
    ZeroNorm,
}

/// Square complex matrix. Entries are dimensionless; physical scales live in
/// the scalar prefactors that multiply an operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: DMatrix<Complex64>,
}

impl AsRef<Operator> for Operator {
    fn as_ref(&self) -> &Operator {
        self
    }
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self { mat: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: DMatrix::identity(dim, dim) }
    }

    pub fn from_matrix(mat: DMatrix<Complex64>) -> Result<Self, OperatorError> {
        if mat.nrows() != mat.ncols() {
            return Err(OperatorError::DimensionMismatch { left: mat.nrows(), right: mat.ncols() });
        }
        if mat.nrows() == 0 {
            return Err(OperatorError::ZeroDimension);
        }
        Ok(Self { mat })
    }

    /// Builds an operator from `entry(row, col)`.
    pub fn from_fn(dim: usize, entry: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self { mat: DMatrix::from_fn(dim, dim, entry) }
    }

    /// Row-major construction, mainly for small literal matrices in tests.
    pub fn from_rows(rows: &[&[Complex64]]) -> Result<Self, OperatorError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(OperatorError::ZeroDimension);
        }
        for row in rows {
            if row.len() != dim {
                return Err(OperatorError::DimensionMismatch { left: dim, right: row.len() });
            }
        }
        Ok(Self::from_fn(dim, |r, c| rows[r][c]))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        Self::from_fn(dim, |r, c| if r == c { Complex64::new(diag[r], 0.0) } else { ZERO })
    }

    /// `|ket><bra|`
    pub fn outer(ket: &[Complex64], bra: &[Complex64]) -> Result<Self, OperatorError> {
        if ket.len() != bra.len() {
            return Err(OperatorError::DimensionMismatch { left: ket.len(), right: bra.len() });
        }
        Ok(Self::from_fn(ket.len(), |r, c| ket[r] * bra[c].conj()))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.mat[(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.mat[(row, col)] = value;
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.mat
    }

    /// Column-major entry slice.
    pub fn as_slice(&self) -> &[Complex64] {
        self.mat.as_slice()
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [Complex64] {
        self.mat.as_mut_slice()
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { mat: &self.mat * factor }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    fn check_dim(&self, other: &Self) -> Result<(), OperatorError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(OperatorError::DimensionMismatch { left: self.dim(), right: other.dim() })
        }
    }

    pub fn product(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        Ok(Self { mat: &self.mat * &other.mat })
    }

    pub fn sum(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        Ok(Self { mat: &self.mat + &other.mat })
    }

    pub fn difference(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        Ok(Self { mat: &self.mat - &other.mat })
    }

    /// `[A, B] = AB - BA`
    pub fn commutator(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        Ok(Self { mat: &self.mat * &other.mat - &other.mat * &self.mat })
    }

    /// `{A, B} = AB + BA`
    pub fn anticommutator(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_dim(other)?;
        Ok(Self { mat: &self.mat * &other.mat + &other.mat * &self.mat })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, OperatorError> {
        self.check_dim(other)?;
        Ok(self
            .mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max entrywise `|A - A†|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let d = self.dim();
        let mut dev: f64 = 0.0;
        for c in 0..d {
            for r in c..d {
                dev = dev.max((self.mat[(r, c)] - self.mat[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// `(A + A†) / 2`
    pub fn hermitian_part(&self) -> Self {
        Self { mat: (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0) }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|r| self.mat.row(r).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_inner(&self, other: &Self) -> Result<Complex64, OperatorError> {
        self.check_dim(other)?;
        Ok(self.mat.iter().zip(other.mat.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.hermitian_part().mat.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Matrix exponential by scaling and squaring of a truncated Taylor series.
    pub fn expm(&self) -> Self {
        let norm = self.norm_inf();
        let mut squarings = 0u32;
        let mut scaled = norm;
        while scaled > 0.5 {
            scaled *= 0.5;
            squarings += 1;
        }
        let a = &self.mat * Complex64::new(0.5.powi(squarings as i32), 0.0);
        let dim = self.dim();
        let mut result = DMatrix::<Complex64>::identity(dim, dim);
        let mut term = DMatrix::<Complex64>::identity(dim, dim);
        for k in 1..=40 {
            term = &term * &a * Complex64::new(1.0 / k as f64, 0.0);
            result += &term;
            if term.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-18 {
                break;
            }
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        Self { mat: result }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.sum(rhs).expect("operator dimensions must agree")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.difference(rhs).expect("operator dimensions must agree")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.product(rhs).expect("operator dimensions must agree")
    }
}

impl Mul<Complex64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: Complex64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale_real(rhs)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

/// Kronecker product `A ⊗ B` with the default dimension guard.
pub fn tensor(a: &Operator, b: &Operator) -> Result<Operator, OperatorError> {
    tensor_with_limit(a, b, DEFAULT_MAX_DIM)
}

pub fn tensor_with_limit(a: &Operator, b: &Operator, max_dim: usize) -> Result<Operator, OperatorError> {
    let dim = a
        .dim()
        .checked_mul(b.dim())
        .ok_or(OperatorError::DimensionTooLarge { dim: usize::MAX, max: max_dim })?;
    if dim > max_dim {
        return Err(OperatorError::DimensionTooLarge { dim, max: max_dim });
    }
    Ok(Operator { mat: a.mat.kronecker(&b.mat) })
}

/// Truncated lowering operator with `<n-1|b|n> = sqrt(n)`.
pub fn annihilation_op(n_levels: usize) -> Result<Operator, OperatorError> {
    if n_levels == 0 {
        return Err(OperatorError::ZeroDimension);
    }
    Ok(Operator::from_fn(n_levels, |r, c| {
        if c == r + 1 {
            Complex64::new((c as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    }))
}

/// `b†b = diag(0, 1, ..., n_levels - 1)`
pub fn number_op(n_levels: usize) -> Result<Operator, OperatorError> {
    if n_levels == 0 {
        return Err(OperatorError::ZeroDimension);
    }
    let diag: Vec<f64> = (0..n_levels).map(|n| n as f64).collect();
    Ok(Operator::from_real_diagonal(&diag))
}

/// Single-qubit operators in the `(|e>, |g>)` basis.
#[derive(Clone, Debug)]
pub struct Pauli {
    pub x: Operator,
    pub y: Operator,
    pub z: Operator,
    /// `σ- = |g><e|`
    pub minus: Operator,
    /// `σ+ = |e><g|`
    pub plus: Operator,
}

pub fn pauli_ops() -> Pauli {
    let z0 = ZERO;
    let x = Operator::from_fn(2, |r, c| if r != c { ONE } else { z0 });
    let y = Operator::from_fn(2, |r, c| match (r, c) {
        (0, 1) => -I,
        (1, 0) => I,
        _ => z0,
    });
    let z = Operator::from_real_diagonal(&[1.0, -1.0]);
    let minus = Operator::from_fn(2, |r, c| if r == GROUND && c == EXCITED { ONE } else { z0 });
    let plus = minus.adjoint();
    Pauli { x, y, z, minus, plus }
}

/// Normalized `σy` eigenvectors `|±y> = (|e> ± i|g>)/sqrt(2)`.
pub fn sigma_y_eigenvector(positive: bool) -> [Complex64; 2] {
    let h = core::f64::consts::FRAC_1_SQRT_2;
    let sign = if positive { 1.0 } else { -1.0 };
    [Complex64::new(h, 0.0), Complex64::new(0.0, sign * h)]
}
