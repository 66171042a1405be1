//! Tensor-product structure of the simulated Hilbert space.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::operator::{tensor_with_limit, Operator, OperatorError, DEFAULT_MAX_DIM};

pub const QUBIT: &str = "qubit";
pub const RESONATOR: &str = "resonator";
pub const CAVITY: &str = "cavity";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of tensor factors. The first factor is the most significant
/// digit of the composite index, matching `tensor(A, B)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    factors: Vec<Factor>,
}

impl SpaceLayout {
    pub fn new(factors: &[(&str, usize)]) -> Result<Self, OperatorError> {
        if factors.is_empty() {
            return Err(OperatorError::ZeroDimension);
        }
        let mut out: Vec<Factor> = Vec::with_capacity(factors.len());
        let mut total: usize = 1;
        for &(label, dim) in factors {
            if dim == 0 {
                return Err(OperatorError::ZeroDimension);
            }
            if out.iter().any(|f| f.label == label) {
                return Err(OperatorError::InvalidArgument("duplicate factor label"));
            }
            total = total
                .checked_mul(dim)
                .filter(|&t| t <= DEFAULT_MAX_DIM)
                .ok_or(OperatorError::DimensionTooLarge { dim: total.saturating_mul(dim), max: DEFAULT_MAX_DIM })?;
            out.push(Factor { label: label.to_string(), dim });
        }
        Ok(Self { factors: out })
    }

    /// Qubit ⊗ resonator with `n_levels` Fock states.
    pub fn qubit_resonator(n_levels: usize) -> Result<Self, OperatorError> {
        Self::new(&[(QUBIT, 2), (RESONATOR, n_levels)])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.label == label)
    }

    pub fn dim_of(&self, label: &str) -> Option<usize> {
        self.index_of(label).map(|i| self.factors[i].dim)
    }

    /// Pads `op` with identities on every other factor.
    pub fn embed(&self, label: &str, op: &Operator) -> Result<Operator, OperatorError> {
        self.embed_many(&[(label, op)])
    }

    /// Product operator with the given single-factor operators and identities elsewhere.
    pub fn embed_many(&self, parts: &[(&str, &Operator)]) -> Result<Operator, OperatorError> {
        for (label, op) in parts {
            let dim = self.dim_of(label).ok_or_else(|| OperatorError::UnknownFactor(label.to_string()))?;
            if dim != op.dim() {
                return Err(OperatorError::DimensionMismatch { left: dim, right: op.dim() });
            }
        }
        let mut acc = Operator::identity(1);
        for factor in &self.factors {
            let next = match parts.iter().find(|(l, _)| *l == factor.label) {
                Some((_, op)) => (*op).clone(),
                None => Operator::identity(factor.dim),
            };
            acc = tensor_with_limit(&acc, &next, DEFAULT_MAX_DIM)?;
        }
        Ok(acc)
    }

    fn digits(&self, mut index: usize, out: &mut [usize]) {
        for (slot, factor) in out.iter_mut().zip(&self.factors).rev() {
            *slot = index % factor.dim;
            index /= factor.dim;
        }
    }

    /// Reduced operator on the factors named in `keep` (kept in layout order).
    pub fn partial_trace(&self, op: &Operator, keep: &[&str]) -> Result<(Operator, SpaceLayout), OperatorError> {
        let total = self.total_dim();
        if op.dim() != total {
            return Err(OperatorError::DimensionMismatch { left: op.dim(), right: total });
        }
        let mut kept = alloc::vec![false; self.factors.len()];
        for label in keep {
            let i = self.index_of(label).ok_or_else(|| OperatorError::UnknownFactor(label.to_string()))?;
            kept[i] = true;
        }
        if !kept.iter().any(|&k| k) {
            return Err(OperatorError::InvalidArgument("partial trace must keep at least one factor"));
        }
        let reduced_factors: Vec<(&str, usize)> = self
            .factors
            .iter()
            .zip(&kept)
            .filter(|(_, &k)| k)
            .map(|(f, _)| (f.label.as_str(), f.dim))
            .collect();
        let reduced_layout = SpaceLayout::new(&reduced_factors)?;
        let rdim = reduced_layout.total_dim();

        let n = self.factors.len();
        // Precompute (kept index, traced index) for every composite index.
        let mut split = Vec::with_capacity(total);
        let mut digits = alloc::vec![0usize; n];
        for idx in 0..total {
            self.digits(idx, &mut digits);
            let (mut k_idx, mut t_idx) = (0usize, 0usize);
            for (i, f) in self.factors.iter().enumerate() {
                if kept[i] {
                    k_idx = k_idx * f.dim + digits[i];
                } else {
                    t_idx = t_idx * f.dim + digits[i];
                }
            }
            split.push((k_idx, t_idx));
        }
        let mut out = Operator::zeros(rdim);
        for c in 0..total {
            let (kc, tc) = split[c];
            for r in 0..total {
                let (kr, tr) = split[r];
                if tr == tc {
                    let v = out.get(kr, kc) + op.get(r, c);
                    out.set(kr, kc, v);
                }
            }
        }
        Ok((out, reduced_layout))
    }
}
