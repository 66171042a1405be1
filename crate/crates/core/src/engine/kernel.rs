//! Sparse-compiled form of an [`SmeSpec`] used by the integrators.
//!
//! Operators stay dense in the model; here each one is flattened to its
//! nonzero entries so that `Aρ` and `ρA†` cost `nnz · d` instead of `d³`.
//! Matrices are column-major slices of length `d²`, matching nalgebra.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::model::SmeSpec;
use crate::operator::{Operator, ZERO};

#[derive(Clone, Debug)]
pub(crate) struct SparseOp {
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    pub(crate) fn from_dense(op: &Operator) -> Self {
        let d = op.dim();
        let mut entries = Vec::new();
        for c in 0..d {
            for r in 0..d {
                let v = op.get(r, c);
                if v != ZERO {
                    entries.push((r, c, v));
                }
            }
        }
        Self { entries }
    }

    /// `out += coef · A X`
    #[inline]
    pub(crate) fn left_mul_add(&self, out: &mut [Complex64], x: &[Complex64], d: usize, coef: Complex64) {
        for j in 0..d {
            let col = j * d;
            let (o, xs) = (&mut out[col..col + d], &x[col..col + d]);
            for &(r, k, v) in &self.entries {
                o[r] += coef * v * xs[k];
            }
        }
    }

    /// `out += coef · X A†`
    #[inline]
    pub(crate) fn right_mul_adj_add(&self, out: &mut [Complex64], x: &[Complex64], d: usize, coef: Complex64) {
        for &(j, k, v) in &self.entries {
            let w = coef * v.conj();
            let (src, dst) = (k * d, j * d);
            for i in 0..d {
                out[dst + i] += w * x[src + i];
            }
        }
    }

    /// `tr(A X)`
    #[inline]
    pub(crate) fn trace_product(&self, x: &[Complex64], d: usize) -> Complex64 {
        self.entries.iter().map(|&(r, k, v)| v * x[k + r * d]).sum()
    }
}

#[derive(Clone, Debug)]
struct CompiledChannel {
    rate: f64,
    op: SparseOp,
}

#[derive(Clone, Debug)]
struct CompiledMeasurement {
    amplitude: f64,
    op: SparseOp,
}

#[derive(Clone, Debug)]
pub(crate) struct CompiledRecord {
    pub(crate) observable: SparseOp,
    pub(crate) gain: f64,
    pub(crate) noise: f64,
}

/// Drift `Gρ + ρG† + Σ r LρL†` with `G = -iH - (1/2)Σ r L†L`, and
/// diffusion `c (Mρ + ρM† - tr((M + M†)ρ) ρ)`.
#[derive(Clone, Debug)]
pub(crate) struct CompiledSme {
    pub(crate) dim: usize,
    effective: SparseOp,
    jumps: Vec<CompiledChannel>,
    measurement: Option<CompiledMeasurement>,
    pub(crate) record: Option<CompiledRecord>,
    /// `exp(-iH dt)`, applied exactly before each step when the Hamiltonian is
    /// split off from the drift.
    unitary: Option<SparseOp>,
}

/// Reusable buffers for one integrator.
#[derive(Clone, Debug)]
pub(crate) struct Scratch {
    pub(crate) a: Vec<Complex64>,
    pub(crate) b: Vec<Complex64>,
    pub(crate) c: Vec<Complex64>,
    pub(crate) tmp: Vec<Complex64>,
}

impl Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        let n = dim * dim;
        Self { a: vec![ZERO; n], b: vec![ZERO; n], c: vec![ZERO; n], tmp: vec![ZERO; n] }
    }
}

fn trace(x: &[Complex64], d: usize) -> Complex64 {
    (0..d).map(|i| x[i + i * d]).sum()
}

impl CompiledSme {
    pub(crate) fn new(spec: &SmeSpec) -> Self {
        Self::build(spec, None)
    }

    /// Hamiltonian propagated exactly over `dt`; the drift keeps only the
    /// dissipators.
    pub(crate) fn split(spec: &SmeSpec, dt: f64) -> Self {
        let u = spec.hamiltonian.scale(Complex64::new(0.0, -dt)).expm();
        Self::build(spec, Some(SparseOp::from_dense(&u)))
    }

    fn build(spec: &SmeSpec, unitary: Option<SparseOp>) -> Self {
        let dim = spec.dim();
        let mut g = if unitary.is_some() {
            Operator::zeros(dim)
        } else {
            spec.hamiltonian.scale(Complex64::new(0.0, -1.0))
        };
        let mut jumps = Vec::with_capacity(spec.channels.len());
        for ch in &spec.channels {
            if ch.rate == 0.0 {
                continue;
            }
            let ldl = &ch.op.adjoint() * &ch.op;
            g = &g - &ldl.scale_real(0.5 * ch.rate);
            jumps.push(CompiledChannel { rate: ch.rate, op: SparseOp::from_dense(&ch.op) });
        }
        let measurement = spec
            .measurement
            .as_ref()
            .filter(|m| m.amplitude() > 0.0)
            .map(|m| CompiledMeasurement { amplitude: m.amplitude(), op: SparseOp::from_dense(&m.op) });
        let record = spec.record.as_ref().map(|r| CompiledRecord {
            observable: SparseOp::from_dense(&r.observable),
            gain: r.gain,
            noise: r.noise,
        });
        Self { dim, effective: SparseOp::from_dense(&g), jumps, measurement, record, unitary }
    }

    /// `out = A(ρ)`; uses `tmp`.
    pub(crate) fn drift_into(&self, rho: &[Complex64], out: &mut [Complex64], tmp: &mut [Complex64]) {
        let d = self.dim;
        let one = Complex64::new(1.0, 0.0);
        out.fill(ZERO);
        self.effective.left_mul_add(out, rho, d, one);
        self.effective.right_mul_adj_add(out, rho, d, one);
        for ch in &self.jumps {
            tmp.fill(ZERO);
            ch.op.left_mul_add(tmp, rho, d, one);
            ch.op.right_mul_adj_add(out, tmp, d, Complex64::new(ch.rate, 0.0));
        }
    }

    /// `out = Mh + hM†` and returns its trace.
    fn meas_sum(m: &CompiledMeasurement, h: &[Complex64], out: &mut [Complex64], d: usize) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        out.fill(ZERO);
        m.op.left_mul_add(out, h, d, one);
        m.op.right_mul_adj_add(out, h, d, one);
        trace(out, d)
    }

    pub(crate) fn has_diffusion(&self) -> bool {
        self.measurement.is_some()
    }

    /// `out = B(ρ)`; returns `tr((M + M†)ρ)`.
    pub(crate) fn diffusion_into(&self, rho: &[Complex64], out: &mut [Complex64]) -> f64 {
        let d = self.dim;
        let Some(m) = &self.measurement else {
            out.fill(ZERO);
            return 0.0;
        };
        let t = Self::meas_sum(m, rho, out, d).re;
        for (o, r) in out.iter_mut().zip(rho) {
            *o = (*o - r * t) * m.amplitude;
        }
        t
    }

    /// Directional derivative `out = B′[ρ; h]` given `t = tr((M + M†)ρ)`.
    pub(crate) fn diffusion_derivative_into(&self, rho: &[Complex64], h: &[Complex64], t: f64, out: &mut [Complex64]) {
        let d = self.dim;
        let Some(m) = &self.measurement else {
            out.fill(ZERO);
            return;
        };
        let th = Self::meas_sum(m, h, out, d).re;
        for ((o, r), hv) in out.iter_mut().zip(rho).zip(h) {
            *o = (*o - r * th - hv * t) * m.amplitude;
        }
    }

    /// One Milstein step in place, without Hermitization or renormalization.
    pub(crate) fn milstein_in_place(&self, rho: &mut [Complex64], dt: f64, dw: f64, s: &mut Scratch) {
        if let Some(u) = &self.unitary {
            let one = Complex64::new(1.0, 0.0);
            s.tmp.fill(ZERO);
            u.left_mul_add(&mut s.tmp, rho, self.dim, one);
            rho.fill(ZERO);
            u.right_mul_adj_add(rho, &s.tmp, self.dim, one);
        }
        self.drift_into(rho, &mut s.a, &mut s.tmp);
        if self.has_diffusion() {
            let t = self.diffusion_into(rho, &mut s.b);
            self.diffusion_derivative_into(rho, &s.b, t, &mut s.c);
            let ito = 0.5 * (dw * dw - dt);
            for i in 0..rho.len() {
                rho[i] += s.a[i] * dt + s.b[i] * dw + s.c[i] * ito;
            }
        } else {
            for i in 0..rho.len() {
                rho[i] += s.a[i] * dt;
            }
        }
    }

    /// `gain · <O> dt + noise · dW`, or `None` without a record.
    pub(crate) fn record_increment(&self, rho: &[Complex64], dt: f64, dw: f64) -> Option<f64> {
        self.record.as_ref().map(|r| r.gain * r.observable.trace_product(rho, self.dim).re * dt + r.noise * dw)
    }
}

/// `(X + X†)/2` in place; returns the real trace.
pub(crate) fn hermitize(x: &mut [Complex64], d: usize) -> f64 {
    for c in 0..d {
        x[c + c * d].im = 0.0;
        for r in (c + 1)..d {
            let avg = (x[r + c * d] + x[c + r * d].conj()) * 0.5;
            x[r + c * d] = avg;
            x[c + r * d] = avg.conj();
        }
    }
    (0..d).map(|i| x[i + i * d].re).sum()
}
