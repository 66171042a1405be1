//! Conditional trajectories.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::{hermitize, CompiledSme, Scratch, SparseOp};
use super::{Fingerprint, IntegratorConfig, Scheme, IntegratorError, LEAKAGE_FLAG, POSITIVITY_TOL};
use crate::layout::{SpaceLayout, QUBIT, RESONATOR};
use crate::model::SmeSpec;
use crate::operator::{number_op, pauli_ops, Operator};
use crate::state::DensityMatrix;

/// State-derived quantities stored at each sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Observables {
    /// `<b†b>`
    pub n_mean: f64,
    /// `<(b†b)²> - <b†b>²`, clipped at 0.
    pub n_var: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub purity: f64,
    /// `|tr ρ - 1|` just before the most recent renormalization.
    pub trace_dev: f64,
    /// Population of the highest retained resonator level.
    pub leakage: f64,
}

/// Running extremes of the per-step and periodic checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub steps: u64,
    pub max_trace_dev: f64,
    pub max_hermiticity_dev: f64,
    pub min_eigenvalue: f64,
    pub positivity_violations: u64,
    pub repairs: u64,
    pub max_leakage: f64,
    pub leakage_flagged: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            steps: 0,
            max_trace_dev: 0.0,
            max_hermiticity_dev: 0.0,
            min_eigenvalue: f64::INFINITY,
            positivity_violations: 0,
            repairs: 0,
            max_leakage: 0.0,
            leakage_flagged: false,
        }
    }
}

/// Sparse observables on a layout; absent factors read as zero.
#[derive(Clone, Debug)]
pub(crate) struct Probes {
    dim: usize,
    n: Option<(SparseOp, SparseOp)>,
    top: Vec<usize>,
    pauli: Option<[SparseOp; 3]>,
}

impl Probes {
    pub(crate) fn new(layout: &SpaceLayout) -> Self {
        let dim = layout.total_dim();
        let n = layout.dim_of(RESONATOR).map(|nl| {
            let n = number_op(nl).expect("resonator dimension is positive");
            let n_full = layout.embed(RESONATOR, &n).expect("factor exists");
            let n2 = &n_full * &n_full;
            (SparseOp::from_dense(&n_full), SparseOp::from_dense(&n2))
        });
        let top = match layout.dim_of(RESONATOR) {
            Some(nl) => {
                let mut diag = vec![0.0; nl];
                diag[nl - 1] = 1.0;
                let proj = layout.embed(RESONATOR, &Operator::from_real_diagonal(&diag)).expect("factor exists");
                (0..dim).filter(|&i| proj.get(i, i).re != 0.0).collect()
            }
            None => Vec::new(),
        };
        let pauli = layout.dim_of(QUBIT).filter(|&d| d == 2).map(|_| {
            let p = pauli_ops();
            [&p.x, &p.y, &p.z].map(|s| SparseOp::from_dense(&layout.embed(QUBIT, s).expect("factor exists")))
        });
        Self { dim, n, top, pauli }
    }

    pub(crate) fn measure(&self, rho: &[Complex64], trace_dev: f64) -> Observables {
        let d = self.dim;
        let (n_mean, n_var) = match &self.n {
            Some((n, n2)) => {
                let m = n.trace_product(rho, d).re;
                (m, (n2.trace_product(rho, d).re - m * m).max(0.0))
            }
            None => (0.0, 0.0),
        };
        let [sx, sy, sz] = match &self.pauli {
            Some(ops) => ops.each_ref().map(|s| s.trace_product(rho, d).re),
            None => [0.0; 3],
        };
        Observables {
            n_mean,
            n_var,
            sx,
            sy,
            sz,
            purity: rho.iter().map(|z| z.norm_sqr()).sum(),
            trace_dev,
            leakage: self.leakage(rho),
        }
    }

    pub(crate) fn leakage(&self, rho: &[Complex64]) -> f64 {
        self.top.iter().map(|&i| rho[i + i * self.dim].re).sum()
    }
}

/// Result of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Time after the step.
    pub t: f64,
    pub dw: f64,
    /// Record increment over the step, if the equation has a record.
    pub dr: Option<f64>,
}

/// A conditional trajectory advanced one Milstein step at a time.
///
/// The noise stream is ChaCha8 keyed by `(seed, trajectory)`, so ensemble
/// members are reproducible regardless of scheduling.
#[derive(Clone, Debug)]
pub struct Trajectory {
    kernel: CompiledSme,
    probes: Probes,
    cfg: IntegratorConfig,
    rng: ChaCha8Rng,
    rho: Vec<Complex64>,
    scratch: Scratch,
    step: u64,
    last_trace_dev: f64,
    diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn new(spec: &SmeSpec, rho0: &DensityMatrix, cfg: &IntegratorConfig) -> Result<Self, IntegratorError> {
        cfg.validate()?;
        spec.validate()?;
        super::check_dim(spec, rho0.operator())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(cfg.trajectory);
        let kernel = match cfg.scheme {
            Scheme::Milstein => CompiledSme::new(spec),
            Scheme::SplitHamiltonian => CompiledSme::split(spec, cfg.dt),
        };
        let mut traj = Self {
            probes: Probes::new(&spec.layout),
            scratch: Scratch::new(kernel.dim),
            kernel,
            cfg: *cfg,
            rng,
            rho: rho0.operator().as_slice().to_vec(),
            step: 0,
            last_trace_dev: 0.0,
            diagnostics: Diagnostics::default(),
        };
        traj.run_diagnostics()?;
        Ok(traj)
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn observables(&self) -> Observables {
        self.probes.measure(&self.rho, self.last_trace_dev)
    }

    pub fn state(&self) -> DensityMatrix {
        let mut op = Operator::zeros(self.kernel.dim);
        op.as_mut_slice().copy_from_slice(&self.rho);
        DensityMatrix::from_normalized(op)
    }

    /// Draws `ΔW ~ N(0, dt)` and advances.
    pub fn step(&mut self) -> Result<StepOutcome, IntegratorError> {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.step_with_increment(z * self.cfg.dt.sqrt())
    }

    /// Advances with a caller-supplied Wiener increment. The internal noise
    /// stream is not consumed.
    pub fn step_with_increment(&mut self, dw: f64) -> Result<StepOutcome, IntegratorError> {
        let dt = self.cfg.dt;
        let d = self.kernel.dim;
        let dr = self.kernel.record_increment(&self.rho, dt, dw);
        self.kernel.milstein_in_place(&mut self.rho, dt, dw, &mut self.scratch);
        self.step += 1;
        let tr = hermitize(&mut self.rho, d);
        if !tr.is_finite() || self.rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(IntegratorError::NonFinite { trajectory: self.cfg.trajectory, step: self.step });
        }
        if self.step % self.cfg.renorm_every == 0 {
            self.last_trace_dev = (tr - 1.0).abs();
            self.diagnostics.max_trace_dev = self.diagnostics.max_trace_dev.max(self.last_trace_dev);
            let inv = 1.0 / tr;
            self.rho.iter_mut().for_each(|z| *z *= inv);
        }
        self.diagnostics.steps = self.step;
        if self.step % self.cfg.diag_every == 0 {
            self.run_diagnostics()?;
        }
        Ok(StepOutcome { t: self.time(), dw, dr })
    }

    fn run_diagnostics(&mut self) -> Result<(), IntegratorError> {
        let d = self.kernel.dim;
        let state = self.state();
        let herm = state.operator().hermiticity_deviation();
        let diag = &mut self.diagnostics;
        diag.max_hermiticity_dev = diag.max_hermiticity_dev.max(herm);
        let min_eig = state.min_eigenvalue();
        diag.min_eigenvalue = diag.min_eigenvalue.min(min_eig);
        if min_eig < -POSITIVITY_TOL {
            diag.positivity_violations += 1;
            if self.cfg.repair_negative {
                let fixed = state.clip_negative_eigenvalues()?;
                self.rho.copy_from_slice(fixed.operator().as_slice());
                hermitize(&mut self.rho, d);
                self.diagnostics.repairs += 1;
            }
        }
        let leakage = self.probes.leakage(&self.rho);
        let diag = &mut self.diagnostics;
        diag.max_leakage = diag.max_leakage.max(leakage);
        diag.leakage_flagged |= leakage > LEAKAGE_FLAG;
        if let Some(bound) = self.cfg.leakage_abort {
            if leakage > bound {
                return Err(IntegratorError::Leakage { trajectory: self.cfg.trajectory, step: self.step, leakage, bound });
            }
        }
        Ok(())
    }
}

/// Output of [`run_trajectory`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    /// Sample times (s), starting at 0.
    pub times: Vec<f64>,
    pub observables: Vec<Observables>,
    /// Record increments at every step (empty without a record).
    pub dr: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
    pub trajectory: u64,
    pub fingerprint: Fingerprint,
    pub diagnostics: Diagnostics,
    pub final_state: DensityMatrix,
}

impl TrajectoryRecord {
    pub fn series(&self, f: impl Fn(&Observables) -> f64) -> Vec<f64> {
        self.observables.iter().map(f).collect()
    }
}

/// Integrates to `cfg.t_final`, sampling every `cfg.sample_every` steps and
/// at the final step.
pub fn run_trajectory(spec: &SmeSpec, rho0: &DensityMatrix, cfg: &IntegratorConfig) -> Result<TrajectoryRecord, IntegratorError> {
    let mut traj = Trajectory::new(spec, rho0, cfg)?;
    let n_steps = cfg.n_steps();
    let n_samples = (n_steps / cfg.sample_every + 2) as usize;
    let mut times = Vec::with_capacity(n_samples);
    let mut observables = Vec::with_capacity(n_samples);
    let mut dr = Vec::with_capacity(if spec.record.is_some() { n_steps as usize } else { 0 });
    times.push(0.0);
    observables.push(traj.observables());
    for k in 1..=n_steps {
        let out = traj.step()?;
        if let Some(x) = out.dr {
            dr.push(x);
        }
        if k % cfg.sample_every == 0 || k == n_steps {
            times.push(out.t);
            observables.push(traj.observables());
        }
    }
    Ok(TrajectoryRecord {
        times,
        observables,
        dr,
        dt: cfg.dt,
        seed: cfg.seed,
        trajectory: cfg.trajectory,
        fingerprint: Fingerprint::of(spec, cfg),
        diagnostics: traj.diagnostics,
        final_state: traj.state(),
    })
}
