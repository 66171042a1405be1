//! Mode dispatch and output files.

use std::path::PathBuf;

use qnd_core::analysis::{
    detect_conditioning, detect_jumps, ensemble_stats, estimate_phonon_from_record, AnalysisError, EnsembleStats,
    JumpEvent, ObservableKind, PhononEstimate,
};
use qnd_core::engine::{run_trajectory, run_unconditional, IntegratorError, Observables, TrajectoryRecord, UnconditionalRun};
use qnd_core::model::{DerivedParams, ModelError, SmeSpec};
use qnd_core::DensityMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, Mode, RunConfig};
use crate::figures::{export_figure_data, series_table, Figure, FigureError, FigureSource};
use crate::output::{fmt_f64, hex, write_file, Manifest, Table};
use crate::setup;

/// Largest trace distance tolerated between the full and reduced models.
pub const ADIABATIC_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("integration failed: {0}")]
    Integrator(#[from] IntegratorError),
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("figure: {0}")]
    Figure(#[from] FigureError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl RunError {
    /// Process exit status: 1 configuration or I/O, 2 integration,
    /// 3 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Integrator(_) => 2,
            RunError::Validation(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub manifest_hash: String,
    /// Human-readable notes (warnings, key results).
    pub messages: Vec<String>,
}

/// Everything that determines the output of a run, in a fixed order. The
/// output directory is left out so that relocated runs hash identically.
pub fn manifest(cfg: &RunConfig, spec: &SmeSpec, dp: &DerivedParams, dt: f64) -> Manifest {
    let mut m = Manifest::new();
    m.push("code_version", env!("CARGO_PKG_VERSION"));
    let mut raw = cfg.to_raw();
    raw.output.path = None;
    let value = toml::Value::try_from(&raw).expect("configuration is always representable");
    flatten(&mut m, "config", &value);
    m.push_f64("derived.qubit_splitting", dp.qubit_splitting);
    m.push_f64("derived.detuning", dp.detuning);
    m.push_f64("derived.gprime", dp.gprime);
    m.push_f64("derived.chi", dp.chi);
    m.push_f64("derived.gamma_meas", dp.gamma_meas);
    m.push_f64("derived.gamma_m", dp.gamma_m);
    if let Some(dx) = dp.zero_point_width {
        m.push_f64("derived.zero_point_width", dx);
    }
    m.push_f64("derived.adiabatic_ratio", dp.regime.adiabatic_ratio);
    m.push_f64("derived.sw_parameter", dp.sw_parameter);
    m.push("spec.dim", spec.dim());
    m.push("spec.digest", hex(&spec.digest()));
    m.push_f64("spec.rate_scale", spec.rate_scale);
    m.push_f64("resolved.dt", dt);
    let horizon = if cfg.mode == Mode::Validate { Some(validation_horizon(dp)) } else { cfg.integrator.t_final };
    if let Some(t) = horizon {
        m.push("resolved.n_steps", (t / dt).round() as u64);
    }
    m.push_f64("resolved.estimator_window", setup::resolved_window(cfg, dp));
    m.push_f64("resolved.debounce", setup::resolved_debounce(cfg, dp));
    m.push_f64("resolved.hold", setup::resolved_hold(cfg, dt));
    m
}

fn flatten(m: &mut Manifest, prefix: &str, v: &toml::Value) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(m, &format!("{prefix}.{k}"), v);
            }
        }
        toml::Value::Float(x) => m.push_f64(prefix, *x),
        toml::Value::String(s) => m.push(prefix, s),
        other => m.push(prefix, other),
    }
}

/// One conditional trajectory of `spec`.
pub fn run_single(cfg: &RunConfig, spec: &SmeSpec, rho0: &DensityMatrix, trajectory: u64) -> Result<TrajectoryRecord, RunError> {
    Ok(run_trajectory(spec, rho0, &setup::integrator_config(cfg, spec, trajectory))?)
}

/// Trajectories `0..cfg.ensemble.size` in index order, computed in parallel.
pub fn run_records(cfg: &RunConfig, spec: &SmeSpec, rho0: &DensityMatrix) -> Result<Vec<TrajectoryRecord>, RunError> {
    (0..cfg.ensemble.size as u64).into_par_iter().map(|k| run_single(cfg, spec, rho0, k)).collect()
}

/// Builds the reduced equation and initial state of `cfg` and runs its ensemble.
pub fn run_ensemble(cfg: &RunConfig) -> Result<Vec<TrajectoryRecord>, RunError> {
    let spec = setup::reduced_spec(cfg)?;
    let rho0 = setup::initial_state(cfg, &spec.layout)?;
    run_records(cfg, &spec, &rho0)
}

/// Deterministic mean evolution with the trajectory step and sampling.
pub fn run_mean(cfg: &RunConfig, spec: &SmeSpec, rho0: &DensityMatrix, keep_states: bool) -> Result<UnconditionalRun, RunError> {
    Ok(run_unconditional(spec, rho0, &setup::integrator_config(cfg, spec, 0), keep_states)?)
}

/// Derived quantities of one conditional trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryAnalysis {
    /// First time the variance stays below the threshold for the hold time.
    pub conditioning: Option<f64>,
    /// Level changes after conditioning.
    pub jumps: Vec<JumpEvent>,
    /// Record-only estimates; empty without a record or when it is shorter
    /// than one window.
    pub estimates: Vec<PhononEstimate>,
}

pub fn analyze_trajectory(cfg: &RunConfig, dp: &DerivedParams, rec: &TrajectoryRecord) -> Result<TrajectoryAnalysis, RunError> {
    let var = rec.series(|o| o.n_var);
    let conditioning = detect_conditioning(&rec.times, &var, cfg.analysis.var_threshold, setup::resolved_hold(cfg, rec.dt))?;
    let jumps = match conditioning {
        Some(tc) => {
            let from = rec.times.partition_point(|&t| t < tc);
            let n = rec.series(|o| o.n_mean);
            detect_jumps(&rec.times[from..], &n[from..], setup::resolved_debounce(cfg, dp))?
        }
        None => Vec::new(),
    };
    let est_cfg = setup::estimator_config(cfg, dp);
    let estimates = if !rec.dr.is_empty() && rec.dr.len() as f64 * rec.dt >= est_cfg.window {
        estimate_phonon_from_record(&rec.dr, rec.dt, dp.chi, dp.detuning, &est_cfg)?
    } else {
        Vec::new()
    };
    Ok(TrajectoryAnalysis { conditioning, jumps, estimates })
}

const OBSERVABLE_COLUMNS: [&str; 9] = ["t", "n_mean", "n_var", "sx", "sy", "sz", "purity", "trace_dev", "leakage"];

pub fn observables_table(times: &[f64], obs: &[Observables]) -> Table {
    let mut t = Table::new(&OBSERVABLE_COLUMNS);
    for (time, o) in times.iter().zip(obs) {
        t.push_f64(&[*time, o.n_mean, o.n_var, o.sx, o.sy, o.sz, o.purity, o.trace_dev, o.leakage]);
    }
    t
}

fn record_table(rec: &TrajectoryRecord) -> Table {
    let mut t = Table::new(&["t", "dr"]);
    for (k, dr) in rec.dr.iter().enumerate() {
        t.push_f64(&[(k + 1) as f64 * rec.dt, *dr]);
    }
    t
}

fn diagnostics_table(records: &[TrajectoryRecord]) -> Table {
    let mut t = Table::new(&[
        "trajectory",
        "steps",
        "max_trace_dev",
        "max_hermiticity_dev",
        "min_eigenvalue",
        "positivity_violations",
        "repairs",
        "max_leakage",
        "leakage_flagged",
    ]);
    for r in records {
        let d = &r.diagnostics;
        t.push(vec![
            r.trajectory.to_string(),
            d.steps.to_string(),
            fmt_f64(d.max_trace_dev),
            fmt_f64(d.max_hermiticity_dev),
            fmt_f64(d.min_eigenvalue),
            d.positivity_violations.to_string(),
            d.repairs.to_string(),
            fmt_f64(d.max_leakage),
            d.leakage_flagged.to_string(),
        ]);
    }
    t
}

fn conditioning_table(rows: &[(u64, Option<f64>)]) -> Table {
    let mut t = Table::new(&["trajectory", "t_conditioning"]);
    for (k, tc) in rows {
        t.push(vec![k.to_string(), tc.map_or_else(|| "nan".to_string(), fmt_f64)]);
    }
    t
}

fn jumps_table(rows: &[(u64, JumpEvent)]) -> Table {
    let mut t = Table::new(&["trajectory", "t", "n_before", "n_after", "confidence"]);
    for (k, j) in rows {
        t.push(vec![k.to_string(), fmt_f64(j.time), j.n_before.to_string(), j.n_after.to_string(), fmt_f64(j.confidence)]);
    }
    t
}

fn estimator_table(rows: &[(u64, PhononEstimate)]) -> Table {
    let mut t = Table::new(&["trajectory", "start", "end", "level", "raw_level", "confidence"]);
    for (k, e) in rows {
        t.push(vec![
            k.to_string(),
            fmt_f64(e.start),
            fmt_f64(e.end),
            e.level.map_or_else(|| "-1".to_string(), |l| l.to_string()),
            e.raw_level.to_string(),
            fmt_f64(e.confidence),
        ]);
    }
    t
}

fn bands_table(stats: &EnsembleStats) -> Table {
    let mut cols = vec!["t".to_string()];
    for kind in ObservableKind::ALL {
        for s in ["mean", "se", "p10", "p50", "p90"] {
            cols.push(format!("{}_{s}", kind.name()));
        }
    }
    let mut t = Table { columns: cols, rows: Vec::new() };
    for (i, time) in stats.times.iter().enumerate() {
        let mut row = vec![*time];
        for kind in ObservableKind::ALL {
            let b = stats.band(kind);
            row.extend([b.mean[i], b.se[i], b.p10[i], b.p50[i], b.p90[i]]);
        }
        t.push_f64(&row);
    }
    t
}

fn comparison_table(stats: &EnsembleStats) -> Table {
    let mut cols = vec!["t".to_string()];
    for c in &stats.comparisons {
        cols.push(format!("{}_unconditional", c.kind.name()));
        cols.push(format!("{}_z", c.kind.name()));
    }
    let mut t = Table { columns: cols, rows: Vec::new() };
    for (i, time) in stats.times.iter().enumerate() {
        let mut row = vec![*time];
        for c in &stats.comparisons {
            row.extend([c.unconditional[i], c.z[i]]);
        }
        t.push_f64(&row);
    }
    t
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    hash: String,
    summary: RunSummary,
}

impl Writer<'_> {
    fn table(&mut self, name: &str, kind: &str, table: &Table) -> Result<(), RunError> {
        let text = table.render(kind, &self.hash, &[]);
        self.summary.files.push(write_file(&self.cfg.output.path, name, &text)?);
        Ok(())
    }

    fn figure(&mut self, which: Figure, sources: &[FigureSource]) -> Result<(), RunError> {
        let path = export_figure_data(which, sources, &self.cfg.output.path, &self.hash)?;
        self.summary.files.push(path);
        Ok(())
    }

    fn series_figures(&mut self, times: &[f64], obs: &[Observables]) -> Result<(), RunError> {
        for which in [Figure::Fig1, Figure::Fig2] {
            let kind = which.file_name().trim_end_matches(".csv");
            let table = series_table(which, times, obs)?;
            self.table(which.file_name(), kind, &table)?;
        }
        Ok(())
    }

    fn note(&mut self, msg: String) {
        self.summary.messages.push(msg);
    }

    fn leakage_notes(&mut self, records: &[TrajectoryRecord]) {
        for r in records.iter().filter(|r| r.diagnostics.leakage_flagged) {
            let msg = format!(
                "warning: trajectory {} reached truncation leakage {:e}; consider more levels",
                r.trajectory, r.diagnostics.max_leakage
            );
            self.note(msg);
        }
    }
}

/// Runs `cfg` and writes its output directory.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let dp = setup::derived(cfg)?;
    let spec = setup::build_spec(cfg)?;
    let dt = setup::resolved_dt(cfg, &spec);
    let m = manifest(cfg, &spec, &dp, dt);
    let hash = m.hash();
    let mut w = Writer { cfg, hash: hash.clone(), summary: RunSummary { manifest_hash: hash, ..Default::default() } };
    w.summary.files.push(write_file(&cfg.output.path, "manifest.txt", &m.text())?);
    if !dp.regime.all_ok() {
        w.note(format!(
            "warning: outside the validated regime (adiabatic ratio {}, dispersive parameter {})",
            dp.regime.adiabatic_ratio, dp.regime.sw_parameter
        ));
    }
    let rho0 = setup::initial_state(cfg, &spec.layout)?;
    match cfg.mode {
        Mode::Trajectory => trajectory_mode(&mut w, &dp, &spec, &rho0)?,
        Mode::Ensemble => ensemble_mode(&mut w, &dp, &spec, &rho0)?,
        Mode::Unconditional | Mode::FullModel => {
            let run = run_mean(cfg, &spec, &rho0, false)?;
            let name = if cfg.mode == Mode::FullModel { "full_model" } else { "unconditional" };
            w.table(&format!("{name}.csv"), name, &observables_table(&run.times, &run.observables))?;
            w.series_figures(&run.times, &run.observables)?;
        }
        Mode::Validate => validate_mode(&mut w)?,
    }
    Ok(w.summary)
}

fn trajectory_mode(w: &mut Writer, dp: &DerivedParams, spec: &SmeSpec, rho0: &DensityMatrix) -> Result<(), RunError> {
    let cfg = w.cfg;
    let rec = run_single(cfg, spec, rho0, 0)?;
    w.leakage_notes(std::slice::from_ref(&rec));
    w.table("trajectory.csv", "trajectory", &observables_table(&rec.times, &rec.observables))?;
    if cfg.analysis.write_record && !rec.dr.is_empty() {
        w.table("record.csv", "record", &record_table(&rec))?;
    }
    w.table("diagnostics.csv", "diagnostics", &diagnostics_table(std::slice::from_ref(&rec)))?;
    let a = analyze_trajectory(cfg, dp, &rec)?;
    w.table("conditioning.csv", "conditioning", &conditioning_table(&[(0, a.conditioning)]))?;
    let jumps: Vec<_> = a.jumps.iter().map(|j| (0, *j)).collect();
    w.table("jumps.csv", "jumps", &jumps_table(&jumps))?;
    let est: Vec<_> = a.estimates.iter().map(|e| (0, *e)).collect();
    w.table("estimator.csv", "estimator", &estimator_table(&est))?;
    match a.conditioning {
        Some(tc) => w.note(format!("conditioned at t = {tc:e} s, {} jump(s) afterwards", a.jumps.len())),
        None => w.note("variance never settled below the threshold".to_string()),
    }
    let records = [rec];
    let src = FigureSource { config: cfg, records: &records };
    w.figure(Figure::Fig1, &[src])?;
    w.figure(Figure::Fig2, &[src])?;
    if let Some(eta) = cfg.analysis.compare_eta {
        let other = cfg.with_eta(eta);
        let other_spec = setup::reduced_spec(&other)?;
        let other_rec = [run_single(&other, &other_spec, rho0, 0)?];
        w.figure(Figure::Fig3, &[src, FigureSource { config: &other, records: &other_rec }])?;
    }
    Ok(())
}

fn ensemble_mode(w: &mut Writer, dp: &DerivedParams, spec: &SmeSpec, rho0: &DensityMatrix) -> Result<(), RunError> {
    let cfg = w.cfg;
    let records = run_records(cfg, spec, rho0)?;
    w.leakage_notes(&records);
    let mut cond = Vec::new();
    let mut jumps = Vec::new();
    let mut est = Vec::new();
    for r in &records {
        let k = r.trajectory;
        w.table(&format!("traj_{k:04}.csv"), "trajectory", &observables_table(&r.times, &r.observables))?;
        if cfg.analysis.write_record && !r.dr.is_empty() {
            w.table(&format!("record_{k:04}.csv"), "record", &record_table(r))?;
        }
        let a = analyze_trajectory(cfg, dp, r)?;
        cond.push((k, a.conditioning));
        jumps.extend(a.jumps.into_iter().map(|j| (k, j)));
        est.extend(a.estimates.into_iter().map(|e| (k, e)));
    }
    w.table("diagnostics.csv", "diagnostics", &diagnostics_table(&records))?;
    w.table("conditioning.csv", "conditioning", &conditioning_table(&cond))?;
    w.table("jumps.csv", "jumps", &jumps_table(&jumps))?;
    w.table("estimator.csv", "estimator", &estimator_table(&est))?;
    let mean = run_mean(cfg, spec, rho0, false)?;
    w.table("unconditional.csv", "unconditional", &observables_table(&mean.times, &mean.observables))?;
    let refs: Vec<&TrajectoryRecord> = records.iter().collect();
    let stats = ensemble_stats(&refs, Some(&mean))?;
    w.table("bands.csv", "bands", &bands_table(&stats))?;
    w.table("comparison.csv", "comparison", &comparison_table(&stats))?;
    let src = FigureSource { config: cfg, records: &records };
    w.figure(Figure::Fig1, &[src])?;
    w.figure(Figure::Fig2, &[src])?;
    if let Some(eta) = cfg.analysis.compare_eta {
        let other = cfg.with_eta(eta);
        let other_records = run_ensemble(&other)?;
        w.figure(Figure::Fig3, &[src, FigureSource { config: &other, records: &other_records }])?;
    }
    let worst = stats.comparisons.iter().flat_map(|c| c.z.iter().copied()).fold(0.0, f64::max);
    let mismatched: usize = stats.comparisons.iter().map(|c| c.mismatches.len()).sum();
    w.note(format!("ensemble of {}: worst |z| = {worst:.3}, {mismatched} sample(s) outside 3 se", records.len()));
    if cfg.strict && !stats.consistent() {
        return Err(RunError::Validation(format!(
            "ensemble mean departs from the unconditional evolution at {mismatched} sample(s)"
        )));
    }
    Ok(())
}

/// Full model against the reduced model without feedback, both evolved
/// unconditionally from the same qubit and resonator state.
#[derive(Clone, Debug, PartialEq)]
pub struct AdiabaticReport {
    pub times: Vec<f64>,
    /// Trace distance of the qubit ⊗ resonator marginals.
    pub distance: Vec<f64>,
    pub n_full: Vec<f64>,
    pub n_reduced: Vec<f64>,
    pub max_distance: f64,
}

/// Ten measurement times, `10/Γ`.
pub fn validation_horizon(dp: &DerivedParams) -> f64 {
    10.0 / dp.gamma_meas
}

/// Runs over [`validation_horizon`] (`t_final` is not used); both models use
/// the full model's step so that their samples coincide.
pub fn adiabatic_comparison(cfg: &RunConfig) -> Result<AdiabaticReport, RunError> {
    let dp = setup::derived(cfg)?;
    let full = setup::full_spec(cfg)?;
    let mut rcfg = cfg.clone();
    rcfg.model.feedback = false;
    let reduced = setup::reduced_spec(&rcfg)?;
    let mut common = cfg.clone();
    common.integrator.dt = Some(setup::resolved_dt(cfg, &full));
    common.integrator.t_final = Some(validation_horizon(&dp));
    let rho_full = setup::initial_state(cfg, &full.layout)?;
    let rho_red = setup::initial_state(cfg, &reduced.layout)?;
    let run_full = run_mean(&common, &full, &rho_full, true)?;
    let run_red = run_mean(&common, &reduced, &rho_red, true)?;
    let mut distance = Vec::with_capacity(run_full.times.len());
    for (a, b) in run_full.states.iter().zip(&run_red.states) {
        let marginal = setup::qubit_resonator_part(a, &full.layout)?;
        distance.push(marginal.trace_distance(b).map_err(ModelError::from)?);
    }
    let max_distance = distance.iter().copied().fold(0.0, f64::max);
    Ok(AdiabaticReport {
        times: run_full.times.clone(),
        distance,
        n_full: run_full.observables.iter().map(|o| o.n_mean).collect(),
        n_reduced: run_red.observables.iter().map(|o| o.n_mean).collect(),
        max_distance,
    })
}

fn validate_mode(w: &mut Writer) -> Result<(), RunError> {
    let report = adiabatic_comparison(w.cfg)?;
    let mut t = Table::new(&["t", "trace_distance", "n_full", "n_reduced"]);
    for i in 0..report.times.len() {
        t.push_f64(&[report.times[i], report.distance[i], report.n_full[i], report.n_reduced[i]]);
    }
    w.table("validate.csv", "validate", &t)?;
    w.note(format!("largest trace distance {:.4e} (tolerance {ADIABATIC_TOL})", report.max_distance));
    if report.max_distance > ADIABATIC_TOL {
        return Err(RunError::Validation(format!(
            "reduced model departs from the full model by {:.4e} in trace distance",
            report.max_distance
        )));
    }
    Ok(())
}
