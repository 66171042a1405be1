//! Plot-ready tables for the phonon-number, qubit-signal and efficiency
//! comparison figures.

use std::path::{Path, PathBuf};

use qnd_core::engine::{Observables, TrajectoryRecord};
use thiserror::Error;

use crate::config::RunConfig;
use crate::output::{write_file, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// `t, mean_n, var_n`
    Fig1,
    /// `t, sy`
    Fig2,
    /// `t, var_n_eta1, var_n_etaLow`
    Fig3,
}

impl Figure {
    pub fn file_name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1.csv",
            Figure::Fig2 => "fig2.csv",
            Figure::Fig3 => "fig3.csv",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FigureError {
    #[error("no observable samples to export")]
    MissingObservables,
    #[error("expected {expected} record set(s), got {got}")]
    SourceCount { expected: usize, got: usize },
    #[error("records within a set come from different equations or settings")]
    MixedRecords,
    #[error("the two runs differ in more than the detection efficiency")]
    MixedSpecs,
    #[error("the two runs have the same detection efficiency")]
    SameEfficiency,
    #[error("sample grids differ")]
    Misaligned,
}

/// Records of one configuration.
#[derive(Clone, Copy, Debug)]
pub struct FigureSource<'a> {
    pub config: &'a RunConfig,
    pub records: &'a [TrajectoryRecord],
}

/// Sample times and the pointwise mean of `n_mean`, `n_var`, `sy` over the
/// records of `src`.
fn averaged(src: &FigureSource) -> Result<(Vec<f64>, Vec<[f64; 3]>), FigureError> {
    let first = src.records.first().ok_or(FigureError::MissingObservables)?;
    if first.times.is_empty() || first.observables.len() != first.times.len() {
        return Err(FigureError::MissingObservables);
    }
    if src.records.iter().any(|r| r.fingerprint != first.fingerprint) {
        return Err(FigureError::MixedRecords);
    }
    if src.records.iter().any(|r| r.times != first.times) {
        return Err(FigureError::Misaligned);
    }
    let k = src.records.len() as f64;
    let means = (0..first.times.len())
        .map(|i| {
            let mut acc = [0.0; 3];
            for r in src.records {
                let o = &r.observables[i];
                acc[0] += o.n_mean;
                acc[1] += o.n_var;
                acc[2] += o.sy;
            }
            acc.map(|x| x / k)
        })
        .collect();
    Ok((first.times.clone(), means))
}

/// Table for a single series of observables.
pub fn series_table(which: Figure, times: &[f64], observables: &[Observables]) -> Result<Table, FigureError> {
    if times.is_empty() || times.len() != observables.len() {
        return Err(FigureError::MissingObservables);
    }
    let rows: Vec<[f64; 3]> = observables.iter().map(|o| [o.n_mean, o.n_var, o.sy]).collect();
    single_table(which, times, &rows)
}

fn single_table(which: Figure, times: &[f64], rows: &[[f64; 3]]) -> Result<Table, FigureError> {
    let mut table = match which {
        Figure::Fig1 => Table::new(&["t", "mean_n", "var_n"]),
        Figure::Fig2 => Table::new(&["t", "sy"]),
        Figure::Fig3 => return Err(FigureError::SourceCount { expected: 2, got: 1 }),
    };
    for (t, r) in times.iter().zip(rows) {
        match which {
            Figure::Fig1 => table.push_f64(&[*t, r[0], r[1]]),
            _ => table.push_f64(&[*t, r[2]]),
        }
    }
    Ok(table)
}

/// Builds the table for `which`. Fig1 and Fig2 take one source (averaged
/// when it holds several records); Fig3 takes two sources whose
/// configurations differ only in the detection efficiency, the higher one
/// filling `var_n_eta1`.
pub fn figure_table(which: Figure, sources: &[FigureSource]) -> Result<Table, FigureError> {
    match which {
        Figure::Fig1 | Figure::Fig2 => {
            if sources.len() != 1 {
                return Err(FigureError::SourceCount { expected: 1, got: sources.len() });
            }
            let (times, rows) = averaged(&sources[0])?;
            single_table(which, &times, &rows)
        }
        Figure::Fig3 => {
            if sources.len() != 2 {
                return Err(FigureError::SourceCount { expected: 2, got: sources.len() });
            }
            let (a, b) = (sources[0].config, sources[1].config);
            if a.params.eta == b.params.eta {
                return Err(FigureError::SameEfficiency);
            }
            let normalize = |c: &RunConfig| {
                let mut c = c.with_eta(1.0);
                c.analysis.compare_eta = None;
                c
            };
            if normalize(a) != normalize(b) {
                return Err(FigureError::MixedSpecs);
            }
            let (hi, lo) = if a.params.eta > b.params.eta { (&sources[0], &sources[1]) } else { (&sources[1], &sources[0]) };
            let (t_hi, r_hi) = averaged(hi)?;
            let (t_lo, r_lo) = averaged(lo)?;
            if t_hi != t_lo {
                return Err(FigureError::Misaligned);
            }
            let mut table = Table::new(&["t", "var_n_eta1", "var_n_etaLow"]);
            for ((t, h), l) in t_hi.iter().zip(&r_hi).zip(&r_lo) {
                table.push_f64(&[*t, h[1], l[1]]);
            }
            Ok(table)
        }
    }
}

/// Writes the table for `which` into `dir`.
pub fn export_figure_data(
    which: Figure,
    sources: &[FigureSource],
    dir: &Path,
    manifest_hash: &str,
) -> Result<PathBuf, crate::RunError> {
    let table = figure_table(which, sources)?;
    Ok(write_file(dir, which.file_name(), &table.render(which.file_name().trim_end_matches(".csv"), manifest_hash, &[]))?)
}
