use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qnd_sim::config::{parse_raw, resolve, RawConfig};
use qnd_sim::{run, RunError};

/// Stochastic master-equation simulator for QND phonon-number readout.
#[derive(Parser, Debug)]
#[command(name = "qnd-sim", version)]
struct Cli {
    /// TOML configuration file.
    config: Option<PathBuf>,
    /// Parameter preset (paper-sec6, paper-sec6-scaled).
    #[arg(long)]
    preset: Option<String>,
    /// trajectory, ensemble, unconditional, full-model or validate.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n_levels: Option<usize>,
    /// Number of trajectories in ensemble mode.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Refuse parameters outside the validated regime and treat ensemble
    /// mismatches as failures.
    #[arg(long)]
    strict: bool,
}

impl Cli {
    fn flags(&self) -> RawConfig {
        let mut r = RawConfig::default();
        r.preset = self.preset.clone();
        r.mode = self.mode.clone();
        r.strict = self.strict.then_some(true);
        r.integrator.seed = self.seed;
        r.integrator.dt = self.dt;
        r.integrator.t_final = self.t_final;
        r.params.eta = self.eta;
        r.model.n_levels = self.n_levels;
        r.ensemble.size = self.ensemble;
        r.output.path = self.out.clone();
        r
    }
}

fn main_inner(cli: &Cli) -> Result<(), RunError> {
    let file = match &cli.config {
        Some(path) => parse_raw(&std::fs::read_to_string(path)?)?,
        None => RawConfig::default(),
    };
    let cfg = resolve(&file, &cli.flags())?;
    let summary = run(&cfg)?;
    for msg in &summary.messages {
        eprintln!("{msg}");
    }
    println!("manifest_sha256 = {}", summary.manifest_hash);
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
