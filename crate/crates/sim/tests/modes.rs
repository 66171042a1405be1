use std::fs;
use std::path::Path;
use std::process::Command;

use qnd_sim::config::parse_config;
use qnd_sim::output::parse_rows;
use qnd_sim::{figure_table, run, run_ensemble, Figure, FigureError, FigureSource, RunConfig};

const BARE: &str = r#"
[params]
omega_m = 6.283185307179586e7
Delta = 5e10
epsilon = 0.0
omega_c = 5e10
mu = 1e7
gamma_m = 0.0
Gamma_q = 0.0
n0m = 0.0
eta = 1.0
chi_override = 2560.0
gprime_override = -756000.0
"#;

fn config(extra: &str, out: &Path) -> RunConfig {
    parse_config(&format!("{extra}\n[output]\npath = {:?}\n{BARE}", out.to_str().unwrap())).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (cols, rows) = parse_rows(&fs::read_to_string(path).unwrap());
    let i = cols.iter().position(|c| c == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn mechanical_bath_heats_ground_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        "mode = \"unconditional\"\n[model]\nn_levels = 20\ninitial_fock = 0\nfeedback = false\n[integrator]\nt_final = 1e-3\ndt = 1e-6\nsample_stride = 10",
        dir.path(),
    );
    cfg.params.damping = qnd_sim::config::Damping::Rate(1e3);
    cfg.params.n0m = 2.0;
    cfg.params.gamma_override = Some(0.0);
    run(&cfg).unwrap();
    let t = column(&dir.path().join("unconditional.csv"), "t");
    let n = column(&dir.path().join("fig1.csv"), "mean_n");
    for (t, n) in t.iter().zip(&n) {
        let exact = 2.0 * (1.0 - (-1e3 * t).exp());
        assert!((n - exact).abs() < 1e-3, "t = {t}: {n} vs {exact}");
    }
    assert!((n.last().unwrap() - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-3);
}

#[test]
fn drift_only_signal_oscillates_at_shifted_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "mode = \"unconditional\"\n[model]\nn_levels = 6\ninitial_fock = 2\nqubit_init = \"plus-y\"\ndrift_only = true\n[integrator]\nt_final = 1e-3\ndt = 1e-7\nsample_stride = 50",
        dir.path(),
    );
    run(&cfg).unwrap();
    let fig = dir.path().join("fig2.csv");
    let (t, sy) = (column(&fig, "t"), column(&fig, "sy"));
    let omega = 2.0 * (0.0 + 2560.0 * 2.0);
    for (t, s) in t.iter().zip(&sy) {
        assert!((s - (omega * t).cos()).abs() < 1e-6, "t = {t}: {s}");
    }
}

#[test]
fn fock_state_stays_sharp_without_damping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "mode = \"trajectory\"\n[model]\nn_levels = 8\ninitial_fock = 3\n[integrator]\nt_final = 2e-4\nseed = 4",
        dir.path(),
    );
    run(&cfg).unwrap();
    let fig = dir.path().join("fig1.csv");
    for (m, v) in column(&fig, "mean_n").iter().zip(column(&fig, "var_n")) {
        assert!((m - 3.0).abs() < 1e-9 && v.abs() < 1e-9, "{m} {v}");
    }
    assert!(column(&dir.path().join("record.csv"), "dr").len() > 100);
}

#[test]
fn efficiency_figure_refuses_mixed_runs() {
    let dir = tempfile::tempdir().unwrap();
    let base = config(
        "mode = \"ensemble\"\n[model]\nn_levels = 6\ninitial_nbar = 0.5\n[ensemble]\nsize = 2\n[integrator]\nt_final = 2e-5",
        dir.path(),
    );
    let low = base.with_eta(0.5);
    let mut other = low.clone();
    other.params.chi_override = Some(3000.0);
    let (a, b, c) = (run_ensemble(&base).unwrap(), run_ensemble(&low).unwrap(), run_ensemble(&other).unwrap());
    let src = |cfg, records| FigureSource { config: cfg, records };
    let ok = figure_table(Figure::Fig3, &[src(&low, &b), src(&base, &a)]).unwrap();
    assert_eq!(ok.columns, ["t", "var_n_eta1", "var_n_etaLow"]);
    assert_eq!(ok.rows.len(), a[0].times.len());
    assert_eq!(figure_table(Figure::Fig3, &[src(&base, &a), src(&other, &c)]), Err(FigureError::MixedSpecs));
    assert_eq!(figure_table(Figure::Fig3, &[src(&base, &a), src(&base, &a)]), Err(FigureError::SameEfficiency));
    assert!(matches!(figure_table(Figure::Fig1, &[]), Err(FigureError::SourceCount { .. })));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let text = "mode = \"ensemble\"\n[model]\nn_levels = 6\n[ensemble]\nsize = 3\n[integrator]\nt_final = 5e-5\nseed = 11\n[analysis]\ncompare_eta = 0.5\nestimator_window = 2e-5";
    let cfg = |dir| {
        let mut c = config(text, dir);
        c.params.chi_override = Some(2.56e5);
        c
    };
    let ra = run(&cfg(a.path())).unwrap();
    let rb = run(&cfg(b.path())).unwrap();
    assert_eq!(ra.manifest_hash, rb.manifest_hash);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(sa.iter().any(|(n, _)| n == "traj_0002.csv"));
    assert!(sa.iter().any(|(n, _)| n == "fig3.csv"));
    assert!(sa.iter().any(|(n, _)| n == "bands.csv"));
    assert!(column(&a.path().join("estimator.csv"), "confidence").len() >= 3);
    assert_eq!(sa, sb);
}

#[test]
fn seeds_change_trajectories() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let text = |seed| format!("mode = \"trajectory\"\n[model]\nn_levels = 6\n[integrator]\nt_final = 2e-5\nseed = {seed}");
    run(&config(&text(1), a.path())).unwrap();
    run(&config(&text(2), b.path())).unwrap();
    assert_ne!(column(&a.path().join("record.csv"), "dr"), column(&b.path().join("record.csv"), "dr"));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qnd-sim")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = cli(&["--preset", "paper-sec6", "--mode", "unconditional", "--t-final", "1e-5", "--n-levels", "4", "--out", out]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("manifest.txt").exists());

    let missing = cli(&["--preset", "paper-sec6", "--out", out]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("mode"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "mode = \"trajectory\"\npreset = \"paper-sec6\"\n[params]\neta = 1.5\n").unwrap();
    assert_eq!(cli(&[bad.to_str().unwrap(), "--out", out]).status.code(), Some(1));

    let weak = dir.path().join("weak.toml");
    fs::write(&weak, "mode = \"trajectory\"\npreset = \"paper-sec6\"\n[params]\nmu = 1e6\n").unwrap();
    assert_eq!(cli(&[weak.to_str().unwrap(), "--strict", "--out", out]).status.code(), Some(1));

    let leak = cli(&[
        "--preset", "paper-sec6", "--mode", "trajectory", "--t-final", "1e-3", "--n-levels", "2", "--out", out,
    ]);
    assert!(leak.status.success());
}

#[test]
fn flags_override_file_and_preset() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    fs::write(&file, "mode = \"unconditional\"\npreset = \"paper-sec6\"\n[integrator]\nseed = 3\nt_final = 1e-5\n[model]\nn_levels = 4\n").unwrap();
    let out = dir.path().join("o");
    let r = cli(&[file.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.integrator.seed = 9\n"));
    assert!(manifest.contains("config.model.n_levels = 4\n"));
    assert!(manifest.contains("config.params.chi_override = 2560.0\n"));
}

#[test]
fn worker_count_does_not_change_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let text = "mode = \"ensemble\"\n[model]\nn_levels = 6\n[ensemble]\nsize = 4\n[integrator]\nt_final = 3e-5\nseed = 5";
    for (dir, threads) in [(a.path(), 1), (b.path(), 3)] {
        let cfg = config(text, dir);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(&cfg)).unwrap();
    }
    assert_eq!(snapshot(a.path()), snapshot(b.path()));
}
