use std::fs;
use std::path::Path;
use std::process::Command;

use bubbly_core::config::ExperimentConfig;
use bubbly_core::harness::{emit_outputs, parse_errors_csv, run_comparison};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig { deltas: vec![0.1, 0.05, 0.025, 0.0125], ..Default::default() };
    cfg.times.t_end = 6.0;
    cfg.times.sample_step = 0.1;
    cfg
}

fn without_runtime(errors_csv: &str) -> String {
    errors_csv
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sweep_outputs_are_deterministic() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_outputs(&run_comparison(&cfg).unwrap(), a.path()).unwrap();
    emit_outputs(&run_comparison(&cfg).unwrap(), b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for name in names {
        let x = fs::read_to_string(a.path().join(&name)).unwrap();
        let y = fs::read_to_string(b.path().join(&name)).unwrap();
        if name == "errors.csv" {
            assert_eq!(without_runtime(&x), without_runtime(&y));
        } else if name != "notes.txt" {
            assert_eq!(x, y, "{name:?}");
        }
    }
    let rows = parse_errors_csv(&fs::read_to_string(a.path().join("errors.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.e_max > 0.0 && r.e_l2 > 0.0));
}

#[test]
fn parallel_sweep_matches_sequential() {
    let cfg = small();
    let seq = run_comparison(&cfg).unwrap();
    let par = run_comparison(&ExperimentConfig {
        parallel_sweep: true,
        ..cfg
    })
    .unwrap();
    for (a, b) in seq.entries.iter().zip(&par.entries) {
        assert_eq!(a.e_max, b.e_max);
        assert_eq!(a.u_s, b.u_s);
    }
}

fn bubbly(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bubbly"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn cli_subcommands_write_outputs_and_report_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, small().to_toml().unwrap()).unwrap();
    let cfg = cfg_path.to_str().unwrap();

    let out = bubbly(dir.path(), &["--config", cfg, "--threads", "2", "generate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("cloud_3.txt").exists());

    let out = bubbly(dir.path(), &["--config", cfg, "check-conditions"]);
    assert!(out.status.success());
    assert!(fs::read_to_string(dir.path().join("conditions.csv")).unwrap().contains(",C2,"));

    let out = bubbly(dir.path(), &["--config", cfg, "--seed", "5", "solve-bubbles", "--delta", "0.05"]);
    assert!(out.status.success());
    assert!(fs::read_to_string(dir.path().join("trajectories.csv")).unwrap().starts_with("t,i,Y,Ydot,Yddot\n"));
    assert!(fs::read_to_string(dir.path().join("probes.csv")).unwrap().starts_with("t,probe,x,y,z,u_s\n"));
    assert!(fs::read_to_string(dir.path().join("config.toml")).unwrap().contains("seed = 5"));

    let out = bubbly(dir.path(), &["--config", cfg, "solve-effective"]);
    assert!(out.status.success());
    assert!(fs::read_to_string(dir.path().join("effective_probes.csv")).unwrap().starts_with("t,probe,value\n"));

    let out = bubbly(dir.path(), &["--config", cfg, "compare"]);
    assert!(out.status.success());
    assert_eq!(parse_errors_csv(&fs::read_to_string(dir.path().join("errors.csv")).unwrap()).unwrap().len(), 1);

    let mut sweep = small();
    sweep.deltas = vec![8e-3, 4e-3, 2e-3];
    fs::write(&cfg_path, sweep.to_toml().unwrap()).unwrap();
    let out = bubbly(dir.path(), &["--config", cfg, "sweep"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(dir.path().join("rate_plot.csv")).unwrap().starts_with("log10_delta,log10_e,log10_fit\n"));

    // An unreachable slope makes the run fail its assertions.
    let out = bubbly(dir.path(), &["--config", cfg, "sweep", "--skip-equivalence", "--min-slope", "10"]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&cfg_path, "deltas = [0.01, 0.02]\n").unwrap();
    let out = bubbly(dir.path(), &["--config", cfg, "generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("decreasing"));
}

#[test]
fn fdtd_and_laplace_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(
        &cfg_path,
        "[times]\nt_end = 8.0\n[fdtd]\ndx = 0.125\nreference_edge = 0.25\n\
         [laplace]\nvoxel_edge = 0.25\nomegas = [0.0, 4.0]\nbromwich_t_end = 8.0\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let out = bubbly(dir.path(), &["--config", cfg, "solve-fdtd"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("reference_probes.csv").exists());
    let out = bubbly(dir.path(), &["--config", cfg, "laplace-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lap = fs::read_to_string(dir.path().join("laplace.csv")).unwrap();
    assert_eq!(lap.lines().count(), 5);
}
