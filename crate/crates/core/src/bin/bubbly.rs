use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use bubbly_core::bubble_solver::{scattered_series, solve_coupled, write_probe_csv};
use bubbly_core::config::ExperimentConfig;
use bubbly_core::effective::laplace::coercivity_csv;
use bubbly_core::effective::{effective_series, solve_effective, write_series_csv};
use bubbly_core::harness::{
    default_probes, emit_outputs, multiplicity_equivalence, point_source, run_comparison, run_fdtd, run_laplace,
    sample_times, setup_delta,
};
use bubbly_core::numerics::fmt17;
use bubbly_core::placement::{cloud_stats, save_cloud, RegimeBands};
use bubbly_core::Result;

#[derive(Parser)]
#[command(name = "bubbly", version, about = "Bubble-cloud scattering and effective-medium solvers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the placement seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the bubble cloud for each bubble size and write it out.
    Generate,
    /// Evaluate the invertibility conditions for each bubble size.
    CheckConditions,
    /// Solve the discrete system for one bubble size.
    SolveBubbles {
        /// Bubble size; the first of the sweep when absent.
        #[arg(long)]
        delta: Option<f64>,
        /// Write every n-th trajectory node.
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Solve the voxelised effective equation for one bubble size.
    SolveEffective {
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run the dispersive FDTD scheme and its integral-equation cross-check.
    SolveFdtd {
        /// Largest accepted relative L2 distance to the reference.
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
    },
    /// Check the frequency-domain bound and the Bromwich inversion.
    LaplaceCheck {
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Discrete versus effective comparison for one bubble size.
    Compare {
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Full sweep over bubble sizes with rate fit.
    Sweep {
        /// Smallest accepted fitted slope.
        #[arg(long, default_value_t = 0.25)]
        min_slope: f64,
        /// Skip the K = 2 versus tripled-strength check.
        #[arg(long)]
        skip_equivalence: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            error!("assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn pick_delta(cfg: &ExperimentConfig, delta: Option<f64>) -> f64 {
    delta.unwrap_or(cfg.deltas[0])
}

fn check(ok: bool, what: &str) -> bool {
    if ok {
        info!("PASS {what}");
    } else {
        error!("FAIL {what}");
    }
    ok
}

fn writer(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run(cli: &Cli) -> Result<bool> {
    let (cfg, out) = load(&cli.common)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    match &cli.command {
        Command::Generate => {
            let bands = RegimeBands::default();
            let mut summary = String::from("delta,M,d,eps,cells,dropped_volume\n");
            for (k, &delta) in cfg.deltas.iter().enumerate() {
                let s = setup_delta(&cfg, delta)?;
                save_cloud(&s.cloud, &out.join(format!("cloud_{k}.txt")))?;
                let stats = cloud_stats(&s.cloud, &bands);
                info!("delta = {delta}: {stats:?}");
                summary.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    fmt17(delta),
                    s.cloud.len(),
                    fmt17(stats.d),
                    fmt17(s.partition.eps),
                    s.partition.cells.len(),
                    fmt17(s.partition.dropped_volume)
                ));
            }
            fs::write(out.join("clouds.csv"), summary)?;
            Ok(true)
        }
        Command::CheckConditions => {
            let mut csv = String::from("delta,condition,lhs,rhs,margin,pass\n");
            let mut ok = true;
            for &delta in &cfg.deltas {
                let s = setup_delta(&cfg, delta)?;
                println!("delta = {delta}, M = {}\n{}", s.cloud.len(), s.conditions.to_text());
                for row in s.conditions.csv_rows() {
                    csv.push_str(&format!("{},{row}\n", fmt17(delta)));
                }
                ok &= check(s.conditions.invertibility_pass(), &format!("C1-C3 at delta = {delta}"));
            }
            fs::write(out.join("conditions.csv"), csv)?;
            Ok(ok)
        }
        Command::SolveBubbles { delta, stride } => {
            let s = setup_delta(&cfg, pick_delta(&cfg, *delta))?;
            let src = point_source(&cfg)?;
            let traj = solve_coupled(&s.system, &src, &s.time)?;
            traj.write_csv(writer(&out, "trajectories.csv")?, *stride)?;
            let probes = default_probes(&cfg)?;
            let times = sample_times(&cfg);
            let u = scattered_series(&traj, &probes, &times)?;
            write_probe_csv(writer(&out, "probes.csv")?, &probes, &times, &u)?;
            Ok(true)
        }
        Command::SolveEffective { delta } => {
            let s = setup_delta(&cfg, pick_delta(&cfg, *delta))?;
            let src = point_source(&cfg)?;
            let field = solve_effective(&s.grid, &src, &s.time, true)?;
            let times = sample_times(&cfg);
            let w = effective_series(&field, &default_probes(&cfg)?, &times)?;
            write_series_csv(writer(&out, "effective_probes.csv")?, &times, &w)?;
            Ok(true)
        }
        Command::SolveFdtd { tolerance } => {
            let r = run_fdtd(&cfg)?;
            write_series_csv(writer(&out, "fdtd_probes.csv")?, &r.times, &r.fdtd)?;
            if let Some(reference) = &r.reference {
                write_series_csv(writer(&out, "reference_probes.csv")?, &r.times, reference)?;
            }
            if let Some(res) = r.residual {
                println!("sine-kernel residual: {res:.6e}");
            }
            match r.relative_l2 {
                Some(e) => {
                    println!("relative L2 distance to the integral equation: {e:.6e}");
                    Ok(check(e <= *tolerance, "FDTD agrees with the integral equation"))
                }
                None => Ok(true),
            }
        }
        Command::LaplaceCheck { tolerance } => {
            let r = run_laplace(&cfg)?;
            fs::write(out.join("laplace.csv"), coercivity_csv(&r.rows))?;
            let mut csv = String::from("t,bromwich,marched\n");
            for ((t, a), b) in r.times.iter().zip(&r.bromwich).zip(&r.marched) {
                csv.push_str(&format!("{},{},{}\n", fmt17(*t), fmt17(*a), fmt17(*b)));
            }
            fs::write(out.join("bromwich.csv"), csv)?;
            println!("Bromwich relative L2 distance: {:.6e}", r.bromwich_error);
            let a = check(r.all_pass(), "coercivity bound at every sample");
            let b = check(r.bromwich_error <= *tolerance, "Bromwich inversion matches time marching");
            Ok(a && b)
        }
        Command::Compare { delta } => {
            let mut one = cfg.clone();
            one.deltas = vec![pick_delta(&cfg, *delta)];
            let r = run_comparison(&one)?;
            emit_outputs(&r, &out)?;
            let e = &r.entries[0];
            println!("delta = {}, M = {}, e_max = {:.6e}, e_l2 = {:.6e}", e.delta, e.m, e.e_max, e.e_l2);
            Ok(check(e.conditions.invertibility_pass(), "C1-C3") & check(e.e_max.is_finite(), "entry solved"))
        }
        Command::Sweep {
            min_slope,
            skip_equivalence,
        } => {
            let r = run_comparison(&cfg)?;
            emit_outputs(&r, &out)?;
            for e in &r.entries {
                println!("delta = {:.3e}  M = {:5}  e_max = {:.6e}  e_l2 = {:.6e}", e.delta, e.m, e.e_max, e.e_l2);
            }
            let mut ok = check(r.entries.iter().all(|e| e.conditions.invertibility_pass()), "C1-C3 at every delta");
            let decreasing = r.entries.windows(2).all(|w| w[1].e_max < w[0].e_max);
            ok &= check(decreasing, "error strictly decreasing");
            match r.fit {
                Some(f) => {
                    println!("slope = {:.6}, intercept = {:.6}, residual = {:.3e}", f.slope, f.intercept, f.residual);
                    ok &= check(f.slope >= *min_slope, &format!("slope >= {min_slope}"));
                }
                None => ok &= check(false, "rate fit defined"),
            }
            if !skip_equivalence {
                let eq = multiplicity_equivalence(&cfg, cfg.deltas[0])?;
                println!("K = 2 versus tripled strength: relative L2 = {:.6e}", eq.relative_l2);
                ok &= check(eq.relative_l2 <= 0.05, "K = 2 matches tripled strength");
            }
            Ok(ok)
        }
    }
}
