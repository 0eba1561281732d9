//! Discrete-versus-effective comparison, bubble-size sweeps, rate fits,
//! discretisation diagnostics and output files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bubble_solver::{scattered_series, solve_coupled, TimeGrid};
use crate::coefficients::{check_conditions, minnaert_h, scattering_b, ConditionReport, CouplingSystem, KernelNormalization};
use crate::config::ExperimentConfig;
use crate::effective::fdtd::{solve_fdtd, DispersiveMedium, Excitation, FdtdConfig};
use crate::effective::laplace::{bromwich_probe, coercivity_check, BromwichParams, CoercivityRow};
use crate::effective::{build_grid, effective_series, relative_l2, solve_effective, EffectiveGrid};
use crate::error::{invalid, Error, Result};
use crate::incident::PointSource;
use crate::numerics::{box_inverse_distance_integral, dist, fmt17, gauss_legendre, linear_fit, norm, sub, Point};
use crate::placement::{min_distance, partition_domain, place_bubbles, BubbleCloud, CellPartition, Domain, KField};

/// Probe points on a sphere about the domain centroid, from a Fibonacci
/// lattice of directions with those near the source direction removed.
pub fn default_probes(cfg: &ExperimentConfig) -> Result<Vec<Point>> {
    if let Some(p) = &cfg.probes.points {
        return Ok(p.clone());
    }
    let c = cfg.domain.centroid();
    let radius = cfg.probes.radius_factor * cfg.domain.circumradius();
    let to_src = sub(cfg.source, c);
    let src_dir = if norm(to_src) > 0.0 {
        let n = norm(to_src);
        [to_src[0] / n, to_src[1] / n, to_src[2] / n]
    } else {
        [0.0; 3]
    };
    let cos_limit = cfg.probes.exclusion_deg.to_radians().cos();
    let golden = PI * (3.0 - 5f64.sqrt());
    let lattice = 4 * cfg.probes.count.max(1) + 8;
    let mut out = Vec::with_capacity(cfg.probes.count);
    for k in 0..lattice {
        if out.len() == cfg.probes.count {
            break;
        }
        let z = 1.0 - (2.0 * k as f64 + 1.0) / lattice as f64;
        let rho = (1.0 - z * z).sqrt();
        let phi = golden * k as f64;
        let d = [rho * phi.cos(), rho * phi.sin(), z];
        if d[0] * src_dir[0] + d[1] * src_dir[1] + d[2] * src_dir[2] > cos_limit {
            continue;
        }
        out.push([c[0] + radius * d[0], c[1] + radius * d[1], c[2] + radius * d[2]]);
    }
    if out.len() < cfg.probes.count {
        return invalid("exclusion cone leaves too few probe directions");
    }
    Ok(out)
}

pub fn sample_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = (cfg.times.t_end / cfg.times.sample_step).round() as usize;
    (0..=n).map(|k| k as f64 * cfg.times.sample_step).collect()
}

/// Cell volume used for a bubble size: delta times the shape diameter, or
/// its snapped value (cells per edge = round(eps^{-1/3})) that tiles the
/// smallest side of a box domain exactly.
pub fn cell_volume(cfg: &ExperimentConfig, delta: f64) -> Result<f64> {
    let eps = delta * cfg.shape.constants()?.diameter;
    if !cfg.grid.snap_tiling {
        return Ok(eps);
    }
    match &cfg.domain {
        Domain::Box { min, max } => {
            let side = (0..3).map(|i| max[i] - min[i]).fold(f64::INFINITY, f64::min);
            let n = (side / eps.cbrt()).round().max(1.0);
            Ok((side / n).powi(3))
        }
        Domain::Ball { .. } => Ok(eps),
    }
}

/// Everything built for one bubble size before solving.
pub struct DeltaSetup {
    pub delta: f64,
    pub partition: CellPartition,
    pub cloud: BubbleCloud,
    pub system: CouplingSystem,
    pub conditions: ConditionReport,
    pub grid: EffectiveGrid,
    pub time: TimeGrid,
}

/// Effective scattering strength per unit volume for a bubble size and cell
/// volume: b_bar delta / eps.
pub fn effective_strength(cfg: &ExperimentConfig, delta: f64, eps: f64) -> Result<f64> {
    let shape = cfg.shape.constants()?;
    Ok(cfg.b_bar_factor * scattering_b(&shape, &cfg.medium) * delta / eps)
}

pub fn setup_delta(cfg: &ExperimentConfig, delta: f64) -> Result<DeltaSetup> {
    let shape = cfg.shape.constants()?;
    let eps = cell_volume(cfg, delta)?;
    let partition = partition_domain(&cfg.domain, eps)?;
    let cloud = place_bubbles(&partition, &cfg.k, delta, &[shape.diameter], cfg.seed)?;
    let mut system = CouplingSystem::new(&cloud, &[shape], &cfg.medium, KernelNormalization::FreeSpace)?;
    for b in &mut system.b {
        *b *= cfg.b_bar_factor;
    }
    let conditions = check_conditions(&system, &cloud, &[shape], &cfg.medium, cfg.lambda1)?;
    let hbar = minnaert_h(&shape, &cfg.medium);
    let grid = build_grid(
        &cfg.domain,
        partition.edge() / cfg.grid.refine as f64,
        &cfg.k,
        effective_strength(cfg, delta, eps)?,
        hbar,
        cfg.medium.c0(),
        cfg.grid.self_rule,
    )?;
    let h = cfg
        .times
        .step
        .unwrap_or_else(|| TimeGrid::default_step(system.tau_min(), cfg.pulse.duration, hbar));
    let time = TimeGrid::new(cfg.times.t_end, h)?;
    Ok(DeltaSetup {
        delta,
        partition,
        cloud,
        system,
        conditions,
        grid,
        time,
    })
}

/// Outcome of one sweep entry.
#[derive(Debug, Clone)]
pub struct DeltaResult {
    pub delta: f64,
    pub m: usize,
    pub d: f64,
    pub eps: f64,
    pub e_max: f64,
    pub e_l2: f64,
    pub runtime_s: f64,
    pub conditions: ConditionReport,
    /// Discrete scattered field, [probe][time].
    pub u_s: Vec<Vec<f64>>,
    /// Effective scattered field, [probe][time].
    pub w_s: Vec<Vec<f64>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub probes: Vec<Point>,
    pub times: Vec<f64>,
    pub entries: Vec<DeltaResult>,
    /// Fit of log10 e_max against log10 delta, when at least three entries
    /// have positive error.
    pub fit: Option<RateFit>,
}

/// Sup-norm and worst per-probe relative L2 distance between two probe sets.
pub fn field_errors(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, f64) {
    let mut e_max: f64 = 0.0;
    let mut e_l2: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            e_max = e_max.max((x - y).abs());
        }
        if rb.iter().any(|v| *v != 0.0) {
            e_l2 = e_l2.max(relative_l2(ra, rb));
        }
    }
    (e_max, e_l2)
}

fn run_delta(cfg: &ExperimentConfig, src: &PointSource, probes: &[Point], times: &[f64], delta: f64) -> Result<DeltaResult> {
    let start = Instant::now();
    let annotate = |e: Error| Error::AtDelta {
        delta,
        source: Box::new(e),
    };
    let setup = setup_delta(cfg, delta).map_err(annotate)?;
    let m = setup.cloud.len();
    let mut notes = Vec::new();
    if !setup.conditions.invertibility_pass() {
        let failed: Vec<&str> = setup
            .conditions
            .rows
            .iter()
            .filter(|r| !r.pass && r.id.starts_with('C'))
            .map(|r| r.id)
            .collect();
        let msg = format!("delta = {delta}: conditions not satisfied: {}", failed.join(", "));
        warn!("{msg}");
        notes.push(msg);
    }
    let cost = (m as f64).powi(2) * setup.time.n_steps as f64;
    let mut result = DeltaResult {
        delta,
        m,
        d: min_distance(&setup.cloud.centers),
        eps: setup.partition.eps,
        e_max: f64::NAN,
        e_l2: f64::NAN,
        runtime_s: 0.0,
        conditions: setup.conditions.clone(),
        u_s: Vec::new(),
        w_s: Vec::new(),
        notes,
    };
    if cost > cfg.cost_budget {
        let msg = format!("delta = {delta}: skipped, predicted cost {cost:.3e} exceeds budget {:.3e}", cfg.cost_budget);
        warn!("{msg}");
        result.notes.push(msg);
        return Ok(result);
    }
    info!("delta = {delta}: M = {m}, {} steps of {}", setup.time.n_steps, setup.time.h);
    let traj = solve_coupled(&setup.system, src, &setup.time).map_err(annotate)?;
    let field = solve_effective(&setup.grid, src, &setup.time, true).map_err(annotate)?;
    result.u_s = scattered_series(&traj, probes, times).map_err(annotate)?;
    result.w_s = effective_series(&field, probes, times).map_err(annotate)?;
    let (e_max, e_l2) = field_errors(&result.u_s, &result.w_s);
    result.e_max = e_max;
    result.e_l2 = e_l2;
    result.runtime_s = start.elapsed().as_secs_f64();
    info!("delta = {delta}: e_max = {e_max:.6e}, e_l2 = {e_l2:.6e}");
    Ok(result)
}

pub fn point_source(cfg: &ExperimentConfig) -> Result<PointSource> {
    PointSource::new(cfg.source, cfg.pulse, cfg.medium.c0())
}

/// Runs the discrete and effective models for every bubble size and fits
/// the decay rate of their difference at the probes.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonResult> {
    cfg.validate()?;
    let src = point_source(cfg)?;
    let probes = default_probes(cfg)?;
    let times = sample_times(cfg);
    let entries: Vec<DeltaResult> = if cfg.parallel_sweep {
        cfg.deltas
            .par_iter()
            .map(|&d| run_delta(cfg, &src, &probes, &times, d))
            .collect::<Result<_>>()?
    } else {
        cfg.deltas
            .iter()
            .map(|&d| run_delta(cfg, &src, &probes, &times, d))
            .collect::<Result<_>>()?
    };
    let points: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.e_max > 0.0 && e.e_max.is_finite())
        .map(|e| (e.delta, e.e_max))
        .collect();
    let fit = if points.len() >= 3 { fit_rate(&points).ok() } else { None };
    Ok(ComparisonResult {
        probes,
        times,
        entries,
        fit,
    })
}

/// Least-squares line through (log10 delta, log10 e) over the positive,
/// finite errors.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(d, e)| *d > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(d, e)| (d.log10(), e.log10()))
        .unzip();
    if x.len() < 2 {
        return invalid("a rate fit needs at least two positive errors");
    }
    let (slope, intercept) = linear_fit(&x, &y).ok_or_else(|| Error::InvalidInput("degenerate rate fit".into()))?;
    let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (ss / x.len() as f64).sqrt(),
    })
}

/// Relative L2 distance at the probes between the effective fields of a
/// K = 2 medium and a K = 0 medium with three times the scattering strength.
pub fn multiplicity_equivalence(cfg: &ExperimentConfig, delta: f64) -> Result<EquivalenceReport> {
    let src = point_source(cfg)?;
    let probes = default_probes(cfg)?;
    let times = sample_times(cfg);
    let mut with_k = cfg.clone();
    with_k.k = KField::constant(2.0);
    let mut tripled = cfg.clone();
    tripled.k = KField::constant(0.0);
    tripled.b_bar_factor = 3.0 * cfg.b_bar_factor;
    let a = setup_delta(&with_k, delta)?;
    let b = setup_delta(&tripled, delta)?;
    // Same step for both so the comparison isolates the model.
    let time = if a.time.h <= b.time.h { a.time } else { b.time };
    let fa = solve_effective(&a.grid, &src, &time, true)?;
    let fb = solve_effective(&b.grid, &src, &time, true)?;
    let wa = effective_series(&fa, &probes, &times)?;
    let wb = effective_series(&fb, &probes, &times)?;
    let (_, rel) = field_errors(&wa, &wb);
    Ok(EquivalenceReport {
        relative_l2: rel,
        bubbles_k2: a.cloud.len(),
        bubbles_tripled: b.cloud.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub relative_l2: f64,
    pub bubbles_k2: usize,
    pub bubbles_tripled: usize,
}

/// Geometric error terms separating the discrete sum from the volume
/// integral on a matched cloud and partition. Kernel integrals are of
/// 1/|x - y| unless stated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    /// Max over probes of the integral of 1/(4 pi |x - y|) over the part of
    /// the domain not covered by cells.
    pub boundary_layer: f64,
    /// Self-cell integral over the equivalent ball, by quadrature.
    pub self_ball: f64,
    /// The split-ball formula 2 pi r^2 + (eps - 4 pi r^3 / 3) / r at the
    /// critical radius.
    pub self_formula: f64,
    /// Self-cell integral over the actual cube.
    pub self_cube: f64,
    /// Max over probes of the summed per-cell gap between the exact integral
    /// of 1/(4 pi |x - y|) and its centroid value.
    pub midpoint: f64,
    /// Max over bubbles of |eps * sum over other cells psi / r - int psi [theta] / r|.
    pub localized: f64,
}

/// Evaluates the diagnostics; `psi` is the smooth test function of the
/// localized discrete-to-continuum comparison.
pub fn discretization_gap(
    cloud: &BubbleCloud,
    partition: &CellPartition,
    probes: &[Point],
    psi: impl Fn(Point) -> f64 + Sync,
) -> Result<GapReport> {
    if (cloud.eps - partition.eps).abs() > 1e-12 * partition.eps || cloud.domain != partition.domain {
        return invalid("cloud and partition were built on different cells");
    }
    let eps = partition.eps;
    let edge = partition.edge();
    let cell_box = |c: usize| {
        let lo = partition.cells[c].lo;
        (lo, [lo[0] + edge, lo[1] + edge, lo[2] + edge])
    };

    let boundary_layer = if partition.dropped_volume <= 1e-12 * partition.domain.volume() {
        0.0
    } else {
        uncovered_potential(partition, probes)
    };

    let r = (3.0 * eps / (4.0 * PI)).cbrt();
    let self_ball = {
        let (x, w) = gauss_legendre(16);
        let mut s = 0.0;
        for (xr, wr) in x.iter().zip(&w) {
            let rho = 0.5 * r * (xr + 1.0);
            for (xt, wt) in x.iter().zip(&w) {
                let th = 0.5 * PI * (xt + 1.0);
                s += wr * wt * 0.5 * r * 0.5 * PI * 2.0 * PI * rho * th.sin();
            }
        }
        s
    };
    let self_formula = 2.0 * PI * r * r + (eps - 4.0 * PI * r.powi(3) / 3.0) / r;
    let self_cube = {
        let h = 0.5 * edge;
        box_inverse_distance_integral([-h; 3], [h; 3], [0.0; 3])
    };

    let midpoint = probes
        .par_iter()
        .map(|&x| {
            (0..partition.cells.len())
                .map(|c| {
                    let (lo, hi) = cell_box(c);
                    let exact = box_inverse_distance_integral(lo, hi, x);
                    (exact - eps / dist(x, partition.cells[c].centroid())).abs() / (4.0 * PI)
                })
                .sum::<f64>()
        })
        .reduce(|| 0.0, f64::max);

    let counts = {
        let mut n = vec![0usize; partition.cells.len()];
        for &c in &cloud.cell_ids {
            n[c] += 1;
        }
        n
    };
    let localized = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let zi = cloud.centers[i];
            let discrete: f64 = (0..cloud.len())
                .filter(|&j| cloud.cell_ids[j] != cloud.cell_ids[i])
                .map(|j| psi(cloud.centers[j]) / dist(zi, cloud.centers[j]))
                .sum::<f64>()
                * eps;
            let continuum: f64 = (0..partition.cells.len())
                .map(|c| {
                    let (lo, hi) = cell_box(c);
                    psi(partition.cells[c].centroid()) * counts[c] as f64 * box_inverse_distance_integral(lo, hi, zi)
                })
                .sum();
            (discrete - continuum).abs()
        })
        .reduce(|| 0.0, f64::max);

    Ok(GapReport {
        boundary_layer,
        self_ball,
        self_formula,
        self_cube,
        midpoint,
        localized,
    })
}

/// Midpoint-rule potential of the uncovered region on a 96^3 lattice over
/// the bounding box.
fn uncovered_potential(partition: &CellPartition, probes: &[Point]) -> f64 {
    const N: usize = 96;
    let (lo, hi) = partition.domain.bounds();
    let step: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]) / N as f64).collect();
    let dv = step[0] * step[1] * step[2];
    let edge = partition.edge();
    let origin = {
        let c = &partition.cells[0];
        let idx = partition.index[0];
        [
            c.lo[0] - idx[0] as f64 * edge,
            c.lo[1] - idx[1] as f64 * edge,
            c.lo[2] - idx[2] as f64 * edge,
        ]
    };
    let covered: std::collections::HashSet<[usize; 3]> = partition.index.iter().copied().collect();
    let mut pts = Vec::new();
    for i in 0..N {
        for j in 0..N {
            for k in 0..N {
                let y = [
                    lo[0] + (i as f64 + 0.5) * step[0],
                    lo[1] + (j as f64 + 0.5) * step[1],
                    lo[2] + (k as f64 + 0.5) * step[2],
                ];
                if !partition.domain.contains(y, 0.0) {
                    continue;
                }
                let f: Vec<f64> = (0..3).map(|a| ((y[a] - origin[a]) / edge).floor()).collect();
                let inside = f.iter().all(|v| *v >= 0.0) && covered.contains(&[f[0] as usize, f[1] as usize, f[2] as usize]);
                if !inside {
                    pts.push(y);
                }
            }
        }
    }
    probes
        .iter()
        .map(|&x| pts.iter().map(|&y| dv / (4.0 * PI * dist(x, y))).sum::<f64>())
        .fold(0.0, f64::max)
}

/// FDTD run of the effective medium described by the `fdtd` section, with
/// the optional integral-equation reference at the same probes.
#[derive(Debug, Clone)]
pub struct FdtdReport {
    pub probes: Vec<Point>,
    pub times: Vec<f64>,
    /// FDTD pressure, [probe][time].
    pub fdtd: Vec<Vec<f64>>,
    /// Reference scattered pressure (minus the effective potential), [probe][time].
    pub reference: Option<Vec<Vec<f64>>>,
    /// Worst per-probe relative L2 distance to the reference.
    pub relative_l2: Option<f64>,
    pub residual: Option<f64>,
}

pub fn dispersive_medium(cfg: &ExperimentConfig) -> DispersiveMedium {
    DispersiveMedium {
        domain: cfg.domain.clone(),
        k: cfg.k.clone(),
        b: cfg.fdtd.b,
        hbar: cfg.fdtd.hbar,
        c0: cfg.medium.c0(),
    }
}

pub fn run_fdtd(cfg: &ExperimentConfig) -> Result<FdtdReport> {
    cfg.validate()?;
    let fd = &cfg.fdtd;
    let medium = dispersive_medium(cfg);
    let src = point_source(cfg)?;
    let probes = default_probes(cfg)?;
    let fcfg = FdtdConfig {
        dispersive: fd.dispersive,
        excitation: fd.excitation,
        residual: fd.residual,
        ..FdtdConfig::new(fd.dx, fd.padding, cfg.times.t_end)
    };
    let out = solve_fdtd(&medium, &src, &fcfg, &probes)?;
    let mut report = FdtdReport {
        probes,
        times: out.times,
        fdtd: out.probes,
        reference: None,
        relative_l2: None,
        residual: out.residual,
    };
    if let (Some(edge), Excitation::ScatteredField, true) = (fd.reference_edge, fd.excitation, fd.dispersive) {
        let grid = build_grid(&medium.domain, edge, &medium.k, medium.b, medium.hbar, medium.c0, cfg.grid.self_rule)?;
        let h = TimeGrid::default_step(grid.tau_min(), cfg.pulse.duration, medium.hbar).min(0.05);
        let field = solve_effective(&grid, &src, &TimeGrid::new(cfg.times.t_end + h, h)?, true)?;
        let reference: Vec<Vec<f64>> = effective_series(&field, &report.probes, &report.times)?
            .into_iter()
            .map(|row| row.into_iter().map(|v| -v).collect())
            .collect();
        report.relative_l2 = Some(field_errors(&report.fdtd, &reference).1);
        report.reference = Some(reference);
    }
    Ok(report)
}

/// Coercivity samples on the `laplace` grid and a Bromwich inversion at the
/// first probe compared against time marching.
#[derive(Debug, Clone)]
pub struct LaplaceReport {
    pub rows: Vec<CoercivityRow>,
    pub probe: Point,
    pub times: Vec<f64>,
    pub bromwich: Vec<f64>,
    pub marched: Vec<f64>,
    pub bromwich_error: f64,
}

impl LaplaceReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

pub fn run_laplace(cfg: &ExperimentConfig) -> Result<LaplaceReport> {
    cfg.validate()?;
    let lp = &cfg.laplace;
    let src = point_source(cfg)?;
    let grid = build_grid(&cfg.domain, lp.voxel_edge, &cfg.k, lp.b, lp.hbar, cfg.medium.c0(), cfg.grid.self_rule)?;
    let rows = coercivity_check(&grid, &src, &lp.sigmas, &lp.omegas)?;
    let probe = default_probes(cfg)?[0];
    let n = (lp.bromwich_t_end / 0.1).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * 0.1).collect();
    let bromwich = bromwich_probe(
        &grid,
        &src,
        probe,
        &BromwichParams {
            sigma: lp.bromwich_sigma,
            omega_max: lp.bromwich_omega_max,
            points: lp.bromwich_points,
        },
        &times,
    )?;
    let field = solve_effective(&grid, &src, &TimeGrid::new(lp.bromwich_t_end + 0.02, 0.02)?, true)?;
    let marched = effective_series(&field, &[probe], &times)?.remove(0);
    Ok(LaplaceReport {
        bromwich_error: relative_l2(&bromwich, &marched),
        rows,
        probe,
        times,
        bromwich,
        marched,
    })
}

pub const ERRORS_HEADER: &str = "delta,M,d,eps,e_max,e_l2,runtime_s";
pub const RATE_HEADER: &str = "log10_delta,log10_e,log10_fit";
pub const CONDITIONS_HEADER: &str = "delta,condition,lhs,rhs,margin,pass";
pub const PROBES_HEADER: &str = "t,probe,x,y,z,u_s,w_s";

/// One parsed row of errors.csv.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub delta: f64,
    pub m: usize,
    pub d: f64,
    pub eps: f64,
    pub e_max: f64,
    pub e_l2: f64,
    pub runtime_s: f64,
}

pub fn errors_csv(result: &ComparisonResult) -> String {
    let mut s = format!("{ERRORS_HEADER}\n");
    for e in &result.entries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt17(e.delta),
            e.m,
            fmt17(e.d),
            fmt17(e.eps),
            fmt17(e.e_max),
            fmt17(e.e_l2),
            fmt17(e.runtime_s)
        );
    }
    s
}

pub fn parse_errors_csv(text: &str) -> Result<Vec<ErrorRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == ERRORS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {ERRORS_HEADER}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].trim().parse::<f64>().map_err(|e| bad(format!("field {}: {e}", k + 1)));
        rows.push(ErrorRow {
            delta: num(0)?,
            m: f[1].trim().parse().map_err(|e| bad(format!("field 2: {e}")))?,
            d: num(2)?,
            eps: num(3)?,
            e_max: num(4)?,
            e_l2: num(5)?,
            runtime_s: num(6)?,
        });
    }
    Ok(rows)
}

pub fn conditions_csv(result: &ComparisonResult) -> String {
    let mut s = format!("{CONDITIONS_HEADER}\n");
    for e in &result.entries {
        for row in e.conditions.csv_rows() {
            let _ = writeln!(s, "{},{row}", fmt17(e.delta));
        }
    }
    s
}

pub fn rate_plot_csv(result: &ComparisonResult) -> String {
    let mut s = format!("{RATE_HEADER}\n");
    for e in &result.entries {
        if !(e.e_max > 0.0) || !e.e_max.is_finite() {
            continue;
        }
        let x = e.delta.log10();
        let fit = result.fit.map_or(f64::NAN, |f| f.slope * x + f.intercept);
        let _ = writeln!(s, "{},{},{}", fmt17(x), fmt17(e.e_max.log10()), fmt17(fit));
    }
    s
}

pub fn probes_csv(result: &ComparisonResult, entry: &DeltaResult) -> String {
    let mut s = format!("{PROBES_HEADER}\n");
    if entry.u_s.is_empty() {
        return s;
    }
    for (k, &t) in result.times.iter().enumerate() {
        for (p, x) in result.probes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{p},{},{},{},{},{}",
                fmt17(t),
                fmt17(x[0]),
                fmt17(x[1]),
                fmt17(x[2]),
                fmt17(entry.u_s[p][k]),
                fmt17(entry.w_s[p][k])
            );
        }
    }
    s
}

/// Writes errors.csv, conditions.csv, rate_plot.csv, probes_<k>.csv per
/// entry and notes.txt into `dir`.
pub fn emit_outputs(result: &ComparisonResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("errors.csv"), errors_csv(result))?;
    fs::write(dir.join("conditions.csv"), conditions_csv(result))?;
    fs::write(dir.join("rate_plot.csv"), rate_plot_csv(result))?;
    for (k, e) in result.entries.iter().enumerate() {
        fs::write(dir.join(format!("probes_{k}.csv")), probes_csv(result, e))?;
    }
    let mut notes = String::new();
    for e in &result.entries {
        for n in &e.notes {
            let _ = writeln!(notes, "{n}");
        }
    }
    match result.fit {
        Some(f) => {
            let _ = writeln!(notes, "fit: slope = {}, intercept = {}, residual = {}", f.slope, f.intercept, f.residual);
        }
        None => {
            let _ = writeln!(notes, "fit: undefined (fewer than three positive errors)");
        }
    }
    fs::write(dir.join("notes.txt"), notes)?;
    Ok(())
}

/// Synthetic error sequence delta^{1/3} (1 + amplitude sin(phi_k)) with
/// seeded phases, for exercising the fit.
pub fn synthetic_errors(deltas: &[f64], amplitude: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    deltas
        .iter()
        .map(|&d| {
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            (d, d.cbrt() * (1.0 + amplitude * phi.sin()))
        })
        .collect()
}
