//! Time-domain solution of the discrete bubble system and the scattered
//! field it radiates.

use std::f64::consts::PI;
use std::io::Write;

use crate::coefficients::CouplingSystem;
use crate::delay::{march, History, MarchOptions, RetardedNetwork};
use crate::error::{invalid, Error, Result};
use crate::incident::PointSource;
use crate::numerics::{dist, fmt17, CompensatedSum, Point};

/// Uniform time grid t_n = n h, n = 0..=n_steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub h: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    /// Grid of step `h` reaching at least `t_end`.
    pub fn new(t_end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(t_end > 0.0) || !h.is_finite() || !t_end.is_finite() {
            return invalid(format!("bad time grid: t_end = {t_end}, h = {h}"));
        }
        Ok(TimeGrid {
            h,
            n_steps: (t_end / h - 1e-9).ceil() as usize,
        })
    }

    /// Default step: the smallest of the shortest delay, 1/200 of the pulse
    /// duration, and 1/40 of the shortest resonance period.
    pub fn default_step(tau_min: f64, pulse_duration: f64, hbar_min: f64) -> f64 {
        let period = 2.0 * PI * hbar_min.sqrt();
        tau_min.min(pulse_duration / 200.0).min(period / 40.0)
    }

    pub fn t_end(&self) -> f64 {
        self.n_steps as f64 * self.h
    }

    pub fn options(&self) -> MarchOptions {
        MarchOptions::new(self.h, self.n_steps)
    }
}

/// Trajectories Y_i with their derivatives, plus what is needed to radiate.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub history: History,
    pub centers: Vec<Point>,
    /// Radiation strength b_bar_i * delta of each bubble.
    pub b: Vec<f64>,
    pub hbar: Vec<f64>,
    pub c0: f64,
    bbox: (Point, Point),
}

pub(crate) fn bounding_box(points: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

pub(crate) fn inside_box(x: Point, (lo, hi): (Point, Point)) -> bool {
    (0..3).all(|i| x[i] >= lo[i] && x[i] <= hi[i])
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn y(&self, i: usize, t: f64) -> f64 {
        self.history.y(i, t)
    }

    pub fn v(&self, i: usize, t: f64) -> f64 {
        self.history.v(i, t)
    }

    pub fn a(&self, i: usize, t: f64) -> f64 {
        self.history.a(i, t)
    }

    /// Oscillator energy hbar/2 Y'^2 + Y^2/2 of bubble i at node k.
    pub fn energy(&self, i: usize, k: usize) -> f64 {
        let (y, v) = (self.history.y_node(i, k), self.history.v_node(i, k));
        0.5 * self.hbar[i] * v * v + 0.5 * y * y
    }

    /// Writes `t,i,Y,Ydot,Yddot` rows for every `stride`-th node.
    pub fn write_csv(&self, mut w: impl Write, stride: usize) -> Result<()> {
        writeln!(w, "t,i,Y,Ydot,Yddot")?;
        let h = &self.history;
        for k in (0..h.n_nodes).step_by(stride.max(1)) {
            for i in 0..self.len() {
                writeln!(
                    w,
                    "{},{i},{},{},{}",
                    fmt17(h.node_time(k)),
                    fmt17(h.y_node(i, k)),
                    fmt17(h.v_node(i, k)),
                    fmt17(h.a_node(i, k))
                )?;
            }
        }
        Ok(())
    }
}

fn network(sys: &CouplingSystem) -> RetardedNetwork {
    let f = sys.normalization.factor();
    RetardedNetwork {
        points: sys.centers.clone(),
        coef: sys.b.iter().map(|b| b * f).collect(),
        inertia: sys.hbar.clone(),
        c0: sys.c0,
    }
}

/// Solves the discrete system driven by the incident field of `src`.
pub fn solve_coupled(sys: &CouplingSystem, src: &PointSource, grid: &TimeGrid) -> Result<TrajectorySet> {
    let radii: Vec<f64> = sys.centers.iter().map(|&z| dist(z, src.position)).collect();
    if radii.iter().any(|r| !(*r > 0.0)) {
        return invalid("source coincides with a bubble centre");
    }
    let pulse = src.pulse;
    let c0 = src.c0;
    solve_coupled_with(sys, |i, t| pulse.eval(t - radii[i] / c0, 2) / radii[i], grid)
}

/// Solves the discrete system with an arbitrary forcing f_i(t) in place of
/// the second time derivative of the incident field.
pub fn solve_coupled_with<F>(sys: &CouplingSystem, forcing: F, grid: &TimeGrid) -> Result<TrajectorySet>
where
    F: Fn(usize, f64) -> f64 + Sync,
{
    if sys.is_empty() {
        return invalid("empty system");
    }
    let net = network(sys);
    let history = march(&net, forcing, &grid.options())?;
    Ok(TrajectorySet {
        history,
        centers: sys.centers.clone(),
        b: sys.b.clone(),
        hbar: sys.hbar.clone(),
        c0: sys.c0,
        bbox: bounding_box(&sys.centers),
    })
}

/// Residual of the discrete equation along the computed trajectories,
/// normalised by the largest forcing value.
pub fn trajectory_residual(sys: &CouplingSystem, src: &PointSource, traj: &TrajectorySet) -> f64 {
    let net = network(sys);
    let radii: Vec<f64> = sys.centers.iter().map(|&z| dist(z, src.position)).collect();
    crate::delay::residual(&net, |i, t| src.pulse.eval(t - radii[i] / src.c0, 2) / radii[i], &traj.history)
}

/// u^s(x, t) = sum_i b_i / (4 pi |x - z_i|) Y_i(t - |x - z_i| / c0) for x
/// outside the bounding box of the centres.
pub fn scattered_field(traj: &TrajectorySet, x: Point, t: f64) -> Result<f64> {
    if inside_box(x, traj.bbox) {
        return Err(Error::PointInside(x));
    }
    let mut s = CompensatedSum::new();
    for i in 0..traj.len() {
        let r = dist(x, traj.centers[i]);
        s.add(traj.b[i] / (4.0 * PI * r) * traj.history.y(i, t - r / traj.c0));
    }
    Ok(s.value())
}

/// Scattered field sampled at probes and times, indexed [probe][time].
pub fn scattered_series(traj: &TrajectorySet, probes: &[Point], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    probes
        .iter()
        .map(|&x| times.iter().map(|&t| scattered_field(traj, x, t)).collect())
        .collect()
}

/// Writes `t,probe,x,y,z,u_s` rows.
pub fn write_probe_csv(mut w: impl Write, probes: &[Point], times: &[f64], values: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "t,probe,x,y,z,u_s")?;
    for (k, &t) in times.iter().enumerate() {
        for (p, x) in probes.iter().enumerate() {
            writeln!(
                w,
                "{},{p},{},{},{},{}",
                fmt17(t),
                fmt17(x[0]),
                fmt17(x[1]),
                fmt17(x[2]),
                fmt17(values[p][k])
            )?;
        }
    }
    Ok(())
}
