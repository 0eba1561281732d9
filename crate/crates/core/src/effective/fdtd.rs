//! Staggered-grid leapfrog solver for the dispersive pressure-velocity system
//!
//! ```text
//! d_t U = -grad P
//! c0^{-1} d_t P = -div U - b kappa chi d_t W
//! hbar W'' + W = P            (inside the domain)
//! ```
//!
//! P lives at cell centres, U on faces. The oscillator is advanced by its
//! exact propagator with P linear over the step, which makes the pressure
//! update a scalar implicit equation per cell. Boundary faces of the outer
//! box carry a radiation condition that is exact for spherical waves leaving
//! a chosen centre.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::incident::PointSource;
use crate::numerics::{composite_gauss, dist, Point};
use crate::placement::{Domain, KField};

/// Material data of the effective dispersive medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersiveMedium {
    pub domain: Domain,
    pub k: KField,
    pub b: f64,
    pub hbar: f64,
    #[serde(default = "one")]
    pub c0: f64,
}

fn one() -> f64 {
    1.0
}

impl DispersiveMedium {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.hbar > 0.0) || !(self.c0 > 0.0) || !(self.b >= 0.0) || !self.b.is_finite() {
            return invalid("dispersive medium needs hbar > 0, c0 > 0, b >= 0");
        }
        Ok(())
    }
}

/// Coefficient of the sine-kernel memory term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionCoefficient {
    /// b hbar^{-3/2}, from eliminating the oscillator.
    #[default]
    Derived,
    /// hbar^{-3/2}, without the factor b.
    Literal,
}

impl ConvolutionCoefficient {
    pub fn value(self, b: f64, hbar: f64) -> f64 {
        match self {
            ConvolutionCoefficient::Derived => b * hbar.powf(-1.5),
            ConvolutionCoefficient::Literal => hbar.powf(-1.5),
        }
    }
}

/// How the incident wave enters the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    /// Unknowns are the scattered fields; the analytic incident pressure
    /// drives the oscillators. Probes record scattered pressure.
    #[default]
    ScatteredField,
    /// The source is injected as a volume source spread over the eight
    /// nearest cells; probes record total pressure. Matches the analytic
    /// incident wave when c0 = 1.
    PointInjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdtdConfig {
    pub dx: f64,
    /// Minimum distance from the domain's bounding box to the outer boundary.
    pub padding: f64,
    /// Centre of the outgoing spherical waves assumed by the boundary
    /// condition; defaults to the domain centroid.
    #[serde(default)]
    pub radiation_center: Option<Point>,
    pub t_end: f64,
    /// Defaults to 0.5 dx min(1, c0).
    #[serde(default)]
    pub dt: Option<f64>,
    /// false replaces the oscillator by W = P.
    #[serde(default = "yes")]
    pub dispersive: bool,
    #[serde(default)]
    pub excitation: Excitation,
    /// Accumulate the sine-kernel residual with this coefficient.
    #[serde(default)]
    pub residual: Option<ConvolutionCoefficient>,
}

fn yes() -> bool {
    true
}

impl FdtdConfig {
    pub fn new(dx: f64, padding: f64, t_end: f64) -> Self {
        FdtdConfig {
            dx,
            padding,
            radiation_center: None,
            t_end,
            dt: None,
            dispersive: true,
            excitation: Excitation::ScatteredField,
            residual: None,
        }
    }

    pub fn time_step(&self, c0: f64) -> f64 {
        self.dt.unwrap_or(0.5 * self.dx * c0.min(1.0))
    }
}

/// Field state on the staggered grid.
#[derive(Debug, Clone)]
pub struct DispersiveState {
    pub dims: [usize; 3],
    pub dx: f64,
    /// Corner of the grid box.
    pub origin: Point,
    pub p: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub uz: Vec<f64>,
    /// Cells whose centre lies in the domain.
    pub omega_cells: Vec<usize>,
    pub w: Vec<f64>,
    pub wdot: Vec<f64>,
    pub step: usize,
    boundary: Vec<BoundaryFace>,
    /// Running time integral of P at each boundary face.
    boundary_q: Vec<f64>,
}

/// Outer face with U_n = cos(theta) (P / c + int P dt / r), the normal
/// velocity of a spherical wave leaving the radiation centre.
#[derive(Debug, Clone, Copy)]
struct BoundaryFace {
    axis: usize,
    face: usize,
    cell: usize,
    p_coef: f64,
    q_coef: f64,
}

impl DispersiveState {
    fn new(medium: &DispersiveMedium, cfg: &FdtdConfig) -> Result<Self> {
        let (lo, hi) = medium.domain.bounds();
        let pad = (cfg.padding / cfg.dx - 1e-9).ceil().max(1.0) as usize;
        let mut dims = [0usize; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            let inner = ((hi[a] - lo[a]) / cfg.dx - 1e-9).ceil() as usize;
            dims[a] = inner + 2 * pad;
            origin[a] = lo[a] - pad as f64 * cfg.dx;
        }
        let n = dims[0] * dims[1] * dims[2];
        if n > 200_000_000 {
            return invalid(format!("grid of {n} cells is too large"));
        }
        let mut state = DispersiveState {
            dims,
            dx: cfg.dx,
            origin,
            p: vec![0.0; n],
            ux: vec![0.0; (dims[0] + 1) * dims[1] * dims[2]],
            uy: vec![0.0; dims[0] * (dims[1] + 1) * dims[2]],
            uz: vec![0.0; dims[0] * dims[1] * (dims[2] + 1)],
            omega_cells: Vec::new(),
            w: Vec::new(),
            wdot: Vec::new(),
            step: 0,
            boundary: Vec::new(),
            boundary_q: Vec::new(),
        };
        state.omega_cells = (0..n).filter(|&c| medium.domain.contains(state.centre(c), 0.0)).collect();
        state.w = vec![0.0; state.omega_cells.len()];
        state.wdot = vec![0.0; state.omega_cells.len()];
        let centre = cfg.radiation_center.unwrap_or_else(|| medium.domain.centroid());
        state.boundary = state.boundary_faces(centre, medium.c0.sqrt())?;
        state.boundary_q = vec![0.0; state.boundary.len()];
        Ok(state)
    }

    fn boundary_faces(&self, centre: Point, speed: f64) -> Result<Vec<BoundaryFace>> {
        let dims = self.dims;
        let [nx, ny, nz] = dims;
        let mut out = Vec::with_capacity(2 * (nx * ny + ny * nz + nx * nz));
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in [0usize, 1] {
                let layer = if side == 0 { 0 } else { dims[axis] - 1 };
                for b in 0..dims[v] {
                    for a in 0..dims[u] {
                        let mut ijk = [0usize; 3];
                        ijk[axis] = layer;
                        ijk[u] = a;
                        ijk[v] = b;
                        let cell = ijk[0] + nx * (ijk[1] + ny * ijk[2]);
                        let mut x = self.centre(cell);
                        x[axis] = self.origin[axis] + (layer + side) as f64 * self.dx;
                        let r = dist(x, centre);
                        let outward = if side == 0 { -1.0 } else { 1.0 };
                        let cos = outward * (x[axis] - centre[axis]) / r;
                        if !(cos > 0.0) {
                            return invalid("radiation centre must lie inside the fdtd box");
                        }
                        let mut f = ijk;
                        f[axis] += side;
                        let face = match axis {
                            0 => f[0] + (nx + 1) * (f[1] + ny * f[2]),
                            1 => f[0] + nx * (f[1] + (ny + 1) * f[2]),
                            _ => f[0] + nx * (f[1] + ny * f[2]),
                        };
                        out.push(BoundaryFace {
                            axis,
                            face,
                            cell,
                            p_coef: outward * cos / speed,
                            q_coef: outward * cos / r,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    fn coords(&self, c: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [c % nx, (c / nx) % ny, c / (nx * ny)]
    }

    pub fn centre(&self, c: usize) -> Point {
        let ijk = self.coords(c);
        let mut x = [0.0; 3];
        for a in 0..3 {
            x[a] = self.origin[a] + (ijk[a] as f64 + 0.5) * self.dx;
        }
        x
    }

    /// Trilinear stencil over cell centres for a point, if it is covered.
    pub fn stencil(&self, x: Point) -> Option<[(usize, f64); 8]> {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let f = (x[a] - self.origin[a]) / self.dx - 0.5;
            let i = f.floor();
            if i < 0.0 || i as usize + 1 >= self.dims[a] {
                return None;
            }
            base[a] = i as usize;
            frac[a] = f - i;
        }
        let [nx, ny, _] = self.dims;
        let mut out = [(0usize, 0.0); 8];
        for (m, slot) in out.iter_mut().enumerate() {
            let o = [m & 1, (m >> 1) & 1, (m >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if o[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            let c = (base[0] + o[0]) + nx * ((base[1] + o[1]) + ny * (base[2] + o[2]));
            *slot = (c, w);
        }
        Some(out)
    }

    pub fn sample(&self, stencil: &[(usize, f64); 8]) -> f64 {
        stencil.iter().map(|&(c, w)| w * self.p[c]).sum()
    }

    /// Neighbour map of the domain cells for the residual: interior cells
    /// whose six neighbours all belong to the domain.
    pub fn residual_region(&self, medium: &DispersiveMedium) -> Result<ResidualRegion> {
        let n = self.len();
        let mut pos = vec![usize::MAX; n];
        for (m, &c) in self.omega_cells.iter().enumerate() {
            pos[c] = m;
        }
        let [nx, ny, _] = self.dims;
        let stride = [1, nx, nx * ny];
        let mut interior = Vec::new();
        let mut neighbors = Vec::new();
        for (m, &c) in self.omega_cells.iter().enumerate() {
            let ijk = self.coords(c);
            let mut nb = [0usize; 6];
            let mut ok = true;
            for a in 0..3 {
                if ijk[a] == 0 || ijk[a] + 1 >= self.dims[a] {
                    ok = false;
                    break;
                }
                let lo = pos[c - stride[a]];
                let hi = pos[c + stride[a]];
                if lo == usize::MAX || hi == usize::MAX {
                    ok = false;
                    break;
                }
                nb[2 * a] = lo;
                nb[2 * a + 1] = hi;
            }
            if ok {
                interior.push(m);
                neighbors.push(nb);
            }
        }
        let kappa = self
            .omega_cells
            .iter()
            .map(|&c| medium.k.count_at(self.centre(c)).map(|v| v as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResidualRegion {
            interior,
            neighbors,
            kappa,
            dx: self.dx,
        })
    }
}

/// Probe series and diagnostics of one FDTD run.
#[derive(Debug, Clone)]
pub struct FdtdOutput {
    pub dt: f64,
    pub times: Vec<f64>,
    /// Pressure at each probe, indexed [probe][time]. Scattered or total
    /// depending on the excitation.
    pub probes: Vec<Vec<f64>>,
    /// Normalised sine-kernel residual, when requested.
    pub residual: Option<f64>,
    pub state: DispersiveState,
}

struct OmegaCell {
    cell: usize,
    coupling: f64,
    radius: f64,
}

/// Runs the leapfrog scheme from rest up to `cfg.t_end`.
pub fn solve_fdtd(medium: &DispersiveMedium, src: &PointSource, cfg: &FdtdConfig, probes: &[Point]) -> Result<FdtdOutput> {
    medium.validate()?;
    if !(cfg.dx > 0.0) || !(cfg.t_end > 0.0) || !(cfg.padding >= 0.0) {
        return invalid("fdtd needs dx > 0, t_end > 0, padding >= 0");
    }
    let c0 = medium.c0;
    let dt = cfg.time_step(c0);
    if !(dt > 0.0) || dt * (3.0 * c0).sqrt() > cfg.dx * (1.0 + 1e-12) {
        return invalid(format!(
            "time step {dt} violates the stability limit dx / sqrt(3 c0) = {}",
            cfg.dx / (3.0 * c0).sqrt()
        ));
    }
    let mut st = DispersiveState::new(medium, cfg)?;
    let stencils = probes
        .iter()
        .map(|&x| st.stencil(x).ok_or_else(|| Error::InvalidInput(format!("probe {x:?} lies outside the fdtd grid"))))
        .collect::<Result<Vec<_>>>()?;
    let scattered = cfg.excitation == Excitation::ScatteredField;
    let injection = if scattered {
        None
    } else {
        Some(st.stencil(src.position).ok_or_else(|| Error::InvalidInput("source lies outside the fdtd grid".into()))?)
    };
    let cells = st
        .omega_cells
        .iter()
        .map(|&c| {
            let x = st.centre(c);
            let radius = dist(x, src.position);
            if scattered && !(radius > 0.0) {
                return invalid("source lies on a cell centre");
            }
            let kappa = medium.k.count_at(x)? as f64;
            Ok(OmegaCell {
                cell: c,
                coupling: c0 * medium.b * kappa,
                radius,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let region = match cfg.residual {
        Some(_) if cfg.dispersive => Some(st.residual_region(medium)?),
        _ => None,
    };
    let mut residual = match (&region, cfg.residual) {
        (Some(r), Some(coef)) => Some(SinKernelResidual::new(
            r,
            SinKernelParams {
                b: medium.b,
                hbar: medium.hbar,
                c0,
                dt,
                coefficient: coef,
            },
        )),
        _ => None,
    };

    let n_steps = (cfg.t_end / dt).ceil() as usize;
    let pulse = src.pulse;
    let incident = |r: f64, t: f64| if scattered { pulse.eval(t - r / src.c0, 0) / r } else { 0.0 };
    let omega = medium.hbar.powf(-0.5);
    let (s, c) = (omega * dt).sin_cos();
    let eta = 1.0 - s / (omega * dt);
    let vol = cfg.dx.powi(3);
    let mut source_integral = 0.0;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut series = vec![Vec::with_capacity(n_steps + 1); probes.len()];
    let mut frame = vec![0.0; cells.len()];
    let mut p_old = vec![0.0; cells.len()];
    let record = |st: &DispersiveState, t: f64, series: &mut [Vec<f64>], times: &mut Vec<f64>| {
        times.push(t);
        for (row, sten) in series.iter_mut().zip(&stencils) {
            row.push(st.sample(sten));
        }
    };
    record(&st, 0.0, &mut series, &mut times);
    if let Some(acc) = residual.as_mut() {
        acc.push(&frame);
    }

    for n in 0..n_steps {
        let t0 = n as f64 * dt;
        let t1 = t0 + dt;
        update_velocity(&mut st, dt);
        for (m, oc) in cells.iter().enumerate() {
            p_old[m] = st.p[oc.cell];
        }
        update_pressure(&mut st, c0 * dt);
        if let Some(sten) = &injection {
            let tm = t0 + 0.5 * dt;
            source_integral += composite_gauss(tm - dt, tm, 1, 4)
                .iter()
                .map(|&(t, w)| w * pulse.eval(t, 0))
                .sum::<f64>();
            for &(cell, w) in sten.iter() {
                st.p[cell] += 4.0 * PI * dt * source_integral * w / vol;
            }
        }
        for (m, oc) in cells.iter().enumerate() {
            let a = st.p[oc.cell];
            let p0 = p_old[m];
            let (u0, u1) = (incident(oc.radius, t0), incident(oc.radius, t1));
            let g = oc.coupling;
            let w0 = st.w[m];
            if cfg.dispersive {
                let v0 = st.wdot[m];
                let f0 = p0 + u0;
                let wpart = c * w0 + (s / omega) * v0 + f0 * (-c + s / (omega * dt));
                let p1 = (a - g * (wpart + eta * u1 - w0)) / (1.0 + g * eta);
                let f1 = p1 + u1;
                st.p[oc.cell] = p1;
                st.w[m] = wpart + eta * f1;
                st.wdot[m] = -omega * s * w0 + c * v0 + f0 * (omega * s - (1.0 - c) / dt) + f1 * (1.0 - c) / dt;
            } else {
                let p1 = (a - g * (u1 - u0 - p0)) / (1.0 + g);
                st.p[oc.cell] = p1;
                st.w[m] = p1 + u1;
            }
            frame[m] = st.p[oc.cell] + u1;
        }
        st.step = n + 1;
        record(&st, t1, &mut series, &mut times);
        if let Some(acc) = residual.as_mut() {
            acc.push(&frame);
        }
        if (n + 1) % 64 == 0 || n + 1 == n_steps {
            if let Some(bad) = st.p.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: bad, step: n + 1 });
            }
        }
    }
    Ok(FdtdOutput {
        dt,
        times,
        probes: series,
        residual: residual.map(|r| r.value()),
        state: st,
    })
}

fn update_velocity(st: &mut DispersiveState, dt: f64) {
    let [nx, ny, nz] = st.dims;
    let r = dt / st.dx;
    let p = &st.p;
    st.ux.par_chunks_mut((nx + 1) * ny).enumerate().for_each(|(k, slab)| {
        for j in 0..ny {
            let row = nx * (j + ny * k);
            let u = &mut slab[(nx + 1) * j..(nx + 1) * (j + 1)];
            for i in 1..nx {
                u[i] -= r * (p[row + i] - p[row + i - 1]);
            }
        }
    });
    st.uy.par_chunks_mut(nx * (ny + 1)).enumerate().for_each(|(k, slab)| {
        let base = nx * ny * k;
        for j in 1..ny {
            for i in 0..nx {
                slab[nx * j + i] -= r * (p[base + nx * j + i] - p[base + nx * (j - 1) + i]);
            }
        }
    });
    let plane = nx * ny;
    st.uz.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        if k > 0 && k < nz {
            let (below, above) = (&p[plane * (k - 1)..plane * k], &p[plane * k..plane * (k + 1)]);
            for m in 0..plane {
                slab[m] -= r * (above[m] - below[m]);
            }
        }
    });
    for (bf, q) in st.boundary.iter().zip(st.boundary_q.iter_mut()) {
        let pc = st.p[bf.cell];
        *q += dt * pc;
        let u = match bf.axis {
            0 => &mut st.ux[bf.face],
            1 => &mut st.uy[bf.face],
            _ => &mut st.uz[bf.face],
        };
        *u = bf.p_coef * pc + bf.q_coef * (*q - 0.5 * dt * pc);
    }
}

fn update_pressure(st: &mut DispersiveState, c0dt: f64) {
    let [nx, ny, _] = st.dims;
    let r = c0dt / st.dx;
    let (ux, uy, uz) = (&st.ux, &st.uy, &st.uz);
    let plane = nx * ny;
    st.p.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for j in 0..ny {
            for i in 0..nx {
                let fx = i + (nx + 1) * (j + ny * k);
                let fy = i + nx * (j + (ny + 1) * k);
                let fz = i + nx * j + plane * k;
                let div = ux[fx + 1] - ux[fx] + uy[fy + nx] - uy[fy] + uz[fz + plane] - uz[fz];
                slab[i + nx * j] -= r * div;
            }
        }
    });
}

/// Cells on which the residual is evaluated. Indices refer to positions in
/// the frame vectors passed to [`SinKernelResidual::push`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRegion {
    pub interior: Vec<usize>,
    /// (-x, +x, -y, +y, -z, +z) neighbours of each interior cell.
    pub neighbors: Vec<[usize; 6]>,
    /// kappa for every frame entry.
    pub kappa: Vec<f64>,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinKernelParams {
    pub b: f64,
    pub hbar: f64,
    pub c0: f64,
    pub dt: f64,
    pub coefficient: ConvolutionCoefficient,
}

/// Streaming evaluation of
/// (c0^{-1} d_t^2 - lap_h + (b/hbar) kappa) P - coef kappa int_0^t sin(w (t - s)) P(s) ds
/// with centred differences and trapezoidal convolution, normalised by the
/// size of the second-difference term.
pub struct SinKernelResidual<'a> {
    region: &'a ResidualRegion,
    params: SinKernelParams,
    omega: f64,
    rotation: Complex64,
    coef: f64,
    prev: Vec<f64>,
    cur: Vec<f64>,
    p0: Vec<f64>,
    conv: Vec<Complex64>,
    count: usize,
    res2: f64,
    ref2: f64,
}

impl<'a> SinKernelResidual<'a> {
    pub fn new(region: &'a ResidualRegion, params: SinKernelParams) -> Self {
        let omega = params.hbar.powf(-0.5);
        let n = region.kappa.len();
        SinKernelResidual {
            region,
            params,
            omega,
            rotation: Complex64::new(0.0, omega * params.dt).exp(),
            coef: params.coefficient.value(params.b, params.hbar),
            prev: vec![0.0; n],
            cur: vec![0.0; n],
            p0: vec![0.0; n],
            conv: vec![Complex64::new(0.0, 0.0); n],
            count: 0,
            res2: 0.0,
            ref2: 0.0,
        }
    }

    /// Feeds the pressure at the next time level.
    pub fn push(&mut self, frame: &[f64]) {
        let SinKernelParams { b, hbar, c0, dt, .. } = self.params;
        if self.count >= 2 {
            let t = (self.count - 1) as f64 * dt;
            let sin_t = (self.omega * t).sin();
            let h2 = self.region.dx * self.region.dx;
            for (&e, nb) in self.region.interior.iter().zip(&self.region.neighbors) {
                let ptt = (frame[e] - 2.0 * self.cur[e] + self.prev[e]) / (c0 * dt * dt);
                let lap = (nb.iter().map(|&q| self.cur[q]).sum::<f64>() - 6.0 * self.cur[e]) / h2;
                let memory = self.conv[e].im - 0.5 * dt * sin_t * self.p0[e];
                let kappa = self.region.kappa[e];
                let r = ptt - lap + b / hbar * kappa * self.cur[e] - self.coef * kappa * memory;
                self.res2 += r * r;
                self.ref2 += ptt * ptt;
            }
        }
        if self.count == 0 {
            self.p0.copy_from_slice(frame);
            for (j, &p) in self.conv.iter_mut().zip(frame) {
                *j = Complex64::new(p * dt, 0.0);
            }
        } else {
            for (j, &p) in self.conv.iter_mut().zip(frame) {
                *j = self.rotation * *j + p * dt;
            }
        }
        std::mem::swap(&mut self.prev, &mut self.cur);
        self.cur.copy_from_slice(frame);
        self.count += 1;
    }

    pub fn value(&self) -> f64 {
        if self.ref2 > 0.0 {
            (self.res2 / self.ref2).sqrt()
        } else {
            self.res2.sqrt()
        }
    }
}

/// Residual of a stored pressure history (frames indexed by time level).
pub fn sin_kernel_residual(frames: &[Vec<f64>], region: &ResidualRegion, params: SinKernelParams) -> f64 {
    let mut acc = SinKernelResidual::new(region, params);
    for f in frames {
        acc.push(f);
    }
    acc.value()
}
