//! Time marching for networks of retarded, inertially coupled oscillators
//!
//! ```text
//! m_i y_i'' + y_i + sum_{j != i} (c_j / r_ij) y_j''(t - r_ij / c0) = f_i(t)
//! ```
//!
//! with zero initial data. The delayed sum is treated as known forcing and
//! each step is an RK4 step of the local oscillator. Past accelerations are
//! stored at the nodes together with finite-difference slopes and read back
//! by cubic Hermite interpolation, which is fourth-order accurate. Delays
//! shorter than the step are resolved by a fixed-point iteration on the new
//! node.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::numerics::{dist, first_derivative_weights, hermite, hermite_derivative, CompensatedSum, Point};
use crate::placement::min_distance;

/// Positions, source strengths, and inertias of a retarded network.
#[derive(Debug, Clone)]
pub struct RetardedNetwork {
    pub points: Vec<Point>,
    /// Source strength c_j; the coupling onto i is c_j / |x_i - x_j|.
    pub coef: Vec<f64>,
    pub inertia: Vec<f64>,
    pub c0: f64,
}

impl RetardedNetwork {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tau_min(&self) -> f64 {
        min_distance(&self.points) / self.c0
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 || self.coef.len() != n || self.inertia.len() != n {
            return invalid("network arrays must be non-empty and of equal length");
        }
        if !(self.c0 > 0.0) {
            return invalid("wave speed must be positive");
        }
        if self.inertia.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return invalid("inertia coefficients must be positive");
        }
        if n > 1 && !(min_distance(&self.points) > 0.0) {
            return invalid("coincident network points");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchOptions {
    pub h: f64,
    pub n_steps: usize,
    /// Permit delays shorter than the step (resolved iteratively).
    pub allow_short_delays: bool,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl MarchOptions {
    pub fn new(h: f64, n_steps: usize) -> Self {
        MarchOptions {
            h,
            n_steps,
            allow_short_delays: false,
            fp_tol: 1e-10,
            fp_max_iter: 50,
        }
    }
}

/// Node values of every unknown: y, y', y'' and the scaled slope h * y'''.
#[derive(Debug, Clone)]
pub struct History {
    pub h: f64,
    pub n_unknowns: usize,
    pub n_nodes: usize,
    yv: Vec<[f64; 2]>,
    acc: Vec<[f64; 2]>,
    /// Largest number of fixed-point sweeps used in any step.
    pub max_fp_iterations: usize,
}

impl History {
    fn new(h: f64, n_unknowns: usize, n_nodes: usize) -> Self {
        History {
            h,
            n_unknowns,
            n_nodes,
            yv: vec![[0.0; 2]; n_unknowns * n_nodes],
            acc: vec![[0.0; 2]; n_unknowns * n_nodes],
            max_fp_iterations: 0,
        }
    }

    pub fn t_end(&self) -> f64 {
        (self.n_nodes - 1) as f64 * self.h
    }

    pub fn node_time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn y_node(&self, j: usize, k: usize) -> f64 {
        self.yv[j * self.n_nodes + k][0]
    }

    pub fn v_node(&self, j: usize, k: usize) -> f64 {
        self.yv[j * self.n_nodes + k][1]
    }

    pub fn a_node(&self, j: usize, k: usize) -> f64 {
        self.acc[j * self.n_nodes + k][0]
    }

    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let p = t / self.h;
        let last = (self.n_nodes - 1) as f64;
        if p > last * (1.0 + 1e-12) + 1e-12 {
            return None;
        }
        let k = (p.floor() as usize).min(self.n_nodes.saturating_sub(2));
        Some((k, (p - k as f64).min(1.0)))
    }

    /// Interpolated y_j(t); zero for t < 0, NaN beyond the last node.
    pub fn y(&self, j: usize, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        if self.n_nodes == 1 {
            return self.y_node(j, 0);
        }
        let Some((k, th)) = self.locate(t) else { return f64::NAN };
        let b = j * self.n_nodes + k;
        let (a, c) = (self.yv[b], self.yv[b + 1]);
        hermite(a[0], a[1] * self.h, c[0], c[1] * self.h, th)
    }

    /// Interpolated y_j'(t).
    pub fn v(&self, j: usize, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        if self.n_nodes == 1 {
            return self.v_node(j, 0);
        }
        let Some((k, th)) = self.locate(t) else { return f64::NAN };
        let b = j * self.n_nodes + k;
        hermite(
            self.yv[b][1],
            self.acc[b][0] * self.h,
            self.yv[b + 1][1],
            self.acc[b + 1][0] * self.h,
            th,
        )
    }

    /// Interpolated y_j''(t).
    pub fn a(&self, j: usize, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        if self.n_nodes == 1 {
            return self.a_node(j, 0);
        }
        let Some((k, th)) = self.locate(t) else { return f64::NAN };
        let b = j * self.n_nodes + k;
        let (p, q) = (self.acc[b], self.acc[b + 1]);
        hermite(p[0], p[1], q[0], q[1], th)
    }

    /// Interpolated y_j'''(t) (derivative of the acceleration interpolant).
    pub fn jerk(&self, j: usize, t: f64) -> f64 {
        if t < 0.0 || self.n_nodes == 1 {
            return 0.0;
        }
        let Some((k, th)) = self.locate(t) else { return f64::NAN };
        let b = j * self.n_nodes + k;
        let (p, q) = (self.acc[b], self.acc[b + 1]);
        hermite_derivative(p[0], p[1], q[0], q[1], th) / self.h
    }
}

/// Finite-difference stencils (offsets and weights) for the node slopes.
struct Stencils {
    centered: Vec<f64>,
    lag1: Vec<f64>,
    backward: Vec<f64>,
}

impl Stencils {
    fn new() -> Self {
        Stencils {
            centered: first_derivative_weights(&[-2, -1, 0, 1, 2]),
            lag1: first_derivative_weights(&[-3, -2, -1, 0, 1]),
            backward: first_derivative_weights(&[-4, -3, -2, -1, 0]),
        }
    }
}

fn update_slope(acc: &mut [[f64; 2]], k: usize, top: usize, st: &Stencils) {
    let (w, lo): (&[f64], i64) = if k + 2 <= top {
        (&st.centered, -2)
    } else if k < top {
        (&st.lag1, -3)
    } else {
        (&st.backward, -4)
    };
    let mut s = 0.0;
    for (m, wm) in w.iter().enumerate() {
        let idx = k as i64 + lo + m as i64;
        if idx >= 0 {
            s += wm * acc[idx as usize][0];
        }
    }
    acc[k][1] = s;
}

#[inline]
fn interp_acc(acc: &[[f64; 2]], p: f64) -> f64 {
    if p < 0.0 {
        return 0.0;
    }
    let k = p as usize;
    let th = p - k as f64;
    if th == 0.0 {
        return acc[k][0];
    }
    let (a, b) = (acc[k], acc[k + 1]);
    hermite(a[0], a[1], b[0], b[1], th)
}

/// Cubic Lagrange interpolation through nodes n-2..=n+1 at n + theta. Used
/// inside the step being computed, where a one-sided slope at the new node
/// would amplify alternating components.
#[inline]
fn interp_frontier(acc: &[[f64; 2]], n: usize, theta: f64) -> f64 {
    let v = |k: i64| if k >= 0 { acc[k as usize][0] } else { 0.0 };
    let n = n as i64;
    let (a, b, c, d) = (v(n - 2), v(n - 1), v(n), v(n + 1));
    let x = theta;
    // Nodes at -2, -1, 0, 1 relative to n.
    let la = -x * (x - 1.0) * (x + 1.0) / 6.0;
    let lb = x * (x + 2.0) * (x - 1.0) / 2.0;
    let lc = -(x + 2.0) * (x + 1.0) * (x - 1.0) / 2.0;
    let ld = (x + 2.0) * (x + 1.0) * x / 6.0;
    la * a + lb * b + lc * c + ld * d
}

/// Sums of delayed couplings at t_n + h/2 and t_n + h over all pairs whose
/// retarded time lies at or before node n.
fn explicit_sums(net: &RetardedNetwork, hist: &History, n: usize, out_half: &mut [f64], out_full: &mut [f64]) {
    const CHUNK: usize = 64;
    let nn = hist.n_nodes;
    let inv = 1.0 / (net.c0 * hist.h);
    let nf = n as f64;
    out_half
        .par_chunks_mut(CHUNK)
        .zip(out_full.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (half, full))| {
            let i0 = c * CHUNK;
            let mut sh = vec![CompensatedSum::new(); half.len()];
            let mut sf = vec![CompensatedSum::new(); half.len()];
            for j in 0..net.len() {
                let cj = net.coef[j];
                if cj == 0.0 {
                    continue;
                }
                let zj = net.points[j];
                let acc = &hist.acc[j * nn..(j + 1) * nn];
                for (l, (ah, af)) in sh.iter_mut().zip(sf.iter_mut()).enumerate() {
                    let i = i0 + l;
                    if i == j {
                        continue;
                    }
                    let r = dist(net.points[i], zj);
                    let s = r * inv;
                    let w = cj / r;
                    let ph = nf + 0.5 - s;
                    if ph <= nf {
                        ah.add(w * interp_acc(acc, ph));
                    }
                    let pf = nf + 1.0 - s;
                    if pf <= nf {
                        af.add(w * interp_acc(acc, pf));
                    }
                }
            }
            for l in 0..half.len() {
                half[l] = sh[l].value();
                full[l] = sf[l].value();
            }
        });
}

struct ShortPair {
    i: usize,
    j: usize,
    s: f64,
    w: f64,
}

fn short_pairs(net: &RetardedNetwork, h: f64) -> Vec<ShortPair> {
    // Must round exactly like `explicit_sums` so each (pair, stage) lands in
    // exactly one of the two sums.
    let inv = 1.0 / (net.c0 * h);
    let mut out = Vec::new();
    for i in 0..net.len() {
        for j in 0..net.len() {
            if i == j || net.coef[j] == 0.0 {
                continue;
            }
            let r = dist(net.points[i], net.points[j]);
            let s = r * inv;
            if s < 1.0 {
                out.push(ShortPair {
                    i,
                    j,
                    s,
                    w: net.coef[j] / r,
                });
            }
        }
    }
    out
}

/// Marches the network from rest over `opts.n_steps` steps of size `opts.h`.
pub fn march<F>(net: &RetardedNetwork, forcing: F, opts: &MarchOptions) -> Result<History>
where
    F: Fn(usize, f64) -> f64 + Sync,
{
    net.validate()?;
    let h = opts.h;
    if !(h > 0.0) || !h.is_finite() {
        return invalid(format!("time step {h} must be positive"));
    }
    let m = net.len();
    let tau_min = net.tau_min();
    if !opts.allow_short_delays && m > 1 && h > tau_min * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { h, tau_min });
    }
    let shorts = if opts.allow_short_delays { short_pairs(net, h) } else { Vec::new() };
    let nn = opts.n_steps + 1;
    let mut hist = History::new(h, m, nn);
    let st = Stencils::new();

    for i in 0..m {
        hist.acc[i * nn][0] = forcing(i, 0.0) / net.inertia[i];
    }

    let mut d_half = vec![0.0; m];
    let mut d_full = vec![0.0; m];
    let mut f_half = vec![0.0; m];
    let mut f_full = vec![0.0; m];
    let mut new_nodes = vec![[0.0f64; 3]; m];
    for n in 0..opts.n_steps {
        let t = n as f64 * h;
        explicit_sums(net, &hist, n, &mut d_half, &mut d_full);
        for i in 0..m {
            f_half[i] = forcing(i, t + 0.5 * h);
            f_full[i] = forcing(i, t + h);
        }
        let rk_step = |i: usize, dh: f64, df: f64, hist: &History| -> [f64; 3] {
            let b = i * nn + n;
            let [y0, v0] = hist.yv[b];
            let a0 = hist.acc[b][0];
            let inv_m = 1.0 / net.inertia[i];
            let fh = f_half[i] - dh;
            let ff = f_full[i] - df;
            let y2 = y0 + 0.5 * h * v0;
            let v2 = v0 + 0.5 * h * a0;
            let a2 = (fh - y2) * inv_m;
            let y3 = y0 + 0.5 * h * v2;
            let v3 = v0 + 0.5 * h * a2;
            let a3 = (fh - y3) * inv_m;
            let y4 = y0 + h * v3;
            let v4 = v0 + h * a3;
            let a4 = (ff - y4) * inv_m;
            let y1 = y0 + h / 6.0 * (v0 + 2.0 * v2 + 2.0 * v3 + v4);
            let v1 = v0 + h / 6.0 * (a0 + 2.0 * a2 + 2.0 * a3 + a4);
            [y1, v1, (ff - y1) * inv_m]
        };

        if shorts.is_empty() {
            for i in 0..m {
                new_nodes[i] = rk_step(i, d_half[i], d_full[i], &hist);
            }
        } else {
            // Provisional new accelerations by cubic extrapolation.
            for i in 0..m {
                let b = i * nn + n;
                let a = |k: usize| if n >= k { hist.acc[b - k][0] } else { 0.0 };
                new_nodes[i][2] = 3.0 * a(0) - 3.0 * a(1) + a(2);
            }
            let mut it = 0;
            loop {
                it += 1;
                for i in 0..m {
                    let b = i * nn + n + 1;
                    hist.acc[b][0] = new_nodes[i][2];
                    update_slope(&mut hist.acc[i * nn..(i + 1) * nn], n + 1, n + 1, &st);
                }
                let mut ih = vec![CompensatedSum::new(); m];
                let mut ifl = vec![CompensatedSum::new(); m];
                let nf = n as f64;
                for p in &shorts {
                    let acc = &hist.acc[p.j * nn..(p.j + 1) * nn];
                    let ph = nf + 0.5 - p.s;
                    if ph > nf {
                        ih[p.i].add(p.w * interp_frontier(acc, n, ph - nf));
                    }
                    let pf = nf + 1.0 - p.s;
                    if pf > nf {
                        ifl[p.i].add(p.w * interp_frontier(acc, n, pf - nf));
                    }
                }
                let mut update: f64 = 0.0;
                let mut scale: f64 = 1.0;
                for i in 0..m {
                    let node = rk_step(i, d_half[i] + ih[i].value(), d_full[i] + ifl[i].value(), &hist);
                    update = update.max((node[2] - new_nodes[i][2]).abs());
                    scale = scale.max(node[2].abs());
                    new_nodes[i] = node;
                }
                if update <= opts.fp_tol * scale {
                    break;
                }
                if it >= opts.fp_max_iter {
                    return Err(Error::NoConvergence {
                        step: n,
                        iterations: it,
                        update,
                    });
                }
            }
            hist.max_fp_iterations = hist.max_fp_iterations.max(it);
        }

        for (i, node) in new_nodes.iter().enumerate() {
            if node.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i, step: n + 1 });
            }
            let b = i * nn + n + 1;
            hist.yv[b] = [node[0], node[1]];
            hist.acc[b][0] = node[2];
            let acc = &mut hist.acc[i * nn..(i + 1) * nn];
            for k in n.saturating_sub(1)..=n + 1 {
                update_slope(acc, k, n + 1, &st);
            }
        }
    }
    Ok(hist)
}

/// Largest pointwise residual of the network equation at the nodes,
/// normalised by the largest forcing magnitude. O(M^2 N); for tests.
pub fn residual<F>(net: &RetardedNetwork, forcing: F, hist: &History) -> f64
where
    F: Fn(usize, f64) -> f64,
{
    let m = net.len();
    let mut worst: f64 = 0.0;
    let mut fmax: f64 = 0.0;
    for k in 0..hist.n_nodes {
        let t = hist.node_time(k);
        for i in 0..m {
            let mut s = CompensatedSum::new();
            s.add(net.inertia[i] * hist.a_node(i, k));
            s.add(hist.y_node(i, k));
            for j in 0..m {
                if j != i {
                    let r = dist(net.points[i], net.points[j]);
                    s.add(net.coef[j] / r * hist.a(j, t - r / net.c0));
                }
            }
            let f = forcing(i, t);
            s.add(-f);
            worst = worst.max(s.value().abs());
            fmax = fmax.max(f.abs());
        }
    }
    worst / fmax.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(inertia: f64) -> RetardedNetwork {
        RetardedNetwork {
            points: vec![[0.0; 3]],
            coef: vec![0.0],
            inertia: vec![inertia],
            c0: 1.0,
        }
    }

    #[test]
    fn resonant_forcing_matches_closed_form() {
        // y'' + y = sin t from rest: y = (sin t - t cos t) / 2.
        let net = single(1.0);
        let h = 1e-3;
        let hist = march(&net, |_, t| t.sin(), &MarchOptions::new(h, 10_000)).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..hist.n_nodes {
            let t = hist.node_time(k);
            err = err.max((hist.y_node(0, k) - 0.5 * (t.sin() - t * t.cos())).abs());
        }
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn interpolants_reproduce_smooth_history() {
        let net = single(1.0);
        let hist = march(&net, |_, t| t.sin(), &MarchOptions::new(0.01, 1000)).unwrap();
        for t in [0.1234f64, 3.3333, 7.0101] {
            let y = 0.5 * (t.sin() - t * t.cos());
            let v = 0.5 * t * t.sin();
            let a = 0.5 * (t.sin() + t * t.cos());
            assert!((hist.y(0, t) - y).abs() < 1e-8);
            assert!((hist.v(0, t) - v).abs() < 1e-8);
            assert!((hist.a(0, t) - a).abs() < 1e-7);
        }
        assert!(hist.y(0, 10.5).is_nan());
        assert_eq!(hist.a(0, -0.5), 0.0);
    }

    #[test]
    fn step_larger_than_delay_is_rejected() {
        let net = RetardedNetwork {
            points: vec![[0.0; 3], [0.1, 0.0, 0.0]],
            coef: vec![0.1, 0.1],
            inertia: vec![1.0, 1.0],
            c0: 1.0,
        };
        let err = march(&net, |_, _| 0.0, &MarchOptions::new(0.2, 10)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn short_delays_converge_and_match_fine_explicit_run() {
        let net = RetardedNetwork {
            points: vec![[0.0; 3], [0.01, 0.0, 0.0], [0.0, 0.014, 0.0]],
            coef: vec![0.002, 0.004, 0.003],
            inertia: vec![1.0, 1.2, 0.9],
            c0: 1.0,
        };
        let f = |i: usize, t: f64| ((1.0 + i as f64) * t).sin() * (-0.1 * t).exp();
        let mut opts = MarchOptions::new(0.02, 250);
        opts.allow_short_delays = true;
        let coarse = march(&net, f, &opts).unwrap();
        assert!(coarse.max_fp_iterations <= 20, "{}", coarse.max_fp_iterations);
        let fine = march(&net, f, &MarchOptions::new(0.005, 1000)).unwrap();
        for i in 0..3 {
            let d = (coarse.y(i, 5.0) - fine.y(i, 5.0)).abs();
            assert!(d < 1e-4, "{d}");
        }
    }

    #[test]
    fn residual_is_small_for_coupled_pair() {
        let net = RetardedNetwork {
            points: vec![[0.0; 3], [0.3, 0.0, 0.0]],
            coef: vec![0.05, 0.05],
            inertia: vec![1.0, 1.0],
            c0: 1.0,
        };
        let f = |i: usize, t: f64| if i == 0 { (2.0 * t).sin() } else { 0.0 };
        let hist = march(&net, f, &MarchOptions::new(0.01, 1000)).unwrap();
        assert!(residual(&net, f, &hist) < 1e-8);
    }
}
