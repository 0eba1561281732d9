//! Frequency-domain solution of the voxelised effective equation,
//!
//! ```text
//! (hbar s^2 + 1) Y(s) + s^2 (V(s) Y)(s) = s^2 u^in(s),
//! ```
//!
//! with the retarded kernel b kappa e^{-s r / c0} / (4 pi r). Used to check
//! the coercivity bound and, through a Bromwich inversion, the time marching.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::EffectiveGrid;
use crate::error::{Error, Result};
use crate::incident::{Pulse, PointSource};
use crate::numerics::{composite_gauss, dist, fmt17, Point};

/// Laplace transform of the pulse, int_0^T lambda(t) e^{-st} dt.
pub fn pulse_transform(pulse: &Pulse, s: Complex64) -> Complex64 {
    let t = pulse.duration;
    let oscillations = (s.im.abs() + pulse.carrier.abs()) * t / (2.0 * PI);
    let panels = (4.0 * oscillations).ceil().max(16.0) as usize;
    composite_gauss(0.0, t, panels, 8)
        .into_iter()
        .map(|(x, w)| (-s * x).exp() * (w * pulse.eval(x, 0)))
        .sum()
}

/// Transform of the incident field at x: e^{-s r / c0} lambda(s) / r.
pub fn incident_transform(src: &PointSource, x: Point, lam: Complex64, s: Complex64) -> Complex64 {
    let r = dist(x, src.position);
    (-s * (r / src.c0)).exp() * lam / r
}

/// Voxel unknowns and incident data at one value of s.
#[derive(Debug, Clone)]
pub struct LaplaceSample {
    pub s: Complex64,
    pub y: Vec<Complex64>,
    pub u_in: Vec<Complex64>,
}

/// Solves the dense frequency-domain system at `s` (Re s > 0).
pub fn laplace_solve(grid: &EffectiveGrid, src: &PointSource, s: Complex64) -> Result<LaplaceSample> {
    let n = grid.len();
    let lam = pulse_transform(&src.pulse, s);
    let s2 = s * s;
    let u_in: Vec<Complex64> = grid.centers.iter().map(|&x| incident_transform(src, x, lam, s)).collect();
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let v = if k == l {
                Complex64::from(grid.self_weight(k))
            } else {
                let r = dist(grid.centers[k], grid.centers[l]);
                (-s * (r / grid.c0)).exp() * (grid.strength(l) / r)
            };
            a[(k, l)] = s2 * v;
        }
        a[(k, k)] += grid.hbar * s2 + 1.0;
    }
    let rhs = DVector::from_iterator(n, u_in.iter().map(|u| s2 * u));
    let y = a.lu().solve(&rhs).ok_or(Error::Singular { re: s.re, im: s.im })?;
    Ok(LaplaceSample {
        s,
        y: y.iter().copied().collect(),
        u_in,
    })
}

/// Transform of the effective scattered field at an exterior point.
pub fn scattered_transform(grid: &EffectiveGrid, sample: &LaplaceSample, x: Point) -> Complex64 {
    let s = sample.s;
    (0..grid.len())
        .map(|k| {
            let r = dist(x, grid.centers[k]);
            (-s * (r / grid.c0)).exp() * (grid.strength(k) / r) * sample.y[k]
        })
        .sum()
}

/// One coercivity sample: ||P^sc|| <= b |s|^3 / sigma ||P^in|| over the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityRow {
    pub sigma: f64,
    pub omega: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl CoercivityRow {
    /// rhs / lhs; larger means more room.
    pub fn ratio(&self) -> f64 {
        self.rhs / self.lhs
    }
}

pub fn coercivity_check(grid: &EffectiveGrid, src: &PointSource, sigmas: &[f64], omegas: &[f64]) -> Result<Vec<CoercivityRow>> {
    let kmax = grid.kappa.iter().copied().fold(1.0, f64::max);
    let mut rows = Vec::new();
    for &sigma in sigmas {
        for &omega in omegas {
            let s = Complex64::new(sigma, omega);
            let smp = laplace_solve(grid, src, s)?;
            let s2 = s * s;
            let mut psc = 0.0;
            let mut pin = 0.0;
            for k in 0..grid.len() {
                let p = (grid.hbar * s2 + 1.0) * smp.y[k] / s2 - smp.u_in[k];
                psc += grid.volumes[k] * p.norm_sqr();
                pin += grid.volumes[k] * smp.u_in[k].norm_sqr();
            }
            let lhs = psc.sqrt();
            let rhs = grid.b * kmax * s.norm().powi(3) / sigma * pin.sqrt();
            rows.push(CoercivityRow {
                sigma,
                omega,
                lhs,
                rhs,
                pass: lhs <= rhs,
            });
        }
    }
    Ok(rows)
}

pub fn coercivity_csv(rows: &[CoercivityRow]) -> String {
    let mut s = String::from("sigma,omega,lhs,rhs,pass\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", fmt17(r.sigma), fmt17(r.omega), fmt17(r.lhs), fmt17(r.rhs), r.pass);
    }
    s
}

/// Parameters of the Bromwich inversion along Re s = sigma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BromwichParams {
    pub sigma: f64,
    pub omega_max: f64,
    pub points: usize,
}

/// Inverts the scattered-field transform at x by trapezoidal quadrature of
/// f(t) = e^{sigma t} / pi * Re int_0^inf F(sigma + i w) e^{i w t} dw.
pub fn bromwich_probe(
    grid: &EffectiveGrid,
    src: &PointSource,
    x: Point,
    params: &BromwichParams,
    times: &[f64],
) -> Result<Vec<f64>> {
    let n = params.points.max(2);
    let dw = params.omega_max / (n - 1) as f64;
    let mut samples = Vec::with_capacity(n);
    for m in 0..n {
        let s = Complex64::new(params.sigma, m as f64 * dw);
        let smp = laplace_solve(grid, src, s)?;
        let w = if m == 0 || m == n - 1 { 0.5 } else { 1.0 };
        samples.push((s.im, w, scattered_transform(grid, &smp, x)));
    }
    Ok(times
        .iter()
        .map(|&t| {
            let sum: f64 = samples
                .iter()
                .map(|&(om, w, f)| w * (f * Complex64::new(0.0, om * t).exp()).re)
                .sum();
            (params.sigma * t).exp() / PI * sum * dw
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble_solver::TimeGrid;
    use crate::effective::{build_grid, effective_scattered, relative_l2, solve_effective, SelfCellRule};
    use crate::placement::{Domain, KField};
    use approx::assert_relative_eq;

    fn grid(edge: f64) -> EffectiveGrid {
        build_grid(&Domain::unit_cube(), edge, &KField::constant(0.0), 1.5, 1.0, 1.0, SelfCellRule::EquivalentBall).unwrap()
    }

    #[test]
    fn pulse_transform_matches_direct_quadrature_at_real_s() {
        let p = Pulse::window(2.0);
        let s = Complex64::new(1.3, 0.0);
        let direct: f64 = composite_gauss(0.0, 2.0, 400, 4)
            .into_iter()
            .map(|(t, w)| w * p.eval(t, 0) * (-1.3 * t).exp())
            .sum();
        assert_relative_eq!(pulse_transform(&p, s).re, direct, max_relative = 1e-12);
    }

    #[test]
    fn single_voxel_closed_form() {
        let g = build_grid(&Domain::unit_cube(), 1.0, &KField::constant(0.0), 1.5, 1.0, 1.0, SelfCellRule::EquivalentBall).unwrap();
        let src = PointSource::new([-1.0, 0.5, 0.5], Pulse::window(2.0), 1.0).unwrap();
        let s = Complex64::new(2.0, 3.0);
        let smp = laplace_solve(&g, &src, s).unwrap();
        let w11 = g.self_weight(0);
        let expect = s * s * smp.u_in[0] / (g.hbar * s * s + 1.0 + s * s * w11);
        assert!((smp.y[0] - expect).norm() < 1e-13 * expect.norm());
    }

    #[test]
    fn transform_of_time_history_matches_frequency_solution() {
        let g = grid(0.25);
        let src = PointSource::new([-0.5, 0.5, 0.5], Pulse::window(2.0), 1.0).unwrap();
        let time = TimeGrid::new(25.0, 0.01).unwrap();
        let f = solve_effective(&g, &src, &time, false).unwrap();
        for s in [Complex64::new(2.0, 0.0), Complex64::new(2.0, 3.0), Complex64::new(3.0, -5.0)] {
            let smp = laplace_solve(&g, &src, s).unwrap();
            for k in [0usize, 21, 63] {
                let integral: Complex64 = composite_gauss(0.0, time.t_end(), 2500, 4)
                    .into_iter()
                    .map(|(t, w)| (-s * t).exp() * (w * f.history.y(k, t)))
                    .sum();
                assert!((integral - smp.y[k]).norm() < 1e-5 * smp.y[k].norm(), "{integral} {}", smp.y[k]);
            }
        }
    }

    #[test]
    fn bromwich_inversion_reproduces_time_marching() {
        let g = grid(0.25);
        let src = PointSource::new([-0.5, 0.5, 0.5], Pulse::window(4.0), 1.0).unwrap();
        let time = TimeGrid::new(12.0, 0.02).unwrap();
        let f = solve_effective(&g, &src, &time, false).unwrap();
        let x = [2.0, 0.5, 0.5];
        let times: Vec<f64> = (0..=120).map(|k| 0.1 * k as f64).collect();
        let td: Vec<f64> = times.iter().map(|&t| effective_scattered(&f, x, t).unwrap()).collect();
        let params = BromwichParams {
            sigma: 0.6,
            omega_max: 25.0,
            points: 64,
        };
        let bw = bromwich_probe(&g, &src, x, &params, &times).unwrap();
        assert!(relative_l2(&bw, &td) < 0.05, "{}", relative_l2(&bw, &td));
    }

    #[test]
    fn coercivity_bound_holds_on_small_grid() {
        let g = grid(0.25);
        let src = PointSource::new([-0.5, 0.5, 0.5], Pulse::window(2.0), 1.0).unwrap();
        let rows = coercivity_check(&g, &src, &[2.0, 4.0], &[0.0, 1.0, 8.0, 64.0]).unwrap();
        assert!(rows.iter().all(|r| r.pass));
        assert!(coercivity_csv(&rows).starts_with("sigma,omega,lhs,rhs,pass\n"));
    }

    #[test]
    fn margin_grows_with_sigma_at_low_frequency() {
        let g = build_grid(&Domain::unit_cube(), 0.125, &KField::constant(0.0), 1.0, 1.0, 1.0, SelfCellRule::EquivalentBall).unwrap();
        let src = PointSource::new([-1.0, 0.5, 0.5], Pulse::window(6.0), 1.0).unwrap();
        let omegas = [0.0, 1.0, 2.0, 4.0, 8.0];
        let rows = coercivity_check(&g, &src, &[2.0, 4.0, 8.0], &omegas).unwrap();
        for (m, _) in omegas.iter().enumerate() {
            let r: Vec<f64> = (0..3).map(|k| rows[k * omegas.len() + m].ratio()).collect();
            assert!(r[0] < r[1] && r[1] < r[2], "{r:?}");
        }
    }

    #[test]
    fn zero_input_gives_zero_solution() {
        let g = grid(0.5);
        let src = PointSource::new([-0.5, 0.5, 0.5], Pulse::window(2.0), 1.0).unwrap().scaled(0.0);
        let rows = coercivity_check(&g, &src, &[2.0], &[3.0]).unwrap();
        assert_eq!(rows[0].lhs, 0.0);
        assert!(rows[0].pass);
    }
}
