//! Causal pulse and the point-source incident wave it drives.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{dist, Point};

/// Smooth compactly supported pulse
/// lambda(t) = amplitude * sin^10(pi t / duration) * [sin(carrier t)]
/// on [0, duration], zero elsewhere. The carrier factor is omitted when
/// `carrier` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub duration: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub carrier: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Pulse {
    fn default() -> Self {
        Pulse {
            duration: 3.0,
            amplitude: 1.0,
            carrier: 0.0,
        }
    }
}

impl Pulse {
    pub fn window(duration: f64) -> Self {
        Pulse {
            duration,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return invalid(format!("pulse duration {} must be positive", self.duration));
        }
        if !self.amplitude.is_finite() || !self.carrier.is_finite() {
            return invalid("pulse amplitude and carrier must be finite");
        }
        Ok(())
    }

    /// Value of the `order`-th time derivative (0..=3) at time t.
    pub fn eval(&self, t: f64, order: u32) -> f64 {
        if t <= 0.0 || t >= self.duration {
            return 0.0;
        }
        let w = self.window_derivs(t);
        if self.carrier == 0.0 {
            return self.amplitude * w[order as usize];
        }
        let om = self.carrier;
        let (s, c) = (om * t).sin_cos();
        let car = [s, om * c, -om * om * s, -om * om * om * c];
        let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
        let n = order as usize;
        let mut v = 0.0;
        for k in 0..=n {
            v += binom[n][k] * w[k] * car[n - k];
        }
        self.amplitude * v
    }

    fn window_derivs(&self, t: f64) -> [f64; 4] {
        let a = PI / self.duration;
        let (s, c) = (a * t).sin_cos();
        let s2 = s * s;
        let s4 = s2 * s2;
        let s7 = s4 * s2 * s;
        let s8 = s4 * s4;
        let s9 = s8 * s;
        [
            s9 * s,
            10.0 * a * s9 * c,
            10.0 * a * a * (9.0 * s8 * c * c - s9 * s),
            10.0 * a * a * a * (72.0 * s7 * c * c * c - 28.0 * s9 * c),
        ]
    }
}

/// Spherical wave lambda(t - |x - x0| / c0) / |x - x0| emitted from a point
/// outside the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub position: Point,
    pub pulse: Pulse,
    pub c0: f64,
}

impl PointSource {
    pub fn new(position: Point, pulse: Pulse, c0: f64) -> Result<Self> {
        pulse.validate()?;
        if !(c0 > 0.0) {
            return invalid(format!("wave speed {c0} must be positive"));
        }
        Ok(PointSource { position, pulse, c0 })
    }

    /// Arrival time of the wavefront at x.
    pub fn arrival(&self, x: Point) -> f64 {
        dist(x, self.position) / self.c0
    }

    /// A copy with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = *self;
        s.pulse.amplitude *= factor;
        s
    }
}

/// `order`-th time derivative (0..=3) of the incident field at (x, t).
pub fn incident_field(src: &PointSource, x: Point, t: f64, order: u32) -> Result<f64> {
    if order > 3 {
        return invalid(format!("derivative order {order} not supported (max 3)"));
    }
    let r = dist(x, src.position);
    if !(r > 0.0) {
        return invalid("evaluation point coincides with the source");
    }
    Ok(src.pulse.eval(t - r / src.c0, order) / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd(p: &Pulse, t: f64, order: u32) -> f64 {
        let h = 1e-4;
        (p.eval(t + h, order) - p.eval(t - h, order)) / (2.0 * h)
    }

    #[test]
    fn pulse_derivatives_match_finite_differences() {
        for p in [Pulse::window(2.0), Pulse { duration: 3.0, amplitude: 1.5, carrier: 5.0 }] {
            for t in [0.3, 0.9, 1.1, 1.7] {
                for order in 0..3 {
                    let scale = p.eval(t, order + 1).abs().max(1.0);
                    assert!((fd(&p, t, order) - p.eval(t, order + 1)).abs() < 1e-6 * scale);
                }
            }
        }
    }

    #[test]
    fn pulse_peak_and_support() {
        let p = Pulse::window(2.0);
        assert_relative_eq!(p.eval(1.0, 0), 1.0);
        assert_eq!(p.eval(-0.1, 0), 0.0);
        assert_eq!(p.eval(2.0, 0), 0.0);
        assert_eq!(p.eval(2.5, 3), 0.0);
    }

    #[test]
    fn incident_wave_is_causal_and_decays() {
        let src = PointSource::new([0.0; 3], Pulse::window(2.0), 1.0).unwrap();
        let x = [1.0, 0.0, 0.0];
        for order in 0..=3 {
            assert_eq!(incident_field(&src, x, 0.9999, order).unwrap(), 0.0);
        }
        assert_relative_eq!(incident_field(&src, x, 2.0, 0).unwrap(), 1.0);
        assert_relative_eq!(incident_field(&src, [2.0, 0.0, 0.0], 3.0, 0).unwrap(), 0.5);
        assert!(incident_field(&src, [0.0; 3], 1.0, 0).is_err());
        assert!(incident_field(&src, x, 1.0, 4).is_err());
    }

    #[test]
    fn incident_wave_solves_the_wave_equation() {
        let c0 = 1.7;
        let src = PointSource::new([0.0; 3], Pulse::window(2.0), c0).unwrap();
        let x = [0.8, 0.3, -0.2];
        let t = 1.4;
        let h = 1e-3;
        let u = |p: Point| incident_field(&src, p, t, 0).unwrap();
        let mut lap = -6.0 * u(x);
        for a in 0..3 {
            for s in [-h, h] {
                let mut p = x;
                p[a] += s;
                lap += u(p);
            }
        }
        lap /= h * h;
        let utt = incident_field(&src, x, t, 2).unwrap();
        assert!((lap - utt / (c0 * c0)).abs() < 1e-4 * utt.abs().max(1.0));
    }

    #[test]
    fn volume_average_of_second_derivative_is_fourth_order_in_size() {
        // Averaging over a cube of edge 2 delta about z: the error per unit
        // volume is O(delta^2), so the integrated error is O(delta^5).
        let src = PointSource::new([-1.0, 0.2, 0.1], Pulse::window(2.0), 1.0).unwrap();
        let z = [0.3, 0.4, 0.5];
        let t = 2.2;
        let (gx, gw) = crate::numerics::gauss_legendre(8);
        let err = |delta: f64| {
            let mut s = 0.0;
            for (a, wa) in gx.iter().zip(&gw) {
                for (b, wb) in gx.iter().zip(&gw) {
                    for (c, wc) in gx.iter().zip(&gw) {
                        let p = [z[0] + delta * a, z[1] + delta * b, z[2] + delta * c];
                        s += wa * wb * wc * delta.powi(3) * incident_field(&src, p, t, 2).unwrap();
                    }
                }
            }
            let vol = 8.0 * delta.powi(3);
            (s - vol * incident_field(&src, z, t, 2).unwrap()).abs()
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!(order > 4.0, "observed order {order}");
    }
}
