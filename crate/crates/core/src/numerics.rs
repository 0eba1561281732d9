//! Small numerical building blocks shared by the solvers.

use std::f64::consts::PI;

pub type Point = [f64; 3];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Neumaier's variant of Kahan compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn sum_compensated(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::new();
    for v in values {
        s.add(v);
    }
    s.value()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule on [a, b] with `panels` panels of `order` nodes.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * width * (xi + 1.0), 0.5 * width * wi));
        }
    }
    out
}

/// Finite-difference weights for the first derivative at 0 using samples at
/// the given integer offsets (unit spacing), by Fornberg's recursion.
pub fn first_derivative_weights(offsets: &[i32]) -> Vec<f64> {
    let n = offsets.len();
    let m = 1;
    let z = 0.0;
    let x: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[1]).collect()
}

/// Cubic Hermite interpolation on a unit interval: values `f0`, `f1` and
/// derivatives already scaled by the interval length (`d0`, `d1`).
#[inline]
pub fn hermite(f0: f64, d0: f64, f1: f64, d1: f64, theta: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * f0 + h10 * d0 + h01 * f1 + h11 * d1
}

/// Derivative with respect to `theta` of [`hermite`].
#[inline]
pub fn hermite_derivative(f0: f64, d0: f64, f1: f64, d1: f64, theta: f64) -> f64 {
    let t2 = theta * theta;
    let h00 = 6.0 * t2 - 6.0 * theta;
    let h10 = 3.0 * t2 - 4.0 * theta + 1.0;
    let h01 = -6.0 * t2 + 6.0 * theta;
    let h11 = 3.0 * t2 - 2.0 * theta;
    h00 * f0 + h10 * d0 + h01 * f1 + h11 * d1
}

/// Integral of 1/sqrt(u^2 + v^2 + h^2) over [0, a] x [0, b].
fn corner_rectangle_potential(a: f64, b: f64, h: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let r = (a * a + b * b + h * h).sqrt();
    let mut v = a * (b / (a * a + h * h).sqrt()).asinh() + b * (a / (b * b + h * h).sqrt()).asinh();
    if h > 0.0 {
        v -= h * (a * b / (h * r)).atan();
    }
    v
}

/// Integral of 1/sqrt(u^2 + v^2 + h^2) over a rectangle [u0, u1] x [v0, v1]
/// in the plane at height `h` above the origin.
pub fn rectangle_potential(u0: f64, u1: f64, v0: f64, v1: f64, h: f64) -> f64 {
    let h = h.abs();
    let signed = |a: f64, b: f64| -> f64 {
        let s = a.signum() * b.signum();
        s * corner_rectangle_potential(a.abs(), b.abs(), h)
    };
    signed(u1, v1) - signed(u0, v1) - signed(u1, v0) + signed(u0, v0)
}

/// Integral of 1/|y - x| over the axis-aligned box [lo, hi], by the
/// divergence identity 2/|y - x| = div((y - x)/|y - x|) with signed face
/// heights, so `x` may lie anywhere.
pub fn box_inverse_distance_integral(lo: Point, hi: Point, x: Point) -> f64 {
    let mut total = 0.0;
    for axis in 0..3 {
        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
        let (u0, u1) = (lo[a1] - x[a1], hi[a1] - x[a1]);
        let (v0, v1) = (lo[a2] - x[a2], hi[a2] - x[a2]);
        for h in [x[axis] - lo[axis], hi[axis] - x[axis]] {
            if h != 0.0 {
                total += 0.5 * h * rectangle_potential(u0, u1, v0, v1, h);
            }
        }
    }
    total
}

/// Ordinary least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Format a float with 17 significant digits, which round-trips exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert_relative_eq!(s, 2.0 / 11.0, max_relative = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn fornberg_matches_textbook_stencils() {
        let w = first_derivative_weights(&[-2, -1, 0, 1, 2]);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let w = first_derivative_weights(&[-4, -3, -2, -1, 0]);
        let expect = [3.0 / 12.0, -16.0 / 12.0, 36.0 / 12.0, -48.0 / 12.0, 25.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum_compensated(v), 2.0);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| 2.0 * t * t * t - t * t + 0.5;
        let df = |t: f64| 6.0 * t * t - 2.0 * t;
        for theta in [0.0, 0.3, 0.77, 1.0] {
            let v = hermite(f(0.0), df(0.0), f(1.0), df(1.0), theta);
            assert!((v - f(theta)).abs() < 1e-14);
            let d = hermite_derivative(f(0.0), df(0.0), f(1.0), df(1.0), theta);
            assert!((d - df(theta)).abs() < 1e-13);
        }
    }

    #[test]
    fn box_potential_matches_brute_force_quadrature() {
        // Oracle: tensor Gauss quadrature on a graded split around the point.
        let lo = [0.0, 0.0, 0.0];
        let hi = [1.0, 0.7, 1.3];
        let x = [0.31, 0.2, 0.9];
        let exact = box_inverse_distance_integral(lo, hi, x);
        let mut total = 0.0;
        for ax in 0..2 {
            for ay in 0..2 {
                for az in 0..2 {
                    let b = [[lo[0], x[0]], [lo[1], x[1]], [lo[2], x[2]]];
                    let c = [[x[0], hi[0]], [x[1], hi[1]], [x[2], hi[2]]];
                    let pick = |i: usize, s: usize| if s == 0 { b[i] } else { c[i] };
                    let (r0, r1, r2) = (pick(0, ax), pick(1, ay), pick(2, az));
                    // Duffy-free: the singular corner has an integrable 1/r, so a
                    // fine composite rule converges slowly but surely.
                    let q0 = composite_gauss(r0[0], r0[1], 24, 6);
                    let q1 = composite_gauss(r1[0], r1[1], 24, 6);
                    let q2 = composite_gauss(r2[0], r2[1], 24, 6);
                    for &(u, wu) in &q0 {
                        for &(v, wv) in &q1 {
                            for &(w, ww) in &q2 {
                                total += wu * wv * ww / dist([u, v, w], x);
                            }
                        }
                    }
                }
            }
        }
        assert_relative_eq!(exact, total, max_relative = 2e-3);
    }

    #[test]
    fn box_potential_at_exterior_points() {
        let lo = [0.0, 0.0, 0.0];
        let hi = [0.5, 0.4, 0.3];
        let q: Vec<Vec<(f64, f64)>> = (0..3).map(|i| composite_gauss(lo[i], hi[i], 8, 6)).collect();
        for x in [[0.9, 0.2, 0.1], [-0.3, -0.2, 0.6], [0.25, 0.2, 0.31]] {
            let mut total = 0.0;
            for &(u, wu) in &q[0] {
                for &(v, wv) in &q[1] {
                    for &(w, ww) in &q[2] {
                        total += wu * wv * ww / dist([u, v, w], x);
                    }
                }
            }
            assert_relative_eq!(box_inverse_distance_integral(lo, hi, x), total, max_relative = 1e-6);
        }
    }

    #[test]
    fn unit_cube_centre_potential_constant() {
        let c = box_inverse_distance_integral([-0.5; 3], [0.5; 3], [0.0; 3]);
        assert!((c - 2.380077).abs() < 1e-5, "{c}");
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 2.0).collect();
        let (s, i) = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(s, 0.5, max_relative = 1e-14);
        assert_relative_eq!(i, -2.0, max_relative = 1e-14);
    }

    #[test]
    fn fmt17_round_trips() {
        let v = 0.1 + 0.2;
        assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
    }
}
