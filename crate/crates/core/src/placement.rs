//! Geometry of the bubble cloud: domain partition, per-cell placement driven
//! by the multiplicity field K, cloud statistics, and the cloud file format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{dist, fmt17, CompensatedSum, Point};

const CLOUD_MAGIC: &str = "# bubbly-cloud v1";

/// Bounded region holding the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Box { min: Point, max: Point },
    Ball { center: Point, radius: f64 },
}

impl Default for Domain {
    fn default() -> Self {
        Domain::unit_cube()
    }
}

impl Domain {
    pub fn unit_cube() -> Self {
        Domain::Box {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    /// Ball of unit volume centred at the origin.
    pub fn unit_volume_ball() -> Self {
        Domain::Ball {
            center: [0.0; 3],
            radius: (3.0 / (4.0 * std::f64::consts::PI)).cbrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Box { min, max } => {
                if (0..3).any(|i| !(max[i] > min[i]) || !min[i].is_finite() || !max[i].is_finite()) {
                    return invalid(format!("degenerate box {min:?} .. {max:?}"));
                }
            }
            Domain::Ball { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return invalid(format!("bad ball radius {radius}"));
                }
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        match self {
            Domain::Box { min, max } => (0..3).map(|i| max[i] - min[i]).product(),
            Domain::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }

    pub fn bounds(&self) -> (Point, Point) {
        match self {
            Domain::Box { min, max } => (*min, *max),
            Domain::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
        }
    }

    /// Closed-set membership with a small absolute tolerance.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        match self {
            Domain::Box { min, max } => (0..3).all(|i| p[i] >= min[i] - tol && p[i] <= max[i] + tol),
            Domain::Ball { center, radius } => dist(p, *center) <= radius + tol,
        }
    }

    /// Whether the axis-aligned cube [lo, lo + edge]^3 lies inside the domain.
    pub fn contains_cube(&self, lo: Point, edge: f64, tol: f64) -> bool {
        (0..8).all(|c| {
            let p = [
                lo[0] + edge * (c & 1) as f64,
                lo[1] + edge * ((c >> 1) & 1) as f64,
                lo[2] + edge * ((c >> 2) & 1) as f64,
            ];
            self.contains(p, tol)
        })
    }

    pub fn centroid(&self) -> Point {
        match self {
            Domain::Box { min, max } => [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1]), 0.5 * (min[2] + max[2])],
            Domain::Ball { center, .. } => *center,
        }
    }

    /// Radius of the smallest ball about the centroid enclosing the domain.
    pub fn circumradius(&self) -> f64 {
        match self {
            Domain::Box { min, max } => 0.5 * dist(*min, *max),
            Domain::Ball { radius, .. } => *radius,
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Domain::Box { min, max } => {
                let mut s = String::from("box");
                for v in min.iter().chain(max) {
                    let _ = write!(s, " {}", fmt17(*v));
                }
                s
            }
            Domain::Ball { center, radius } => {
                let mut s = String::from("ball");
                for v in center.iter().chain(std::iter::once(radius)) {
                    let _ = write!(s, " {}", fmt17(*v));
                }
                s
            }
        }
    }

    pub fn parse_descriptor(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next().unwrap_or_default();
        let nums = parse_floats(it)?;
        let d = match (kind, nums.len()) {
            ("box", 6) => Domain::Box {
                min: [nums[0], nums[1], nums[2]],
                max: [nums[3], nums[4], nums[5]],
            },
            ("ball", 4) => Domain::Ball {
                center: [nums[0], nums[1], nums[2]],
                radius: nums[3],
            },
            _ => return invalid(format!("bad domain descriptor '{s}'")),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Nonnegative multiplicity field K; each cell holds [K(z)] + 1 bubbles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KField {
    Constant {
        value: f64,
    },
    /// K(x) = base + gradient . x
    Affine {
        base: f64,
        gradient: Point,
    },
    /// K(x) = base + amplitude * exp(-|x - center|^2 / (2 width^2))
    Gaussian {
        base: f64,
        amplitude: f64,
        center: Point,
        width: f64,
    },
}

impl Default for KField {
    fn default() -> Self {
        KField::Constant { value: 0.0 }
    }
}

/// Entire part with the convention [x] = n for x in [n, n + 1).
pub fn entire_part(x: f64) -> i64 {
    x.floor() as i64
}

impl KField {
    pub fn constant(value: f64) -> Self {
        KField::Constant { value }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            KField::Constant { value } => *value,
            KField::Affine { base, gradient } => base + gradient[0] * x[0] + gradient[1] * x[1] + gradient[2] * x[2],
            KField::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => {
                let r2 = crate::numerics::dot(crate::numerics::sub(x, *center), crate::numerics::sub(x, *center));
                base + amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, x: Point) -> Point {
        match self {
            KField::Constant { .. } => [0.0; 3],
            KField::Affine { gradient, .. } => *gradient,
            KField::Gaussian {
                amplitude,
                center,
                width,
                ..
            } => {
                let d = crate::numerics::sub(x, *center);
                let r2 = crate::numerics::dot(d, d);
                let f = -amplitude * (-r2 / (2.0 * width * width)).exp() / (width * width);
                [f * d[0], f * d[1], f * d[2]]
            }
        }
    }

    /// Bubble count [K(x)] + 1 at a point.
    pub fn count_at(&self, x: Point) -> Result<usize> {
        let k = self.eval(x);
        if !k.is_finite() || k < 0.0 {
            return invalid(format!("K = {k} at {x:?} is not a nonnegative finite value"));
        }
        Ok(entire_part(k) as usize + 1)
    }

    /// For non-constant fields, checks that the gradient does not vanish at
    /// the given points where K takes an integer value.
    pub fn check_level_sets(&self, points: &[Point]) -> Result<()> {
        if matches!(self, KField::Constant { .. }) {
            return Ok(());
        }
        for &p in points {
            let k = self.eval(p);
            if (k - k.round()).abs() < 1e-12 && crate::numerics::norm(self.gradient(p)) < 1e-12 {
                return invalid(format!("gradient of K vanishes on the integer level set at {p:?}"));
            }
        }
        Ok(())
    }

    pub fn descriptor(&self) -> String {
        let nums: Vec<f64> = match self {
            KField::Constant { value } => vec![*value],
            KField::Affine { base, gradient } => vec![*base, gradient[0], gradient[1], gradient[2]],
            KField::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => vec![*base, *amplitude, center[0], center[1], center[2], *width],
        };
        let kind = match self {
            KField::Constant { .. } => "constant",
            KField::Affine { .. } => "affine",
            KField::Gaussian { .. } => "gaussian",
        };
        let mut s = kind.to_string();
        for v in nums {
            let _ = write!(s, " {}", fmt17(v));
        }
        s
    }

    pub fn parse_descriptor(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next().unwrap_or_default();
        let n = parse_floats(it)?;
        Ok(match (kind, n.len()) {
            ("constant", 1) => KField::Constant { value: n[0] },
            ("affine", 4) => KField::Affine {
                base: n[0],
                gradient: [n[1], n[2], n[3]],
            },
            ("gaussian", 6) => KField::Gaussian {
                base: n[0],
                amplitude: n[1],
                center: [n[2], n[3], n[4]],
                width: n[5],
            },
            _ => return invalid(format!("bad K descriptor '{s}'")),
        })
    }
}

fn parse_floats<'a>(it: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    it.map(|t| t.parse::<f64>().map_err(|e| Error::InvalidInput(format!("'{t}': {e}"))))
        .collect()
}

/// Cubic cell of the partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lo: Point,
    pub edge: f64,
}

impl Cell {
    pub fn centroid(&self) -> Point {
        let h = 0.5 * self.edge;
        [self.lo[0] + h, self.lo[1] + h, self.lo[2] + h]
    }

    pub fn hi(&self) -> Point {
        [self.lo[0] + self.edge, self.lo[1] + self.edge, self.lo[2] + self.edge]
    }

    pub fn volume(&self) -> f64 {
        self.edge.powi(3)
    }

    pub fn contains(&self, p: Point) -> bool {
        let hi = self.hi();
        (0..3).all(|i| p[i] >= self.lo[i] && p[i] <= hi[i])
    }
}

/// Cubes of volume eps lying fully inside the domain.
#[derive(Debug, Clone)]
pub struct CellPartition {
    pub domain: Domain,
    pub eps: f64,
    pub cells: Vec<Cell>,
    /// Lattice index of each cell.
    pub index: Vec<[usize; 3]>,
    pub dims: [usize; 3],
    pub dropped_volume: f64,
}

impl CellPartition {
    pub fn edge(&self) -> f64 {
        self.eps.cbrt()
    }

    /// Ratio of the dropped volume to eps^{1/3}.
    pub fn dropped_ratio(&self) -> f64 {
        self.dropped_volume / self.eps.cbrt()
    }
}

/// Partitions the domain into axis-aligned cubes of volume `eps` that lie
/// entirely inside it. The lattice is anchored at the box corner for boxes and
/// centred on the centre for balls.
pub fn partition_domain(domain: &Domain, eps: f64) -> Result<CellPartition> {
    domain.validate()?;
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("cell volume {eps} must be positive"));
    }
    if eps > domain.volume() {
        return invalid(format!("cell volume {eps} exceeds domain volume {}", domain.volume()));
    }
    let edge = eps.cbrt();
    let (bmin, bmax) = domain.bounds();
    let mut dims = [0usize; 3];
    let mut origin = bmin;
    for i in 0..3 {
        let span = bmax[i] - bmin[i];
        match domain {
            Domain::Box { .. } => {
                dims[i] = (span / edge + 1e-9).floor() as usize;
            }
            Domain::Ball { .. } => {
                dims[i] = (span / edge).ceil() as usize;
                origin[i] = 0.5 * (bmin[i] + bmax[i]) - 0.5 * dims[i] as f64 * edge;
            }
        }
    }
    let tol = 1e-12 * domain.circumradius().max(1.0);
    let mut cells = Vec::new();
    let mut index = Vec::new();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let lo = [
                    origin[0] + i as f64 * edge,
                    origin[1] + j as f64 * edge,
                    origin[2] + k as f64 * edge,
                ];
                if domain.contains_cube(lo, edge, tol) {
                    cells.push(Cell { lo, edge });
                    index.push([i, j, k]);
                }
            }
        }
    }
    if cells.is_empty() {
        return invalid(format!("no cube of volume {eps} fits in the domain"));
    }
    let dropped_volume = (domain.volume() - cells.len() as f64 * eps).max(0.0);
    Ok(CellPartition {
        domain: domain.clone(),
        eps,
        cells,
        index,
        dims,
        dropped_volume,
    })
}

/// Cells whose bubble count differs from that of a face neighbour, i.e. the
/// cells touching a discontinuity surface of [K].
pub fn level_set_cells(partition: &CellPartition, k: &KField) -> Result<Vec<usize>> {
    let [nx, ny, nz] = partition.dims;
    let mut lookup = vec![usize::MAX; nx * ny * nz];
    let flat = |ix: [usize; 3]| (ix[0] * ny + ix[1]) * nz + ix[2];
    for (c, ix) in partition.index.iter().enumerate() {
        lookup[flat(*ix)] = c;
    }
    let counts: Vec<usize> = partition
        .cells
        .iter()
        .map(|c| k.count_at(c.centroid()))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (c, ix) in partition.index.iter().enumerate() {
        let mut boundary = false;
        for axis in 0..3 {
            for step in [-1i64, 1] {
                let v = ix[axis] as i64 + step;
                if v < 0 || v as usize >= partition.dims[axis] {
                    continue;
                }
                let mut nb = *ix;
                nb[axis] = v as usize;
                let other = lookup[flat(nb)];
                if other != usize::MAX && counts[other] != counts[c] {
                    boundary = true;
                }
            }
        }
        if boundary {
            out.push(c);
        }
    }
    Ok(out)
}

/// Bubble centres with their owning cells and shape identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleCloud {
    pub delta: f64,
    pub centers: Vec<Point>,
    pub cell_ids: Vec<usize>,
    pub shape_ids: Vec<u16>,
    /// Diameter of each reference shape, indexed by shape id.
    pub shape_diameters: Vec<f64>,
    /// Cell volume of the partition the cloud was placed on.
    pub eps: f64,
    pub domain: Domain,
    pub k: KField,
    pub seed: u64,
}

impl BubbleCloud {
    /// A cloud from explicit centres, one bubble per cell, shape 0.
    pub fn from_points(centers: Vec<Point>, delta: f64, shape_diameter: f64) -> Self {
        let n = centers.len();
        BubbleCloud {
            delta,
            centers,
            cell_ids: (0..n).collect(),
            shape_ids: vec![0; n],
            shape_diameters: vec![shape_diameter],
            eps: 0.0,
            domain: Domain::unit_cube(),
            k: KField::default(),
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn max_diameter(&self) -> f64 {
        self.shape_ids
            .iter()
            .map(|&s| self.shape_diameters[s as usize])
            .fold(0.0, f64::max)
    }

    /// Number of distinct cells that own at least one bubble.
    pub fn cell_count(&self) -> usize {
        self.cell_ids.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Bubble indices grouped by owning cell, in placement order.
    pub fn cell_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.cell_count()];
        for (i, &c) in self.cell_ids.iter().enumerate() {
            groups[c].push(i);
        }
        groups
    }

    /// Same bubbles with indices permuted: new index i holds old bubble perm[i].
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.centers = perm.iter().map(|&p| self.centers[p]).collect();
        out.cell_ids = perm.iter().map(|&p| self.cell_ids[p]).collect();
        out.shape_ids = perm.iter().map(|&p| self.shape_ids[p]).collect();
        out
    }
}

fn nested_grid_size(count: usize) -> usize {
    let mut g = 1;
    while g * g * g < count {
        g += 1;
    }
    g
}

/// Places [K(z_m)] + 1 bubbles in each cell at the centroids of the
/// smallest nested cubic grid that holds them, in lexicographic order; z_m is
/// the cell's first-placed bubble. With several shapes, shape ids are drawn
/// from a generator seeded with `seed`.
pub fn place_bubbles(
    partition: &CellPartition,
    k: &KField,
    delta: f64,
    shape_diameters: &[f64],
    seed: u64,
) -> Result<BubbleCloud> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid(format!("delta = {delta} must be positive"));
    }
    if shape_diameters.is_empty() || shape_diameters.iter().any(|d| !(*d > 0.0)) {
        return invalid("at least one shape with positive diameter is required");
    }
    let dmax = shape_diameters.iter().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::new();
    let mut cell_ids = Vec::new();
    let mut shape_ids = Vec::new();
    for (m, cell) in partition.cells.iter().enumerate() {
        let first = |g: usize| {
            let s = cell.edge / g as f64;
            [cell.lo[0] + 0.5 * s, cell.lo[1] + 0.5 * s, cell.lo[2] + 0.5 * s]
        };
        let mut g = 1;
        let mut seen = vec![];
        let count = loop {
            let c = k.count_at(first(g)).map_err(|e| Error::Infeasible {
                cell: m,
                reason: e.to_string(),
            })?;
            let g_new = nested_grid_size(c);
            if g_new == g {
                break c;
            }
            seen.push(g);
            if seen.contains(&g_new) {
                g = g.max(g_new);
                break k.count_at(first(g))?;
            }
            g = g_new;
        };
        let sub = cell.edge / g as f64;
        if delta * dmax >= sub {
            return Err(Error::Infeasible {
                cell: m,
                reason: format!(
                    "{count} bubbles of diameter {} do not fit in sub-cells of edge {sub}",
                    delta * dmax
                ),
            });
        }
        for l in 0..count {
            let (a, b, c) = (l / (g * g), (l / g) % g, l % g);
            centers.push([
                cell.lo[0] + (a as f64 + 0.5) * sub,
                cell.lo[1] + (b as f64 + 0.5) * sub,
                cell.lo[2] + (c as f64 + 0.5) * sub,
            ]);
            cell_ids.push(m);
            shape_ids.push(if shape_diameters.len() > 1 {
                rng.gen_range(0..shape_diameters.len()) as u16
            } else {
                0
            });
        }
    }
    Ok(BubbleCloud {
        delta,
        centers,
        cell_ids,
        shape_ids,
        shape_diameters: shape_diameters.to_vec(),
        eps: partition.eps,
        domain: partition.domain.clone(),
        k: k.clone(),
        seed,
    })
}

/// Exact minimum pairwise distance between centres.
pub fn min_distance(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 2 {
        return f64::INFINITY;
    }
    if n <= 256 {
        return brute_min_distance(points);
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let extent: f64 = (0..3).map(|i| (hi[i] - lo[i]).max(1e-300)).product();
    let s = (extent / n as f64).cbrt().max(1e-300);
    let dims: [usize; 3] = std::array::from_fn(|i| (((hi[i] - lo[i]) / s).floor() as usize + 1).min(1 << 10));
    let bin = |p: &Point| -> [usize; 3] {
        std::array::from_fn(|i| (((p[i] - lo[i]) / s).floor() as usize).min(dims[i] - 1))
    };
    let flat = |b: [usize; 3]| (b[0] * dims[1] + b[1]) * dims[2] + b[2];
    let mut heads = vec![usize::MAX; dims[0] * dims[1] * dims[2]];
    let mut next = vec![usize::MAX; n];
    for (i, p) in points.iter().enumerate() {
        let f = flat(bin(p));
        next[i] = heads[f];
        heads[f] = i;
    }
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let b = bin(p);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for dz in -1i64..=1 {
                    let nb = [b[0] as i64 + dx, b[1] as i64 + dy, b[2] as i64 + dz];
                    if (0..3).any(|a| nb[a] < 0 || nb[a] as usize >= dims[a]) {
                        continue;
                    }
                    let mut j = heads[flat([nb[0] as usize, nb[1] as usize, nb[2] as usize])];
                    while j != usize::MAX {
                        if j > i {
                            best = best.min(dist(*p, points[j]));
                        }
                        j = next[j];
                    }
                }
            }
        }
    }
    // Pairs farther apart than one bin edge may be missed; only trust the
    // result when it is below the bin size.
    if best <= s {
        best
    } else {
        brute_min_distance(points)
    }
}

fn brute_min_distance(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(dist(points[i], points[j]));
        }
    }
    best
}

/// Bands used to flag the dense-cloud regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeBands {
    /// Accepted range of M d^3.
    pub m_d3: [f64; 2],
    /// Accepted range of d / delta^3.
    pub d_over_delta3: [f64; 2],
}

impl Default for RegimeBands {
    fn default() -> Self {
        RegimeBands {
            m_d3: [0.1, 10.0],
            d_over_delta3: [0.0, f64::INFINITY],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudStats {
    /// Minimum centre-to-centre distance.
    pub d: f64,
    /// delta times the largest shape diameter.
    pub eps: f64,
    pub m: usize,
    pub m_d3: f64,
    pub d_over_delta3: f64,
    pub m_d3_in_band: bool,
    pub d_delta3_in_band: bool,
}

pub fn cloud_stats(cloud: &BubbleCloud, bands: &RegimeBands) -> CloudStats {
    let d = min_distance(&cloud.centers);
    let m = cloud.len();
    let m_d3 = m as f64 * d.powi(3);
    let d_over_delta3 = d / cloud.delta.powi(3);
    CloudStats {
        d,
        eps: cloud.delta * cloud.max_diameter(),
        m,
        m_d3,
        d_over_delta3,
        m_d3_in_band: m_d3 >= bands.m_d3[0] && m_d3 <= bands.m_d3[1],
        d_delta3_in_band: d_over_delta3 >= bands.d_over_delta3[0] && d_over_delta3 <= bands.d_over_delta3[1],
    }
}

/// Maximum over bubbles of S_i(k) = sum_{j != i} |z_i - z_j|^{-k}, for each
/// requested exponent, with the normalisation that keeps it bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingReport {
    pub exponent: f64,
    pub max_sum: f64,
    pub normalized: f64,
}

pub fn verify_counting(centers: &[Point], exponents: &[f64]) -> Vec<CountingReport> {
    let d = min_distance(centers);
    let n = centers.len();
    // Each row is summed sequentially, so the maxima do not depend on the
    // thread schedule.
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![CompensatedSum::new(); exponents.len()];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let r = dist(centers[i], centers[j]);
                for (s, &k) in sums.iter_mut().zip(exponents) {
                    let v = if k == 1.0 {
                        1.0 / r
                    } else if k == 2.0 {
                        1.0 / (r * r)
                    } else if k == 4.0 {
                        let r2 = r * r;
                        1.0 / (r2 * r2)
                    } else {
                        r.powf(-k)
                    };
                    s.add(v);
                }
            }
            sums.iter().map(|s| s.value()).collect::<Vec<f64>>()
        })
        .reduce(
            || vec![0.0; exponents.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
        );
    exponents
        .iter()
        .zip(best)
        .map(|(&k, max_sum)| {
            let normalized = if k < 3.0 {
                max_sum * d.powi(3)
            } else if k == 3.0 {
                max_sum * d.powi(3) / (1.0 + d.ln().abs())
            } else {
                max_sum * d.powf(k)
            };
            CountingReport {
                exponent: k,
                max_sum,
                normalized,
            }
        })
        .collect()
}

/// Writes the cloud in the versioned plain-text format.
pub fn write_cloud(cloud: &BubbleCloud, mut w: impl Write) -> Result<()> {
    let d = min_distance(&cloud.centers);
    writeln!(w, "{CLOUD_MAGIC}")?;
    writeln!(w, "delta {}", fmt17(cloud.delta))?;
    writeln!(w, "eps {}", fmt17(cloud.eps))?;
    writeln!(w, "d {}", fmt17(d))?;
    writeln!(w, "M {}", cloud.len())?;
    writeln!(w, "domain {}", cloud.domain.descriptor())?;
    writeln!(w, "K {}", cloud.k.descriptor())?;
    writeln!(w, "seed {}", cloud.seed)?;
    let diams: Vec<String> = cloud.shape_diameters.iter().map(|v| fmt17(*v)).collect();
    writeln!(w, "shapes {}", diams.join(" "))?;
    writeln!(w, "index cell x y z shape")?;
    for i in 0..cloud.len() {
        let p = cloud.centers[i];
        writeln!(
            w,
            "{i} {} {} {} {} {}",
            cloud.cell_ids[i],
            fmt17(p[0]),
            fmt17(p[1]),
            fmt17(p[2]),
            cloud.shape_ids[i]
        )?;
    }
    Ok(())
}

pub fn read_cloud(r: impl BufRead) -> Result<BubbleCloud> {
    let mut lines = r.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n + 1, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::Parse {
                line: 0,
                msg: format!("unexpected end of file, expected {expect}"),
            }),
        }
    };
    let (n, magic) = next("header")?;
    if magic.trim() != CLOUD_MAGIC {
        return Err(Error::Parse {
            line: n,
            msg: format!("unsupported cloud format '{magic}'"),
        });
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (n, l) = next(key)?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok((n, rest.trim().to_string())),
            _ => Err(Error::Parse {
                line: n,
                msg: format!("expected '{key}'"),
            }),
        }
    };
    let num = |(n, s): (usize, String)| -> Result<f64> {
        s.parse::<f64>().map_err(|e| Error::Parse {
            line: n,
            msg: e.to_string(),
        })
    };
    let delta = num(field("delta")?)?;
    let eps = num(field("eps")?)?;
    let _d = num(field("d")?)?;
    let m = num(field("M")?)? as usize;
    let (_, dom) = field("domain")?;
    let domain = Domain::parse_descriptor(&dom)?;
    let (_, ks) = field("K")?;
    let k = KField::parse_descriptor(&ks)?;
    let (sn, ss) = field("seed")?;
    let seed = ss.parse::<u64>().map_err(|e| Error::Parse {
        line: sn,
        msg: e.to_string(),
    })?;
    let (_, sh) = field("shapes")?;
    let shape_diameters = parse_floats(sh.split_whitespace())?;
    let _ = next("column header")?;
    let mut centers = Vec::with_capacity(m);
    let mut cell_ids = Vec::with_capacity(m);
    let mut shape_ids = Vec::with_capacity(m);
    for _ in 0..m {
        let (n, l) = next("bubble line")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        let bad = |msg: String| Error::Parse { line: n, msg };
        if t.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", t.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
        cell_ids.push(t[1].parse::<usize>().map_err(|e| bad(e.to_string()))?);
        centers.push([f(t[2])?, f(t[3])?, f(t[4])?]);
        let s = t[5].parse::<u16>().map_err(|e| bad(e.to_string()))?;
        if s as usize >= shape_diameters.len() {
            return Err(bad(format!("shape id {s} out of range")));
        }
        shape_ids.push(s);
    }
    Ok(BubbleCloud {
        delta,
        centers,
        cell_ids,
        shape_ids,
        shape_diameters,
        eps,
        domain,
        k,
        seed,
    })
}

pub fn save_cloud(cloud: &BubbleCloud, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_cloud(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_cloud(path: &Path) -> Result<BubbleCloud> {
    let f = std::fs::File::open(path)?;
    read_cloud(std::io::BufReader::new(f))
}
