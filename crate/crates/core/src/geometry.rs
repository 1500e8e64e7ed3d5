//! Polyline and curve primitives.
//!
//! Everything here is a pure function of its inputs. Deformation paths are
//! handled as discrete samples ([`TimedPath`]); the deviation metric measures
//! how far those samples stray from the piecewise-linear path through a set
//! of knot times.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Ordered 3D vertices with at least two entries and no repeated neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline3 {
    vertices: Vec<Vec3>,
}

impl Polyline3 {
    pub fn new(vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::invalid(format!(
                "polyline needs at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("polyline vertex {i} is not finite")));
        }
        if let Some(i) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("polyline vertices {i} and {} coincide", i + 1)));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Vec3> {
        self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    /// Arc length at each vertex, starting at 0.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        cumulative(&self.vertices)
    }

    pub fn length(&self) -> f64 {
        self.edge_lengths().iter().sum()
    }

    /// Position at arc length `s`, clamped to the ends.
    pub fn point_at_arclength(&self, s: f64) -> Vec3 {
        let cum = self.cumulative_lengths();
        interpolate(&self.vertices, &cum, s)
    }
}

/// A sampled deformation path `c(t)` over the shared time parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPath {
    vertices: Vec<Vec3>,
    times: Vec<f64>,
}

impl TimedPath {
    pub fn new(vertices: Vec<Vec3>, times: Vec<f64>) -> Result<Self> {
        if vertices.len() != times.len() {
            return Err(Error::invalid(format!(
                "timed path has {} vertices but {} times",
                vertices.len(),
                times.len()
            )));
        }
        if vertices.len() < 2 {
            return Err(Error::invalid("timed path needs at least 2 samples"));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("timed path has non-finite vertices"));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::invalid(format!(
                "timed path must span t = 0 to 1, got {} to {}",
                times[0],
                times.last().unwrap()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "timed path times not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(Self { vertices, times })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Linear interpolation between the samples bracketing `t`.
    pub fn position_at(&self, t: f64) -> Vec3 {
        interpolate(&self.vertices, &self.times, t)
    }

    /// Same samples with every position mapped through `f`.
    pub fn map_positions(&self, f: impl Fn(&Vec3) -> Vec3) -> TimedPath {
        TimedPath {
            vertices: self.vertices.iter().map(f).collect(),
            times: self.times.clone(),
        }
    }

    /// Samples in reverse order with `t -> 1 - t`.
    pub fn reversed(&self) -> TimedPath {
        TimedPath {
            vertices: self.vertices.iter().rev().copied().collect(),
            times: self.times.iter().rev().map(|t| 1.0 - t).collect(),
        }
    }
}

/// Arc-length parameterized curve `γ(s)` with unit tangents, uniformly sampled.
#[derive(Debug, Clone)]
pub struct PlanarArcCurve {
    points: Vec<Vec3>,
    tangents: Vec<Vec3>,
    length: f64,
}

impl PlanarArcCurve {
    /// Resamples a polyline uniformly by arc length. Tangents come from
    /// second-order differences at the input vertices, interpolated by arc length.
    pub fn from_points(points: Vec<Vec3>, samples: usize) -> Result<Self> {
        let poly = Polyline3::new(points)?;
        let samples = samples.max(2);
        let resampled = resample_arclength(&poly, samples)?.into_vertices();
        let cum = poly.cumulative_lengths();
        let vertex_tangents = polyline_tangents(poly.vertices(), &cum);
        let length = *cum.last().unwrap();
        let n = resampled.len();
        let tangents = (0..n)
            .map(|i| interpolate(&vertex_tangents, &cum, length * i as f64 / (n - 1) as f64).normalize())
            .collect();
        Ok(Self {
            points: resampled,
            tangents,
            length,
        })
    }

    /// Samples a parametric curve `f` on `[p0, p1]`, re-parameterized by arc length.
    pub fn from_fn(f: impl Fn(f64) -> Vec3, p0: f64, p1: f64, samples: usize) -> Result<Self> {
        if !(p1 > p0) {
            return Err(Error::invalid("curve parameter range is empty"));
        }
        let samples = samples.max(2);
        let fine = samples * 16;
        let params: Vec<f64> = (0..=fine).map(|i| p0 + (p1 - p0) * i as f64 / fine as f64).collect();
        let pts: Vec<Vec3> = params.iter().map(|&p| f(p)).collect();
        let cum = cumulative(&pts);
        let length = *cum.last().unwrap();
        if !(length > 0.0) {
            return Err(Error::invalid("curve has zero length"));
        }
        let h = (p1 - p0) * 1e-5;
        let mut points = Vec::with_capacity(samples);
        let mut tangents = Vec::with_capacity(samples);
        for i in 0..samples {
            let s = length * i as f64 / (samples - 1) as f64;
            let p = interpolate_scalar(&params, &cum, s);
            points.push(if i == 0 {
                f(p0)
            } else if i == samples - 1 {
                f(p1)
            } else {
                f(p)
            });
            let d = if p - h < p0 {
                f(p) * -3.0 + f(p + h) * 4.0 - f(p + 2.0 * h)
            } else if p + h > p1 {
                f(p) * 3.0 - f(p - h) * 4.0 + f(p - 2.0 * h)
            } else {
                f(p + h) - f(p - h)
            };
            tangents.push(d.normalize());
        }
        Ok(Self {
            points,
            tangents,
            length,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn samples(&self) -> &[Vec3] {
        &self.points
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.points.len();
        let x = (s / self.length).clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        (i, x - i as f64)
    }

    pub fn point(&self, s: f64) -> Vec3 {
        let (i, a) = self.locate(s);
        self.points[i] * (1.0 - a) + self.points[i + 1] * a
    }

    pub fn tangent(&self, s: f64) -> Vec3 {
        let (i, a) = self.locate(s);
        (self.tangents[i] * (1.0 - a) + self.tangents[i + 1] * a).normalize()
    }
}

fn cumulative(points: &[Vec3]) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(points.windows(2).map(|w| {
            acc += (w[1] - w[0]).norm();
            acc
        }))
        .collect()
}

/// Unit tangents of the quadratic through each vertex and its neighbours.
fn polyline_tangents(v: &[Vec3], cum: &[f64]) -> Vec<Vec3> {
    let n = v.len();
    if n == 2 {
        let d = (v[1] - v[0]).normalize();
        return vec![d, d];
    }
    let derivative = |i: usize, j: usize, k: usize, x: f64| {
        // Lagrange quadratic through vertices i, j, k evaluated at arc length x
        let (a, b, c) = (cum[i], cum[j], cum[k]);
        v[i] * ((2.0 * x - b - c) / ((a - b) * (a - c)))
            + v[j] * ((2.0 * x - a - c) / ((b - a) * (b - c)))
            + v[k] * ((2.0 * x - a - b) / ((c - a) * (c - b)))
    };
    (0..n)
        .map(|i| {
            let j = i.clamp(1, n - 2);
            derivative(j - 1, j, j + 1, cum[i]).normalize()
        })
        .collect()
}

fn bracket(keys: &[f64], x: f64) -> (usize, f64) {
    let n = keys.len();
    if x <= keys[0] {
        return (0, 0.0);
    }
    if x >= keys[n - 1] {
        return (n - 2, 1.0);
    }
    let hi = keys.partition_point(|&k| k <= x).clamp(1, n - 1);
    let lo = hi - 1;
    let span = keys[hi] - keys[lo];
    let a = if span > 0.0 { (x - keys[lo]) / span } else { 0.0 };
    (lo, a)
}

fn interpolate(values: &[Vec3], keys: &[f64], x: f64) -> Vec3 {
    let (i, a) = bracket(keys, x);
    if a == 0.0 {
        values[i]
    } else if a == 1.0 {
        values[i + 1]
    } else {
        values[i] * (1.0 - a) + values[i + 1] * a
    }
}

fn interpolate_scalar(values: &[f64], keys: &[f64], x: f64) -> f64 {
    let (i, a) = bracket(keys, x);
    values[i] * (1.0 - a) + values[i + 1] * a
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> Result<f64> {
    if a == b {
        return Err(Error::invalid("degenerate segment: endpoints coincide"));
    }
    Ok(segment_distance(p, a, b))
}

/// Like [`point_segment_distance`] but a degenerate segment measures to the point.
#[inline]
pub(crate) fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    // fixed endpoint order makes the result exactly symmetric
    let (a, b) = if a.iter().partial_cmp(b.iter()) == Some(std::cmp::Ordering::Greater) {
        (b, a)
    } else {
        (a, b)
    };
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Per-segment and overall deviation of a path from its linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub per_segment: Vec<f64>,
    pub max: f64,
}

fn full_knots(knots: &[f64]) -> Result<Vec<f64>> {
    let mut full = Vec::with_capacity(knots.len() + 2);
    full.push(0.0);
    for (i, &t) in knots.iter().enumerate() {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("knot {i} = {t} lies outside [0, 1]")));
        }
        if t < *full.last().unwrap() {
            return Err(Error::invalid(format!("knot {i} = {t} is out of order")));
        }
        full.push(t);
    }
    full.push(1.0);
    Ok(full)
}

/// Deviation of the path samples from the polyline through
/// `c(0), c(t_1), ..., c(t_n), c(1)`.
///
/// Samples at exactly a knot time count for both adjacent segments.
pub fn max_deviation(path: &TimedPath, knots: &[f64]) -> Result<Deviation> {
    let full = full_knots(knots)?;
    let per_segment: Vec<f64> = full.windows(2).map(|w| segment_deviation(path, w[0], w[1])).collect();
    let max = per_segment.iter().copied().fold(0.0, f64::max);
    Ok(Deviation { per_segment, max })
}

/// `d_max` only; `full` must already include the 0 and 1 end knots.
pub fn max_deviation_full(path: &TimedPath, full: &[f64]) -> f64 {
    full.windows(2)
        .map(|w| segment_deviation(path, w[0], w[1]))
        .fold(0.0, f64::max)
}

fn segment_deviation(path: &TimedPath, t0: f64, t1: f64) -> f64 {
    let a = path.position_at(t0);
    let b = path.position_at(t1);
    let times = path.times();
    let lo = times.partition_point(|&t| t < t0);
    let hi = times.partition_point(|&t| t <= t1);
    path.vertices()[lo..hi.max(lo)]
        .iter()
        .map(|p| segment_distance(p, &a, &b))
        .fold(0.0, f64::max)
}

/// Trajectory of the material point at arc length `s0` of a straight element
/// progressively wrapped onto `curve`: `c(u) = γ(u) + (s0 - u) γ'(u)`.
///
/// Sample `k` has `u = s0 k / (samples - 1)` and time `t = u / s0`, so `t = 0`
/// is the unwrapped (straight) element and `t = 1` the fully wrapped one.
pub fn involute(curve: &PlanarArcCurve, s0: f64, samples: usize) -> Result<TimedPath> {
    if !(s0 > 0.0) || s0 > curve.length() * (1.0 + 1e-8) {
        return Err(Error::invalid(format!(
            "traced arc length {s0} must lie in (0, {}]",
            curve.length()
        )));
    }
    if samples < 2 {
        return Err(Error::invalid("involute needs at least 2 samples"));
    }
    let last = (samples - 1) as f64;
    let (vertices, times) = (0..samples)
        .map(|k| {
            let t = k as f64 / last;
            let u = s0 * t;
            (curve.point(u) + curve.tangent(u) * (s0 - u), t)
        })
        .unzip();
    TimedPath::new(vertices, times)
}

/// Uniformly arc-length spaced vertices along `polyline`; endpoints kept exactly.
pub fn resample_arclength(polyline: &Polyline3, count: usize) -> Result<Polyline3> {
    if count < 2 {
        return Err(Error::invalid("resampling needs at least 2 vertices"));
    }
    let verts = polyline.vertices();
    let cum = polyline.cumulative_lengths();
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(count);
    out.push(verts[0]);
    for i in 1..count - 1 {
        out.push(interpolate(verts, &cum, total * i as f64 / (count - 1) as f64));
    }
    out.push(*verts.last().unwrap());
    Polyline3::new(out)
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    let directed = |from: &[Vec3], to: &[Vec3]| {
        from.iter()
            .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Hausdorff distance between two polylines, measuring points against segments.
pub fn polyline_hausdorff(a: &[Vec3], b: &[Vec3]) -> f64 {
    let directed = |from: &[Vec3], to: &[Vec3]| {
        from.iter()
            .map(|p| {
                if to.len() == 1 {
                    return (p - to[0]).norm();
                }
                to.windows(2)
                    .map(|w| segment_distance(p, &w[0], &w[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}
