//! Coupler curve resampling, pose normalization, Chamfer distance and
//! shape classification.
//!
//! Normalization removes position and orientation but keeps scale: parts come
//! in fixed sizes, so a curve twice as large is a different curve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::kinematics::OperatingRange;

pub const DEFAULT_N_HAT: usize = 200;
pub const MIN_N_HAT: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("a curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve point {0} is not finite")]
    NonFinite(usize),
    #[error("degenerate curve: all points coincide")]
    DegenerateCurve,
    #[error("resample count {0} is below the minimum of {MIN_N_HAT}")]
    SampleCount(usize),
}

/// An ordered planar point list. `closed_hint` marks curves traced over a
/// full actuator turn; resampling then includes the last-to-first segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveDoc", into = "CurveDoc")]
pub struct Curve {
    pub points: Vec<Point>,
    pub closed_hint: bool,
}

#[derive(Serialize, Deserialize)]
struct CurveDoc {
    points: Vec<Point>,
    #[serde(default)]
    closed: bool,
}

impl TryFrom<CurveDoc> for Curve {
    type Error = CurveError;
    fn try_from(doc: CurveDoc) -> Result<Self, CurveError> {
        Curve::new(doc.points, doc.closed)
    }
}

impl From<Curve> for CurveDoc {
    fn from(c: Curve) -> Self {
        CurveDoc { points: c.points, closed: c.closed_hint }
    }
}

impl Curve {
    pub fn new(points: Vec<Point>, closed_hint: bool) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(CurveError::NonFinite(i));
        }
        Ok(Self { points, closed_hint })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Curve {
        Curve { points: self.points.iter().map(|&p| f(p)).collect(), closed_hint: self.closed_hint }
    }

    /// Polyline length, including the closing segment for closed curves.
    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| w[0].distance(w[1])).sum();
        if self.closed_hint {
            open + self.points[self.points.len() - 1].distance(self.points[0])
        } else {
            open
        }
    }

    pub fn centroid(&self) -> Point {
        let sum = self.points.iter().fold(Point::ORIGIN, |acc, &p| acc + p);
        sum * (1.0 / self.points.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub n_hat: usize,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self { n_hat: DEFAULT_N_HAT }
    }
}

impl NormalizationConfig {
    pub fn new(n_hat: usize) -> Result<Self, CurveError> {
        if n_hat < MIN_N_HAT {
            return Err(CurveError::SampleCount(n_hat));
        }
        Ok(Self { n_hat })
    }
}

/// Vertices of the polyline to march along, closing vertex appended when closed.
fn path(c: &Curve) -> Vec<Point> {
    let mut pts = c.points.clone();
    if c.closed_hint && pts[0] != pts[pts.len() - 1] {
        pts.push(pts[0]);
    }
    pts
}

/// Arc length at each vertex of `pts`.
fn cumulative(pts: &[Point]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(pts.len());
    let mut s = 0.0;
    cum.push(0.0);
    for w in pts.windows(2) {
        s += w[0].distance(w[1]);
        cum.push(s);
    }
    cum
}

const END_SLACK: f64 = 1e-9;

/// Walks `steps` chords of length `chord` along `pts`. Each new point is the
/// first place the path leaves the circle of radius `chord` around the
/// previous one. Returns the points and the arc position reached; if the path
/// ends first, the position is extrapolated past the end so that it varies
/// continuously with `chord`, and no points are returned.
fn march(pts: &[Point], cum: &[f64], chord: f64, steps: usize) -> (Option<Vec<Point>>, f64) {
    let mut out = Vec::with_capacity(steps + 1);
    let (mut seg, mut t) = (0usize, 0.0f64);
    let mut current = pts[0];
    out.push(current);
    let r2 = chord * chord;
    for k in 0..steps {
        let mut found = None;
        let mut j = seg;
        while j + 1 < pts.len() {
            let d = pts[j + 1] - pts[j];
            let dd = d.dot(d);
            if dd > 0.0 {
                let w = pts[j] - current;
                let wd = w.dot(d);
                let disc = wd * wd - dd * (w.dot(w) - r2);
                if disc >= 0.0 {
                    let exit = (-wd + disc.sqrt()) / dd;
                    let lo = if j == seg { t } else { 0.0 };
                    // a vertex exactly one chord away can round to just past the segment end
                    if exit >= lo && exit <= 1.0 + END_SLACK {
                        found = Some((j, exit));
                        break;
                    }
                }
            }
            j += 1;
        }
        let Some((j, exit)) = found else {
            let total = cum[cum.len() - 1];
            let short = chord - current.distance(pts[pts.len() - 1]);
            return (None, total + short + (steps - k - 1) as f64 * chord);
        };
        seg = j;
        t = exit;
        current = pts[j].lerp(pts[j + 1], exit);
        out.push(current);
    }
    let reached = cum[seg] + t * (cum[seg + 1] - cum[seg]);
    (Some(out), reached)
}

/// Resamples to `n_hat` points spaced at equal chord length along the
/// polyline. Open curves keep both end points; closed curves start at the
/// first point and the closing chord has the same length as the others.
///
/// When the end position jumps past the curve end as the chord grows (the
/// path grazing a chord circle from inside), no chord closes exactly and the
/// final chord takes up the gap. A curve already in this form, `n_hat` points
/// with all chords but the final one equal, is returned unchanged, so
/// resampling is idempotent.
pub fn resample(c: &Curve, n_hat: usize) -> Result<Curve, CurveError> {
    if n_hat < 2 {
        return Err(CurveError::SampleCount(n_hat));
    }
    let pts = path(c);
    let cum = cumulative(&pts);
    let total = cum[cum.len() - 1];
    if !(total > 0.0) {
        return Err(CurveError::DegenerateCurve);
    }
    if c.points.len() == n_hat && equal_leading_chords(&c.points) {
        return Ok(c.clone());
    }
    let steps = if c.closed_hint { n_hat } else { n_hat - 1 };
    // chords never exceed arc length, so total/steps is an upper bound
    let mut hi = total / steps as f64;
    let (mut best, reached) = march(&pts, &cum, hi, steps);
    if best.is_none() {
        let mut f_hi = reached - total;
        let mut lo = hi;
        let mut f_lo;
        loop {
            lo *= 0.5;
            if lo < total * 1e-12 {
                return Err(CurveError::DegenerateCurve);
            }
            let (found, reached) = march(&pts, &cum, lo, steps);
            if found.is_some() {
                best = found;
                f_lo = reached - total;
                break;
            }
            hi = lo;
            f_hi = reached - total;
        }
        // Illinois regula falsi on the end position, keeping a feasible `lo`
        let (mut w_lo, mut w_hi) = (f_lo, f_hi);
        let mut side = 0i8;
        for _ in 0..200 {
            if f_lo >= -1e-13 * total {
                break;
            }
            let mut mid = (lo * w_hi - hi * w_lo) / (w_hi - w_lo);
            if !(mid > lo && mid < hi) {
                mid = 0.5 * (lo + hi);
            }
            if mid <= lo || mid >= hi {
                break;
            }
            let (found, reached) = march(&pts, &cum, mid, steps);
            let f = reached - total;
            if found.is_some() && f <= 0.0 {
                (lo, f_lo, w_lo) = (mid, f, f);
                best = found;
                if side == -1 {
                    w_hi *= 0.5;
                }
                side = -1;
            } else {
                (hi, w_hi) = (mid, f.max(f64::MIN_POSITIVE));
                if side == 1 {
                    w_lo *= 0.5;
                }
                side = 1;
            }
        }
    }
    let mut points = best.expect("a feasible chord was found");
    if c.closed_hint {
        points.pop();
    } else {
        *points.last_mut().expect("non-empty") = pts[pts.len() - 1];
    }
    Ok(Curve { points, closed_hint: c.closed_hint })
}

/// Whether every chord between consecutive points, except the last one of
/// the list, has the same length to 1e-9 relative.
fn equal_leading_chords(points: &[Point]) -> bool {
    let n = points.len();
    if n < 3 {
        return true;
    }
    let first = points[0].distance(points[1]);
    first > 0.0 && points[..n - 1].windows(2).all(|w| (w[0].distance(w[1]) - first).abs() <= 1e-9 * first)
}

/// Resample, centre, align the axis of least inertia with +x, then pick the
/// reflection with the lowest top and rightmost extent. Scale is kept.
pub fn normalize(c: &Curve, cfg: &NormalizationConfig) -> Result<Curve, CurveError> {
    if cfg.n_hat < MIN_N_HAT {
        return Err(CurveError::SampleCount(cfg.n_hat));
    }
    let sampled = resample(c, cfg.n_hat)?;
    let centre = sampled.centroid();
    let centred = sampled.map(|p| p - centre);

    // inertia tensor about the centroid
    let (mut ixx, mut ixy, mut iyy) = (0.0, 0.0, 0.0);
    for p in &centred.points {
        ixx += p.y * p.y;
        iyy += p.x * p.x;
        ixy -= p.x * p.y;
    }
    let d = (4.0 * ixy * ixy + (ixx - iyy).powi(2)).sqrt();
    let alpha = if d <= 1e-9 * (ixx + iyy) { 0.0 } else { (2.0 * ixy).atan2(ixx - iyy - d) };
    let aligned = centred.map(|p| p.rotate(-alpha));

    let max_y = |c: &Curve| c.points.iter().fold(f64::NEG_INFINITY, |m, p| m.max(p.y));
    let max_x = |c: &Curve| c.points.iter().fold(f64::NEG_INFINITY, |m, p| m.max(p.x));
    let settle = |c: Curve| {
        let flipped = c.map(|p| Point::new(p.x, -p.y));
        if max_y(&flipped) < max_y(&c) {
            flipped
        } else {
            c
        }
    };
    let first = settle(aligned.clone());
    let second = settle(aligned.map(|p| -p));
    let key = |c: &Curve| (max_y(c), max_x(c));
    Ok(if key(&second) < key(&first) { second } else { first })
}

/// Symmetric mean nearest-neighbour distance (Euclidean, not squared).
pub fn chamfer(a: &Curve, b: &Curve) -> f64 {
    chamfer_points(&a.points, &b.points)
}

pub fn chamfer_points(a: &[Point], b: &[Point]) -> f64 {
    chamfer_below(a, b, f64::INFINITY).expect("unbounded")
}

/// The Chamfer distance if it does not exceed `bound`, otherwise `None`.
/// When a value is returned it is bit-identical to [`chamfer_points`].
pub fn chamfer_below(a: &[Point], b: &[Point], bound: f64) -> Option<f64> {
    let ab = directed_below(a, b, 0.0, bound)?;
    let ba = directed_below(b, a, ab, bound)?;
    Some(ab + ba)
}

/// Cheap lower bound of the Chamfer distance: each nearest distance is at
/// least the gap between the two points' distances from the origin.
pub fn chamfer_lower_bound(a: &[Point], b: &[Point]) -> f64 {
    let radii = |pts: &[Point]| {
        let mut r: Vec<f64> = pts.iter().map(|p| p.norm()).collect();
        r.sort_by(f64::total_cmp);
        r
    };
    let (ra, rb) = (radii(a), radii(b));
    let directed = |from: &[f64], to: &[f64]| {
        let sum: f64 = from
            .iter()
            .map(|&r| {
                let k = to.partition_point(|&x| x < r);
                let above = to.get(k).map_or(f64::INFINITY, |&x| x - r);
                let below = k.checked_sub(1).map_or(f64::INFINITY, |i| r - to[i]);
                above.min(below)
            })
            .sum();
        sum / from.len() as f64
    };
    directed(&ra, &rb) + directed(&rb, &ra)
}

/// Mean nearest distance from `from` to `to`, abandoned once `offset` plus
/// the running mean lower bound exceeds `bound`.
fn directed_below(from: &[Point], to: &[Point], offset: f64, bound: f64) -> Option<f64> {
    let n = from.len() as f64;
    let blocks = Blocks::new(to);
    let mut sum = 0.0;
    let mut hint = 0;
    for &p in from {
        // queries move along `from`, so the previous nearest block is close
        let (d2, block) = blocks.nearest_squared(p, hint);
        hint = block;
        sum += d2.sqrt();
        if offset + sum / n > bound {
            return None;
        }
    }
    Some(sum / n)
}

const BLOCK: usize = 8;

/// Bounding circles of consecutive runs of `BLOCK` points, used to skip
/// whole runs in nearest-neighbour queries.
struct Blocks<'a> {
    points: &'a [Point],
    centres: Vec<Point>,
    radii: Vec<f64>,
}

impl<'a> Blocks<'a> {
    fn new(points: &'a [Point]) -> Self {
        let (mut centres, mut radii) = (Vec::new(), Vec::new());
        for chunk in points.chunks(BLOCK) {
            let (mut lo, mut hi) = (chunk[0], chunk[0]);
            for p in chunk {
                lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
            }
            let c = lo.lerp(hi, 0.5);
            let r = chunk.iter().map(|p| p.distance(c)).fold(0.0, f64::max);
            centres.push(c);
            // padded so that rounding never skips a block wrongly
            radii.push(r * (1.0 + 1e-9) + 1e-12);
        }
        Self { points, centres, radii }
    }

    fn scan(&self, block: usize, p: Point, best2: &mut f64, best_block: &mut usize) {
        let end = (block * BLOCK + BLOCK).min(self.points.len());
        for q in &self.points[block * BLOCK..end] {
            let d = p.distance_squared(*q);
            if d < *best2 {
                *best2 = d;
                *best_block = block;
            }
        }
    }

    /// Squared distance to the nearest point and its block, starting from
    /// block `hint`.
    fn nearest_squared(&self, p: Point, hint: usize) -> (f64, usize) {
        let (mut best2, mut best_block) = (f64::INFINITY, hint);
        self.scan(hint, p, &mut best2, &mut best_block);
        for b in 0..self.centres.len() {
            if b == hint {
                continue;
            }
            let reach = best2.sqrt() * (1.0 + 1e-9) + self.radii[b];
            if p.distance_squared(self.centres[b]) <= reach * reach {
                self.scan(b, p, &mut best2, &mut best_block);
            }
        }
        (best2, best_block)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleFitConfig {
    /// RMS radial residual allowed, relative to the fitted radius.
    pub rel_tolerance: f64,
    /// Fits with a larger radius are treated as straight lines.
    pub max_radius: f64,
}

impl Default for CircleFitConfig {
    fn default() -> Self {
        Self { rel_tolerance: 0.01, max_radius: 1e6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub centre: Point,
    pub radius: f64,
    pub rms_residual: f64,
}

/// Algebraic least-squares circle fit; `None` for collinear input.
pub fn fit_circle(points: &[Point]) -> Option<CircleFit> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Point::ORIGIN, |a, &p| a + p) * (1.0 / n);
    let scale = points.iter().map(|&p| (p - mean).norm()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    // minimise sum (x^2 + y^2 + D x + E y + F)^2 in centred, scaled coordinates
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &p in points {
        let q = (p - mean) * (1.0 / scale);
        let row = [q.x, q.y, 1.0];
        let z = -(q.x * q.x + q.y * q.y);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * z;
        }
    }
    let [dx, ey, f] = solve3(m, rhs)?;
    let centre = Point::new(-dx / 2.0, -ey / 2.0);
    let r2 = centre.norm_squared() - f;
    if !(r2 > 0.0) {
        return None;
    }
    let radius = r2.sqrt();
    let ss: f64 = points
        .iter()
        .map(|&p| {
            let q = (p - mean) * (1.0 / scale);
            (q.distance(centre) - radius).powi(2)
        })
        .sum();
    Some(CircleFit {
        centre: centre * scale + mean,
        radius: radius * scale,
        rms_residual: (ss / n).sqrt() * scale,
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let norm = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() <= 1e-12 * norm {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let k = m[row][col] / m[col][col];
            for c in col..3 {
                m[row][c] -= k * m[col][c];
            }
            b[row] -= k * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|c| m[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveClass {
    pub is_closed: bool,
    pub is_circle_part: bool,
}

pub fn is_circle_part(c: &Curve, cfg: &CircleFitConfig) -> bool {
    fit_circle(&c.points)
        .is_some_and(|fit| fit.radius <= cfg.max_radius && fit.rms_residual < cfg.rel_tolerance * fit.radius)
}

pub fn classify(c: &Curve, range: &OperatingRange, cfg: &CircleFitConfig) -> CurveClass {
    CurveClass { is_closed: range.is_full, is_circle_part: is_circle_part(c, cfg) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn curve(pts: &[[f64; 2]], closed: bool) -> Curve {
        Curve::new(pts.iter().map(|&p| p.into()).collect(), closed).unwrap()
    }

    fn square() -> Curve {
        curve(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], true)
    }

    fn arc(centre: Point, r: f64, from: f64, to: f64, n: usize) -> Curve {
        let pts = (0..n)
            .map(|i| {
                let t = from + (to - from) * i as f64 / (n - 1) as f64;
                centre + Point::new(r * t.cos(), r * t.sin())
            })
            .collect();
        Curve::new(pts, false).unwrap()
    }

    #[test]
    fn square_resampled_at_half_edges() {
        let r = resample(&square(), 8).unwrap();
        let expected =
            [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 0.5], [1.0, 1.0], [0.5, 1.0], [0.0, 1.0], [0.0, 0.5]];
        assert_eq!(r.len(), 8);
        for (p, e) in r.points.iter().zip(expected) {
            assert_abs_diff_eq!(p.distance(e.into()), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn segment_resampled_to_three() {
        let r = resample(&curve(&[[0.0, 0.0], [1.0, 0.0]], false), 3).unwrap();
        let xs: Vec<f64> = r.points.iter().map(|p| p.x).collect();
        assert_abs_diff_eq!(xs.as_slice(), [0.0, 0.5, 1.0].as_slice(), epsilon = 1e-12);
        assert!(r.points.iter().all(|p| p.y == 0.0));
    }

    #[test]
    fn uniform_samples_are_a_fixed_point() {
        let n = 40;
        let polygon: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                [2.0 + 3.0 * t.cos(), -1.0 + 3.0 * t.sin()]
            })
            .collect();
        let c = curve(&polygon, true);
        let once = resample(&c, n).unwrap();
        for (a, b) in once.points.iter().zip(&c.points) {
            assert_abs_diff_eq!(a.distance(*b), 0.0, epsilon = 1e-9);
        }
        let wavy = arc(Point::ORIGIN, 2.0, 0.0, 4.0, 37).map(|p| p + Point::new(0.0, (3.0 * p.x).sin()));
        let once = resample(&wavy, 50).unwrap();
        let twice = resample(&once, 50).unwrap();
        for (a, b) in once.points.iter().zip(&twice.points) {
            assert_abs_diff_eq!(a.distance(*b), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn resampled_chords_are_equal() {
        let wavy = arc(Point::ORIGIN, 2.0, 0.0, 5.5, 91);
        for closed in [false, true] {
            let c = Curve { closed_hint: closed, ..wavy.clone() };
            let r = resample(&c, 64).unwrap();
            let mut chords: Vec<f64> = r.points.windows(2).map(|w| w[0].distance(w[1])).collect();
            if closed {
                chords.push(r.points[63].distance(r.points[0]));
            }
            let (lo, hi) = chords.iter().fold((f64::MAX, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
            assert!(hi - lo < 1e-9 * hi, "closed={closed}: {lo}..{hi}");
        }
    }

    #[test]
    fn degenerate_curve_is_rejected() {
        let c = curve(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]], false);
        assert_eq!(resample(&c, 10), Err(CurveError::DegenerateCurve));
        assert_eq!(normalize(&c, &NormalizationConfig::default()), Err(CurveError::DegenerateCurve));
        assert_eq!(Curve::new(vec![Point::ORIGIN], false), Err(CurveError::TooFewPoints(1)));
        assert!(NormalizationConfig::new(7).is_err());
    }

    #[test]
    fn circle_moves_to_origin_unrotated() {
        let n = 100;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / n as f64;
                [3.0 + t.cos(), 4.0 + t.sin()]
            })
            .collect();
        let out = normalize(&curve(&pts, true), &NormalizationConfig::new(n).unwrap()).unwrap();
        assert_abs_diff_eq!(out.centroid().norm(), 0.0, epsilon = 1e-12);
        for p in &out.points {
            assert_abs_diff_eq!(p.norm(), 1.0, epsilon = 1e-9);
        }
        let shifted = curve(&pts, true).map(|p| p - Point::new(3.0, 4.0));
        assert!(chamfer(&out, &shifted) < 1e-9);
    }

    #[test]
    fn normalize_is_idempotent() {
        let c = arc(Point::new(5.0, -2.0), 3.0, 0.3, 4.0, 120).map(|p| p + Point::new(0.3 * (2.0 * p.y).cos(), 0.0));
        let cfg = NormalizationConfig::default();
        let once = normalize(&c, &cfg).unwrap();
        let twice = normalize(&once, &cfg).unwrap();
        for (a, b) in once.points.iter().zip(&twice.points) {
            assert_abs_diff_eq!(a.distance(*b), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn chamfer_examples() {
        let a = curve(&[[0.0, 0.0], [2.0, 0.0]], false);
        assert_eq!(chamfer(&a, &a), 0.0);
        assert_eq!(chamfer_points(&[Point::ORIGIN], &[Point::new(3.0, 4.0)]), 10.0);
        assert_eq!(chamfer_points(&a.points, &[Point::new(1.0, 0.0)]), 2.0);
    }

    #[test]
    fn chamfer_matches_brute_force() {
        use rand::Rng;
        let mut rng = crate::seeding::rng(3);
        let brute = |a: &[Point], b: &[Point]| {
            let dir = |f: &[Point], t: &[Point]| {
                f.iter().map(|p| t.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min)).sum::<f64>()
                    / f.len() as f64
            };
            dir(a, b) + dir(b, a)
        };
        for _ in 0..50 {
            let n = rng.random_range(1..60);
            let m = rng.random_range(1..60);
            let a: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
            let b: Vec<Point> = (0..m).map(|_| Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
            assert_abs_diff_eq!(chamfer_points(&a, &b), brute(&a, &b), epsilon = 1e-12);
            let bound = brute(&a, &b) * 0.9;
            assert!(chamfer_below(&a, &b, bound).is_none());
            assert!(chamfer_lower_bound(&a, &b) <= brute(&a, &b) + 1e-12);
        }
    }

    /// Independent fit: least squares over the raw design matrix via SVD.
    fn svd_circle_fit(points: &[Point]) -> (Point, f64, f64) {
        let a = nalgebra::DMatrix::from_fn(points.len(), 3, |i, j| [points[i].x, points[i].y, 1.0][j]);
        let b = nalgebra::DVector::from_fn(points.len(), |i, _| -points[i].norm_squared());
        let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
        let centre = Point::new(-x[0] / 2.0, -x[1] / 2.0);
        let r = (centre.norm_squared() - x[2]).sqrt();
        let ss: f64 = points.iter().map(|p| (p.distance(centre) - r).powi(2)).sum();
        (centre, r, (ss / points.len() as f64).sqrt())
    }

    #[test]
    fn circle_fit_accepts_arcs_rejects_squares_and_lines() {
        let cfg = CircleFitConfig::default();
        let quarter = arc(Point::new(1.0, 2.0), 5.0, 0.0, std::f64::consts::FRAC_PI_2, 50);
        let fit = fit_circle(&quarter.points).unwrap();
        assert_abs_diff_eq!(fit.radius, 5.0, epsilon = 1e-9);
        assert!(fit.rms_residual < 1e-9);
        assert!(is_circle_part(&quarter, &cfg));

        let sq = resample(&square(), 200).unwrap();
        let fit = fit_circle(&sq.points).unwrap();
        let (oracle_centre, oracle_radius, oracle_rms) = svd_circle_fit(&sq.points);
        assert_abs_diff_eq!(fit.centre.distance(oracle_centre), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.radius, oracle_radius, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.rms_residual / fit.radius, oracle_rms / oracle_radius, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.rms_residual / fit.radius, 0.1095, epsilon = 5e-4);
        assert!(!is_circle_part(&sq, &cfg));

        let line = curve(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], false);
        assert!(fit_circle(&line.points).is_none());
        assert!(!is_circle_part(&line, &cfg));
    }

    #[test]
    fn closedness_comes_from_the_range() {
        let full = OperatingRange::from_mask(vec![true; 360], 1.0);
        let outline = resample(&square(), 200).unwrap();
        let class = classify(&outline, &full, &CircleFitConfig::default());
        assert!(class.is_closed);
        assert!(!class.is_circle_part);
    }

    #[test]
    fn curve_file_format() {
        let c: Curve = serde_json::from_str(r#"{"points": [[0,0],[1,2.5]], "closed": true}"#).unwrap();
        assert!(c.closed_hint);
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"points":[[0.0,0.0],[1.0,2.5]],"closed":true}"#);
        assert!(serde_json::from_str::<Curve>(r#"{"points": [[0,0]]}"#).is_err());
    }
}
