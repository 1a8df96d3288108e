//! Sketch planes, curves, and the profiles built from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::arrangement::{self, Segment};
use super::KernelError;
use crate::math::{polygon_area, quantize, PlaneFrame, Vec2, Vec3, EPS_GEO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneSource {
    Xy,
    Yz,
    Xz,
    Face(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchPlane {
    pub origin: Vec3,
    pub normal: Vec3,
    pub x_axis: Vec3,
    pub source: PlaneSource,
}

impl SketchPlane {
    pub fn xy() -> Self {
        SketchPlane { origin: Vec3::ZERO, normal: Vec3::Z, x_axis: Vec3::X, source: PlaneSource::Xy }
    }

    pub fn yz() -> Self {
        SketchPlane { origin: Vec3::ZERO, normal: Vec3::X, x_axis: Vec3::Y, source: PlaneSource::Yz }
    }

    /// Sketch y maps to world +Z, so the normal is -Y.
    pub fn xz() -> Self {
        SketchPlane { origin: Vec3::ZERO, normal: -Vec3::Y, x_axis: Vec3::X, source: PlaneSource::Xz }
    }

    /// Plane through `origin` with the given normal; the x axis is global X
    /// projected into the plane, or global Y when X is (nearly) normal to it.
    pub fn anchored(origin: Vec3, normal: Vec3, face_id: &str) -> Self {
        let mut x = Vec3::X - normal * Vec3::X.dot(normal);
        if x.length() < 1e-6 {
            x = Vec3::Y - normal * Vec3::Y.dot(normal);
        }
        let x_axis = x.normalized().unwrap_or_else(|| normal.any_orthogonal());
        SketchPlane { origin, normal, x_axis, source: PlaneSource::Face(face_id.to_string()) }
    }

    pub fn frame(&self) -> PlaneFrame {
        PlaneFrame::new(self.origin, self.normal, self.x_axis)
    }

    pub fn check(&self) -> bool {
        (self.normal.length() - 1.0).abs() <= 1e-9
            && (self.x_axis.length() - 1.0).abs() <= 1e-9
            && self.x_axis.dot(self.normal).abs() <= 1e-9
    }
}

/// Curve geometry in the 2D frame of its sketch plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CurveShape {
    Line { start: Vec2, end: Vec2 },
    /// Counterclockwise sweep of `angle` degrees from `start` about `center`.
    Arc { start: Vec2, center: Vec2, angle: f64 },
    Circle { center: Vec2, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub id: String,
    #[serde(flatten)]
    pub shape: CurveShape,
}

impl Curve {
    pub fn line(id: impl Into<String>, start: Vec2, end: Vec2) -> Self {
        Curve { id: id.into(), shape: CurveShape::Line { start, end } }
    }

    pub fn arc(id: impl Into<String>, start: Vec2, center: Vec2, angle: f64) -> Self {
        Curve { id: id.into(), shape: CurveShape::Arc { start, center, angle } }
    }

    pub fn circle(id: impl Into<String>, center: Vec2, radius: f64) -> Self {
        Curve { id: id.into(), shape: CurveShape::Circle { center, radius } }
    }

    pub fn validate(&self, tol: f64) -> Result<(), KernelError> {
        let bad = |why: &str| Err(KernelError::DegenerateCurve { curve: self.id.clone(), reason: why.into() });
        let finite = |v: Vec2| v.x.is_finite() && v.y.is_finite();
        match self.shape {
            CurveShape::Line { start, end } => {
                if !finite(start) || !finite(end) {
                    return bad("non-finite coordinate");
                }
                if start.distance(end) <= tol {
                    return bad("zero-length line");
                }
            }
            CurveShape::Arc { start, center, angle } => {
                if !finite(start) || !finite(center) || !angle.is_finite() {
                    return bad("non-finite parameter");
                }
                if start.distance(center) <= tol {
                    return bad("zero radius");
                }
                if !(angle > 0.0 && angle <= 360.0) {
                    return bad("arc angle outside (0, 360]");
                }
            }
            CurveShape::Circle { center, radius } => {
                if !finite(center) || !radius.is_finite() {
                    return bad("non-finite parameter");
                }
                if radius <= tol {
                    return bad("zero radius");
                }
            }
        }
        Ok(())
    }

    /// Extreme points used to size the chord tolerance.
    fn extent_points(&self) -> Vec<Vec2> {
        match self.shape {
            CurveShape::Line { start, end } => vec![start, end],
            CurveShape::Arc { start, center, angle } => {
                let r = start.distance(center);
                let a0 = (start - center).y.atan2((start - center).x);
                (0..=32)
                    .map(|k| {
                        let a = a0 + angle.to_radians() * k as f64 / 32.0;
                        center + Vec2::new(a.cos(), a.sin()) * r
                    })
                    .collect()
            }
            CurveShape::Circle { center, radius } => vec![
                center + Vec2::new(radius, radius),
                center - Vec2::new(radius, radius),
            ],
        }
    }
}

/// The analytic carrier of one boundary edge of a profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeCurve {
    Line,
    Arc { center: Vec2, radius: f64 },
}

/// Which curve a boundary edge came from. Consecutive edges sharing a
/// `group` become one side face when extruded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSource {
    pub group: u32,
    pub curve: EdgeCurve,
}

/// Closed polyline; edge `i` runs from `points[i]` to `points[i + 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loop {
    pub points: Vec<Vec2>,
    pub sources: Vec<EdgeSource>,
}

impl Loop {
    pub fn signed_area(&self) -> f64 {
        polygon_area(&self.points)
    }

    pub fn reversed(&self) -> Loop {
        let n = self.points.len();
        let points: Vec<Vec2> = self.points.iter().rev().copied().collect();
        // edge i of the reversed loop is edge n-2-i of the original
        let sources: Vec<EdgeSource> = (0..n).map(|i| self.sources[(2 * n - 2 - i) % n]).collect();
        Loop { points, sources }
    }
}

/// A closed planar region: counterclockwise outer loop with clockwise holes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    pub outer: Loop,
    pub holes: Vec<Loop>,
    pub area: f64,
}

impl Profile {
    pub fn loops(&self) -> impl Iterator<Item = &Loop> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Even-odd containment over all loops.
    pub fn contains(&self, p: Vec2) -> bool {
        self.loops().filter(|l| crate::math::point_in_polygon(p, &l.points)).count() % 2 == 1
    }
}

/// How arcs and circles are turned into chords.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChordPolicy {
    /// Maximum sagitta relative to the sketch bounding-box diagonal.
    pub sagitta_rel: f64,
    pub min_segments_full_circle: usize,
    /// Overrides the sagitta rule with a fixed count per full circle.
    pub fixed_segments: Option<usize>,
}

impl Default for ChordPolicy {
    fn default() -> Self {
        ChordPolicy { sagitta_rel: 1e-3, min_segments_full_circle: 16, fixed_segments: None }
    }
}

impl ChordPolicy {
    fn segments(&self, radius: f64, sweep_rad: f64, diag: f64) -> usize {
        let frac = sweep_rad / (2.0 * PI);
        if let Some(n) = self.fixed_segments {
            return ((n as f64 * frac).ceil() as usize).max(1);
        }
        let sag = (self.sagitta_rel * diag).max(1e-12);
        let by_sagitta = if sag >= radius {
            1.0
        } else {
            let half = (1.0 - sag / radius).acos();
            sweep_rad / (2.0 * half)
        };
        let by_min = self.min_segments_full_circle as f64 * frac;
        (by_sagitta.max(by_min).ceil() as usize).max(1)
    }
}

/// Planarizes curves into segments tagged with their source curve.
pub(crate) fn discretize(curves: &[Curve], chords: &ChordPolicy) -> Vec<Segment> {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for p in c.extent_points() {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
    }
    let diag = (hi - lo).length();
    let mut segs = Vec::new();
    for (ci, c) in curves.iter().enumerate() {
        let group = ci as u32;
        match c.shape {
            CurveShape::Line { start, end } => {
                segs.push(Segment { a: start, b: end, src: EdgeSource { group, curve: EdgeCurve::Line } });
            }
            CurveShape::Arc { start, center, angle } => {
                let r = start.distance(center);
                let sweep = angle.to_radians();
                let a0 = (start - center).y.atan2((start - center).x);
                let n = chords.segments(r, sweep, diag);
                let src = EdgeSource { group, curve: EdgeCurve::Arc { center, radius: r } };
                let mut prev = start;
                for k in 1..=n {
                    let a = a0 + sweep * k as f64 / n as f64;
                    let p = if k == n && angle >= 360.0 { start } else { center + Vec2::new(a.cos(), a.sin()) * r };
                    segs.push(Segment { a: prev, b: p, src });
                    prev = p;
                }
            }
            CurveShape::Circle { center, radius } => {
                let n = chords.segments(radius, 2.0 * PI, diag).max(3);
                let src = EdgeSource { group, curve: EdgeCurve::Arc { center, radius } };
                let pt = |k: usize| {
                    let a = 2.0 * PI * (k % n) as f64 / n as f64;
                    center + Vec2::new(a.cos(), a.sin()) * radius
                };
                for k in 0..n {
                    segs.push(Segment { a: pt(k), b: pt(k + 1), src });
                }
            }
        }
    }
    segs
}

/// Content-derived profile identifier: FNV-1a over the outer loop rounded to
/// the geometric tolerance, starting from its lexicographically least vertex.
pub fn profile_content_id(outer: &[Vec2], holes: &[Vec<Vec2>]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: i64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    let hash_loop = |pts: &[Vec2], feed: &mut dyn FnMut(i64)| {
        let q: Vec<(i64, i64)> = pts.iter().map(|p| (quantize(p.x, EPS_GEO), quantize(p.y, EPS_GEO))).collect();
        let start = (0..q.len()).min_by_key(|&i| q[i]).unwrap_or(0);
        feed(q.len() as i64);
        for k in 0..q.len() {
            let (x, y) = q[(start + k) % q.len()];
            feed(x);
            feed(y);
        }
    };
    hash_loop(outer, &mut feed);
    let mut hs: Vec<&Vec<Vec2>> = holes.iter().collect();
    hs.sort_by(|a, b| {
        let ka = a.iter().map(|p| (quantize(p.x, EPS_GEO), quantize(p.y, EPS_GEO))).min();
        let kb = b.iter().map(|p| (quantize(p.x, EPS_GEO), quantize(p.y, EPS_GEO))).min();
        ka.cmp(&kb)
    });
    for hole in hs {
        hash_loop(hole, &mut feed);
    }
    format!("p{h:016x}")
}

/// Builds every enclosed region of the planar arrangement of `curves`.
pub fn build_profiles(curves: &[Curve], tolerance: f64) -> Result<Vec<Profile>, KernelError> {
    build_profiles_with(curves, tolerance, &ChordPolicy::default())
}

pub fn build_profiles_with(curves: &[Curve], tolerance: f64, chords: &ChordPolicy) -> Result<Vec<Profile>, KernelError> {
    if curves.is_empty() {
        return Err(KernelError::EmptySketch);
    }
    for c in curves {
        c.validate(tolerance)?;
    }
    let segs = discretize(curves, chords);
    let arr = arrangement::Arrangement::build(&segs, tolerance)?;
    Ok(arr.profiles())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Curve> {
        vec![
            Curve::line("a", Vec2::new(x0, y0), Vec2::new(x1, y0)),
            Curve::line("b", Vec2::new(x1, y0), Vec2::new(x1, y1)),
            Curve::line("c", Vec2::new(x1, y1), Vec2::new(x0, y1)),
            Curve::line("d", Vec2::new(x0, y1), Vec2::new(x0, y0)),
        ]
    }

    #[test]
    fn unit_square_gives_one_profile() {
        let p = build_profiles(&square(0.0, 0.0, 1.0, 1.0), EPS_GEO).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].area - 1.0).abs() < 1e-12);
        assert!(p[0].holes.is_empty());
        assert!(p[0].outer.signed_area() > 0.0);
    }

    #[test]
    fn triangle_with_chord_gives_two_profiles() {
        let curves = vec![
            Curve::line("t0", Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)),
            Curve::line("t1", Vec2::new(2.0, 0.0), Vec2::new(1.0, 2.0)),
            Curve::line("t2", Vec2::new(1.0, 2.0), Vec2::new(0.0, 0.0)),
            // crosses both slanted edges and overhangs on each side
            Curve::line("chord", Vec2::new(-0.5, 1.0), Vec2::new(2.5, 1.0)),
        ];
        let p = build_profiles(&curves, EPS_GEO).unwrap();
        assert_eq!(p.len(), 2);
        let total: f64 = p.iter().map(|p| p.area).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_line_is_degenerate() {
        let c = [Curve::line("z", Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0))];
        assert!(matches!(build_profiles(&c, EPS_GEO), Err(KernelError::DegenerateCurve { .. })));
        let c = [Curve::circle("r", Vec2::ZERO, 0.0)];
        assert!(matches!(build_profiles(&c, EPS_GEO), Err(KernelError::DegenerateCurve { .. })));
    }

    #[test]
    fn open_curves_are_dropped() {
        let c = [Curve::line("l", Vec2::ZERO, Vec2::new(1.0, 0.0)), Curve::arc("a", Vec2::new(3.0, 0.0), Vec2::new(2.0, 0.0), 90.0)];
        assert!(build_profiles(&c, EPS_GEO).unwrap().is_empty());
    }

    #[test]
    fn half_disc_from_arc_and_diameter() {
        let c = [
            Curve::arc("a", Vec2::new(1.0, 0.0), Vec2::ZERO, 180.0),
            Curve::line("l", Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)),
        ];
        let p = build_profiles(&c, EPS_GEO).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].area - PI / 2.0).abs() < 0.01);
        let arc_edges = p[0].outer.sources.iter().filter(|s| matches!(s.curve, EdgeCurve::Arc { .. })).count();
        assert!(arc_edges >= 8);
    }

    #[test]
    fn chord_counts_follow_policy() {
        let pol = ChordPolicy::default();
        // washer sketch: diagonal 2*sqrt(2), sagitta 2.83e-3 on r = 1
        assert_eq!(pol.segments(1.0, 2.0 * PI, 2.0 * 2f64.sqrt()), 42);
        // tiny circle on a large sketch still gets the minimum
        assert_eq!(pol.segments(0.01, 2.0 * PI, 100.0), 16);
        let fixed = ChordPolicy { fixed_segments: Some(64), ..pol };
        assert_eq!(fixed.segments(1.0, 2.0 * PI, 1.0), 64);
    }

    #[test]
    fn content_ids_are_stable_under_rotation_of_start_vertex() {
        let a = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)];
        let b = [Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 0.0)];
        assert_eq!(profile_content_id(&a, &[]), profile_content_id(&b, &[]));
        let c = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 2.0)];
        assert_ne!(profile_content_id(&a, &[]), profile_content_id(&c, &[]));
    }

    #[test]
    fn canonical_planes_are_orthonormal() {
        for p in [SketchPlane::xy(), SketchPlane::yz(), SketchPlane::xz()] {
            assert!(p.check());
        }
        assert_eq!(SketchPlane::xz().frame().v, Vec3::Z);
        let a = SketchPlane::anchored(Vec3::ZERO, Vec3::X, "f");
        assert!(a.check());
        assert_eq!(a.x_axis, Vec3::Y);
    }
}
