//! Small reference designs used by tests, benchmarks and examples.

use crate::dsl::{rectangle, PlaneRef, Program};
use crate::kernel::sketch::build_profiles;
use crate::kernel::{BoolOp, Curve};
use crate::math::{Vec2, EPS_GEO};

fn profile_ids(curves: &[Curve], keep: impl Fn(&crate::kernel::Profile) -> bool) -> Vec<String> {
    build_profiles(curves, EPS_GEO).expect("fixture sketch is valid").into_iter().filter(|p| keep(p)).map(|p| p.id).collect()
}

/// Axis-aligned box with one corner at the origin.
pub fn block(x: f64, y: f64, z: f64) -> Program {
    let sq = rectangle("b", Vec2::ZERO, Vec2::new(x, y));
    let ids = profile_ids(&sq, |_| true);
    let mut p = Program::new();
    p.sketch(PlaneRef::Xy, sq).extrude(ids, z, BoolOp::NewBody);
    p
}

pub fn cube(size: f64) -> Program {
    block(size, size, size)
}

pub fn cylinder(radius: f64, height: f64) -> Program {
    let c = vec![Curve::circle("c0", Vec2::ZERO, radius)];
    let ids = profile_ids(&c, |_| true);
    let mut p = Program::new();
    p.sketch(PlaneRef::Xy, c).extrude(ids, height, BoolOp::NewBody);
    p
}

/// Ring between two concentric circles, extruded along +Z.
pub fn washer(outer: f64, inner: f64, height: f64) -> Program {
    let c = vec![Curve::circle("c0", Vec2::ZERO, outer), Curve::circle("c1", Vec2::ZERO, inner)];
    let ids = profile_ids(&c, |p| !p.holes.is_empty());
    let mut p = Program::new();
    p.sketch(PlaneRef::Xy, c).extrude(ids, height, BoolOp::NewBody);
    p
}

/// Plate with a boss joined on top: two extrusions.
pub fn stepped_block() -> Program {
    let base = rectangle("b", Vec2::ZERO, Vec2::new(2.0, 1.0));
    let boss = rectangle("t", Vec2::new(0.5, 0.25), Vec2::new(1.5, 0.75));
    let base_ids = profile_ids(&base, |_| true);
    let boss_ids = profile_ids(&boss, |_| true);
    let mut p = Program::new();
    p.sketch(PlaneRef::Xy, base)
        .extrude(base_ids, 0.5, BoolOp::NewBody)
        .sketch(PlaneRef::Face("e0.end".into()), boss)
        .extrude(boss_ids, 0.5, BoolOp::Join);
    p
}

/// Square plate with one rounded corner: four planar sides, one cylindrical.
pub fn rounded_plate(size: f64, radius: f64, height: f64) -> Program {
    let (s, r) = (size, radius);
    let c = vec![
        Curve::line("r0", Vec2::new(0.0, 0.0), Vec2::new(s, 0.0)),
        Curve::line("r1", Vec2::new(s, 0.0), Vec2::new(s, s - r)),
        Curve::arc("r2", Vec2::new(s, s - r), Vec2::new(s - r, s - r), 90.0),
        Curve::line("r3", Vec2::new(s - r, s), Vec2::new(0.0, s)),
        Curve::line("r4", Vec2::new(0.0, s), Vec2::new(0.0, 0.0)),
    ];
    let ids = profile_ids(&c, |_| true);
    let mut p = Program::new();
    p.sketch(PlaneRef::Xy, c).extrude(ids, height, BoolOp::NewBody);
    p
}
