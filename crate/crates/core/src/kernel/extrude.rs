//! Prismatic extrusion of planar profiles.

use super::sketch::{EdgeCurve, Loop, Profile, SketchPlane};
use super::solid::{FaceRole, FaceTag, Solid, SurfaceDesc};
use super::triangulate::triangulate_loops;
use super::KernelError;
use crate::math::{PlaneFrame, Vec3, EPS_GEO};

pub fn start_face_id(op_index: usize) -> String {
    format!("e{op_index}.start")
}

pub fn end_face_id(op_index: usize) -> String {
    format!("e{op_index}.end")
}

pub fn side_face_id(op_index: usize, k: usize) -> String {
    format!("e{op_index}.side{k}")
}

/// Extrudes `profile` along the plane normal by the signed `distance`.
pub fn extrude_profile(profile: &Profile, plane: &SketchPlane, distance: f64, op_index: usize) -> Result<Solid, KernelError> {
    extrude_profile_with_sides(profile, plane, distance, op_index, 0).map(|(s, _)| s)
}

/// As [`extrude_profile`], numbering side faces from `side_base`; returns the
/// next free side number so several profiles of one extrude get distinct ids.
pub fn extrude_profile_with_sides(
    profile: &Profile,
    plane: &SketchPlane,
    distance: f64,
    op_index: usize,
    side_base: usize,
) -> Result<(Solid, usize), KernelError> {
    if !distance.is_finite() || distance.abs() <= EPS_GEO {
        return Err(KernelError::DegenerateExtrude { distance });
    }
    if profile.area <= EPS_GEO * EPS_GEO {
        return Err(KernelError::DegenerateProfile { area: profile.area });
    }
    let frame = plane.frame();
    let n = frame.normal;
    let s = distance.signum();
    let offset = n * distance;

    let loops: Vec<&Loop> = profile.loops().collect();
    let pts2: Vec<&[crate::math::Vec2]> = loops.iter().map(|l| l.points.as_slice()).collect();
    let cap = triangulate_loops(&pts2)?;

    let total: usize = loops.iter().map(|l| l.points.len()).sum();
    let mut vertices = Vec::with_capacity(2 * total);
    for l in &loops {
        vertices.extend(l.points.iter().map(|p| frame.to_world(*p)));
    }
    for i in 0..total {
        let p = vertices[i] + offset;
        vertices.push(p);
    }

    let mut faces = vec![
        FaceTag {
            face_id: start_face_id(op_index),
            op_index,
            role: FaceRole::Start,
            surface: SurfaceDesc::plane(frame.origin, n * -s, frame.u),
        },
        FaceTag {
            face_id: end_face_id(op_index),
            op_index,
            role: FaceRole::End,
            surface: SurfaceDesc::plane(frame.origin + offset, n * s, frame.u),
        },
    ];
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut tri_face: Vec<u32> = Vec::new();
    let t = total as u32;
    for tri in &cap {
        let [a, b, c] = tri.map(|i| i as u32);
        // a counterclockwise 2D triangle faces +normal in world space
        if s > 0.0 {
            triangles.push([a, c, b]);
            triangles.push([a + t, b + t, c + t]);
        } else {
            triangles.push([a, b, c]);
            triangles.push([a + t, c + t, b + t]);
        }
        tri_face.push(0);
        tri_face.push(1);
    }

    let mut side = side_base;
    let mut base = 0u32;
    for l in &loops {
        let m = l.points.len();
        // start at a group boundary so runs do not wrap
        let first = (0..m).find(|&i| l.sources[i].group != l.sources[(i + m - 1) % m].group).unwrap_or(0);
        let mut current_group: Option<u32> = None;
        let mut face_idx = 0u32;
        for k in 0..m {
            let i = (first + k) % m;
            let src = l.sources[i];
            if current_group != Some(src.group) {
                current_group = Some(src.group);
                faces.push(side_tag(&frame, l, i, s, op_index, side));
                face_idx = (faces.len() - 1) as u32;
                side += 1;
            }
            let j = (i + 1) % m;
            let (bi, bj) = (base + i as u32, base + j as u32);
            let (ti, tj) = (bi + t, bj + t);
            if s > 0.0 {
                triangles.push([bi, bj, tj]);
                triangles.push([bi, tj, ti]);
            } else {
                triangles.push([bi, tj, bj]);
                triangles.push([bi, ti, tj]);
            }
            tri_face.push(face_idx);
            tri_face.push(face_idx);
        }
        base += m as u32;
    }

    let solid = Solid { vertices, triangles, tri_face, faces, body_id: format!("b{op_index}") };
    solid.check_closed().map_err(|_| KernelError::OpenResultMesh { context: "extrude".into() })?;
    Ok((solid, side))
}

fn side_tag(frame: &PlaneFrame, l: &Loop, i: usize, s: f64, op_index: usize, k: usize) -> FaceTag {
    let m = l.points.len();
    let a = frame.to_world(l.points[i]);
    let b = frame.to_world(l.points[(i + 1) % m]);
    let surface = match l.sources[i].curve {
        EdgeCurve::Line => {
            let dir = (b - a).normalized().unwrap_or(frame.u);
            let outward = dir.cross(frame.normal);
            SurfaceDesc::plane(a, outward, dir)
        }
        EdgeCurve::Arc { center, radius } => {
            let axis = if s > 0.0 { frame.normal } else { -frame.normal };
            SurfaceDesc::Cylinder { origin: frame.to_world(center), axis, radius }
        }
    };
    FaceTag { face_id: side_face_id(op_index, k), op_index, role: FaceRole::Side, surface }
}

/// Translation that maps the sketch plane to the end plane.
pub fn extrude_offset(plane: &SketchPlane, distance: f64) -> Vec3 {
    plane.normal * distance
}
