//! Geometry kernel: sketch arrangement, extrusion, mesh Booleans and
//! volumetric queries.

pub mod arrangement;
pub mod boolean;
pub mod cleanup;
pub mod csg;
pub mod extrude;
pub mod obj;
pub mod occupancy;
pub mod sketch;
pub mod solid;
pub mod triangulate;

use thiserror::Error;

pub use arrangement::{curve_set_stats, ComponentStats};
pub use boolean::{boolean, union_all};
pub use extrude::{end_face_id, extrude_profile, side_face_id, start_face_id};
pub use obj::write_obj;
pub use occupancy::{occupancy, OccupancyGrid};
pub use sketch::{build_profiles, build_profiles_with, ChordPolicy, Curve, CurveShape, PlaneSource, Profile, SketchPlane};
pub use solid::{BoolOp, FaceRole, FaceTag, Solid, SurfaceDesc, SurfaceKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("degenerate curve {curve}: {reason}")]
    DegenerateCurve { curve: String, reason: String },
    #[error("intersections closer than the tolerance cannot be ordered")]
    ToleranceCollapse,
    #[error("sketch has no curves")]
    EmptySketch,
    #[error("profile area {area} is below tolerance")]
    DegenerateProfile { area: f64 },
    #[error("extrude distance {distance} is below tolerance")]
    DegenerateExtrude { distance: f64 },
    #[error("{op} needs at least one existing body")]
    EmptyCurrent { op: BoolOp },
    #[error("mesh is not closed ({edges} bad edges)")]
    OpenMesh { edges: usize },
    #[error("result mesh is not closed after {context}")]
    OpenResultMesh { context: String },
    #[error("solid has non-positive volume {volume}")]
    InvertedSolid { volume: f64 },
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("internal kernel error: {0}")]
    Internal(String),
}

/// Volume of a closed solid by the divergence theorem.
pub fn solid_volume(solid: &Solid) -> Result<f64, KernelError> {
    solid.volume()
}
