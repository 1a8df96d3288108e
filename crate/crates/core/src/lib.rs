//! Sketch-and-extrude CAD interpreter, a reconstruction environment over
//! face-adjacency graphs, and neurally guided program search.

pub mod agent;
pub mod brep;
pub mod dsl;
pub mod env;
pub mod eval;
pub mod fixtures;
pub mod kernel;
pub mod math;
pub mod search;
pub mod server;
pub mod synth;

pub use kernel::{BoolOp, Curve, FaceRole, FaceTag, KernelError, Profile, SketchPlane, Solid, SurfaceDesc, SurfaceKind};
pub use math::{Aabb, Vec2, Vec3, EPS_GEO};
