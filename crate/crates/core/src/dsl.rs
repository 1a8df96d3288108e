//! Sketch-and-extrude programs: canonical JSON form, validation, and an
//! interpreter that records every intermediate geometry state.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use thiserror::Error;

use crate::kernel::boolean::{boolean, union_all};
use crate::kernel::extrude::extrude_profile_with_sides;
use crate::kernel::sketch::{build_profiles, Curve, CurveShape, Profile, SketchPlane};
use crate::kernel::solid::{BoolOp, Solid, SurfaceDesc};
use crate::kernel::KernelError;
use crate::math::{Vec2, Vec3, EPS_GEO};

/// Plane identifier of a sketch: a canonical plane or a planar face.
#[derive(Clone, Debug, PartialEq)]
pub enum PlaneRef {
    Xy,
    Yz,
    Xz,
    Face(String),
}

impl Serialize for PlaneRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PlaneRef::Xy => s.serialize_str("XY"),
            PlaneRef::Yz => s.serialize_str("YZ"),
            PlaneRef::Xz => s.serialize_str("XZ"),
            PlaneRef::Face(id) => json!({ "face": id }).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for PlaneRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) => match s.as_str() {
                "XY" => Ok(PlaneRef::Xy),
                "YZ" => Ok(PlaneRef::Yz),
                "XZ" => Ok(PlaneRef::Xz),
                other => Err(D::Error::custom(format!("unknown plane {other:?}"))),
            },
            Value::Object(m) if m.len() == 1 => match m.get("face") {
                Some(Value::String(id)) => Ok(PlaneRef::Face(id.clone())),
                _ => Err(D::Error::custom("plane object must be {\"face\": id}")),
            },
            _ => Err(D::Error::custom("plane must be \"XY\", \"YZ\", \"XZ\" or {\"face\": id}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Sketch { plane: PlaneRef, curves: Vec<Curve> },
    Extrude { profiles: Vec<String>, distance: f64, operation: BoolOp },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub commands: Vec<Command>,
    /// Opaque passthrough data (imported constraints and dimensions).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, Value>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unsupported curve {entity} of type {kind}")]
    UnsupportedCurve { entity: String, kind: String },
    #[error("unsupported extrude {entity}: {reason}")]
    UnsupportedExtrude { entity: String, reason: String },
    #[error("unsupported sketch plane in {entity}")]
    UnsupportedPlane { entity: String },
    #[error("command {command}: unknown identifier {id}")]
    UnknownIdentifier { command: usize, id: String },
    #[error("program has no commands")]
    EmptyProgram,
    #[error("command {command}: the first extrude must create a new body")]
    FirstExtrudeNotNewBody { command: usize },
    #[error("command {command}: {reason}")]
    InvalidCommand { command: usize, reason: String },
    #[error("command {command}: face {face} is not planar")]
    PlaneNotPlanar { command: usize, face: String },
    #[error("command {command}: profile {id} not found")]
    ProfileNotFound { command: usize, id: String },
    #[error("command {command}: {source}")]
    Kernel { command: usize, source: KernelError },
}

const SUPPORTED_CURVES: [&str; 3] = ["line", "arc", "circle"];
const KNOWN_UNSUPPORTED_CURVES: [&str; 7] =
    ["spline", "fitted_spline", "fixed_spline", "ellipse", "elliptical_arc", "conic", "nurbs"];
const UNSUPPORTED_EXTRUDE_KEYS: [&str; 5] = ["taper_angle", "symmetric", "two_sided", "distance_two", "extent_two"];

/// Parses a program in the canonical JSON schema and resolves its profile
/// identifiers. Ordering rules are checked by [`validate`].
pub fn parse_program(source: &str) -> Result<Program, DslError> {
    let v: Value = serde_json::from_str(source).map_err(|e| DslError::Syntax(e.to_string()))?;
    let cmds = v
        .get("commands")
        .and_then(Value::as_array)
        .ok_or_else(|| DslError::Syntax("expected an object with a \"commands\" array".into()))?;
    for (i, c) in cmds.iter().enumerate() {
        match c.get("type").and_then(Value::as_str) {
            Some("sketch") => {
                for curve in c.get("curves").and_then(Value::as_array).into_iter().flatten() {
                    let kind = curve.get("type").and_then(Value::as_str).unwrap_or("");
                    if KNOWN_UNSUPPORTED_CURVES.contains(&kind) {
                        let entity = curve.get("id").and_then(Value::as_str).unwrap_or("?").to_string();
                        return Err(DslError::UnsupportedCurve { entity, kind: kind.into() });
                    }
                    if !SUPPORTED_CURVES.contains(&kind) {
                        return Err(DslError::Syntax(format!("command {i}: unknown curve type {kind:?}")));
                    }
                }
            }
            Some("extrude") => {
                if let Some(key) = UNSUPPORTED_EXTRUDE_KEYS.iter().find(|k| c.get(**k).is_some()) {
                    return Err(DslError::UnsupportedExtrude { entity: format!("command {i}"), reason: (*key).into() });
                }
            }
            other => return Err(DslError::Syntax(format!("command {i}: unknown command type {other:?}"))),
        }
    }
    let p: Program = serde_json::from_value(v).map_err(|e| DslError::Syntax(e.to_string()))?;
    check_identifiers(&p)?;
    Ok(p)
}

/// Canonical JSON text: fixed key order, shortest round-trip numbers.
pub fn serialize_program(program: &Program) -> String {
    serde_json::to_string(program).expect("programs always serialize")
}

fn check_identifiers(p: &Program) -> Result<(), DslError> {
    let mut known: Vec<Vec<String>> = Vec::new();
    for (i, c) in p.commands.iter().enumerate() {
        match c {
            Command::Sketch { curves, .. } => {
                let ids = build_profiles(curves, EPS_GEO)
                    .map_err(|source| DslError::Kernel { command: i, source })?
                    .into_iter()
                    .map(|pr| pr.id)
                    .collect();
                known.push(ids);
            }
            Command::Extrude { profiles, .. } => {
                for id in profiles {
                    if !known.iter().any(|k| k.contains(id)) {
                        return Err(DslError::UnknownIdentifier { command: i, id: id.clone() });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Structural checks: non-empty, first extrude creates a new body, every
/// extrude has profiles and a non-zero distance, identifiers resolve.
pub fn validate(p: &Program) -> Result<(), DslError> {
    if p.commands.is_empty() {
        return Err(DslError::EmptyProgram);
    }
    let mut seen_extrude = false;
    let mut seen_sketch = false;
    for (i, c) in p.commands.iter().enumerate() {
        match c {
            Command::Sketch { .. } => seen_sketch = true,
            Command::Extrude { profiles, distance, operation } => {
                if !seen_sketch {
                    return Err(DslError::InvalidCommand { command: i, reason: "extrude before any sketch".into() });
                }
                if profiles.is_empty() {
                    return Err(DslError::InvalidCommand { command: i, reason: "no profiles".into() });
                }
                if !distance.is_finite() || distance.abs() <= EPS_GEO {
                    return Err(DslError::InvalidCommand { command: i, reason: format!("distance {distance}") });
                }
                if !seen_extrude && *operation != BoolOp::NewBody {
                    return Err(DslError::FirstExtrudeNotNewBody { command: i });
                }
                seen_extrude = true;
            }
        }
    }
    check_identifiers(p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SketchRecord {
    pub command: usize,
    pub plane: SketchPlane,
    pub curves: Vec<Curve>,
    pub profiles: Vec<Profile>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtrudeRecord {
    pub command: usize,
    pub op_index: usize,
    pub sketch: usize,
    pub profiles: Vec<String>,
    pub distance: f64,
    pub op: BoolOp,
    /// The extruded tool before the Boolean.
    pub tool: Solid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExecutionTrace {
    /// Geometry before the first command and after each command.
    pub snapshots: Vec<Vec<Solid>>,
    pub sketches: Vec<SketchRecord>,
    pub extrudes: Vec<ExtrudeRecord>,
}

impl ExecutionTrace {
    pub fn final_bodies(&self) -> &[Solid] {
        self.snapshots.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Snapshot right after the given extrude.
    pub fn after_extrude(&self, k: usize) -> &[Solid] {
        &self.snapshots[self.extrudes[k].command + 1]
    }
}

/// Incremental interpreter over a single global geometry state.
#[derive(Clone, Debug, Default)]
pub struct Interpreter {
    pub bodies: Vec<Solid>,
    pub sketches: Vec<SketchRecord>,
    pub extrude_count: usize,
}

/// Sketch plane of a planar face of `bodies`.
pub fn face_plane(bodies: &[Solid], face_id: &str) -> Option<Result<SketchPlane, SurfaceDesc>> {
    let tag = bodies.iter().flat_map(|s| s.faces.iter()).find(|f| f.face_id == face_id)?;
    Some(match tag.surface {
        SurfaceDesc::Plane { origin, normal, .. } => Ok(SketchPlane::anchored(origin, normal, face_id)),
        other => Err(other),
    })
}

impl Interpreter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn resolve_plane(&self, command: usize, plane: &PlaneRef) -> Result<SketchPlane, DslError> {
        match plane {
            PlaneRef::Xy => Ok(SketchPlane::xy()),
            PlaneRef::Yz => Ok(SketchPlane::yz()),
            PlaneRef::Xz => Ok(SketchPlane::xz()),
            PlaneRef::Face(id) => match face_plane(&self.bodies, id) {
                None => Err(DslError::UnknownIdentifier { command, id: id.clone() }),
                Some(Err(_)) => Err(DslError::PlaneNotPlanar { command, face: id.clone() }),
                Some(Ok(p)) => Ok(p),
            },
        }
    }

    /// Runs one sketch command; returns the new sketch's index.
    pub fn sketch(&mut self, command: usize, plane: &PlaneRef, curves: &[Curve]) -> Result<usize, DslError> {
        let plane = self.resolve_plane(command, plane)?;
        let profiles = build_profiles(curves, EPS_GEO).map_err(|source| DslError::Kernel { command, source })?;
        self.sketches.push(SketchRecord { command, plane, curves: curves.to_vec(), profiles });
        Ok(self.sketches.len() - 1)
    }

    /// Extrudes the named profiles (all from the most recent sketch that
    /// defines the first one) and applies the Boolean.
    pub fn extrude(&mut self, command: usize, profiles: &[String], distance: f64, op: BoolOp) -> Result<ExtrudeRecord, DslError> {
        let first = profiles
            .first()
            .ok_or_else(|| DslError::InvalidCommand { command, reason: "no profiles".into() })?;
        let si = self
            .sketches
            .iter()
            .rposition(|s| s.profiles.iter().any(|p| &p.id == first))
            .ok_or_else(|| DslError::ProfileNotFound { command, id: first.clone() })?;
        let sk = &self.sketches[si];
        let op_index = self.extrude_count;
        let kerr = |source| DslError::Kernel { command, source };
        let mut pieces = Vec::with_capacity(profiles.len());
        let mut side = 0;
        for id in profiles {
            let pr = sk
                .profiles
                .iter()
                .find(|p| &p.id == id)
                .ok_or_else(|| DslError::ProfileNotFound { command, id: id.clone() })?;
            let (solid, next) = extrude_profile_with_sides(pr, &sk.plane, distance, op_index, side).map_err(kerr)?;
            side = next;
            pieces.push(solid);
        }
        let tool = if pieces.len() == 1 {
            pieces.pop().expect("one piece")
        } else {
            union_all(&pieces, &format!("b{op_index}")).map_err(kerr)?
        };
        let bodies = boolean(&self.bodies, &tool, op).map_err(kerr)?;
        self.bodies = bodies;
        self.extrude_count += 1;
        Ok(ExtrudeRecord { command, op_index, sketch: si, profiles: profiles.to_vec(), distance, op, tool })
    }

    pub fn apply(&mut self, command: usize, c: &Command) -> Result<Option<ExtrudeRecord>, DslError> {
        match c {
            Command::Sketch { plane, curves } => self.sketch(command, plane, curves).map(|_| None),
            Command::Extrude { profiles, distance, operation } => {
                self.extrude(command, profiles, *distance, *operation).map(Some)
            }
        }
    }
}

/// Validates and runs `program`, recording a snapshot after every command.
pub fn execute(program: &Program) -> Result<ExecutionTrace, DslError> {
    validate(program)?;
    let mut it = Interpreter::new();
    let mut snapshots = vec![Vec::new()];
    let mut extrudes = Vec::new();
    for (i, c) in program.commands.iter().enumerate() {
        if let Some(r) = it.apply(i, c)? {
            extrudes.push(r);
        }
        snapshots.push(it.bodies.clone());
    }
    Ok(ExecutionTrace { snapshots, sketches: it.sketches, extrudes })
}

/// Program construction helpers.
impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sketch(&mut self, plane: PlaneRef, curves: Vec<Curve>) -> &mut Self {
        self.commands.push(Command::Sketch { plane, curves });
        self
    }

    pub fn extrude(&mut self, profiles: Vec<String>, distance: f64, operation: BoolOp) -> &mut Self {
        self.commands.push(Command::Extrude { profiles, distance, operation });
        self
    }

    pub fn extrude_count(&self) -> usize {
        self.commands.iter().filter(|c| matches!(c, Command::Extrude { .. })).count()
    }

    pub fn curve_count(&self) -> usize {
        self.commands
            .iter()
            .map(|c| match c {
                Command::Sketch { curves, .. } => curves.len(),
                Command::Extrude { .. } => 0,
            })
            .sum()
    }
}

/// Axis-aligned rectangle as four lines with ids `{prefix}0..3`.
pub fn rectangle(prefix: &str, min: Vec2, max: Vec2) -> Vec<Curve> {
    let c = [min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)];
    (0..4).map(|k| Curve::line(format!("{prefix}{k}"), c[k], c[(k + 1) % 4])).collect()
}

// ---------------------------------------------------------------------------
// Import of the published reconstruction dataset layout.

fn num(v: &Value) -> Option<f64> {
    v.as_f64().or_else(|| v.get("value").and_then(Value::as_f64))
}

fn point3(v: &Value, points: Option<&Value>) -> Option<Vec3> {
    let v = match v {
        Value::String(id) => points?.get(id)?,
        other => other,
    };
    Some(Vec3::new(num(v.get("x")?)?, num(v.get("y")?)?, v.get("z").and_then(num).unwrap_or(0.0)))
}

struct ImportFrame {
    origin: Vec3,
    x: Vec3,
    y: Vec3,
    plane: SketchPlane,
    plane_ref: PlaneRef,
    flip: bool,
}

impl ImportFrame {
    fn to_plane(&self, p: Vec3) -> Vec2 {
        let world = self.origin + self.x * p.x + self.y * p.y;
        self.plane.frame().to_local(world)
    }
}

fn import_frame(sketch_id: &str, sk: &Value) -> Result<ImportFrame, DslError> {
    let unsupported = || DslError::UnsupportedPlane { entity: sketch_id.to_string() };
    let t = sk.get("transform").ok_or_else(unsupported)?;
    let origin = t.get("origin").and_then(|v| point3(v, None)).unwrap_or(Vec3::ZERO);
    let x = t.get("x_axis").and_then(|v| point3(v, None)).unwrap_or(Vec3::X);
    let y = t.get("y_axis").and_then(|v| point3(v, None)).unwrap_or(Vec3::Y);
    let z = t.get("z_axis").and_then(|v| point3(v, None)).unwrap_or_else(|| x.cross(y));
    for (plane, plane_ref) in [(SketchPlane::xy(), PlaneRef::Xy), (SketchPlane::yz(), PlaneRef::Yz), (SketchPlane::xz(), PlaneRef::Xz)] {
        let d = z.dot(plane.normal);
        if (d.abs() - 1.0).abs() < 1e-9 && origin.dot(plane.normal).abs() < EPS_GEO {
            return Ok(ImportFrame { origin, x, y, plane, plane_ref, flip: d < 0.0 });
        }
    }
    Err(unsupported())
}

fn import_curve(id: &str, c: &Value, points: Option<&Value>, f: &ImportFrame) -> Result<Option<Curve>, DslError> {
    let kind = c.get("type").and_then(Value::as_str).unwrap_or("");
    if c.get("construction_geom").and_then(Value::as_bool) == Some(true) {
        return Ok(None);
    }
    let bad = || DslError::Syntax(format!("curve {id}: missing geometry"));
    let p = |key: &str| c.get(key).and_then(|v| point3(v, points)).map(|q| f.to_plane(q)).ok_or_else(bad);
    match kind {
        "SketchLine" => Ok(Some(Curve::line(id, p("start_point")?, p("end_point")?))),
        "SketchCircle" => {
            let r = c.get("radius").and_then(num).ok_or_else(bad)?;
            Ok(Some(Curve::circle(id, p("center_point")?, r)))
        }
        "SketchArc" => {
            let (center, mut s, mut e) = (p("center_point")?, p("start_point")?, p("end_point")?);
            let normal_z = c.get("normal").and_then(|v| point3(v, None)).map(|n| n.z).unwrap_or(1.0);
            // clockwise in the record frame, or mirrored by the frame change
            if (normal_z < 0.0) != f.flip {
                std::mem::swap(&mut s, &mut e);
            }
            let a0 = (s - center).y.atan2((s - center).x);
            let a1 = (e - center).y.atan2((e - center).x);
            let mut sweep = (a1 - a0).to_degrees().rem_euclid(360.0);
            if sweep <= 1e-9 {
                sweep = 360.0;
            }
            Ok(Some(Curve::arc(id, s, center, sweep)))
        }
        _ => Err(DslError::UnsupportedCurve { entity: id.to_string(), kind: kind.to_string() }),
    }
}

/// A point strictly inside the record profile and its area, in plane coordinates.
fn record_profile_probe(pv: &Value, f: &ImportFrame) -> Option<(Vec2, f64)> {
    let mut loops: Vec<Vec<Vec2>> = Vec::new();
    for lp in pv.get("loops")?.as_array()? {
        let mut pts = Vec::new();
        for pc in lp.get("profile_curves")?.as_array()? {
            let get = |k: &str| pc.get(k).and_then(|v| point3(v, None)).map(|q| f.to_plane(q));
            match pc.get("type").and_then(Value::as_str)? {
                "SketchCircle" => {
                    let c = get("center_point")?;
                    let r = pc.get("radius").and_then(num)?;
                    pts.extend((0..64).map(|k| {
                        let a = std::f64::consts::TAU * k as f64 / 64.0;
                        c + Vec2::new(a.cos(), a.sin()) * r
                    }));
                }
                _ => {
                    let s = get("start_point")?;
                    let e = get("end_point")?;
                    // orient each piece to continue the chain
                    if let Some(&last) = pts.last() {
                        if last.distance(e) < last.distance(s) {
                            pts.push(e);
                            continue;
                        }
                    }
                    pts.push(s);
                }
            }
        }
        if pts.len() >= 3 {
            loops.push(pts);
        }
    }
    let refs: Vec<&[Vec2]> = loops.iter().map(Vec::as_slice).collect();
    let tris = crate::kernel::triangulate::triangulate_loops(&refs).ok()?;
    let all: Vec<Vec2> = loops.concat();
    let mut best: Option<(f64, Vec2)> = None;
    let mut area = 0.0;
    for t in &tris {
        let a = 0.5 * (all[t[1]] - all[t[0]]).cross(all[t[2]] - all[t[0]]);
        area += a;
        let c = (all[t[0]] + all[t[1]] + all[t[2]]) / 3.0;
        if best.is_none_or(|(ba, _)| a > ba) {
            best = Some((a, c));
        }
    }
    best.map(|(_, c)| (c, area))
}

/// Best-effort conversion of a record in the published dataset layout
/// (entities keyed by id, a `sequence` list of sketches and extrude features).
pub fn import_dataset_record(document: &Value) -> Result<Program, DslError> {
    let entities = document.get("entities").ok_or_else(|| DslError::Syntax("missing entities".into()))?;
    let seq = document
        .get("sequence")
        .and_then(Value::as_array)
        .ok_or_else(|| DslError::Syntax("missing sequence".into()))?;
    let mut program = Program::new();
    let mut frames: BTreeMap<String, (ImportFrame, Vec<Profile>)> = BTreeMap::new();
    for step in seq {
        let id = step.get("entity").and_then(Value::as_str).ok_or_else(|| DslError::Syntax("sequence entry without entity".into()))?;
        let e = entities.get(id).ok_or_else(|| DslError::Syntax(format!("unknown entity {id}")))?;
        match e.get("type").and_then(Value::as_str) {
            Some("Sketch") => {
                let f = import_frame(id, e)?;
                let points = e.get("points");
                let mut curves = Vec::new();
                if let Some(Value::Object(cs)) = e.get("curves") {
                    for (cid, c) in cs {
                        if let Some(curve) = import_curve(cid, c, points, &f)? {
                            curves.push(curve);
                        }
                    }
                }
                let profiles = build_profiles(&curves, EPS_GEO).map_err(|source| DslError::Kernel { command: program.commands.len(), source })?;
                let mut notes = serde_json::Map::new();
                for k in ["constraints", "dimensions"] {
                    if let Some(v) = e.get(k) {
                        notes.insert(k.into(), v.clone());
                    }
                }
                if !notes.is_empty() {
                    program.annotations.insert(id.to_string(), Value::Object(notes));
                }
                program.sketch(f.plane_ref.clone(), curves);
                frames.insert(id.to_string(), (f, profiles));
            }
            Some("ExtrudeFeature") => {
                let unsupported = |reason: &str| DslError::UnsupportedExtrude { entity: id.to_string(), reason: reason.into() };
                let extent_type = e.get("extent_type").and_then(Value::as_str).unwrap_or("OneSideFeatureExtentType");
                if extent_type != "OneSideFeatureExtentType" {
                    return Err(unsupported(extent_type));
                }
                if let Some(t) = e.get("start_extent").and_then(|s| s.get("type")).and_then(Value::as_str) {
                    if t != "ProfilePlaneStartDefinition" {
                        return Err(unsupported(t));
                    }
                }
                let one = e.get("extent_one").ok_or_else(|| unsupported("missing extent_one"))?;
                if let Some(t) = one.get("type").and_then(Value::as_str) {
                    if t != "DistanceExtentDefinition" {
                        return Err(unsupported(t));
                    }
                }
                if one.get("taper_angle").and_then(num).is_some_and(|a| a.abs() > 1e-12) {
                    return Err(unsupported("taper"));
                }
                let mut distance = one.get("distance").and_then(num).ok_or_else(|| unsupported("missing distance"))?;
                let op = e
                    .get("operation")
                    .and_then(Value::as_str)
                    .and_then(BoolOp::parse)
                    .ok_or_else(|| unsupported("operation"))?;
                let mut ids = Vec::new();
                let mut flip = None;
                for pr in e.get("profiles").and_then(Value::as_array).into_iter().flatten() {
                    let sid = pr.get("sketch").and_then(Value::as_str).unwrap_or("");
                    let pid = pr.get("profile").and_then(Value::as_str).unwrap_or("");
                    let (f, ours) = frames.get(sid).ok_or_else(|| DslError::UnknownIdentifier { command: program.commands.len(), id: sid.into() })?;
                    let pv = entities.get(sid).and_then(|s| s.get("profiles")).and_then(|p| p.get(pid));
                    let (probe, area) = pv
                        .and_then(|pv| record_profile_probe(pv, f))
                        .ok_or_else(|| DslError::UnknownIdentifier { command: program.commands.len(), id: pid.into() })?;
                    let m = ours
                        .iter()
                        .filter(|p| p.contains(probe))
                        .min_by(|a, b| (a.area - area.abs()).abs().total_cmp(&(b.area - area.abs()).abs()))
                        .ok_or_else(|| DslError::UnknownIdentifier { command: program.commands.len(), id: pid.into() })?;
                    ids.push(m.id.clone());
                    flip = Some(f.flip);
                }
                if flip == Some(true) {
                    distance = -distance;
                }
                program.extrude(ids, distance, op);
            }
            Some(other) => return Err(DslError::UnsupportedExtrude { entity: id.to_string(), reason: other.to_string() }),
            None => return Err(DslError::Syntax(format!("entity {id} has no type"))),
        }
    }
    validate(&program)?;
    Ok(program)
}

/// Evaluates `shape` at `t` in [0, 1]; used by generators and tests.
pub fn curve_point(shape: &CurveShape, t: f64) -> Vec2 {
    match *shape {
        CurveShape::Line { start, end } => start.lerp(end, t),
        CurveShape::Arc { start, center, angle } => {
            let d = start - center;
            let a = d.y.atan2(d.x) + angle.to_radians() * t;
            center + Vec2::new(a.cos(), a.sin()) * d.length()
        }
        CurveShape::Circle { center, radius } => {
            let a = std::f64::consts::TAU * t;
            center + Vec2::new(a.cos(), a.sin()) * radius
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_program() -> Program {
        let sq = rectangle("c", Vec2::ZERO, Vec2::new(1.0, 1.0));
        let id = build_profiles(&sq, EPS_GEO).unwrap()[0].id.clone();
        let mut p = Program::new();
        p.sketch(PlaneRef::Xy, sq).extrude(vec![id], 1.0, BoolOp::NewBody);
        p
    }

    #[test]
    fn cube_program_parses_and_runs() {
        let p = cube_program();
        let text = serialize_program(&p);
        let q = parse_program(&text).unwrap();
        assert_eq!(q.commands.len(), 2);
        let t = execute(&q).unwrap();
        assert_eq!(t.snapshots.len(), 3);
        assert_eq!(t.final_bodies().len(), 1);
        assert!((t.final_bodies()[0].volume().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let text = serialize_program(&cube_program());
        assert_eq!(serialize_program(&parse_program(&text).unwrap()), text);
        assert!(text.starts_with("{\"commands\":[{\"type\":\"sketch\",\"plane\":\"XY\",\"curves\":[{\"id\":\"c0\",\"type\":\"line\""));
    }

    #[test]
    fn empty_program_serializes_but_fails_validation() {
        let p = Program::new();
        assert_eq!(serialize_program(&p), "{\"commands\":[]}");
        assert_eq!(validate(&p), Err(DslError::EmptyProgram));
    }

    #[test]
    fn first_extrude_must_be_new_body() {
        let mut p = cube_program();
        if let Command::Extrude { operation, .. } = &mut p.commands[1] {
            *operation = BoolOp::Join;
        }
        assert!(matches!(validate(&p), Err(DslError::FirstExtrudeNotNewBody { command: 1 })));
    }

    #[test]
    fn arc_and_circle_records() {
        let text = r#"{"commands":[{"type":"sketch","plane":{"face":"e0.end"},"curves":[
            {"id":"a","type":"arc","start":[1,0],"center":[0,0],"angle":180},
            {"id":"l","type":"line","start":[-1,0],"end":[1,0]},
            {"id":"c","type":"circle","center":[5,5],"radius":0.5}]}]}"#;
        let p = parse_program(text).unwrap();
        match &p.commands[0] {
            Command::Sketch { plane, curves } => {
                assert_eq!(*plane, PlaneRef::Face("e0.end".into()));
                assert_eq!(curves[0].shape, CurveShape::Arc { start: Vec2::new(1.0, 0.0), center: Vec2::ZERO, angle: 180.0 });
                assert_eq!(curves[2].shape, CurveShape::Circle { center: Vec2::new(5.0, 5.0), radius: 0.5 });
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unsupported_curve_and_extrude() {
        let spline = r#"{"commands":[{"type":"sketch","plane":"XY","curves":[{"id":"s1","type":"spline"}]}]}"#;
        assert!(matches!(parse_program(spline), Err(DslError::UnsupportedCurve { entity, .. }) if entity == "s1"));
        let taper = r#"{"commands":[{"type":"extrude","profiles":["p"],"distance":1,"operation":"join","taper_angle":5}]}"#;
        assert!(matches!(parse_program(taper), Err(DslError::UnsupportedExtrude { .. })));
        assert!(matches!(parse_program("{"), Err(DslError::Syntax(_))));
    }

    #[test]
    fn unknown_profile_is_flagged() {
        let mut p = cube_program();
        p.extrude(vec!["p0000000000000000".into()], 1.0, BoolOp::Join);
        let text = serialize_program(&p);
        assert!(matches!(parse_program(&text), Err(DslError::UnknownIdentifier { command: 2, .. })));
    }

    #[test]
    fn sketch_on_end_face_uses_its_plane() {
        let mut p = cube_program();
        let small = rectangle("s", Vec2::new(0.25, 0.25), Vec2::new(0.75, 0.75));
        let id = build_profiles(&small, EPS_GEO).unwrap()[0].id.clone();
        p.sketch(PlaneRef::Face("e0.end".into()), small).extrude(vec![id], 0.5, BoolOp::Join);
        let t = execute(&p).unwrap();
        let plane = &t.sketches[1].plane;
        assert_eq!(plane.normal, Vec3::Z);
        assert!((plane.origin.z - 1.0).abs() < 1e-12);
        assert_eq!(t.final_bodies().len(), 1);
        assert!((t.final_bodies()[0].volume().unwrap() - 1.125).abs() < 1e-9);
    }

    #[test]
    fn cut_everything_leaves_no_bodies() {
        let mut p = cube_program();
        let big = rectangle("b", Vec2::new(-1.0, -1.0), Vec2::new(2.0, 2.0));
        let id = build_profiles(&big, EPS_GEO).unwrap()[0].id.clone();
        p.sketch(PlaneRef::Xy, big).extrude(vec![id], 2.0, BoolOp::Cut);
        let t = execute(&p).unwrap();
        assert!(t.final_bodies().is_empty());
        assert_eq!(t.snapshots.len(), 5);
    }
}
