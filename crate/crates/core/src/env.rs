//! Sequential reconstruction environment: current and target geometry,
//! face-extrusion and sketch actions, IoU feedback and step accounting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brep::{extract_graph, FaceGraph, GraphError};
use crate::dsl::{execute, Command, DslError, Interpreter, PlaneRef, Program};
use crate::eval::{grid_iou, CONFIRM_RESOLUTION, IOU_RESOLUTION};
use crate::kernel::boolean::{boolean, union_all};
use crate::kernel::extrude::extrude_profile_with_sides;
use crate::kernel::occupancy::{occupancy, OccupancyGrid};
use crate::kernel::sketch::{build_profiles, profile_content_id, Curve, EdgeCurve, EdgeSource, Loop, Profile, SketchPlane};
use crate::kernel::solid::{bodies_bbox, BoolOp, Solid, SurfaceDesc};
use crate::math::{point_in_polygon, polygon_area, Aabb, Vec2, Vec3, EPS_GEO};

/// Extrude the region of target face `start` up to the plane of target face
/// `end`. Faces are indices into the target graph's node list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaceExtrude {
    pub start: usize,
    pub end: usize,
    pub op: BoolOp,
}

/// Incremental sketch-and-extrude actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SketchAction {
    Sketch { plane: PlaneRef },
    Line { start: Vec2, end: Vec2 },
    Arc { start: Vec2, center: Vec2, angle: f64 },
    Circle { center: Vec2, radius: f64 },
    Extrude { profiles: Vec<String>, distance: f64, operation: BoolOp },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("no target has been set")]
    NoTarget,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("step {step}: {reason}")]
    Unconvertible { step: usize, reason: String },
    #[error(transparent)]
    Dsl(#[from] DslError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepResult {
    pub valid: bool,
    /// Why the action was rejected.
    pub error: Option<String>,
    pub current_graph: FaceGraph,
    pub iou: Option<f64>,
    pub exact: bool,
    pub reward: f64,
    pub bodies: usize,
    pub steps_taken: usize,
    /// Profile ids of the open sketch after a sketch action.
    pub profiles: Vec<String>,
}

struct Target {
    bodies: Vec<Solid>,
    graph: FaceGraph,
    bbox: Aabb,
    grid: OccupancyGrid,
    confirm: Option<OccupancyGrid>,
    /// Graph nodes incident to each mesh edge.
    edge_owner: HashMap<EdgeKey, Vec<usize>>,
}

type PointKey = [u64; 3];
type EdgeKey = (PointKey, PointKey);

fn pkey(p: Vec3) -> PointKey {
    p.to_array().map(f64::to_bits)
}

fn ekey(a: PointKey, b: PointKey) -> EdgeKey {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Saved current geometry; restoring it is free.
#[derive(Clone, Debug, Default)]
pub struct Snapshot(Interpreter);

#[derive(Default)]
pub struct Env {
    target: Option<Target>,
    state: Interpreter,
    /// Whether sketch curves may be added.
    open_sketch: bool,
    steps_taken: usize,
    pub seed: u64,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn current(&self) -> &[Solid] {
        &self.state.bodies
    }

    pub fn target_bodies(&self) -> Option<&[Solid]> {
        self.target.as_ref().map(|t| t.bodies.as_slice())
    }

    pub fn target_graph(&self) -> Option<&FaceGraph> {
        self.target.as_ref().map(|t| &t.graph)
    }

    /// Replaces the target, clears the current geometry and the step count.
    pub fn set_target(&mut self, bodies: Vec<Solid>) -> Result<(FaceGraph, Aabb), EnvError> {
        let bbox = bodies_bbox(&bodies);
        let graph = extract_graph(&bodies, &bbox)?;
        let grid = occupancy(&bodies, &bbox, IOU_RESOLUTION);
        let mut edge_owner: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
        for (i, n) in graph.nodes.iter().enumerate() {
            for t in &n.triangles {
                for k in 0..3 {
                    let owners = edge_owner.entry(ekey(pkey(t[k]), pkey(t[(k + 1) % 3]))).or_default();
                    if !owners.contains(&i) {
                        owners.push(i);
                    }
                }
            }
        }
        let out = (graph.clone(), bbox);
        self.target = Some(Target { bodies, graph, bbox, grid, confirm: None, edge_owner });
        self.state = Interpreter::new();
        self.open_sketch = false;
        self.steps_taken = 0;
        Ok(out)
    }

    /// Clears the current geometry without charging a step.
    pub fn revert_to_target(&mut self) -> Result<StepResult, EnvError> {
        if self.target.is_none() {
            return Err(EnvError::NoTarget);
        }
        self.state = Interpreter::new();
        self.open_sketch = false;
        Ok(self.result(true, None, Vec::new()))
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot(self.state.clone())
    }

    pub fn restore(&mut self, s: &Snapshot) {
        self.state = s.0.clone();
        self.open_sketch = false;
    }

    /// Current-geometry graph, normalized by the target's bounding box when
    /// a target is set.
    pub fn current_graph(&self) -> FaceGraph {
        let bb = self.target.as_ref().map(|t| t.bbox).unwrap_or_else(|| bodies_bbox(&self.state.bodies));
        extract_graph(&self.state.bodies, &bb).unwrap_or_else(|_| FaceGraph::empty(bodies_bbox(&self.state.bodies)))
    }

    /// IoU against the target and grid-identity exactness.
    fn score(&mut self) -> Option<(f64, bool)> {
        let t = self.target.as_mut()?;
        let cur = &self.state.bodies;
        if cur.is_empty() {
            return Some((0.0, false));
        }
        let bb = bodies_bbox(cur).union(&t.bbox);
        let same_domain = bb == t.bbox;
        let tgrid = if same_domain { t.grid.clone() } else { occupancy(&t.bodies, &bb, IOU_RESOLUTION) };
        let iou = grid_iou(&occupancy(cur, &bb, IOU_RESOLUTION), &tgrid);
        if iou < 1.0 {
            return Some((iou, false));
        }
        let tconf = if same_domain {
            t.confirm.get_or_insert_with(|| occupancy(&t.bodies, &t.bbox, CONFIRM_RESOLUTION)).clone()
        } else {
            occupancy(&t.bodies, &bb, CONFIRM_RESOLUTION)
        };
        Some((iou, occupancy(cur, &bb, CONFIRM_RESOLUTION) == tconf))
    }

    fn result(&mut self, valid: bool, error: Option<String>, profiles: Vec<String>) -> StepResult {
        let (iou, exact) = match self.score() {
            Some((i, e)) => (Some(i), e),
            None => (None, false),
        };
        StepResult {
            valid,
            error,
            current_graph: self.current_graph(),
            iou,
            exact,
            reward: if exact { 1.0 } else { 0.0 },
            bodies: self.state.bodies.len(),
            steps_taken: self.steps_taken,
            profiles,
        }
    }

    /// Builds the extrusion tool for a face extrusion without touching state.
    fn face_tool(&self, a: &FaceExtrude) -> Result<Solid, String> {
        let t = self.target.as_ref().ok_or("no target")?;
        let n = t.graph.nodes.len();
        if a.start >= n || a.end >= n {
            return Err(format!("face index out of range (target has {n} faces)"));
        }
        let (sn, en) = (&t.graph.nodes[a.start], &t.graph.nodes[a.end]);
        let (SurfaceDesc::Plane { origin: so, .. }, SurfaceDesc::Plane { origin: eo, normal: en_n, .. }) = (sn.surface, en.surface)
        else {
            return Err("start and end faces must be planar".into());
        };
        let normal = region_normal(&sn.triangles).ok_or("degenerate start face")?;
        if normal.cross(en_n).length() > 1e-6 {
            return Err("start and end faces are not parallel".into());
        }
        let distance = (eo - so).dot(normal);
        if distance.abs() <= EPS_GEO {
            return Err("start and end faces are coplanar".into());
        }
        if self.state.bodies.is_empty() && a.op != BoolOp::NewBody {
            return Err(format!("{} requires existing geometry", a.op));
        }
        let plane = SketchPlane::anchored(so, normal, &sn.face_id);
        let profiles = face_profiles(t, a.start, &plane)?;
        let op_index = self.state.extrude_count;
        let mut side = 0;
        let mut pieces = Vec::new();
        for p in &profiles {
            let (s, next) = extrude_profile_with_sides(p, &plane, distance, op_index, side).map_err(|e| e.to_string())?;
            side = next;
            pieces.push(s);
        }
        if pieces.len() == 1 {
            Ok(pieces.pop().expect("one piece"))
        } else {
            union_all(&pieces, &format!("b{op_index}")).map_err(|e| e.to_string())
        }
    }

    /// Applies one face extrusion. Rejected actions still charge a step and
    /// leave the current geometry unchanged.
    pub fn step_face_extrude(&mut self, a: &FaceExtrude) -> Result<StepResult, EnvError> {
        if self.target.is_none() {
            return Err(EnvError::NoTarget);
        }
        self.steps_taken += 1;
        self.open_sketch = false;
        let outcome = self
            .face_tool(a)
            .and_then(|tool| boolean(&self.state.bodies, &tool, a.op).map_err(|e| e.to_string()));
        Ok(match outcome {
            Ok(bodies) => {
                self.state.bodies = bodies;
                self.state.extrude_count += 1;
                self.result(true, None, Vec::new())
            }
            Err(reason) => self.result(false, Some(reason), Vec::new()),
        })
    }

    /// Applies one incremental sketch action with program semantics.
    pub fn step_sketch(&mut self, a: &SketchAction) -> StepResult {
        self.steps_taken += 1;
        let cmd = self.state.sketches.len();
        let outcome: Result<Vec<String>, String> = match a {
            SketchAction::Sketch { plane } => self.state.resolve_plane(cmd, plane).map_err(|e| e.to_string()).map(|plane| {
                self.state.sketches.push(crate::dsl::SketchRecord { command: cmd, plane, curves: Vec::new(), profiles: Vec::new() });
                self.open_sketch = true;
                Vec::new()
            }),
            SketchAction::Line { start, end } => self.add_curve(|id| Curve::line(id, *start, *end)),
            SketchAction::Arc { start, center, angle } => self.add_curve(|id| Curve::arc(id, *start, *center, *angle)),
            SketchAction::Circle { center, radius } => self.add_curve(|id| Curve::circle(id, *center, *radius)),
            SketchAction::Extrude { profiles, distance, operation } => {
                if !distance.is_finite() || distance.abs() <= EPS_GEO {
                    Err(format!("invalid distance {distance}"))
                } else if self.state.bodies.is_empty() && *operation != BoolOp::NewBody {
                    Err(format!("{operation} requires existing geometry"))
                } else {
                    let mut next = self.state.clone();
                    next.extrude(cmd, profiles, *distance, *operation).map_err(|e| e.to_string()).map(|_| {
                        self.state = next;
                        self.open_sketch = false;
                        Vec::new()
                    })
                }
            }
        };
        match outcome {
            Ok(p) => self.result(true, None, p),
            Err(reason) => self.result(false, Some(reason), Vec::new()),
        }
    }

    fn add_curve(&mut self, make: impl FnOnce(String) -> Curve) -> Result<Vec<String>, String> {
        if !self.open_sketch {
            return Err("no open sketch".into());
        }
        let sk = self.state.sketches.last_mut().expect("open sketch exists");
        let mut curves = sk.curves.clone();
        curves.push(make(format!("c{}", curves.len())));
        let profiles = build_profiles(&curves, EPS_GEO).map_err(|e| e.to_string())?;
        let ids = profiles.iter().map(|p| p.id.clone()).collect();
        sk.curves = curves;
        sk.profiles = profiles;
        Ok(ids)
    }

    /// Runs a whole program command against the current geometry.
    pub fn step_command(&mut self, c: &Command) -> StepResult {
        self.steps_taken += 1;
        let mut next = self.state.clone();
        let cmd = next.sketches.len();
        match next.apply(cmd, c) {
            Ok(_) => {
                self.state = next;
                self.open_sketch = matches!(c, Command::Sketch { .. });
                let ids = match c {
                    Command::Sketch { .. } => self.state.sketches.last().map(|s| s.profiles.iter().map(|p| p.id.clone()).collect()).unwrap_or_default(),
                    Command::Extrude { .. } => Vec::new(),
                };
                self.result(true, None, ids)
            }
            Err(e) => self.result(false, Some(e.to_string()), Vec::new()),
        }
    }
}

fn region_normal(tris: &[[Vec3; 3]]) -> Option<Vec3> {
    let mut n = Vec3::ZERO;
    for [a, b, c] in tris {
        n += (*b - *a).cross(*c - *a);
    }
    n.normalized()
}

/// Profiles of a target face region in `plane`'s frame. Boundary edges are
/// labeled with the neighboring face so that an edge run along one
/// neighboring cylinder becomes a single arc-sourced side.
fn face_profiles(t: &Target, node: usize, plane: &SketchPlane) -> Result<Vec<Profile>, String> {
    let tris = &t.graph.nodes[node].triangles;
    let mut directed: HashMap<(PointKey, PointKey), usize> = HashMap::new();
    let mut pos: HashMap<PointKey, Vec3> = HashMap::new();
    for tri in tris {
        for k in 0..3 {
            let (a, b) = (pkey(tri[k]), pkey(tri[(k + 1) % 3]));
            pos.insert(a, tri[k]);
            *directed.entry((a, b)).or_default() += 1;
        }
    }
    let mut boundary: Vec<(PointKey, PointKey)> =
        directed.keys().filter(|(a, b)| !directed.contains_key(&(*b, *a))).copied().collect();
    boundary.sort_unstable();
    let mut out_edges: HashMap<PointKey, Vec<PointKey>> = HashMap::new();
    for &(a, b) in &boundary {
        out_edges.entry(a).or_default().push(b);
    }
    let frame = plane.frame();
    let mut used: HashMap<(PointKey, PointKey), bool> = HashMap::new();
    let mut loops: Vec<Loop> = Vec::new();
    for &(a0, b0) in &boundary {
        if used.contains_key(&(a0, b0)) {
            continue;
        }
        let mut keys = vec![a0];
        let (mut a, mut b) = (a0, b0);
        loop {
            used.insert((a, b), true);
            if b == a0 {
                break;
            }
            keys.push(b);
            let next = out_edges
                .get(&b)
                .and_then(|v| v.iter().find(|c| !used.contains_key(&(b, **c))).copied())
                .ok_or("face boundary is not closed")?;
            a = b;
            b = next;
        }
        if keys.len() < 3 {
            continue;
        }
        let m = keys.len();
        let mut points: Vec<Vec2> = keys.iter().map(|k| frame.to_local(pos[k])).collect();
        let mut sources: Vec<EdgeSource> = (0..m)
            .map(|i| {
                let e = ekey(keys[i], keys[(i + 1) % m]);
                let nb = t.edge_owner.get(&e).and_then(|o| o.iter().find(|&&j| j != node).copied());
                let curve = match nb.map(|j| t.graph.nodes[j].surface) {
                    Some(SurfaceDesc::Cylinder { origin, axis, radius }) if axis.cross(plane.normal).length() < 1e-6 => {
                        EdgeCurve::Arc { center: frame.to_local(origin), radius }
                    }
                    _ => EdgeCurve::Line,
                };
                let group = nb.map(|j| j as u32).unwrap_or(u32::MAX - i as u32);
                EdgeSource { group, curve }
            })
            .collect();
        simplify_collinear(&mut points, &mut sources);
        if points.len() >= 3 {
            loops.push(Loop { points, sources });
        }
    }

    let (outers, holes): (Vec<Loop>, Vec<Loop>) = loops.into_iter().partition(|l| l.signed_area() > 0.0);
    if outers.is_empty() {
        return Err("start face has no outer boundary".into());
    }
    let mut groups: Vec<(Loop, Vec<Loop>)> = outers.into_iter().map(|o| (o, Vec::new())).collect();
    for h in holes {
        let probe = h.points[0].lerp(h.points[1], 0.5);
        let owner = groups
            .iter()
            .enumerate()
            .filter(|(_, (o, _))| point_in_polygon(probe, &o.points))
            .min_by(|a, b| a.1 .0.signed_area().total_cmp(&b.1 .0.signed_area()))
            .map(|(i, _)| i)
            .ok_or("hole outside every outer boundary")?;
        groups[owner].1.push(h);
    }
    Ok(groups
        .into_iter()
        .map(|(outer, holes)| {
            let hole_pts: Vec<Vec<Vec2>> = holes.iter().map(|h| h.points.clone()).collect();
            let area = polygon_area(&outer.points) + holes.iter().map(|h| polygon_area(&h.points)).sum::<f64>();
            Profile { id: profile_content_id(&outer.points, &hole_pts), outer, holes, area }
        })
        .collect())
}

/// Drops vertices between collinear edges of the same straight group.
fn simplify_collinear(points: &mut Vec<Vec2>, sources: &mut Vec<EdgeSource>) {
    loop {
        let m = points.len();
        if m <= 3 {
            return;
        }
        let drop = (0..m).find(|&i| {
            let (p, q) = ((i + m - 1) % m, (i + 1) % m);
            let (s0, s1) = (sources[p], sources[i]);
            if s0.group != s1.group || s0.curve != EdgeCurve::Line || s1.curve != EdgeCurve::Line {
                return false;
            }
            let (u, v) = (points[i] - points[p], points[q] - points[i]);
            u.cross(v).abs() <= 1e-9 * u.length() * v.length() && u.dot(v) > 0.0
        });
        match drop {
            Some(i) => {
                points.remove(i);
                sources.remove(i);
                // edge i-1 now runs to the old vertex i+1 and keeps its source
            }
            None => return,
        }
    }
}

/// Converts a program into face extrusions over its own final geometry.
/// Each extrude needs a target face coplanar with its sketch plane whose
/// region matches the extruded profiles, and a parallel target face at the
/// extrude distance; either may serve as the start.
pub fn convert_to_face_extrusion(program: &Program) -> Result<Vec<FaceExtrude>, EnvError> {
    let trace = execute(program)?;
    let target = trace.final_bodies().to_vec();
    let bbox = bodies_bbox(&target);
    let graph = extract_graph(&target, &bbox)?;
    let mut out = Vec::with_capacity(trace.extrudes.len());
    for (k, e) in trace.extrudes.iter().enumerate() {
        let unconvertible = |reason: &str| EnvError::Unconvertible { step: k, reason: reason.to_string() };
        let sk = &trace.sketches[e.sketch];
        let n = sk.plane.normal;
        let start_plane = sk.plane.origin;
        let end_plane = start_plane + n * e.distance;
        let profiles: Vec<&Profile> =
            e.profiles.iter().filter_map(|id| sk.profiles.iter().find(|p| &p.id == id)).collect();
        let area: f64 = profiles.iter().map(|p| p.area).sum();
        let frame = sk.plane.frame();
        let matches_region = |node: usize, plane_point: Vec3| -> bool {
            let f = &graph.nodes[node];
            let SurfaceDesc::Plane { normal, origin, .. } = f.surface else { return false };
            if normal.cross(n).length() > 1e-6 || (origin - plane_point).dot(n).abs() > EPS_GEO {
                return false;
            }
            let tol = 1e-6 * area.max(1.0);
            if (f.area - area).abs() > tol {
                return false;
            }
            // every region vertex lies on some profile boundary or inside one
            f.triangles.iter().flatten().all(|p| {
                let q = frame.to_local(*p);
                profiles.iter().any(|pr| pr.contains(q) || on_boundary(pr, q))
            })
        };
        let parallel_at = |plane_point: Vec3| -> Option<usize> {
            graph.nodes.iter().position(|f| match f.surface {
                SurfaceDesc::Plane { normal, origin, .. } => {
                    normal.cross(n).length() <= 1e-6 && (origin - plane_point).dot(n).abs() <= EPS_GEO
                }
                _ => false,
            })
        };
        let starts: Vec<usize> = (0..graph.nodes.len()).filter(|&i| matches_region(i, start_plane)).collect();
        let action = if let (Some(&s), Some(t)) = (starts.first(), parallel_at(end_plane)) {
            FaceExtrude { start: s, end: t, op: e.op }
        } else {
            let ends: Vec<usize> = (0..graph.nodes.len()).filter(|&i| matches_region(i, end_plane)).collect();
            match (ends.first(), parallel_at(start_plane)) {
                (Some(&s), Some(t)) => FaceExtrude { start: s, end: t, op: e.op },
                _ => return Err(unconvertible("profile region not present in the target geometry")),
            }
        };
        out.push(action);
    }
    Ok(out)
}

fn on_boundary(p: &Profile, q: Vec2) -> bool {
    p.loops().any(|l| {
        let m = l.points.len();
        (0..m).any(|i| crate::math::point_segment_distance2(q, l.points[i], l.points[(i + 1) % m]).0 <= 1e-6)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::rectangle;

    fn cube_program() -> Program {
        let sq = rectangle("c", Vec2::ZERO, Vec2::new(1.0, 1.0));
        let id = build_profiles(&sq, EPS_GEO).unwrap()[0].id.clone();
        let mut p = Program::new();
        p.sketch(PlaneRef::Xy, sq).extrude(vec![id], 1.0, BoolOp::NewBody);
        p
    }

    fn cube_env() -> Env {
        let mut env = Env::new();
        env.set_target(execute(&cube_program()).unwrap().final_bodies().to_vec()).unwrap();
        env
    }

    #[test]
    fn cube_target_graph() {
        let mut env = Env::new();
        let (g, bb) = env.set_target(execute(&cube_program()).unwrap().final_bodies().to_vec()).unwrap();
        assert_eq!(g.nodes.len(), 6);
        assert_eq!(g.edges.len(), 12);
        assert_eq!(bb, Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)));
    }

    #[test]
    fn cube_by_face_extrusion() {
        let actions = convert_to_face_extrusion(&cube_program()).unwrap();
        assert_eq!(actions.len(), 1);
        let mut env = cube_env();
        let r = env.step_face_extrude(&actions[0]).unwrap();
        assert!(r.valid && r.exact, "{r:?}");
        assert_eq!(r.iou, Some(1.0));
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn coplanar_and_empty_join_are_invalid_but_charged() {
        let mut env = cube_env();
        let a = FaceExtrude { start: 0, end: 0, op: BoolOp::NewBody };
        let r = env.step_face_extrude(&a).unwrap();
        assert!(!r.valid);
        assert_eq!(env.steps_taken(), 1);
        let good = convert_to_face_extrusion(&cube_program()).unwrap()[0];
        let r = env.step_face_extrude(&FaceExtrude { op: BoolOp::Join, ..good }).unwrap();
        assert!(!r.valid);
        assert_eq!(env.steps_taken(), 2);
        assert!(env.current().is_empty());
    }

    #[test]
    fn revert_is_free() {
        let mut env = cube_env();
        let good = convert_to_face_extrusion(&cube_program()).unwrap()[0];
        for _ in 0..3 {
            env.step_face_extrude(&good).unwrap();
        }
        let r = env.revert_to_target().unwrap();
        assert_eq!(r.steps_taken, 3);
        assert!(env.current().is_empty());
        assert!(matches!(Env::new().revert_to_target(), Err(EnvError::NoTarget)));
    }

    #[test]
    fn sketch_actions_build_a_cube() {
        let mut env = cube_env();
        let r = env.step_sketch(&SketchAction::Line { start: Vec2::ZERO, end: Vec2::new(1.0, 0.0) });
        assert!(!r.valid);
        env.step_sketch(&SketchAction::Sketch { plane: PlaneRef::Xy });
        let c = [Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
        let mut last = None;
        for k in 0..4 {
            last = Some(env.step_sketch(&SketchAction::Line { start: c[k], end: c[(k + 1) % 4] }));
        }
        let ids = last.unwrap().profiles;
        assert_eq!(ids.len(), 1);
        let bad = env.step_sketch(&SketchAction::Extrude { profiles: vec!["pffff".into()], distance: 1.0, operation: BoolOp::NewBody });
        assert!(!bad.valid);
        let r = env.step_sketch(&SketchAction::Extrude { profiles: ids, distance: 1.0, operation: BoolOp::NewBody });
        assert!(r.valid && r.exact);
        assert_eq!(env.steps_taken(), 8);
    }
}
