//! Face-adjacency graphs with per-face UV-grid features.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::kernel::solid::{Solid, SurfaceDesc, SurfaceKind, UnionFind};
use crate::math::{quantize, Aabb, PlaneFrame, Vec2, Vec3, EPS_GEO};

/// Samples per parameter direction.
pub const GRID: usize = 10;
pub const GRID_CELLS: usize = GRID * GRID;
/// Width of the node feature vector: points, normals, trim mask, surface one-hot.
pub const NODE_FEATURES: usize = 3 * GRID_CELLS + 3 * GRID_CELLS + GRID_CELLS + SurfaceKind::COUNT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({0:?}, {1:?}) has more than two incident faces")]
    NonManifoldEdge([f64; 3], [f64; 3]),
}

/// One connected face region of a body.
#[derive(Clone, Debug)]
pub struct FaceRegion {
    pub body: usize,
    pub face_id: String,
    pub surface: SurfaceDesc,
    pub triangles: Vec<[Vec3; 3]>,
    pub area: f64,
    pub centroid: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceNode {
    pub face_id: String,
    pub surface: SurfaceDesc,
    pub points: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    pub trim_mask: Vec<bool>,
    pub area: f64,
    pub centroid: Vec3,
    /// Mesh of the face region; not part of the wire form.
    #[serde(skip)]
    pub triangles: Vec<[Vec3; 3]>,
}

impl FaceNode {
    pub fn kind(&self) -> SurfaceKind {
        self.surface.kind()
    }

    pub fn is_planar(&self) -> bool {
        self.surface.is_planar()
    }

    pub fn surface_one_hot(&self) -> [f64; SurfaceKind::COUNT] {
        let mut h = [0.0; SurfaceKind::COUNT];
        h[self.kind().one_hot_index()] = 1.0;
        h
    }

    /// Flat feature vector of width [`NODE_FEATURES`].
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(NODE_FEATURES);
        f.extend(self.points.iter().flatten());
        f.extend(self.normals.iter().flatten());
        f.extend(self.trim_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        f.extend(self.surface_one_hot());
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceGraph {
    pub nodes: Vec<FaceNode>,
    pub edges: Vec<(usize, usize)>,
    pub bbox: Aabb,
}

impl FaceGraph {
    pub fn empty(bbox: Aabb) -> Self {
        FaceGraph { nodes: Vec::new(), edges: Vec::new(), bbox }
    }

    pub fn node_index(&self, face_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.face_id == face_id)
    }

    pub fn planar_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_planar()).count()
    }

    /// Neighbor lists, sorted.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    /// Wire form: `{nodes:[{id, surface, points, normals, trim_mask}], edges, bbox}`.
    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                json!({
                    "id": n.face_id,
                    "surface": format!("{:?}", n.kind()),
                    "points": n.points.iter().flatten().collect::<Vec<_>>(),
                    "normals": n.normals.iter().flatten().collect::<Vec<_>>(),
                    "trim_mask": n.trim_mask.iter().map(|&b| b as u8).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "nodes": nodes,
            "edges": self.edges.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>(),
            "bbox": {"min": self.bbox.min.to_array(), "max": self.bbox.max.to_array()},
        })
    }
}

/// Connected same-id face regions of all bodies, in body then first-triangle order.
pub fn face_regions(bodies: &[Solid]) -> Vec<FaceRegion> {
    regions_with_owner(bodies).0
}

/// Regions plus, per body, the region index of every triangle.
fn regions_with_owner(bodies: &[Solid]) -> (Vec<FaceRegion>, Vec<Vec<usize>>) {
    let mut out = Vec::new();
    let mut owner = Vec::with_capacity(bodies.len());
    for (bi, s) in bodies.iter().enumerate() {
        let n = s.triangles.len();
        let mut uf = UnionFind::new(n);
        let mut users: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (t, tri) in s.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                users.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        for u in users.values() {
            if u.len() == 2 && s.tag(u[0]).face_id == s.tag(u[1]).face_id {
                uf.union(u[0], u[1]);
            }
        }
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let start = out.len();
        let mut own = Vec::with_capacity(n);
        for t in 0..n {
            let r = uf.find(t);
            let g = *slot.entry(r).or_insert_with(|| {
                let tag = s.tag(t);
                out.push(FaceRegion {
                    body: bi,
                    face_id: tag.face_id.clone(),
                    surface: tag.surface,
                    triangles: Vec::new(),
                    area: 0.0,
                    centroid: Vec3::ZERO,
                });
                out.len() - 1
            });
            out[g].triangles.push(s.triangle_points(t));
            own.push(g);
        }
        owner.push(own);
        for r in &mut out[start..] {
            let (mut c, mut w) = (Vec3::ZERO, 0.0);
            for [a, b, d] in &r.triangles {
                let area = 0.5 * (*b - *a).cross(*d - *a).length();
                c += (*a + *b + *d) * (area / 3.0);
                w += area;
            }
            r.area = w;
            r.centroid = if w > 0.0 { c / w } else { r.triangles[0][0] };
        }
    }
    (out, owner)
}

fn sort_key(r: &FaceRegion) -> (usize, i64, i64, i64, i64) {
    let q = |x: f64| quantize(x, EPS_GEO);
    (r.surface.kind().one_hot_index(), q(r.centroid.x), q(r.centroid.y), q(r.centroid.z), q(r.area))
}

/// Builds the face-adjacency graph of `bodies`, normalizing sample points by
/// `normalization_bbox`.
pub fn extract_graph(bodies: &[Solid], normalization_bbox: &Aabb) -> Result<FaceGraph, GraphError> {
    let (mut regions, owner) = regions_with_owner(bodies);
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| {
        sort_key(&regions[a])
            .cmp(&sort_key(&regions[b]))
            .then_with(|| regions[a].face_id.cmp(&regions[b].face_id))
            .then(regions[a].body.cmp(&regions[b].body))
    });
    let mut rank = vec![0; regions.len()];
    for (k, &r) in order.iter().enumerate() {
        rank[r] = k;
    }

    let mut edges: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    for (bi, s) in bodies.iter().enumerate() {
        let mut users: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (t, tri) in s.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                users.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        if let Some(&(a, b)) = users.iter().filter(|(_, u)| u.len() > 2).map(|(k, _)| k).min() {
            return Err(GraphError::NonManifoldEdge(s.vertices[a as usize].to_array(), s.vertices[b as usize].to_array()));
        }
        for u in users.values() {
            if u.len() == 2 {
                let (x, y) = (rank[owner[bi][u[0]]], rank[owner[bi][u[1]]]);
                if x != y {
                    edges.insert((x.min(y), x.max(y)), ());
                }
            }
        }
    }

    let mut slots: Vec<Option<FaceRegion>> = regions.drain(..).map(Some).collect();
    let nodes = order
        .iter()
        .map(|&r| {
            let reg = slots[r].take().expect("each region used once");
            let (points, normals, trim_mask) = sample_face_features(&reg, normalization_bbox);
            FaceNode {
                face_id: reg.face_id,
                surface: reg.surface,
                points,
                normals,
                trim_mask,
                area: reg.area,
                centroid: reg.centroid,
                triangles: reg.triangles,
            }
        })
        .collect();
    Ok(FaceGraph { nodes, edges: edges.into_keys().collect(), bbox: crate::kernel::solid::bodies_bbox(bodies) })
}

/// Normalization: the bbox center goes to the origin and the largest
/// extent to 1, so the bbox lands inside the centered unit cube.
pub fn normalize_point(p: Vec3, bbox: &Aabb) -> Vec3 {
    let s = bbox.max_extent().max(EPS_GEO);
    (p - bbox.center()) / s
}

fn point_in_tri(p: Vec2, t: &[Vec2; 3], tol: f64) -> bool {
    let d = |a: Vec2, b: Vec2| {
        let e = b - a;
        let l = e.length().max(1e-300);
        e.cross(p - a) / l
    };
    let area = (t[1] - t[0]).cross(t[2] - t[0]);
    let s = if area >= 0.0 { 1.0 } else { -1.0 };
    s * d(t[0], t[1]) >= -tol && s * d(t[1], t[2]) >= -tol && s * d(t[2], t[0]) >= -tol
}

fn linspace(lo: f64, hi: f64, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (GRID - 1) as f64
}

/// Samples a `GRID`×`GRID` grid over the face's parameter-space bounding
/// rectangle. Returns normalized points, unit normals and the trim mask.
pub fn sample_face_features(face: &FaceRegion, bbox: &Aabb) -> (Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<bool>) {
    let tol = 1e-7 * bbox.max_extent().max(1.0);
    let mut points = Vec::with_capacity(GRID_CELLS);
    let mut normals = Vec::with_capacity(GRID_CELLS);
    let mut mask = Vec::with_capacity(GRID_CELLS);
    match face.surface {
        SurfaceDesc::Plane { origin, normal, u, v } => {
            let frame = PlaneFrame { origin, u, v, normal };
            let tris: Vec<[Vec2; 3]> = face.triangles.iter().map(|t| t.map(|p| frame.to_local(p))).collect();
            let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
            for t in &tris {
                for p in t {
                    lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
                    hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
                }
            }
            for i in 0..GRID {
                for j in 0..GRID {
                    let q = Vec2::new(linspace(lo.x, hi.x, i), linspace(lo.y, hi.y, j));
                    points.push(normalize_point(frame.to_world(q), bbox).to_array());
                    normals.push(normal.to_array());
                    mask.push(tris.iter().any(|t| point_in_tri(q, t, tol)));
                }
            }
        }
        SurfaceDesc::Cylinder { origin, axis, radius } => {
            let e1 = axis.any_orthogonal();
            let e2 = axis.cross(e1);
            let param = |p: Vec3| {
                let d = p - origin;
                let a = d.dot(e2).atan2(d.dot(e1));
                (if a < 0.0 { a + TAU } else { a }, d.dot(axis))
            };
            let ptris: Vec<[(f64, f64); 3]> = face.triangles.iter().map(|t| t.map(param)).collect();
            let (theta0, span, closed) = angular_extent(&ptris);
            let (mut hlo, mut hhi) = (f64::INFINITY, f64::NEG_INFINITY);
            for t in &ptris {
                for &(_, h) in t {
                    hlo = hlo.min(h);
                    hhi = hhi.max(h);
                }
            }
            // orientation: outward normal of the mesh versus the radial direction
            let mut sign_acc = 0.0;
            for t in &face.triangles {
                let n = (t[1] - t[0]).cross(t[2] - t[0]);
                let c = (t[0] + t[1] + t[2]) / 3.0;
                let d = c - origin;
                let radial = d - axis * d.dot(axis);
                sign_acc += n.dot(radial);
            }
            let sign = if sign_acc < 0.0 { -1.0 } else { 1.0 };
            // unwrap every triangle relative to theta0
            let unwrapped: Vec<[Vec2; 3]> = ptris
                .iter()
                .map(|t| {
                    let base = (t[0].0 - theta0).rem_euclid(TAU);
                    t.map(|(a, h)| {
                        let mut d = a - t[0].0;
                        if d > std::f64::consts::PI {
                            d -= TAU;
                        } else if d < -std::f64::consts::PI {
                            d += TAU;
                        }
                        Vec2::new((base + d) * radius, h)
                    })
                })
                .collect();
            for i in 0..GRID {
                let rel = if closed { span * i as f64 / GRID as f64 } else { linspace(0.0, span, i) };
                let theta = theta0 + rel;
                let radial = e1 * theta.cos() + e2 * theta.sin();
                for j in 0..GRID {
                    let h = linspace(hlo, hhi, j);
                    let p = origin + axis * h + radial * radius;
                    points.push(normalize_point(p, bbox).to_array());
                    normals.push((radial * sign).to_array());
                    let inside = [0.0, TAU, -TAU].iter().any(|&shift| {
                        let q = Vec2::new((rel + shift) * radius, h);
                        unwrapped.iter().any(|t| point_in_tri(q, t, tol))
                    });
                    mask.push(inside);
                }
            }
        }
    }
    (points, normals, mask)
}

/// Angular start, span and closedness of a cylindrical region given its
/// triangles in (angle, height) coordinates.
fn angular_extent(tris: &[[(f64, f64); 3]]) -> (f64, f64, bool) {
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for t in tris {
        let mut a: Vec<f64> = t.iter().map(|p| p.0).collect();
        a.sort_by(f64::total_cmp);
        // minimal arc containing the three angles: complement of the largest gap
        let gaps = [(a[1] - a[0], 1usize), (a[2] - a[1], 2), (a[0] + TAU - a[2], 0)];
        let (_, start_idx) = gaps.iter().copied().fold((f64::NEG_INFINITY, 0), |m, g| if g.0 > m.0 { g } else { m });
        let start = a[start_idx];
        let largest = gaps.iter().map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
        let len = TAU - largest;
        if start + len > TAU {
            intervals.push((start, TAU));
            intervals.push((0.0, start + len - TAU));
        } else {
            intervals.push((start, start + len));
        }
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let eps = 1e-9;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in intervals {
        match merged.last_mut() {
            Some(last) if s <= last.1 + eps => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    if merged.len() == 1 && merged[0].0 <= eps && merged[0].1 >= TAU - eps {
        return (0.0, TAU, true);
    }
    // largest uncovered gap, circularly
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..merged.len() {
        let end = merged[k].1;
        let next = if k + 1 < merged.len() { merged[k + 1].0 } else { merged[0].0 + TAU };
        if next - end > best.0 {
            best = (next - end, next);
        }
    }
    let start = best.1.rem_euclid(TAU);
    (start, TAU - best.0, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::solid::testutil::box_solid;

    #[test]
    fn cube_graph_topology() {
        let c = box_solid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), "c");
        let g = extract_graph(std::slice::from_ref(&c), &c.bbox()).unwrap();
        assert_eq!(g.nodes.len(), 6);
        assert_eq!(g.edges.len(), 12);
        assert!(g.nodes.iter().all(|n| n.is_planar() && n.trim_mask.iter().all(|&m| m)));
        let top = g.nodes.iter().find(|n| n.normals[0] == [0.0, 0.0, 1.0]).unwrap();
        assert!(top.normals.iter().all(|n| *n == [0.0, 0.0, 1.0]));
        for n in &g.nodes {
            for p in &n.points {
                assert!(p.iter().all(|x| x.abs() <= 0.5 + EPS_GEO));
            }
        }
    }

    #[test]
    fn empty_geometry_has_no_nodes() {
        let bb = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0));
        let g = extract_graph(&[], &bb).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn angular_extent_of_half_circle() {
        let step = std::f64::consts::PI / 8.0;
        let tris: Vec<[(f64, f64); 3]> =
            (0..8).map(|k| [(k as f64 * step, 0.0), ((k + 1) as f64 * step, 0.0), (k as f64 * step, 1.0)]).collect();
        let (s, span, closed) = angular_extent(&tris);
        assert!(!closed);
        assert!(s.abs() < 1e-12 && (span - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn feature_width() {
        assert_eq!(NODE_FEATURES, 708);
    }
}
