use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::KernelError;
use crate::math::{Aabb, PlaneFrame, Vec3};

/// Boolean combination mode of an extrude with existing bodies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolOp {
    NewBody,
    Join,
    Cut,
    Intersect,
}

impl BoolOp {
    pub const ALL: [BoolOp; 4] = [BoolOp::NewBody, BoolOp::Join, BoolOp::Cut, BoolOp::Intersect];

    pub fn index(self) -> usize {
        match self {
            BoolOp::NewBody => 0,
            BoolOp::Join => 1,
            BoolOp::Cut => 2,
            BoolOp::Intersect => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<BoolOp> {
        BoolOp::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoolOp::NewBody => "new_body",
            BoolOp::Join => "join",
            BoolOp::Cut => "cut",
            BoolOp::Intersect => "intersect",
        }
    }

    pub fn parse(s: &str) -> Option<BoolOp> {
        match s {
            "new_body" | "NewBodyFeatureOperation" => Some(BoolOp::NewBody),
            "join" | "JoinFeatureOperation" => Some(BoolOp::Join),
            "cut" | "CutFeatureOperation" => Some(BoolOp::Cut),
            "intersect" | "IntersectFeatureOperation" => Some(BoolOp::Intersect),
            _ => None,
        }
    }
}

impl fmt::Display for BoolOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Surface type slots of the face one-hot encoding. Only `Plane` and
/// `Cylinder` are ever produced by the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurfaceKind {
    Cone,
    Cylinder,
    Elliptical,
    EllipticalCylinder,
    Nurbs,
    Plane,
    Sphere,
    Torus,
}

impl SurfaceKind {
    pub const COUNT: usize = 8;

    pub fn one_hot_index(self) -> usize {
        self as usize
    }
}

/// Analytic surface underlying a face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceDesc {
    /// `normal` points out of the solid.
    Plane { origin: Vec3, normal: Vec3, u: Vec3, v: Vec3 },
    Cylinder { origin: Vec3, axis: Vec3, radius: f64 },
}

impl SurfaceDesc {
    pub fn plane(origin: Vec3, normal: Vec3, u: Vec3) -> SurfaceDesc {
        SurfaceDesc::Plane { origin, normal, u, v: normal.cross(u) }
    }

    pub fn kind(&self) -> SurfaceKind {
        match self {
            SurfaceDesc::Plane { .. } => SurfaceKind::Plane,
            SurfaceDesc::Cylinder { .. } => SurfaceKind::Cylinder,
        }
    }

    pub fn is_planar(&self) -> bool {
        matches!(self, SurfaceDesc::Plane { .. })
    }

    pub fn plane_frame(&self) -> Option<PlaneFrame> {
        match *self {
            SurfaceDesc::Plane { origin, normal, u, v } => Some(PlaneFrame { origin, u, v, normal }),
            SurfaceDesc::Cylinder { .. } => None,
        }
    }

    /// Same surface with the outward side reversed.
    pub fn flipped(&self) -> SurfaceDesc {
        match *self {
            SurfaceDesc::Plane { origin, normal, u, .. } => SurfaceDesc::plane(origin, -normal, u),
            c @ SurfaceDesc::Cylinder { .. } => c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceRole {
    Start,
    End,
    Side,
}

/// Provenance of a face: which extrude created it and in what role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceTag {
    pub face_id: String,
    pub op_index: usize,
    pub role: FaceRole,
    pub surface: SurfaceDesc,
}

/// Closed, outward oriented triangle mesh with per-triangle face provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solid {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Index into `faces` for every triangle.
    pub tri_face: Vec<u32>,
    pub faces: Vec<FaceTag>,
    pub body_id: String,
}

impl Solid {
    pub fn tag(&self, tri: usize) -> &FaceTag {
        &self.faces[self.tri_face[tri] as usize]
    }

    pub fn triangle_points(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Signed divergence-theorem volume, without the closedness check.
    pub fn signed_volume(&self) -> f64 {
        let mut v = 0.0;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            v += a.dot(b.cross(c));
        }
        v / 6.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                0.5 * (b - a).cross(c - a).length()
            })
            .sum()
    }

    /// Checks that every undirected edge is used exactly once in each direction.
    pub fn check_closed(&self) -> Result<(), KernelError> {
        let mut uses: HashMap<(u32, u32), (u32, u32)> = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if a == b {
                    return Err(KernelError::OpenMesh { edges: 1 });
                }
                let e = uses.entry((a.min(b), a.max(b))).or_insert((0, 0));
                if a < b {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        let bad = uses.values().filter(|&&(f, r)| f != 1 || r != 1).count();
        if bad > 0 || self.triangles.is_empty() {
            return Err(KernelError::OpenMesh { edges: bad.max(1) });
        }
        Ok(())
    }

    /// Divergence-theorem volume of a closed mesh.
    pub fn volume(&self) -> Result<f64, KernelError> {
        self.check_closed()?;
        Ok(self.signed_volume())
    }

    /// Full invariant check: closed, outward oriented, every triangle tagged.
    pub fn validate(&self) -> Result<(), KernelError> {
        if self.tri_face.len() != self.triangles.len()
            || self.tri_face.iter().any(|&f| f as usize >= self.faces.len())
        {
            return Err(KernelError::Internal("triangle without face tag".into()));
        }
        let v = self.volume()?;
        if v <= 0.0 {
            return Err(KernelError::InvertedSolid { volume: v });
        }
        Ok(())
    }

    /// Same solid with every triangle reversed.
    pub fn inverted(&self) -> Solid {
        let mut s = self.clone();
        for t in &mut s.triangles {
            t.swap(1, 2);
        }
        for f in &mut s.faces {
            f.surface = f.surface.flipped();
        }
        s
    }

    /// Triangle index sets of the shells connected through manifold edges.
    /// Edges with more than two incident triangles (bodies touching along a
    /// line) do not connect, so touching solids come out as separate shells.
    pub fn shells(&self) -> Vec<Vec<usize>> {
        let n = self.triangles.len();
        let mut uf = UnionFind::new(n);
        let mut users: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                users.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        for u in users.values() {
            if u.len() == 2 {
                uf.union(u[0], u[1]);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for t in 0..n {
            let r = uf.find(t);
            let g = *slot.entry(r).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(t);
        }
        groups
    }

    /// New solid containing only the listed triangles, with vertices and face
    /// tables compacted in first-use order.
    pub fn subset(&self, tris: &[usize], body_id: String) -> Solid {
        let mut vmap: HashMap<u32, u32> = HashMap::new();
        let mut fmap: HashMap<u32, u32> = HashMap::new();
        let mut out = Solid {
            vertices: Vec::new(),
            triangles: Vec::with_capacity(tris.len()),
            tri_face: Vec::with_capacity(tris.len()),
            faces: Vec::new(),
            body_id,
        };
        for &t in tris {
            let mut nt = [0u32; 3];
            for (k, &v) in self.triangles[t].iter().enumerate() {
                nt[k] = *vmap.entry(v).or_insert_with(|| {
                    out.vertices.push(self.vertices[v as usize]);
                    (out.vertices.len() - 1) as u32
                });
            }
            let f = self.tri_face[t];
            let nf = *fmap.entry(f).or_insert_with(|| {
                out.faces.push(self.faces[f as usize].clone());
                (out.faces.len() - 1) as u32
            });
            out.triangles.push(nt);
            out.tri_face.push(nf);
        }
        out
    }

    /// Number of distinct face ids.
    pub fn face_count(&self) -> usize {
        let mut ids: Vec<&str> = self.faces.iter().map(|f| f.face_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Whether `p` lies inside, by parity of crossings along +z. Used for
    /// nesting decisions; bulk classification lives in `occupancy`.
    pub fn contains_point(&self, p: Vec3) -> bool {
        super::occupancy::point_inside(self, p)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so results do not depend on union order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Total number of distinct face ids over a body list.
pub fn total_face_count(bodies: &[Solid]) -> usize {
    bodies.iter().map(Solid::face_count).sum()
}

pub fn bodies_bbox(bodies: &[Solid]) -> Aabb {
    bodies.iter().fold(Aabb::empty(), |b, s| b.union(&s.bbox()))
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Axis-aligned box with one face id per side, built by hand so kernel
    /// tests do not depend on the extrude path.
    pub fn box_solid(min: Vec3, max: Vec3, body: &str) -> Solid {
        let p = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { min.x } else { max.x },
                if y == 0 { min.y } else { max.y },
                if z == 0 { min.z } else { max.z },
            )
        };
        let mut vertices = Vec::new();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    vertices.push(p(x, y, z));
                }
            }
        }
        let idx = |x: u32, y: u32, z: u32| x + 2 * y + 4 * z;
        // (quad corners counterclockwise seen from outside, normal, name)
        let quads: [([u32; 4], Vec3); 6] = [
            ([idx(0, 0, 0), idx(0, 1, 0), idx(1, 1, 0), idx(1, 0, 0)], -Vec3::Z),
            ([idx(0, 0, 1), idx(1, 0, 1), idx(1, 1, 1), idx(0, 1, 1)], Vec3::Z),
            ([idx(0, 0, 0), idx(1, 0, 0), idx(1, 0, 1), idx(0, 0, 1)], -Vec3::Y),
            ([idx(0, 1, 0), idx(0, 1, 1), idx(1, 1, 1), idx(1, 1, 0)], Vec3::Y),
            ([idx(0, 0, 0), idx(0, 0, 1), idx(0, 1, 1), idx(0, 1, 0)], -Vec3::X),
            ([idx(1, 0, 0), idx(1, 1, 0), idx(1, 1, 1), idx(1, 0, 1)], Vec3::X),
        ];
        let mut triangles = Vec::new();
        let mut tri_face = Vec::new();
        let mut faces = Vec::new();
        for (f, (q, n)) in quads.iter().enumerate() {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
            tri_face.push(f as u32);
            tri_face.push(f as u32);
            let origin = vertices[q[0] as usize];
            faces.push(FaceTag {
                face_id: format!("{body}:f{f}"),
                op_index: 0,
                role: FaceRole::Side,
                surface: SurfaceDesc::plane(origin, *n, n.any_orthogonal()),
            });
        }
        Solid { vertices, triangles, tri_face, faces, body_id: body.to_string() }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::box_solid;
    use super::*;

    #[test]
    fn unit_cube_volume_is_one() {
        let c = box_solid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), "c");
        assert!((c.volume().unwrap() - 1.0).abs() < 1e-12);
        c.validate().unwrap();
        assert_eq!(c.face_count(), 6);
    }

    #[test]
    fn inverted_cube_has_negative_volume_and_fails_validation() {
        let c = box_solid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), "c").inverted();
        assert!((c.volume().unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(c.validate(), Err(KernelError::InvertedSolid { .. })));
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut c = box_solid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), "c");
        c.triangles.pop();
        c.tri_face.pop();
        assert!(matches!(c.volume(), Err(KernelError::OpenMesh { .. })));
    }
}
