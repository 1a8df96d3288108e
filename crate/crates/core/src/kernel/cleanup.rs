//! Turns the polygon soup produced by CSG back into closed tagged solids.
//!
//! Steps: weld nearby vertices, insert T-junction vertices on polygon edges,
//! merge the polygons of each (face, plane) group and re-triangulate the
//! group from its boundary, then split the result into shells and attach
//! internal voids to the shell that contains them.

use std::collections::{HashMap, HashSet};

use super::csg::Polygon;
use super::solid::{FaceTag, Solid};
use super::triangulate::triangulate_pslg;
use super::KernelError;
use crate::math::{point_segment_distance3, polygon_area, quantize, Aabb, PlaneFrame, Vec2, Vec3, EPS_GEO};

/// Shells with less volume than this are numerical debris.
pub const SLIVER_VOLUME: f64 = 1e-9;

struct Welder {
    pts: Vec<Vec3>,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    cell: f64,
    tol: f64,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Welder { pts: Vec::new(), cells: HashMap::new(), cell: 2.0 * tol, tol }
    }

    fn key(&self, p: Vec3) -> (i64, i64, i64) {
        (quantize(p.x, self.cell), quantize(p.y, self.cell), quantize(p.z, self.cell))
    }

    fn weld(&mut self, p: Vec3) -> u32 {
        let (cx, cy, cz) = self.key(p);
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            let d = self.pts[i as usize].distance(p);
                            if d <= self.tol && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                                best = Some((d, i));
                            }
                        }
                    }
                }
            }
        }
        if let Some((_, i)) = best {
            return i;
        }
        let i = self.pts.len() as u32;
        self.pts.push(p);
        self.cells.entry((cx, cy, cz)).or_default().push(i);
        i
    }
}

/// Uniform grid over welded vertices for T-junction queries.
struct PointGrid {
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    h: f64,
}

impl PointGrid {
    fn new(pts: &[Vec3]) -> Self {
        let bb = Aabb::from_points(pts);
        let h = (bb.diagonal() / 48.0).max(1e-3);
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            cells.entry(Self::key_h(*p, h)).or_default().push(i as u32);
        }
        PointGrid { cells, h }
    }

    fn key_h(p: Vec3, h: f64) -> (i64, i64, i64) {
        ((p.x / h).floor() as i64, (p.y / h).floor() as i64, (p.z / h).floor() as i64)
    }

    /// Vertices within `tol` of the open segment `a`–`b`, sorted along it.
    fn on_segment(&self, pts: &[Vec3], ia: u32, ib: u32, tol: f64, seen: &mut HashSet<(i64, i64, i64)>) -> Vec<u32> {
        let (a, b) = (pts[ia as usize], pts[ib as usize]);
        let len = a.distance(b);
        let steps = ((2.0 * len / self.h).ceil() as usize).max(1);
        seen.clear();
        let mut hits: Vec<(f64, u32)> = Vec::new();
        for s in 0..=steps {
            let (cx, cy, cz) = Self::key_h(a.lerp(b, s as f64 / steps as f64), self.h);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let k = (cx + dx, cy + dy, cz + dz);
                        if !seen.insert(k) {
                            continue;
                        }
                        let Some(ids) = self.cells.get(&k) else { continue };
                        for &i in ids {
                            if i == ia || i == ib {
                                continue;
                            }
                            let (d, t) = point_segment_distance3(pts[i as usize], a, b);
                            if d <= tol && t * len > tol && (1.0 - t) * len > tol {
                                hits.push((t, i));
                            }
                        }
                    }
                }
            }
        }
        hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        hits.into_iter().map(|(_, i)| i).collect()
    }
}

/// Face key of an output triangle: source face index and orientation flip.
type FaceKey = (u32, bool);

struct Group {
    key: FaceKey,
    frame: PlaneFrame,
    polys: Vec<Vec<u32>>,
}

/// Rebuilds closed solids from CSG output. `tags` is indexed by
/// `Polygon::face`. Bodies come out in first-triangle order with empty ids.
pub fn polygons_to_solids(polys: &[Polygon], tags: &[FaceTag]) -> Result<Vec<Solid>, KernelError> {
    let mut welder = Welder::new(EPS_GEO);
    let mut indexed: Vec<(usize, Vec<u32>)> = Vec::with_capacity(polys.len());
    for (pi, p) in polys.iter().enumerate() {
        let mut ids: Vec<u32> = Vec::with_capacity(p.verts.len());
        for v in &p.verts {
            let i = welder.weld(*v);
            if ids.last() != Some(&i) {
                ids.push(i);
            }
        }
        while ids.len() > 1 && ids.first() == ids.last() {
            ids.pop();
        }
        if ids.len() >= 3 {
            indexed.push((pi, ids));
        }
    }
    let pts = welder.pts;
    if indexed.is_empty() {
        return Ok(Vec::new());
    }

    // T-junctions
    let grid = PointGrid::new(&pts);
    let mut seen = HashSet::new();
    let mut edge_cache: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (_, ids) in &mut indexed {
        let n = ids.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (ids[i], ids[(i + 1) % n]);
            out.push(a);
            let key = (a.min(b), a.max(b));
            let mids = edge_cache
                .entry(key)
                .or_insert_with(|| grid.on_segment(&pts, key.0, key.1, EPS_GEO, &mut seen));
            if a < b {
                out.extend(mids.iter().copied());
            } else {
                out.extend(mids.iter().rev().copied());
            }
        }
        *ids = out;
    }

    // group by face tag, orientation and plane
    let mut groups: Vec<Group> = Vec::new();
    let mut slot: HashMap<(FaceKey, [i64; 4]), usize> = HashMap::new();
    for (pi, ids) in indexed {
        let p = &polys[pi];
        let key: FaceKey = (p.face, p.flipped);
        let n = p.plane.normal;
        let q = [quantize(n.x, 1e-5), quantize(n.y, 1e-5), quantize(n.z, 1e-5), quantize(p.plane.w, 1e-5)];
        let g = *slot.entry((key, q)).or_insert_with(|| {
            let origin = n * p.plane.w;
            groups.push(Group { key, frame: PlaneFrame::new(origin, n, n.any_orthogonal()), polys: Vec::new() });
            groups.len() - 1
        });
        groups[g].polys.push(ids);
    }

    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut tri_key: Vec<FaceKey> = Vec::new();
    for g in &groups {
        for t in triangulate_group(g, &pts) {
            triangles.push(t);
            tri_key.push(g.key);
        }
    }

    drop_dangling_slivers(&pts, &mut triangles, &mut tri_key);
    assemble(pts, triangles, tri_key, tags)
}

/// Removes zero-area triangles whose longest edge no other triangle uses.
/// They come from collinear vertex runs and would otherwise open the shell.
fn drop_dangling_slivers(pts: &[Vec3], triangles: &mut Vec<[u32; 3]>, tri_key: &mut Vec<FaceKey>) {
    let mut uses: HashMap<(u32, u32), u32> = HashMap::with_capacity(triangles.len() * 3 / 2);
    for t in triangles.iter() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *uses.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let dangling = |t: &[u32; 3]| {
        let p = t.map(|i| pts[i as usize]);
        let k = (0..3)
            .max_by(|&i, &j| p[i].distance(p[(i + 1) % 3]).total_cmp(&p[j].distance(p[(j + 1) % 3])))
            .expect("three edges");
        let longest = p[k].distance(p[(k + 1) % 3]);
        let area2 = (p[1] - p[0]).cross(p[2] - p[0]).length();
        let (x, y) = (t[k], t[(k + 1) % 3]);
        area2 <= EPS_GEO * longest && uses[&(x.min(y), x.max(y))] == 1
    };
    let keep: Vec<bool> = triangles.iter().map(|t| !dangling(t)).collect();
    let mut k = keep.iter();
    triangles.retain(|_| *k.next().expect("one flag per triangle"));
    let mut k = keep.iter();
    tri_key.retain(|_| *k.next().expect("one flag per triangle"));
}

/// Re-triangulates one planar group from its boundary edges, falling back
/// to per-polygon triangulation when the merged result loses area.
fn triangulate_group(g: &Group, pts: &[Vec3]) -> Vec<[u32; 3]> {
    let mut count: HashMap<(u32, u32), i32> = HashMap::new();
    let mut order: Vec<(u32, u32)> = Vec::new();
    for ids in &g.polys {
        for i in 0..ids.len() {
            let e = (ids[i], ids[(i + 1) % ids.len()]);
            let c = count.entry(e).or_insert(0);
            if *c == 0 {
                order.push(e);
            }
            *c += 1;
        }
    }
    let mut local: HashMap<u32, usize> = HashMap::new();
    let mut verts: Vec<u32> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in &order {
        let net = count[&(a, b)] - count.get(&(b, a)).copied().unwrap_or(0);
        for _ in 0..net.max(0) {
            let mut id = |v: u32| {
                *local.entry(v).or_insert_with(|| {
                    verts.push(v);
                    verts.len() - 1
                })
            };
            let (la, lb) = (id(a), id(b));
            edges.push((la, lb));
        }
    }
    let poly_area: f64 = g
        .polys
        .iter()
        .map(|ids| polygon_area(&ids.iter().map(|&i| g.frame.to_local(pts[i as usize])).collect::<Vec<_>>()))
        .sum();
    if edges.is_empty() || poly_area <= 0.0 {
        return Vec::new();
    }
    let p2: Vec<Vec2> = verts.iter().map(|&i| g.frame.to_local(pts[i as usize])).collect();
    if let Ok(tris) = triangulate_pslg(&p2, &edges) {
        let area: f64 = tris.iter().map(|t| polygon_area(&[p2[t[0]], p2[t[1]], p2[t[2]]])).sum();
        if (area - poly_area).abs() <= 1e-9 * poly_area.max(1.0) {
            return tris.iter().map(|t| t.map(|i| verts[i])).collect();
        }
    }
    let mut out = Vec::new();
    for ids in &g.polys {
        out.extend(triangulate_polygon(ids, pts, &g.frame));
    }
    out
}

fn triangulate_polygon(ids: &[u32], pts: &[Vec3], frame: &PlaneFrame) -> Vec<[u32; 3]> {
    let p2: Vec<Vec2> = ids.iter().map(|&i| frame.to_local(pts[i as usize])).collect();
    let edges: Vec<(usize, usize)> = (0..ids.len()).map(|i| (i, (i + 1) % ids.len())).collect();
    match triangulate_pslg(&p2, &edges) {
        Ok(tris) if !tris.is_empty() => tris.iter().map(|t| t.map(|i| ids[i])).collect(),
        _ => (1..ids.len() - 1).map(|i| [ids[0], ids[i], ids[i + 1]]).collect(),
    }
}

fn assemble(pts: Vec<Vec3>, triangles: Vec<[u32; 3]>, tri_key: Vec<FaceKey>, tags: &[FaceTag]) -> Result<Vec<Solid>, KernelError> {
    let mut faces: Vec<FaceTag> = Vec::new();
    let mut face_slot: HashMap<FaceKey, u32> = HashMap::new();
    let mut tri_face = Vec::with_capacity(triangles.len());
    for &(f, flipped) in &tri_key {
        let idx = *face_slot.entry((f, flipped)).or_insert_with(|| {
            let mut tag = tags[f as usize].clone();
            if flipped {
                tag.surface = tag.surface.flipped();
            }
            faces.push(tag);
            (faces.len() - 1) as u32
        });
        tri_face.push(idx);
    }
    let all = Solid { vertices: pts, triangles, tri_face, faces, body_id: String::new() };

    let mut positive: Vec<(Solid, f64)> = Vec::new();
    let mut voids: Vec<Solid> = Vec::new();
    for shell in all.shells() {
        let s = all.subset(&shell, String::new());
        s.check_closed().map_err(|_| KernelError::OpenResultMesh { context: "boolean result".into() })?;
        let v = s.signed_volume();
        if v.abs() < SLIVER_VOLUME {
            continue;
        }
        if v > 0.0 {
            positive.push((s, v));
        } else {
            voids.push(s);
        }
    }
    for void in voids {
        let probe = void.vertices[0];
        let host = positive
            .iter()
            .enumerate()
            .filter(|(_, (s, _))| s.bbox().overlaps(&void.bbox(), EPS_GEO) && s.contains_point(probe))
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
        let Some(h) = host else {
            return Err(KernelError::OpenResultMesh { context: "void outside every shell".into() });
        };
        merge_into(&mut positive[h].0, &void);
        positive[h].1 += void.signed_volume();
    }
    Ok(positive.into_iter().map(|(s, _)| s).collect())
}

fn merge_into(host: &mut Solid, other: &Solid) {
    let base = host.vertices.len() as u32;
    host.vertices.extend_from_slice(&other.vertices);
    let mut fmap: HashMap<u32, u32> = HashMap::new();
    for (t, tri) in other.triangles.iter().enumerate() {
        host.triangles.push(tri.map(|i| i + base));
        let f = other.tri_face[t];
        let nf = *fmap.entry(f).or_insert_with(|| {
            let existing = host.faces.iter().position(|h| *h == other.faces[f as usize]);
            existing.map(|e| e as u32).unwrap_or_else(|| {
                host.faces.push(other.faces[f as usize].clone());
                (host.faces.len() - 1) as u32
            })
        });
        host.tri_face.push(nf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::csg;
    use crate::kernel::solid::testutil::box_solid;

    fn to_polys(s: &Solid, base: u32) -> Vec<Polygon> {
        (0..s.triangles.len())
            .filter_map(|t| Polygon::new(s.triangle_points(t).to_vec(), base + s.tri_face[t]))
            .collect()
    }

    #[test]
    fn union_of_offset_cubes_is_closed() {
        let a = box_solid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), "a");
        let b = box_solid(Vec3::new(0.5, 0.5, 0.5), Vec3::new(1.5, 1.5, 1.5), "b");
        let mut tags = a.faces.clone();
        tags.extend(b.faces.iter().cloned());
        let r = csg::union(to_polys(&a, 0), to_polys(&b, 6));
        let out = polygons_to_solids(&r, &tags).unwrap();
        assert_eq!(out.len(), 1);
        out[0].validate().unwrap();
        assert!((out[0].volume().unwrap() - 1.875).abs() < 1e-9);
    }

    #[test]
    fn cavity_becomes_void_of_host() {
        let a = box_solid(Vec3::ZERO, Vec3::new(3.0, 3.0, 3.0), "a");
        let b = box_solid(Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0), "b");
        let mut tags = a.faces.clone();
        tags.extend(b.faces.iter().cloned());
        let r = csg::subtract(to_polys(&a, 0), to_polys(&b, 6));
        let out = polygons_to_solids(&r, &tags).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].volume().unwrap() - 26.0).abs() < 1e-9);
        assert_eq!(out[0].face_count(), 12);
    }

    #[test]
    fn stacked_boxes_need_t_junctions() {
        // a small box on top of a large one shares part of its bottom face
        let a = box_solid(Vec3::ZERO, Vec3::new(2.0, 2.0, 1.0), "a");
        let b = box_solid(Vec3::new(0.5, 0.5, 1.0), Vec3::new(1.5, 1.5, 2.0), "b");
        let mut tags = a.faces.clone();
        tags.extend(b.faces.iter().cloned());
        let r = csg::union(to_polys(&a, 0), to_polys(&b, 6));
        let out = polygons_to_solids(&r, &tags).unwrap();
        assert_eq!(out.len(), 1);
        out[0].validate().unwrap();
        assert!((out[0].volume().unwrap() - 5.0).abs() < 1e-9);
    }
}
