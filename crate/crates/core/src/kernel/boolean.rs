//! Body-level Boolean composition of an extruded tool with the current bodies.

use std::collections::HashMap;

use super::cleanup::polygons_to_solids;
use super::csg::{self, Polygon};
use super::solid::{BoolOp, FaceTag, Solid, UnionFind};
use super::KernelError;
use crate::math::{quantize, Vec3, EPS_GEO};

fn polygons(solids: &[&Solid], tags: &mut Vec<FaceTag>) -> Vec<Polygon> {
    let mut out = Vec::new();
    for s in solids {
        let base = tags.len() as u32;
        tags.extend(s.faces.iter().cloned());
        for t in 0..s.triangles.len() {
            if let Some(p) = Polygon::new(s.triangle_points(t).to_vec(), base + s.tri_face[t]) {
                out.push(p);
            }
        }
    }
    out
}

type CsgFn = fn(Vec<Polygon>, Vec<Polygon>) -> Vec<Polygon>;

fn combine(a: &[&Solid], b: &Solid, f: CsgFn) -> Result<Vec<Solid>, KernelError> {
    let mut tags = Vec::new();
    let pa = polygons(a, &mut tags);
    let pb = polygons(&[b], &mut tags);
    polygons_to_solids(&f(pa, pb), &tags)
}

fn name_pieces(pieces: Vec<Solid>, id: &str) -> Vec<Solid> {
    let single = pieces.len() == 1;
    pieces
        .into_iter()
        .enumerate()
        .map(|(k, mut s)| {
            s.body_id = if single { id.to_string() } else { format!("{id}.{}", k + 1) };
            s
        })
        .collect()
}

/// Applies `tool` to `current` with `op`. Join merges every body whose
/// bounding box touches the tool; Cut and Intersect act on each body on its
/// own. Results that fall apart become separate bodies, and faces that were
/// split get ordinal child ids.
pub fn boolean(current: &[Solid], tool: &Solid, op: BoolOp) -> Result<Vec<Solid>, KernelError> {
    if op != BoolOp::NewBody && current.is_empty() {
        return Err(KernelError::EmptyCurrent { op });
    }
    let tb = tool.bbox();
    let touches = |s: &Solid| s.bbox().overlaps(&tb, EPS_GEO);
    let out = match op {
        BoolOp::NewBody => {
            let mut out = current.to_vec();
            out.extend(split_lumps(tool));
            return Ok(out);
        }
        BoolOp::Join => {
            let parts: Vec<&Solid> = current.iter().filter(|s| touches(s)).collect();
            if parts.is_empty() {
                let mut out = current.to_vec();
                out.extend(split_lumps(tool));
                return Ok(out);
            }
            // bodies may overlap each other, so they are merged one at a time
            let mut acc = vec![parts[0].clone()];
            for p in parts[1..].iter().copied().chain(std::iter::once(tool)) {
                let refs: Vec<&Solid> = acc.iter().collect();
                acc = combine(&refs, p, csg::union)?;
            }
            let merged = name_pieces(acc, &parts[0].body_id);
            let mut out = Vec::new();
            let mut placed = false;
            for s in current {
                if !touches(s) {
                    out.push(s.clone());
                } else if !placed {
                    out.extend(merged.iter().cloned());
                    placed = true;
                }
            }
            out
        }
        BoolOp::Cut | BoolOp::Intersect => {
            let f: CsgFn = if op == BoolOp::Cut { csg::subtract } else { csg::intersect };
            let mut out = Vec::new();
            for s in current {
                if touches(s) {
                    out.extend(name_pieces(combine(&[s], tool, f)?, &s.body_id));
                } else if op == BoolOp::Cut {
                    out.push(s.clone());
                }
            }
            out
        }
    };
    Ok(rename_split_faces(out))
}

/// Separates a multi-lump tool into one body per lump.
fn split_lumps(tool: &Solid) -> Vec<Solid> {
    let shells = tool.shells();
    if shells.len() == 1 {
        return vec![tool.clone()];
    }
    let pieces = shells.iter().map(|sh| tool.subset(sh, String::new())).collect();
    name_pieces(pieces, &tool.body_id)
}

/// Concatenates meshes into one multi-lump solid.
pub fn concat(solids: &[Solid], body_id: &str) -> Solid {
    let mut out = Solid { vertices: Vec::new(), triangles: Vec::new(), tri_face: Vec::new(), faces: Vec::new(), body_id: body_id.to_string() };
    for s in solids {
        let vb = out.vertices.len() as u32;
        let fb = out.faces.len() as u32;
        out.vertices.extend_from_slice(&s.vertices);
        out.faces.extend(s.faces.iter().cloned());
        out.triangles.extend(s.triangles.iter().map(|t| t.map(|i| i + vb)));
        out.tri_face.extend(s.tri_face.iter().map(|f| f + fb));
    }
    out
}

/// Union of the per-profile solids of one extrude, as a single tool.
pub fn union_all(pieces: &[Solid], body_id: &str) -> Result<Solid, KernelError> {
    let Some((first, rest)) = pieces.split_first() else {
        return Err(KernelError::Internal("no profile solids".into()));
    };
    let mut acc = vec![first.clone()];
    for p in rest {
        let refs: Vec<&Solid> = acc.iter().collect();
        acc = combine(&refs, p, csg::union)?;
    }
    Ok(concat(&acc, body_id))
}

struct Region {
    body: usize,
    tris: Vec<usize>,
    key: (i64, i64, i64),
}

/// Gives every edge-connected region of a face id its own id when the id
/// covers more than one region, numbering children by centroid order.
pub fn rename_split_faces(mut bodies: Vec<Solid>) -> Vec<Solid> {
    let mut by_id: HashMap<String, Vec<Region>> = HashMap::new();
    let mut id_order: Vec<String> = Vec::new();
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
        let mut regions: Vec<Vec<usize>> = Vec::new();
        for t in 0..n {
            let r = uf.find(t);
            let g = *slot.entry(r).or_insert_with(|| {
                regions.push(Vec::new());
                regions.len() - 1
            });
            regions[g].push(t);
        }
        for tris in regions {
            let id = s.tag(tris[0]).face_id.clone();
            let (mut c, mut w) = (Vec3::ZERO, 0.0);
            for &t in &tris {
                let [a, b, d] = s.triangle_points(t);
                let area = 0.5 * (b - a).cross(d - a).length();
                c += (a + b + d) * (area / 3.0);
                w += area;
            }
            let c = if w > 0.0 { c / w } else { s.triangle_points(tris[0])[0] };
            let key = (quantize(c.x, EPS_GEO), quantize(c.y, EPS_GEO), quantize(c.z, EPS_GEO));
            if !by_id.contains_key(&id) {
                id_order.push(id.clone());
            }
            by_id.entry(id).or_default().push(Region { body: bi, tris, key });
        }
    }

    let mut new_ids: Vec<Vec<Option<String>>> = bodies.iter().map(|s| vec![None; s.triangles.len()]).collect();
    for id in &id_order {
        let regions = by_id.get_mut(id).expect("collected above");
        if regions.len() < 2 {
            continue;
        }
        regions.sort_by(|a, b| a.key.cmp(&b.key).then(a.body.cmp(&b.body)).then(a.tris[0].cmp(&b.tris[0])));
        for (k, r) in regions.iter().enumerate() {
            let child = format!("{id}.{}", k + 1);
            for &t in &r.tris {
                new_ids[r.body][t] = Some(child.clone());
            }
        }
    }

    for (bi, s) in bodies.iter_mut().enumerate() {
        if new_ids[bi].iter().all(Option::is_none) {
            continue;
        }
        let mut faces: Vec<FaceTag> = Vec::new();
        let mut slot: HashMap<(u32, Option<String>), u32> = HashMap::new();
        for (t, id) in new_ids[bi].iter_mut().enumerate() {
            let old = s.tri_face[t];
            let nid = id.take();
            let f = *slot.entry((old, nid.clone())).or_insert_with(|| {
                let mut tag = s.faces[old as usize].clone();
                if let Some(n) = nid {
                    tag.face_id = n;
                }
                faces.push(tag);
                (faces.len() - 1) as u32
            });
            s.tri_face[t] = f;
        }
        s.faces = faces;
    }
    bodies
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::solid::testutil::box_solid;

    fn cube(min: [f64; 3], max: [f64; 3], id: &str) -> Solid {
        box_solid(Vec3::from_array(min), Vec3::from_array(max), id)
    }

    fn total_volume(b: &[Solid]) -> f64 {
        b.iter().map(|s| s.volume().unwrap()).sum()
    }

    #[test]
    fn join_offset_cubes() {
        let a = cube([0.0; 3], [1.0; 3], "a");
        let t = cube([0.5; 3], [1.5; 3], "t");
        let r = boolean(&[a], &t, BoolOp::Join).unwrap();
        assert_eq!(r.len(), 1);
        r[0].validate().unwrap();
        assert!((total_volume(&r) - 1.875).abs() < 1e-9);
        assert_eq!(r[0].body_id, "a");
    }

    #[test]
    fn self_cut_is_empty() {
        let a = cube([0.0; 3], [1.0; 3], "a");
        let r = boolean(std::slice::from_ref(&a), &a, BoolOp::Cut).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn cut_through_wall_splits_plate() {
        let plate = cube([0.0, 0.0, 0.0], [4.0, 2.0, 0.5], "p");
        let wall = cube([1.9, -1.0, -1.0], [2.1, 3.0, 1.0], "w");
        let r = boolean(&[plate], &wall, BoolOp::Cut).unwrap();
        assert_eq!(r.len(), 2);
        for s in &r {
            s.validate().unwrap();
        }
        assert!((total_volume(&r) - 3.8).abs() < 1e-9);
        // the plate's bottom, top and long sides were each cut in two
        let ids: Vec<String> = r.iter().flat_map(|s| s.faces.iter().map(|f| f.face_id.clone())).collect();
        assert!(ids.contains(&"p:f0.1".to_string()) && ids.contains(&"p:f0.2".to_string()));
        assert_eq!(r[0].face_count() + r[1].face_count(), 12);
    }

    #[test]
    fn intersect_keeps_overlap_only() {
        let a = cube([0.0; 3], [1.0; 3], "a");
        let far = cube([5.0; 3], [6.0; 3], "f");
        let t = cube([0.5; 3], [1.5; 3], "t");
        let r = boolean(&[a, far], &t, BoolOp::Intersect).unwrap();
        assert_eq!(r.len(), 1);
        assert!((total_volume(&r) - 0.125).abs() < 1e-9);
    }

    #[test]
    fn join_bridges_two_bodies() {
        let a = cube([0.0; 3], [1.0; 3], "a");
        let b = cube([2.0, 0.0, 0.0], [3.0, 1.0, 1.0], "b");
        let t = cube([0.5, 0.25, 0.25], [2.5, 0.75, 0.75], "t");
        let r = boolean(&[a, b], &t, BoolOp::Join).unwrap();
        assert_eq!(r.len(), 1);
        assert!((total_volume(&r) - (2.0 + 0.25)).abs() < 1e-9);
    }

    #[test]
    fn join_on_empty_is_error() {
        let t = cube([0.0; 3], [1.0; 3], "t");
        assert!(matches!(boolean(&[], &t, BoolOp::Join), Err(KernelError::EmptyCurrent { .. })));
        assert_eq!(boolean(&[], &t, BoolOp::NewBody).unwrap().len(), 1);
    }
}
