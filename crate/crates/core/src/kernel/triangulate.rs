use std::collections::HashMap;

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::KernelError;
use crate::math::Vec2;

/// Triangulates the even-odd region bounded by `loops` without adding
/// vertices. Indices refer to the loops' points concatenated in order.
/// Output triangles are counterclockwise.
pub fn triangulate_loops(loops: &[&[Vec2]]) -> Result<Vec<[usize; 3]>, KernelError> {
    let mut points = Vec::new();
    let mut edges = Vec::new();
    for lp in loops {
        let base = points.len();
        points.extend_from_slice(lp);
        for i in 0..lp.len() {
            edges.push((base + i, base + (i + 1) % lp.len()));
        }
    }
    triangulate_pslg(&points, &edges)
}

/// Constrained triangulation of `points` with `edges` as constraints. A
/// triangle is inside when an odd number of constraint edges separates it
/// from the outer face, found by flood fill over triangle adjacency. If some
/// constraint could not be inserted, triangles are classified by centroid
/// crossing parity instead.
pub fn triangulate_pslg(points: &[Vec2], edges: &[(usize, usize)]) -> Result<Vec<[usize; 3]>, KernelError> {
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handle_to_index: HashMap<usize, usize> = HashMap::new();
    let mut handles = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let h = cdt
            .insert(Point2::new(p.x, p.y))
            .map_err(|e| KernelError::Triangulation(format!("{e:?}")))?;
        handle_to_index.entry(h.index()).or_insert(i);
        handles.push(h);
    }
    let mut complete = true;
    for &(i, j) in edges {
        let (a, b) = (handles[i], handles[j]);
        if a != b && !cdt.exists_constraint(a, b) && cdt.try_add_constraint(a, b).is_empty() {
            complete = false;
        }
    }

    let inside: HashMap<usize, bool> = if complete {
        let mut parity: HashMap<usize, bool> = HashMap::new();
        let mut queue = std::collections::VecDeque::new();
        for face in cdt.inner_faces() {
            for e in face.adjacent_edges() {
                if e.rev().face().is_outer() && !parity.contains_key(&face.fix().index()) {
                    parity.insert(face.fix().index(), e.is_constraint_edge());
                    queue.push_back(face);
                }
            }
        }
        while let Some(face) = queue.pop_front() {
            let p = parity[&face.fix().index()];
            for e in face.adjacent_edges() {
                if let Some(nb) = e.rev().face().as_inner() {
                    parity.entry(nb.fix().index()).or_insert_with(|| {
                        queue.push_back(nb);
                        p ^ e.is_constraint_edge()
                    });
                }
            }
        }
        parity
    } else {
        cdt.inner_faces()
            .map(|face| {
                let c = face.vertices().iter().fold(Vec2::ZERO, |acc, v| acc + Vec2::new(v.position().x, v.position().y)) / 3.0;
                (face.fix().index(), odd_parity(c, points, edges))
            })
            .collect()
    };

    let mut tris = Vec::new();
    for face in cdt.inner_faces() {
        if !inside.get(&face.fix().index()).copied().unwrap_or(false) {
            continue;
        }
        let vs = face.vertices();
        let pts: Vec<Vec2> = vs.iter().map(|v| Vec2::new(v.position().x, v.position().y)).collect();
        let mut idx = [0usize; 3];
        for (k, v) in vs.iter().enumerate() {
            idx[k] = *handle_to_index
                .get(&v.fix().index())
                .ok_or_else(|| KernelError::Triangulation("unexpected vertex".into()))?;
        }
        if (pts[1] - pts[0]).cross(pts[2] - pts[0]) < 0.0 {
            idx.swap(1, 2);
        }
        tris.push(idx);
    }
    Ok(tris)
}

fn odd_parity(p: Vec2, points: &[Vec2], edges: &[(usize, usize)]) -> bool {
    let mut inside = false;
    for &(i, j) in edges {
        let (a, b) = (points[i], points[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::polygon_area;

    #[test]
    fn square_with_hole_keeps_all_vertices_and_area() {
        let outer = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 2.0)];
        let hole = [Vec2::new(0.5, 0.5), Vec2::new(0.5, 1.5), Vec2::new(1.5, 1.5), Vec2::new(1.5, 0.5)];
        let tris = triangulate_loops(&[&outer, &hole]).unwrap();
        let all: Vec<Vec2> = outer.iter().chain(hole.iter()).copied().collect();
        let area: f64 = tris.iter().map(|t| polygon_area(&[all[t[0]], all[t[1]], all[t[2]]])).sum();
        assert!((area - 3.0).abs() < 1e-12);
        let mut used: Vec<usize> = tris.iter().flatten().copied().collect();
        used.sort_unstable();
        used.dedup();
        // the collinear vertex (1, 0) must be part of the triangulation
        assert_eq!(used.len(), all.len());
    }
}
