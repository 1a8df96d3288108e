//! Planar arrangement of sketch segments and extraction of enclosed regions.
//!
//! Segments are split at every pairwise intersection, endpoints are snapped
//! to a shared vertex table, and faces are traced on a half-edge structure
//! (face on the left, so bounded faces come out counterclockwise).

use std::collections::HashMap;

use super::sketch::{profile_content_id, EdgeSource, Loop, Profile};
use super::solid::UnionFind;
use super::KernelError;
use crate::math::{point_in_polygon, point_segment_distance2, polygon_area, quantize, Vec2, EPS_GEO};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    pub src: EdgeSource,
}

/// Euler characteristic inputs for one connected piece of the subdivision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComponentStats {
    pub vertices: usize,
    pub edges: usize,
    /// Faces of this piece's own subdivision, including its outer face.
    pub faces: usize,
}

impl ComponentStats {
    pub fn euler(&self) -> i64 {
        self.vertices as i64 - self.edges as i64 + self.faces as i64
    }
}

#[derive(Clone, Debug)]
pub struct Arrangement {
    pub vertices: Vec<Vec2>,
    /// Undirected edges in creation order.
    pub edges: Vec<(usize, usize, EdgeSource)>,
    tol: f64,
}

struct VertexTable {
    pts: Vec<Vec2>,
    cells: HashMap<(i64, i64), Vec<usize>>,
    cell: f64,
    tol: f64,
}

impl VertexTable {
    fn new(tol: f64) -> Self {
        let cell = (2.0 * tol).max(1e-12);
        VertexTable { pts: Vec::new(), cells: HashMap::new(), cell, tol }
    }

    fn snap(&mut self, p: Vec2) -> usize {
        let (cx, cy) = (quantize(p.x, self.cell), quantize(p.y, self.cell));
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &i in list {
                        let d = self.pts[i].distance(p);
                        if d <= self.tol && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        if let Some((_, i)) = best {
            return i;
        }
        self.pts.push(p);
        let id = self.pts.len() - 1;
        self.cells.entry((cx, cy)).or_default().push(id);
        id
    }
}

fn seg_bbox_overlap(s: &Segment, o: &Segment, tol: f64) -> bool {
    s.a.x.min(s.b.x) <= o.a.x.max(o.b.x) + tol
        && o.a.x.min(o.b.x) <= s.a.x.max(s.b.x) + tol
        && s.a.y.min(s.b.y) <= o.a.y.max(o.b.y) + tol
        && o.a.y.min(o.b.y) <= s.a.y.max(s.b.y) + tol
}

/// Split parameters contributed by the pair `(s, o)` to each segment.
fn pair_params(s: &Segment, o: &Segment, tol: f64, ps: &mut Vec<f64>, po: &mut Vec<f64>) {
    for e in [o.a, o.b] {
        let (d, t) = point_segment_distance2(e, s.a, s.b);
        if d <= tol {
            ps.push(t);
        }
    }
    for e in [s.a, s.b] {
        let (d, t) = point_segment_distance2(e, o.a, o.b);
        if d <= tol {
            po.push(t);
        }
    }
    let r = s.b - s.a;
    let q = o.b - o.a;
    let denom = r.cross(q);
    if denom.abs() > 1e-12 * r.length() * q.length() {
        let w = o.a - s.a;
        let t = w.cross(q) / denom;
        let u = w.cross(r) / denom;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            ps.push(t);
            po.push(u);
        }
    }
}

impl Arrangement {
    pub(crate) fn build(segs: &[Segment], tol: f64) -> Result<Arrangement, KernelError> {
        let segs: Vec<Segment> = segs.iter().copied().filter(|s| s.a.distance(s.b) > tol).collect();
        let mut params: Vec<Vec<f64>> = vec![vec![0.0, 1.0]; segs.len()];
        for i in 0..segs.len() {
            for j in (i + 1)..segs.len() {
                if !seg_bbox_overlap(&segs[i], &segs[j], tol) {
                    continue;
                }
                let (mut pi, mut pj) = (Vec::new(), Vec::new());
                pair_params(&segs[i], &segs[j], tol, &mut pi, &mut pj);
                params[i].extend(pi);
                params[j].extend(pj);
            }
        }
        let mut table = VertexTable::new(tol);
        let mut edges: Vec<(usize, usize, EdgeSource)> = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for (s, ts) in segs.iter().zip(params.iter_mut()) {
            ts.sort_by(f64::total_cmp);
            let mut chain: Vec<usize> = Vec::with_capacity(ts.len());
            for &t in ts.iter() {
                let p = if t == 0.0 {
                    s.a
                } else if t == 1.0 {
                    s.b
                } else {
                    s.a.lerp(s.b, t)
                };
                let v = table.snap(p);
                if chain.last() != Some(&v) {
                    chain.push(v);
                }
            }
            let mut uniq = chain.clone();
            uniq.sort_unstable();
            uniq.dedup();
            if uniq.len() != chain.len() {
                return Err(KernelError::ToleranceCollapse);
            }
            for w in chain.windows(2) {
                let key = (w[0].min(w[1]), w[0].max(w[1]));
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
                    e.insert(edges.len());
                    edges.push((w[0], w[1], s.src));
                }
            }
        }
        Ok(Arrangement { vertices: table.pts, edges, tol })
    }

    /// Half-edge `2k` runs along edge `k`, `2k + 1` against it.
    fn half_edge_ends(&self, h: usize) -> (usize, usize) {
        let (a, b, _) = self.edges[h / 2];
        if h.is_multiple_of(2) {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Traces all face cycles over the edges marked alive.
    fn cycles(&self, alive: &[bool]) -> Vec<Vec<usize>> {
        let nv = self.vertices.len();
        let mut out: Vec<Vec<(f64, usize)>> = vec![Vec::new(); nv];
        for (k, &ok) in alive.iter().enumerate() {
            if !ok {
                continue;
            }
            for h in [2 * k, 2 * k + 1] {
                let (u, v) = self.half_edge_ends(h);
                let d = self.vertices[v] - self.vertices[u];
                out[u].push((d.y.atan2(d.x), h));
            }
        }
        let mut pos = vec![usize::MAX; self.edges.len() * 2];
        for list in out.iter_mut() {
            list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (i, &(_, h)) in list.iter().enumerate() {
                pos[h] = i;
            }
        }
        let next = |h: usize| {
            let (_, v) = self.half_edge_ends(h);
            let twin = h ^ 1;
            let list = &out[v];
            let p = pos[twin];
            list[(p + list.len() - 1) % list.len()].1
        };
        let mut visited = vec![false; self.edges.len() * 2];
        let mut cycles = Vec::new();
        for k in (0..self.edges.len()).filter(|&k| alive[k]) {
            for h0 in [2 * k, 2 * k + 1] {
                if visited[h0] {
                    continue;
                }
                let mut cyc = Vec::new();
                let mut h = h0;
                while !visited[h] {
                    visited[h] = true;
                    cyc.push(h);
                    h = next(h);
                }
                cycles.push(cyc);
            }
        }
        cycles
    }

    fn components(&self, alive: &[bool]) -> Vec<usize> {
        let mut uf = UnionFind::new(self.vertices.len());
        for (k, &(a, b, _)) in self.edges.iter().enumerate() {
            if alive[k] {
                uf.union(a, b);
            }
        }
        (0..self.vertices.len()).map(|v| uf.find(v)).collect()
    }

    /// Per connected component vertex, edge, and face counts of the full
    /// subdivision (before dangling pieces are trimmed).
    pub fn component_stats(&self) -> Vec<ComponentStats> {
        let alive = vec![true; self.edges.len()];
        let comp = self.components(&alive);
        let mut stats: HashMap<usize, ComponentStats> = HashMap::new();
        for (v, &c) in comp.iter().enumerate() {
            let _ = v;
            stats.entry(c).or_insert(ComponentStats { vertices: 0, edges: 0, faces: 0 }).vertices += 1;
        }
        for &(a, _, _) in &self.edges {
            stats.get_mut(&comp[a]).unwrap().edges += 1;
        }
        for cyc in self.cycles(&alive) {
            let (u, _) = self.half_edge_ends(cyc[0]);
            stats.get_mut(&comp[u]).unwrap().faces += 1;
        }
        let mut keys: Vec<usize> = stats.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter().map(|k| stats[&k]).collect()
    }

    /// Marks edges that bound no region: dangling chains and bridges.
    fn trimmed(&self) -> Vec<bool> {
        let mut alive = vec![true; self.edges.len()];
        loop {
            // strip degree-1 chains
            loop {
                let mut deg = vec![0usize; self.vertices.len()];
                for (k, &(a, b, _)) in self.edges.iter().enumerate() {
                    if alive[k] {
                        deg[a] += 1;
                        deg[b] += 1;
                    }
                }
                let mut changed = false;
                for (k, &(a, b, _)) in self.edges.iter().enumerate() {
                    if alive[k] && (deg[a] == 1 || deg[b] == 1) {
                        alive[k] = false;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut cycle_of = vec![usize::MAX; self.edges.len() * 2];
            for (ci, cyc) in self.cycles(&alive).iter().enumerate() {
                for &h in cyc {
                    cycle_of[h] = ci;
                }
            }
            let mut changed = false;
            for k in 0..self.edges.len() {
                if alive[k] && cycle_of[2 * k] == cycle_of[2 * k + 1] {
                    alive[k] = false;
                    changed = true;
                }
            }
            if !changed {
                return alive;
            }
        }
    }

    fn cycle_loop(&self, cyc: &[usize]) -> Loop {
        let points = cyc.iter().map(|&h| self.vertices[self.half_edge_ends(h).0]).collect();
        let sources = cyc.iter().map(|&h| self.edges[h / 2].2).collect();
        Loop { points, sources }
    }

    /// Enclosed regions with holes resolved by containment, in a
    /// deterministic order.
    pub fn profiles(&self) -> Vec<Profile> {
        let alive = self.trimmed();
        let comp = self.components(&alive);
        let min_area = self.tol * self.tol;
        let mut outers: Vec<(Loop, f64, usize)> = Vec::new();
        let mut shells: Vec<(Loop, f64, usize)> = Vec::new();
        for cyc in self.cycles(&alive) {
            let lp = self.cycle_loop(&cyc);
            let a = polygon_area(&lp.points);
            let c = comp[self.half_edge_ends(cyc[0]).0];
            if a > min_area {
                outers.push((lp, a, c));
            } else if a < -min_area {
                shells.push((lp, a, c));
            }
        }
        let mut holes: Vec<Vec<Loop>> = vec![Vec::new(); outers.len()];
        for (shell, _, c) in shells {
            let probe = shell.points[0];
            let host = outers
                .iter()
                .enumerate()
                .filter(|(_, (o, _, oc))| *oc != c && point_in_polygon(probe, &o.points))
                .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1).then(x.0.cmp(&y.0)))
                .map(|(i, _)| i);
            if let Some(i) = host {
                holes[i].push(shell);
            }
        }
        let mut profiles: Vec<Profile> = outers
            .into_iter()
            .zip(holes)
            .filter_map(|((outer, a, _), holes)| {
                let area = a + holes.iter().map(|h| polygon_area(&h.points)).sum::<f64>();
                if area <= min_area {
                    return None;
                }
                let hole_pts: Vec<Vec<Vec2>> = holes.iter().map(|h| h.points.clone()).collect();
                let id = profile_content_id(&outer.points, &hole_pts);
                Some(Profile { id, outer, holes, area })
            })
            .collect();
        let key = |p: &Profile| {
            p.outer.points.iter().map(|q| (quantize(q.x, EPS_GEO), quantize(q.y, EPS_GEO))).min().unwrap_or((0, 0))
        };
        profiles.sort_by(|a, b| key(a).cmp(&key(b)).then(a.area.total_cmp(&b.area)).then(a.id.cmp(&b.id)));
        profiles
    }
}

/// Splits the discretized curves and reports per-component Euler counts.
pub fn curve_set_stats(curves: &[super::sketch::Curve], tol: f64) -> Result<Vec<ComponentStats>, KernelError> {
    for c in curves {
        c.validate(tol)?;
    }
    let segs = super::sketch::discretize(curves, &Default::default());
    Ok(Arrangement::build(&segs, tol)?.component_stats())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::sketch::{build_profiles, Curve};

    #[test]
    fn circle_inside_square_makes_disc_and_holed_square() {
        let mut curves = vec![
            Curve::line("a", Vec2::new(-1.0, -1.0), Vec2::new(1.0, -1.0)),
            Curve::line("b", Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0)),
            Curve::line("c", Vec2::new(1.0, 1.0), Vec2::new(-1.0, 1.0)),
            Curve::line("d", Vec2::new(-1.0, 1.0), Vec2::new(-1.0, -1.0)),
        ];
        curves.push(Curve::circle("o", Vec2::new(0.2, 0.1), 0.3));
        let profiles = build_profiles(&curves, EPS_GEO).unwrap();
        assert_eq!(profiles.len(), 2);
        let disc = profiles.iter().find(|p| p.holes.is_empty()).unwrap();
        let holed = profiles.iter().find(|p| p.holes.len() == 1).unwrap();
        assert!(holed.holes[0].signed_area() < 0.0);
        // polygonal disc area, checked against a winding-number grid oracle in the integration suite
        let n = disc.outer.points.len() as f64;
        let poly = 0.5 * n * 0.09 * (2.0 * std::f64::consts::PI / n).sin();
        assert!((disc.area - poly).abs() < 1e-12);
        assert!((holed.area - (4.0 - poly)).abs() < 1e-12);
    }

    #[test]
    fn euler_per_component() {
        let curves = vec![
            Curve::line("a", Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)),
            Curve::line("b", Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0)),
            Curve::circle("c", Vec2::new(5.0, 5.0), 1.0),
        ];
        let stats = curve_set_stats(&curves, EPS_GEO).unwrap();
        assert_eq!(stats.len(), 2);
        for s in stats {
            assert_eq!(s.euler(), 2, "{s:?}");
        }
    }

    #[test]
    fn shared_edges_between_rectangles_are_merged() {
        // two rectangles sharing the segment x = 1
        let r = |x0: f64, x1: f64| {
            vec![
                Curve::line("", Vec2::new(x0, 0.0), Vec2::new(x1, 0.0)),
                Curve::line("", Vec2::new(x1, 0.0), Vec2::new(x1, 1.0)),
                Curve::line("", Vec2::new(x1, 1.0), Vec2::new(x0, 1.0)),
                Curve::line("", Vec2::new(x0, 1.0), Vec2::new(x0, 0.0)),
            ]
        };
        let mut curves = r(0.0, 1.0);
        curves.extend(r(1.0, 3.0));
        let p = build_profiles(&curves, EPS_GEO).unwrap();
        assert_eq!(p.len(), 2);
        let mut areas: Vec<f64> = p.iter().map(|p| p.area).collect();
        areas.sort_by(f64::total_cmp);
        assert!((areas[0] - 1.0).abs() < 1e-12 && (areas[1] - 2.0).abs() < 1e-12);
    }
}
