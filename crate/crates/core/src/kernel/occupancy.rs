//! Voxel occupancy by parity ray casting along +z.
//!
//! Each grid column is one ray through the cell centers. Projected triangle
//! coverage uses antisymmetric edge functions with a top-left fill rule, so
//! a ray through a shared edge or vertex hits exactly one of the triangles
//! meeting there. Columns that still end with an odd crossing count are
//! re-cast with small deterministic offsets.

use super::solid::Solid;
use crate::math::{Aabb, Vec3};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyGrid {
    pub resolution: usize,
    bits: Vec<u64>,
}

impl OccupancyGrid {
    pub fn empty(resolution: usize) -> Self {
        let n = resolution * resolution * resolution;
        OccupancyGrid { resolution, bits: vec![0; n.div_ceil(64)] }
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution + j) * self.resolution + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        let n = self.index(i, j, k);
        self.bits[n / 64] >> (n % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize, k: usize) {
        let n = self.index(i, j, k);
        self.bits[n / 64] |= 1 << (n % 64);
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn intersection_count(&self, o: &OccupancyGrid) -> usize {
        self.bits.iter().zip(&o.bits).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    pub fn union_count(&self, o: &OccupancyGrid) -> usize {
        self.bits.iter().zip(&o.bits).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    fn or_assign(&mut self, o: &OccupancyGrid) {
        for (a, b) in self.bits.iter_mut().zip(&o.bits) {
            *a |= b;
        }
    }
}

/// Edge function `orient(a, b, p)` evaluated in a canonical endpoint order
/// so that reversing the edge negates the value exactly.
fn edge_fn(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let f = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    if a < b {
        f(a, b)
    } else {
        -f(b, a)
    }
}

fn top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy < 0.0 || (dy == 0.0 && dx < 0.0)
}

/// Triangle projected to xy, wound counterclockwise, with its plane.
struct ProjTri {
    v: [(f64, f64); 3],
    a: Vec3,
    n: Vec3,
}

impl ProjTri {
    fn new(p: [Vec3; 3]) -> Option<ProjTri> {
        let mut v = [(p[0].x, p[0].y), (p[1].x, p[1].y), (p[2].x, p[2].y)];
        let area = edge_fn(v[0], v[1], v[2]);
        if area == 0.0 {
            return None;
        }
        if area < 0.0 {
            v.swap(1, 2);
        }
        let n = (p[1] - p[0]).cross(p[2] - p[0]);
        if n.z == 0.0 {
            return None;
        }
        Some(ProjTri { v, a: p[0], n })
    }

    fn covers(&self, p: (f64, f64)) -> bool {
        for k in 0..3 {
            let (a, b) = (self.v[k], self.v[(k + 1) % 3]);
            let w = edge_fn(a, b, p);
            if w < 0.0 || (w == 0.0 && !top_left(a, b)) {
                return false;
            }
        }
        true
    }

    fn z_at(&self, p: (f64, f64)) -> f64 {
        self.a.z - (self.n.x * (p.0 - self.a.x) + self.n.y * (p.1 - self.a.y)) / self.n.z
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let xs = self.v.map(|q| q.0);
        let ys = self.v.map(|q| q.1);
        (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().copied().fold(f64::INFINITY, f64::min),
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}

fn projected(solid: &Solid) -> Vec<ProjTri> {
    (0..solid.triangles.len()).filter_map(|t| ProjTri::new(solid.triangle_points(t))).collect()
}

/// Offsets used when a ray meets the mesh inconsistently, scaled by `h`.
fn jitter(attempt: usize, h: f64) -> (f64, f64) {
    let k = (attempt + 1) as f64;
    (h * 1e-5 * k * 0.618_033_988_749_895, h * 1e-5 * k * 0.414_213_562_373_095)
}

fn hits_brute(tris: &[ProjTri], p: (f64, f64)) -> Vec<f64> {
    tris.iter()
        .filter(|t| {
            let (x0, x1, y0, y1) = t.bounds();
            p.0 >= x0 && p.0 <= x1 && p.1 >= y0 && p.1 <= y1 && t.covers(p)
        })
        .map(|t| t.z_at(p))
        .collect()
}

/// Whether `p` is inside the closed mesh.
pub fn point_inside(solid: &Solid, p: Vec3) -> bool {
    let tris = projected(solid);
    let h = solid.bbox().diagonal().max(1e-9);
    let mut q = (p.x, p.y);
    for attempt in 0..9 {
        let zs = hits_brute(&tris, q);
        if zs.len().is_multiple_of(2) {
            return zs.iter().filter(|&&z| z > p.z).count() % 2 == 1;
        }
        let d = jitter(attempt, h);
        q = (p.x + d.0, p.y + d.1);
    }
    false
}

/// Occupancy of the union of `solids` on an `r`³ grid over `bbox`; a cell is
/// set iff its center is inside some solid.
pub fn occupancy(solids: &[Solid], bbox: &Aabb, r: usize) -> OccupancyGrid {
    assert!(r >= 2, "resolution must be at least 2");
    let mut grid = OccupancyGrid::empty(r);
    for s in solids {
        let g = solid_occupancy(s, bbox, r);
        grid.or_assign(&g);
    }
    grid
}

fn solid_occupancy(solid: &Solid, bbox: &Aabb, r: usize) -> OccupancyGrid {
    let mut grid = OccupancyGrid::empty(r);
    let size = bbox.size();
    let h = Vec3::new(size.x / r as f64, size.y / r as f64, size.z / r as f64);
    let cx = |i: usize| bbox.min.x + (i as f64 + 0.5) * h.x;
    let cy = |j: usize| bbox.min.y + (j as f64 + 0.5) * h.y;
    let cz = |k: usize| bbox.min.z + (k as f64 + 0.5) * h.z;
    // index range of centers c with lo <= c <= hi
    let range = |lo: f64, hi: f64, min: f64, step: f64| -> Option<(usize, usize)> {
        if step <= 0.0 {
            return None;
        }
        let a = ((lo - min) / step - 0.5).ceil().max(0.0);
        let b = ((hi - min) / step - 0.5).floor().min(r as f64 - 1.0);
        (a <= b).then_some((a as usize, b as usize))
    };

    let tris = projected(solid);
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); r * r];
    for t in &tris {
        let (x0, x1, y0, y1) = t.bounds();
        let (Some((i0, i1)), Some((j0, j1))) = (range(x0, x1, bbox.min.x, h.x), range(y0, y1, bbox.min.y, h.y)) else {
            continue;
        };
        for i in i0..=i1 {
            for j in j0..=j1 {
                let p = (cx(i), cy(j));
                if t.covers(p) {
                    columns[i * r + j].push(t.z_at(p));
                }
            }
        }
    }
    let diag = bbox.diagonal().max(1e-9);
    for i in 0..r {
        for j in 0..r {
            let mut zs = std::mem::take(&mut columns[i * r + j]);
            let mut attempt = 0;
            while zs.len() % 2 == 1 && attempt < 8 {
                let d = jitter(attempt, diag);
                zs = hits_brute(&tris, (cx(i) + d.0, cy(j) + d.1));
                attempt += 1;
            }
            if zs.len() % 2 == 1 {
                zs.pop();
            }
            zs.sort_by(f64::total_cmp);
            for pair in zs.chunks(2) {
                if let Some((k0, k1)) = range(pair[0], pair[1], bbox.min.z, h.z) {
                    for k in k0..=k1 {
                        // a center exactly on the exit surface is outside
                        if cz(k) < pair[1] {
                            grid.set(i, j, k);
                        }
                    }
                }
            }
        }
    }
    grid
}
