//! Binary space partition CSG over convex polygons.
//!
//! This is the classic clip-and-invert formulation: each operand is turned
//! into a BSP tree, polygons of one operand are clipped against the other,
//! and the surviving pieces are collected. Trees are stored in an arena and
//! traversed with explicit stacks, since degenerate inputs can produce
//! trees as deep as the polygon count.

use crate::math::Vec3;

/// Plane classification tolerance.
pub const PLANE_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub w: f64,
}

impl Plane {
    fn flip(&mut self) {
        self.normal = -self.normal;
        self.w = -self.w;
    }
}

/// Convex planar polygon. `face` indexes the caller's face table; `flipped`
/// records an odd number of orientation reversals.
#[derive(Clone, Debug)]
pub struct Polygon {
    pub verts: Vec<Vec3>,
    pub plane: Plane,
    pub face: u32,
    pub flipped: bool,
}

impl Polygon {
    /// Polygon with its plane computed by Newell's method; `None` if degenerate.
    pub fn new(verts: Vec<Vec3>, face: u32) -> Option<Polygon> {
        let mut n = Vec3::ZERO;
        let mut c = Vec3::ZERO;
        for i in 0..verts.len() {
            let (a, b) = (verts[i], verts[(i + 1) % verts.len()]);
            n.x += (a.y - b.y) * (a.z + b.z);
            n.y += (a.z - b.z) * (a.x + b.x);
            n.z += (a.x - b.x) * (a.y + b.y);
            c += a;
        }
        let area2 = n.length();
        if area2.is_nan() || area2 <= 1e-18 {
            return None;
        }
        let normal = n / area2;
        c = c / verts.len() as f64;
        Some(Polygon { verts, plane: Plane { normal, w: normal.dot(c) }, face, flipped: false })
    }

    fn flip(&mut self) {
        self.verts.reverse();
        self.plane.flip();
        self.flipped = !self.flipped;
    }
}

const COPLANAR: u8 = 0;
const FRONT: u8 = 1;
const BACK: u8 = 2;
const SPANNING: u8 = 3;

/// Splits `poly` by `plane` into the four output lists.
fn split_polygon(
    plane: &Plane,
    poly: Polygon,
    coplanar_front: &mut Vec<Polygon>,
    coplanar_back: &mut Vec<Polygon>,
    front: &mut Vec<Polygon>,
    back: &mut Vec<Polygon>,
) {
    let mut poly_type = 0u8;
    let mut types = Vec::with_capacity(poly.verts.len());
    for v in &poly.verts {
        let t = plane.normal.dot(*v) - plane.w;
        let ty = if t < -PLANE_EPS {
            BACK
        } else if t > PLANE_EPS {
            FRONT
        } else {
            COPLANAR
        };
        poly_type |= ty;
        types.push(ty);
    }
    match poly_type {
        COPLANAR => {
            if plane.normal.dot(poly.plane.normal) > 0.0 {
                coplanar_front.push(poly);
            } else {
                coplanar_back.push(poly);
            }
        }
        FRONT => front.push(poly),
        BACK => back.push(poly),
        _ => {
            let n = poly.verts.len();
            let mut f = Vec::with_capacity(n + 1);
            let mut b = Vec::with_capacity(n + 1);
            for i in 0..n {
                let j = (i + 1) % n;
                let (ti, tj) = (types[i], types[j]);
                let (vi, vj) = (poly.verts[i], poly.verts[j]);
                if ti != BACK {
                    f.push(vi);
                }
                if ti != FRONT {
                    b.push(vi);
                }
                if (ti | tj) == SPANNING {
                    let t = (plane.w - plane.normal.dot(vi)) / plane.normal.dot(vj - vi);
                    let v = vi.lerp(vj, t);
                    f.push(v);
                    b.push(v);
                }
            }
            if f.len() >= 3 {
                front.push(Polygon { verts: f, plane: poly.plane, face: poly.face, flipped: poly.flipped });
            }
            if b.len() >= 3 {
                back.push(Polygon { verts: b, plane: poly.plane, face: poly.face, flipped: poly.flipped });
            }
        }
    }
}

#[derive(Default)]
struct Node {
    plane: Option<Plane>,
    front: Option<usize>,
    back: Option<usize>,
    polys: Vec<Polygon>,
}

pub struct Bsp {
    nodes: Vec<Node>,
}

impl Bsp {
    pub fn new(polys: Vec<Polygon>) -> Bsp {
        let mut t = Bsp { nodes: vec![Node::default()] };
        t.build(polys);
        t
    }

    fn build(&mut self, polys: Vec<Polygon>) {
        let mut stack = vec![(0usize, polys)];
        while let Some((ni, polys)) = stack.pop() {
            if polys.is_empty() {
                continue;
            }
            let plane = *self.nodes[ni].plane.get_or_insert(polys[0].plane);
            let (mut cf, mut cb, mut f, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for p in polys {
                split_polygon(&plane, p, &mut cf, &mut cb, &mut f, &mut b);
            }
            self.nodes[ni].polys.extend(cf);
            self.nodes[ni].polys.extend(cb);
            if !f.is_empty() {
                let c = self.child(ni, true);
                stack.push((c, f));
            }
            if !b.is_empty() {
                let c = self.child(ni, false);
                stack.push((c, b));
            }
        }
    }

    fn child(&mut self, ni: usize, front: bool) -> usize {
        let existing = if front { self.nodes[ni].front } else { self.nodes[ni].back };
        if let Some(c) = existing {
            return c;
        }
        self.nodes.push(Node::default());
        let c = self.nodes.len() - 1;
        if front {
            self.nodes[ni].front = Some(c);
        } else {
            self.nodes[ni].back = Some(c);
        }
        c
    }

    /// Converts solid space to empty space and vice versa.
    fn invert(&mut self) {
        for n in &mut self.nodes {
            for p in &mut n.polys {
                p.flip();
            }
            if let Some(pl) = &mut n.plane {
                pl.flip();
            }
            std::mem::swap(&mut n.front, &mut n.back);
        }
    }

    /// Removes the parts of `polys` inside this tree's solid.
    fn clip_polygons(&self, polys: Vec<Polygon>) -> Vec<Polygon> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, polys)];
        while let Some((ni, polys)) = stack.pop() {
            let node = &self.nodes[ni];
            let Some(plane) = node.plane else {
                out.extend(polys);
                continue;
            };
            let (mut cf, mut cb, mut f, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for p in polys {
                split_polygon(&plane, p, &mut cf, &mut cb, &mut f, &mut b);
            }
            f.extend(cf);
            b.extend(cb);
            match node.front {
                Some(c) => stack.push((c, f)),
                None => out.extend(f),
            }
            if let Some(c) = node.back {
                stack.push((c, b));
            }
        }
        out
    }

    fn clip_to(&mut self, other: &Bsp) {
        for i in 0..self.nodes.len() {
            let polys = std::mem::take(&mut self.nodes[i].polys);
            self.nodes[i].polys = other.clip_polygons(polys);
        }
    }

    fn all_polygons(self) -> Vec<Polygon> {
        self.nodes.into_iter().flat_map(|n| n.polys).collect()
    }

    fn all_polygons_ref(&self) -> Vec<Polygon> {
        self.nodes.iter().flat_map(|n| n.polys.iter().cloned()).collect()
    }
}

pub fn union(a: Vec<Polygon>, b: Vec<Polygon>) -> Vec<Polygon> {
    let mut a = Bsp::new(a);
    let mut b = Bsp::new(b);
    a.clip_to(&b);
    b.clip_to(&a);
    b.invert();
    b.clip_to(&a);
    b.invert();
    a.build(b.all_polygons());
    a.all_polygons()
}

pub fn subtract(a: Vec<Polygon>, b: Vec<Polygon>) -> Vec<Polygon> {
    let mut a = Bsp::new(a);
    let mut b = Bsp::new(b);
    a.invert();
    a.clip_to(&b);
    b.clip_to(&a);
    b.invert();
    b.clip_to(&a);
    b.invert();
    a.build(b.all_polygons());
    a.invert();
    a.all_polygons()
}

pub fn intersect(a: Vec<Polygon>, b: Vec<Polygon>) -> Vec<Polygon> {
    let mut a = Bsp::new(a);
    let mut b = Bsp::new(b);
    a.invert();
    b.clip_to(&a);
    b.invert();
    a.clip_to(&b);
    b.clip_to(&a);
    let bp = b.all_polygons_ref();
    a.build(bp);
    a.invert();
    a.all_polygons()
}
