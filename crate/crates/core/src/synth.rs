//! Seeded generators for synthetic and semi-synthetic corpora, and the
//! parameter distributions used to match one corpus to another.
//!
//! All randomness comes from ChaCha8 seeded with the 64-bit design seed, so a
//! corpus is reproducible from its seeds alone.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::brep::{extract_graph, face_regions};
use crate::dsl::{execute, face_plane, parse_program, rectangle, serialize_program, Command, DslError, Interpreter, PlaneRef, Program};
use crate::kernel::sketch::{build_profiles, Curve, CurveShape, SketchPlane};
use crate::kernel::solid::{bodies_bbox, BoolOp, Solid};
use crate::math::{Vec2, EPS_GEO};

/// Resampling attempts per design.
pub const MAX_ATTEMPTS: usize = 32;
/// Relative magnitude of semi-synthetic perturbations.
pub const PERTURBATION: f64 = 0.1;
/// Coordinates of synthetic sketches are multiples of this step.
pub const GRID_STEP: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Synthetic,
    SemiSynthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub kind: GenKind,
    /// Inclusive range of extrude counts.
    pub extrude_count_range: (usize, usize),
    /// Inclusive range of sketch dimensions and extrude distances.
    pub size_range: (f64, f64),
    pub sketch_library: Vec<Vec<Curve>>,
    pub target_distributions: Option<Vec<Distribution>>,
}

impl GenConfig {
    pub fn synthetic(seed: u64, extrudes: (usize, usize)) -> Self {
        GenConfig {
            seed,
            kind: GenKind::Synthetic,
            extrude_count_range: extrudes,
            size_range: (0.5, 2.0),
            sketch_library: Vec::new(),
            target_distributions: None,
        }
    }

    pub fn semi_synthetic(seed: u64, extrudes: (usize, usize), library: Vec<Vec<Curve>>) -> Self {
        GenConfig { kind: GenKind::SemiSynthetic, sketch_library: library, ..Self::synthetic(seed, extrudes) }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("no valid design after {0} attempts")]
    RetryExhausted(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistName {
    FaceCount,
    ExtrudeCount,
    SequenceLength,
    CurveCount,
    BodyCount,
    SketchArea,
    ProfileArea,
    StartingPlane,
}

impl DistName {
    pub const ALL: [DistName; 8] = [
        DistName::FaceCount,
        DistName::ExtrudeCount,
        DistName::SequenceLength,
        DistName::CurveCount,
        DistName::BodyCount,
        DistName::SketchArea,
        DistName::ProfileArea,
        DistName::StartingPlane,
    ];

    fn is_discrete(self) -> bool {
        !matches!(self, DistName::SketchArea | DistName::ProfileArea)
    }
}

/// Histogram with `weights.len() + 1` ascending bin edges; bins are
/// half-open `[edges[i], edges[i+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub name: DistName,
    pub edges: Vec<f64>,
    pub weights: Vec<f64>,
}

const CONTINUOUS_BINS: usize = 10;

impl Distribution {
    /// Unit-width bins around every integer in the sample range for discrete
    /// quantities, ten equal bins otherwise.
    pub fn from_samples(name: DistName, samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Distribution { name, edges: vec![0.0, 1.0], weights: vec![1.0] };
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edges: Vec<f64> = if name.is_discrete() {
            let (a, b) = (lo.round() as i64, hi.round() as i64);
            (a..=b + 1).map(|k| k as f64 - 0.5).collect()
        } else if hi - lo <= EPS_GEO {
            vec![lo - 0.5, hi + 0.5]
        } else {
            let w = (hi - lo) / CONTINUOUS_BINS as f64;
            let mut e: Vec<f64> = (0..CONTINUOUS_BINS).map(|k| lo + w * k as f64).collect();
            e.push(hi + w * 1e-9);
            e
        };
        let mut weights = vec![0.0; edges.len() - 1];
        for &s in samples {
            if let Some(b) = bin_of(&edges, s) {
                weights[b] += 1.0;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Distribution { name, edges, weights }
    }

    pub fn point_mass(name: DistName, value: f64) -> Self {
        Distribution::from_samples(name, &[value])
    }

    pub fn bin(&self, x: f64) -> Option<usize> {
        bin_of(&self.edges, x)
    }

    /// Cumulative weight of bins whose upper edge is at most `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.edges[1..].iter().zip(&self.weights).filter(|(e, _)| **e <= x).map(|(_, w)| w).sum()
    }

    pub fn sample_bin(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    (0..edges.len() - 1).find(|&i| x >= edges[i] && x < edges[i + 1])
}

/// Kolmogorov–Smirnov distance between samples and a histogram, evaluated at
/// the histogram's bin edges.
pub fn ks_distance(samples: &[f64], d: &Distribution) -> f64 {
    let n = samples.len().max(1) as f64;
    d.edges
        .iter()
        .map(|&e| {
            let emp = samples.iter().filter(|&&s| s < e).count() as f64 / n;
            (emp - d.cdf(e)).abs()
        })
        .fold(0.0, f64::max)
}

fn snap(x: f64) -> f64 {
    (x / GRID_STEP).round() * GRID_STEP
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn check_ranges(c: &GenConfig) -> Result<(), SynthError> {
    let (a, b) = c.extrude_count_range;
    if a == 0 || a > b {
        return Err(SynthError::Config(format!("extrude count range {a}..={b}")));
    }
    let (lo, hi) = c.size_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(SynthError::Config(format!("size range {lo}..={hi}")));
    }
    Ok(())
}

/// Planar face of `bodies` chosen uniformly, with the local bounding box of
/// its region in the face's sketch frame.
fn random_face(rng: &mut ChaCha8Rng, bodies: &[Solid]) -> Option<(String, SketchPlane, Vec2, Vec2)> {
    let regions: Vec<_> = face_regions(bodies).into_iter().filter(|r| r.surface.is_planar()).collect();
    if regions.is_empty() {
        return None;
    }
    let r = &regions[rng.random_range(0..regions.len())];
    let plane = face_plane(bodies, &r.face_id)?.ok()?;
    let frame = plane.frame();
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in r.triangles.iter().flatten() {
        let q = frame.to_local(*p);
        lo = Vec2::new(lo.x.min(q.x), lo.y.min(q.y));
        hi = Vec2::new(hi.x.max(q.x), hi.y.max(q.y));
    }
    Some((r.face_id.clone(), plane, lo, hi))
}

fn canonical_plane(rng: &mut ChaCha8Rng) -> PlaneRef {
    [PlaneRef::Xy, PlaneRef::Yz, PlaneRef::Xz][rng.random_range(0..3)].clone()
}

fn random_shape(rng: &mut ChaCha8Rng, center: Vec2, size: (f64, f64), tag: &str) -> Vec<Curve> {
    if rng.random::<f64>() < 0.6 {
        let w = snap(uniform(rng, size.0, size.1)).max(GRID_STEP);
        let h = snap(uniform(rng, size.0, size.1)).max(GRID_STEP);
        let min = Vec2::new(center.x - snap(w / 2.0), center.y - snap(h / 2.0));
        rectangle(tag, min, Vec2::new(min.x + w, min.y + h))
    } else {
        let r = snap(uniform(rng, size.0, size.1) / 2.0).max(GRID_STEP);
        vec![Curve::circle(format!("{tag}0"), center, r)]
    }
}

/// Final acceptance test shared by the generators.
fn usable(p: &Program) -> bool {
    let Ok(trace) = execute(p) else { return false };
    let bodies = trace.final_bodies();
    if bodies.is_empty() {
        return false;
    }
    let bb = bodies_bbox(bodies);
    let vol: f64 = bodies.iter().map(|s| s.signed_volume()).sum();
    vol > 1e-3 * GRID_STEP && bodies.iter().all(|s| s.signed_volume() > 1e-6) && extract_graph(bodies, &bb).is_ok()
}

fn attempt_synthetic(rng: &mut ChaCha8Rng, c: &GenConfig, n: usize) -> Option<Program> {
    let mut prog = Program::new();
    let mut it = Interpreter::new();
    let (lo, hi) = c.size_range;
    for i in 0..n {
        let on_face = if i > 0 && rng.random::<f64>() < 0.5 { random_face(rng, &it.bodies) } else { None };
        let op = if i == 0 { BoolOp::NewBody } else { BoolOp::ALL[rng.random_range(0..4)] };
        let (plane, center) = match &on_face {
            Some((id, plane, a, b)) => {
                // keep the world-space outline on the lattice
                let f = plane.frame();
                let (ou, ov) = (f.origin.dot(f.u), f.origin.dot(f.v));
                let cx = snap(uniform(rng, a.x, b.x) + ou) - ou;
                let cy = snap(uniform(rng, a.y, b.y) + ov) - ov;
                (PlaneRef::Face(id.clone()), Vec2::new(cx, cy))
            }
            None => {
                let cx = snap(uniform(rng, -hi, hi));
                let cy = snap(uniform(rng, -hi, hi));
                (canonical_plane(rng), if i == 0 { Vec2::ZERO } else { Vec2::new(cx, cy) })
            }
        };
        let curves = random_shape(rng, center, (lo, hi), &format!("s{i}c"));
        let profiles = build_profiles(&curves, EPS_GEO).ok()?;
        let ids = vec![profiles.first()?.id.clone()];
        let mut distance = snap(uniform(rng, lo, hi)).max(GRID_STEP);
        distance = match (&on_face, op) {
            (Some(_), BoolOp::Cut | BoolOp::Intersect) => -distance,
            (Some(_), _) => distance,
            (None, _) if rng.random::<bool>() => -distance,
            _ => distance,
        };
        let k = prog.commands.len();
        it.sketch(k, &plane, &curves).ok()?;
        it.extrude(k + 1, &ids, distance, op).ok()?;
        prog.sketch(plane, curves).extrude(ids, distance, op);
        if it.bodies.is_empty() {
            return None;
        }
    }
    usable(&prog).then_some(prog)
}

/// Rectangles and circles on canonical planes or existing faces, extruded
/// with uniformly drawn distances and operations; the first creates a body.
pub fn generate_synthetic(config: &GenConfig) -> Result<Program, SynthError> {
    check_ranges(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (a, b) = config.extrude_count_range;
    let n = rng.random_range(a..=b);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(p) = attempt_synthetic(&mut rng, config, n) {
            return Ok(p);
        }
    }
    Err(SynthError::RetryExhausted(MAX_ATTEMPTS))
}

fn bounds(curves: &[Curve]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut add = |p: Vec2| {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    };
    for c in curves {
        match c.shape {
            CurveShape::Line { start, end } => {
                add(start);
                add(end);
            }
            CurveShape::Arc { start, center, .. } => {
                let r = start.distance(center);
                add(center - Vec2::new(r, r));
                add(center + Vec2::new(r, r));
            }
            CurveShape::Circle { center, radius } => {
                add(center - Vec2::new(radius, radius));
                add(center + Vec2::new(radius, radius));
            }
        }
    }
    (lo, hi)
}

/// Perturbs a library sketch and maps it into the box `[lo, hi]`. Shared
/// endpoints move together so closed loops stay closed; sketches with arcs
/// only receive a uniform scale so arc endpoints keep meeting their
/// neighbors.
fn graft(rng: &mut ChaCha8Rng, curves: &[Curve], lo: Vec2, hi: Vec2, tag: &str) -> Vec<Curve> {
    let (slo, shi) = bounds(curves);
    let size = (shi - slo).length().max(EPS_GEO);
    let center = (slo + shi) / 2.0;
    let target = (hi - lo) * 0.8;
    let fit = (target.x / (shi.x - slo.x).max(EPS_GEO)).min(target.y / (shi.y - slo.y).max(EPS_GEO));
    let dest = (lo + hi) / 2.0;
    let has_arcs = curves.iter().any(|c| !matches!(c.shape, CurveShape::Line { .. }));
    let scale = 1.0 + uniform(rng, -PERTURBATION, PERTURBATION);
    let mut moved: Vec<(Vec2, Vec2)> = Vec::new();
    let mut map_point = |rng: &mut ChaCha8Rng, p: Vec2| -> Vec2 {
        if let Some((_, q)) = moved.iter().find(|(o, _)| o.distance(p) <= EPS_GEO) {
            return *q;
        }
        let jitter = if has_arcs {
            Vec2::ZERO
        } else {
            Vec2::new(uniform(rng, -PERTURBATION, PERTURBATION), uniform(rng, -PERTURBATION, PERTURBATION)) * (size * 0.1)
        };
        let q = dest + ((p - center) * scale + jitter) * fit;
        moved.push((p, q));
        q
    };
    curves
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let id = format!("{tag}{k}");
            match c.shape {
                CurveShape::Line { start, end } => {
                    let (s, e) = (map_point(rng, start), map_point(rng, end));
                    Curve::line(id, s, e)
                }
                CurveShape::Arc { start, center: ac, angle } => {
                    let (s, m) = (map_point(rng, start), map_point(rng, ac));
                    Curve::arc(id, s, m, angle)
                }
                CurveShape::Circle { center: cc, radius } => {
                    let r = radius * scale * fit * (1.0 + uniform(rng, -PERTURBATION, PERTURBATION));
                    Curve::circle(id, map_point(rng, cc), r)
                }
            }
        })
        .collect()
}

fn attempt_semi(rng: &mut ChaCha8Rng, c: &GenConfig, n: usize) -> Option<Program> {
    let mut prog = Program::new();
    let mut it = Interpreter::new();
    let mut provenance = Vec::new();
    let (lo, hi) = c.size_range;
    for i in 0..n {
        let li = rng.random_range(0..c.sketch_library.len());
        let lib = &c.sketch_library[li];
        let (plane, blo, bhi) = if i == 0 {
            let half = Vec2::new(hi, hi) / 2.0;
            (canonical_plane(rng), -half, half)
        } else {
            let (id, _, a, b) = random_face(rng, &it.bodies)?;
            (PlaneRef::Face(id), a, b)
        };
        let curves = graft(rng, lib, blo, bhi, &format!("s{i}c"));
        let profiles = build_profiles(&curves, EPS_GEO).ok()?;
        if profiles.is_empty() {
            return None;
        }
        let pick = &profiles[rng.random_range(0..profiles.len())];
        let ids = vec![pick.id.clone()];
        let op = if i == 0 { BoolOp::NewBody } else { [BoolOp::Join, BoolOp::Cut][rng.random_range(0..2)] };
        let mut distance = uniform(rng, lo, hi);
        if op == BoolOp::Cut {
            distance = -distance;
        }
        let k = prog.commands.len();
        it.sketch(k, &plane, &curves).ok()?;
        it.extrude(k + 1, &ids, distance, op).ok()?;
        prog.sketch(plane, curves).extrude(ids, distance, op);
        provenance.push(json!(li));
        if it.bodies.is_empty() {
            return None;
        }
    }
    prog.annotations.insert("provenance".into(), Value::Array(provenance));
    usable(&prog).then_some(prog)
}

/// Number of B-Rep faces of a program's final geometry.
pub fn face_count(p: &Program) -> Option<usize> {
    let t = execute(p).ok()?;
    let b = t.final_bodies();
    Some(extract_graph(b, &bodies_bbox(b)).ok()?.nodes.len())
}

/// Library sketches grafted onto faces of earlier extrusions, perturbed by
/// up to ±10%. With a face-count target, a bin is drawn first and designs
/// are resampled until one falls in it.
pub fn generate_semi_synthetic(config: &GenConfig) -> Result<Program, SynthError> {
    check_ranges(config)?;
    if config.sketch_library.is_empty() {
        return Err(SynthError::Config("empty sketch library".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (a, b) = config.extrude_count_range;
    let (a, b) = (a.max(2), b.max(2));
    let face_target = config
        .target_distributions
        .as_ref()
        .and_then(|ds| ds.iter().find(|d| d.name == DistName::FaceCount))
        .cloned();
    let wanted = face_target.as_ref().map(|d| d.sample_bin(&mut rng));
    for _ in 0..MAX_ATTEMPTS {
        let n = rng.random_range(a..=b);
        let Some(p) = attempt_semi(&mut rng, config, n) else { continue };
        match (&face_target, wanted) {
            (Some(d), Some(w)) => {
                if face_count(&p).and_then(|f| d.bin(f as f64)) == Some(w) {
                    return Ok(p);
                }
            }
            _ => return Ok(p),
        }
    }
    Err(SynthError::RetryExhausted(MAX_ATTEMPTS))
}

pub fn generate(config: &GenConfig) -> Result<Program, SynthError> {
    match config.kind {
        GenKind::Synthetic => generate_synthetic(config),
        GenKind::SemiSynthetic => generate_semi_synthetic(config),
    }
}

fn plane_code(p: &PlaneRef) -> f64 {
    match p {
        PlaneRef::Xy => 0.0,
        PlaneRef::Yz => 1.0,
        PlaneRef::Xz => 2.0,
        PlaneRef::Face(_) => 3.0,
    }
}

/// The eight corpus histograms. Programs that fail to execute are skipped.
pub fn extract_distributions(corpus: &[Program]) -> Vec<Distribution> {
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); DistName::ALL.len()];
    for p in corpus {
        let Ok(t) = execute(p) else { continue };
        let b = t.final_bodies();
        let Ok(g) = extract_graph(b, &bodies_bbox(b)) else { continue };
        samples[0].push(g.nodes.len() as f64);
        samples[1].push(p.extrude_count() as f64);
        samples[2].push(p.commands.len() as f64);
        samples[3].push(p.curve_count() as f64);
        samples[4].push(b.len() as f64);
        for s in &t.sketches {
            samples[5].push(s.profiles.iter().map(|pr| pr.area).sum());
        }
        for e in &t.extrudes {
            for id in &e.profiles {
                if let Some(pr) = t.sketches[e.sketch].profiles.iter().find(|pr| &pr.id == id) {
                    samples[6].push(pr.area);
                }
            }
        }
        if let Some(Command::Sketch { plane, .. }) = p.commands.first() {
            samples[7].push(plane_code(plane));
        }
    }
    DistName::ALL.iter().zip(&samples).map(|(n, s)| Distribution::from_samples(*n, s)).collect()
}

/// JSON-lines corpus manifest, one canonical program per line.
pub fn write_manifest(corpus: &[Program]) -> String {
    corpus.iter().map(|p| serialize_program(p) + "\n").collect()
}

pub fn read_manifest(text: &str) -> Result<Vec<Program>, (usize, DslError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_program(l).map_err(|e| (i + 1, e)))
        .collect()
}

/// Generates `count` designs from consecutive seeds starting at `config.seed`,
/// skipping seeds whose generation fails.
pub fn generate_corpus(config: &GenConfig, count: usize) -> Vec<Program> {
    let mut out = Vec::with_capacity(count);
    let mut seed = config.seed;
    while out.len() < count {
        if let Ok(p) = generate(&config.with_seed(seed)) {
            out.push(p);
        }
        seed += 1;
    }
    out
}

/// Like [`generate_corpus`] but keeps only designs that convert to
/// face-extrusion sequences. Seeds advance by `stride`.
pub fn generate_convertible_corpus(config: &GenConfig, count: usize, stride: u64) -> Vec<Program> {
    let mut out = Vec::with_capacity(count);
    let mut seed = config.seed;
    while out.len() < count {
        if let Ok(p) = generate(&config.with_seed(seed)) {
            if crate::env::convert_to_face_extrusion(&p).is_ok() {
                out.push(p);
            }
        }
        seed += stride.max(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_extrude_is_one_body() {
        let p = generate_synthetic(&GenConfig::synthetic(0, (1, 1))).unwrap();
        assert_eq!(p.extrude_count(), 1);
        assert_eq!(execute(&p).unwrap().final_bodies().len(), 1);
    }

    #[test]
    fn deterministic_under_seed() {
        let c = GenConfig::synthetic(7, (1, 3));
        assert_eq!(serialize_program(&generate(&c).unwrap()), serialize_program(&generate(&c).unwrap()));
    }

    #[test]
    fn distributions_of_cubes() {
        let cube = {
            let sq = rectangle("c", Vec2::ZERO, Vec2::new(1.0, 1.0));
            let id = build_profiles(&sq, EPS_GEO).unwrap()[0].id.clone();
            let mut p = Program::new();
            p.sketch(PlaneRef::Xy, sq).extrude(vec![id], 1.0, BoolOp::NewBody);
            p
        };
        let d = extract_distributions(&vec![cube; 10]);
        assert_eq!(d.len(), 8);
        let faces = &d[0];
        assert_eq!(faces.weights, vec![1.0]);
        assert_eq!(faces.bin(6.0), Some(0));
        assert_eq!(d[2].bin(2.0), Some(0));
        assert_eq!(d[4].bin(1.0), Some(0));
    }

    #[test]
    fn manifest_round_trip() {
        let corpus = generate_corpus(&GenConfig::synthetic(3, (1, 2)), 3);
        let text = write_manifest(&corpus);
        assert_eq!(read_manifest(&text).unwrap(), corpus);
    }

    #[test]
    fn bad_ranges_are_rejected() {
        let mut c = GenConfig::synthetic(0, (2, 1));
        assert!(matches!(generate(&c), Err(SynthError::Config(_))));
        c.extrude_count_range = (1, 1);
        c.kind = GenKind::SemiSynthetic;
        assert!(matches!(generate(&c), Err(SynthError::Config(_))));
    }
}
