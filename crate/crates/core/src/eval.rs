//! Reconstruction metrics and the budgeted benchmark harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Policy;
use crate::brep::face_regions;
use crate::dsl::{execute, ExecutionTrace, Program};
use crate::env::Env;
use crate::kernel::occupancy::{occupancy, OccupancyGrid};
use crate::kernel::solid::{bodies_bbox, FaceRole, Solid};
use crate::math::Aabb;
use crate::search::{search, SearchConfig, SearchReport};

/// Default IoU grid resolution.
pub const IOU_RESOLUTION: usize = 64;
/// Resolution used to confirm exact matches found at [`IOU_RESOLUTION`].
pub const CONFIRM_RESOLUTION: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ground-truth sequence is empty")]
    MissingGroundTruth,
}

/// Shared grid domain of two body lists.
pub fn shared_bbox(a: &[Solid], b: &[Solid]) -> Aabb {
    bodies_bbox(a).union(&bodies_bbox(b))
}

/// Ratio of occupied cell counts; 1 when both grids are empty.
pub fn grid_iou(a: &OccupancyGrid, b: &OccupancyGrid) -> f64 {
    let u = a.union_count(b);
    if u == 0 {
        1.0
    } else {
        a.intersection_count(b) as f64 / u as f64
    }
}

/// Voxel IoU over the union of both bounding boxes.
pub fn iou(current: &[Solid], target: &[Solid], resolution: usize) -> f64 {
    match (current.is_empty(), target.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let bb = shared_bbox(current, target);
    grid_iou(&occupancy(current, &bb, resolution), &occupancy(target, &bb, resolution))
}

/// Grid identity at the IoU resolution, confirmed at double resolution.
pub fn exact_reconstruction(current: &[Solid], target: &[Solid]) -> bool {
    if current.is_empty() || target.is_empty() {
        return current.is_empty() && target.is_empty();
    }
    let bb = shared_bbox(current, target);
    [IOU_RESOLUTION, CONFIRM_RESOLUTION]
        .into_iter()
        .all(|r| occupancy(current, &bb, r) == occupancy(target, &bb, r))
}

pub fn conciseness(found_len: usize, ground_truth_len: usize) -> Result<f64, EvalError> {
    if ground_truth_len == 0 {
        return Err(EvalError::MissingGroundTruth);
    }
    Ok(found_len as f64 / ground_truth_len as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtrudeCounts {
    pub profiles: usize,
    pub bodies: usize,
    pub faces: usize,
    pub side_faces: usize,
    pub end_faces: usize,
    pub start_faces: usize,
}

/// Duplicate-detection key. Areas and volumes are stored in tenths.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    pub bodies: usize,
    pub faces: usize,
    pub surface_area_tenths: i64,
    pub volume_tenths: i64,
    pub extrudes: Vec<ExtrudeCounts>,
}

fn tenths(x: f64) -> i64 {
    (x * 10.0).round() as i64
}

pub fn fingerprint(trace: &ExecutionTrace) -> Fingerprint {
    let last = trace.final_bodies();
    let extrudes = trace
        .extrudes
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let after = trace.after_extrude(k);
            let regions = face_regions(after);
            let role = |r: FaceRole| {
                regions
                    .iter()
                    .filter(|g| {
                        let tag = after[g.body].faces.iter().find(|f| f.face_id == g.face_id).expect("region tag");
                        tag.op_index == e.op_index && tag.role == r
                    })
                    .count()
            };
            ExtrudeCounts {
                profiles: e.profiles.len(),
                bodies: after.len(),
                faces: regions.len(),
                side_faces: role(FaceRole::Side),
                end_faces: role(FaceRole::End),
                start_faces: role(FaceRole::Start),
            }
        })
        .collect();
    Fingerprint {
        bodies: last.len(),
        faces: face_regions(last).len(),
        surface_area_tenths: tenths(last.iter().map(Solid::surface_area).sum()),
        volume_tenths: tenths(last.iter().map(Solid::signed_volume).sum()),
        extrudes,
    }
}

/// Outcome of one design in a benchmark run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub design: usize,
    /// Best IoU seen within the whole budget.
    pub iou: f64,
    pub exact: bool,
    /// Found length over ground-truth length, when exact.
    pub conciseness: Option<f64>,
    pub steps_to_exact: Option<usize>,
    #[serde(rename = "IoU@20")]
    pub iou_at_20: f64,
    #[serde(rename = "IoU@100")]
    pub iou_at_100: f64,
    #[serde(rename = "exact@20")]
    pub exact_at_20: bool,
    #[serde(rename = "exact@100")]
    pub exact_at_100: bool,
    pub steps_charged: usize,
    pub timed_out: bool,
    pub error: Option<String>,
}

impl Metrics {
    fn failed(design: usize, error: String) -> Self {
        Metrics {
            design,
            iou: 0.0,
            exact: false,
            conciseness: None,
            steps_to_exact: None,
            iou_at_20: 0.0,
            iou_at_100: 0.0,
            exact_at_20: false,
            exact_at_100: false,
            steps_charged: 0,
            timed_out: false,
            error: Some(error),
        }
    }

    pub fn from_report(design: usize, report: &SearchReport, ground_truth_len: usize) -> Self {
        let steps_to_exact = report.exact_found_at.map(|i| i + 1);
        let found_len = report.winning_sequence.as_ref().map(Vec::len);
        Metrics {
            design,
            iou: report.best_iou(),
            exact: steps_to_exact.is_some(),
            conciseness: found_len.and_then(|n| conciseness(n, ground_truth_len).ok()),
            steps_to_exact,
            iou_at_20: report.iou_at(20),
            iou_at_100: report.iou_at(100),
            exact_at_20: report.exact_within(20),
            exact_at_100: report.exact_within(100),
            steps_charged: report.steps_charged,
            timed_out: report.timed_out,
            error: None,
        }
    }
}

/// Aggregate over a benchmark run; percentages are in `[0, 100]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub designs: usize,
    #[serde(rename = "IoU@20")]
    pub mean_iou_at_20: f64,
    #[serde(rename = "IoU@100")]
    pub mean_iou_at_100: f64,
    #[serde(rename = "exact%@20")]
    pub exact_pct_at_20: f64,
    #[serde(rename = "exact%@100")]
    pub exact_pct_at_100: f64,
    pub mean_conciseness: Option<f64>,
    pub failures: usize,
}

pub fn summarize(rows: &[Metrics]) -> Summary {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&Metrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let pct = |f: fn(&Metrics) -> bool| 100.0 * rows.iter().filter(|m| f(m)).count() as f64 / n;
    let conc: Vec<f64> = rows.iter().filter_map(|m| m.conciseness).collect();
    Summary {
        designs: rows.len(),
        mean_iou_at_20: mean(|m| m.iou_at_20),
        mean_iou_at_100: mean(|m| m.iou_at_100),
        exact_pct_at_20: pct(|m| m.exact_at_20),
        exact_pct_at_100: pct(|m| m.exact_at_100),
        mean_conciseness: (!conc.is_empty()).then(|| conc.iter().sum::<f64>() / conc.len() as f64),
        failures: rows.iter().filter(|m| m.error.is_some()).count(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub rows: Vec<Metrics>,
    pub summary: Summary,
}

/// Searches every design with one env, seeding design `i` with `seed + i`.
/// A design whose target cannot be built scores zero.
pub fn run_benchmark(
    corpus: &[Program],
    policy: &mut dyn Policy,
    config: &SearchConfig,
    mut progress: impl FnMut(&Metrics),
) -> Benchmark {
    let mut env = Env::new();
    let mut rows = Vec::with_capacity(corpus.len());
    for (i, program) in corpus.iter().enumerate() {
        let row = (|| -> Result<Metrics, String> {
            let bodies = execute(program).map_err(|e| e.to_string())?.final_bodies().to_vec();
            env.set_target(bodies).map_err(|e| e.to_string())?;
            let cfg = SearchConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
            let report = search(&mut env, policy, &cfg).map_err(|e| e.to_string())?;
            Ok(Metrics::from_report(i, &report, program.extrude_count()))
        })()
        .unwrap_or_else(|e| Metrics::failed(i, e));
        progress(&row);
        rows.push(row);
    }
    let summary = summarize(&rows);
    Benchmark { rows, summary }
}

/// One CSV row per design.
pub fn write_csv<W: std::io::Write>(rows: &[Metrics], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::solid::testutil::box_solid;
    use crate::math::Vec3;

    fn cube(o: f64, s: f64) -> Solid {
        box_solid(Vec3::new(o, o, o), Vec3::new(o + s, o + s, o + s), "c")
    }

    #[test]
    fn iou_identities() {
        assert_eq!(iou(&[cube(0.0, 1.0)], &[cube(0.0, 1.0)], 32), 1.0);
        assert_eq!(iou(&[cube(0.0, 1.0)], &[cube(3.0, 1.0)], 32), 0.0);
        assert_eq!(iou(&[], &[], 32), 1.0);
        assert_eq!(iou(&[], &[cube(0.0, 1.0)], 32), 0.0);
    }

    #[test]
    fn scaled_cube_is_not_exact() {
        assert!(exact_reconstruction(&[cube(0.0, 1.0)], &[cube(0.0, 1.0)]));
        assert!(!exact_reconstruction(&[cube(0.0, 1.01)], &[cube(0.0, 1.0)]));
    }

    #[test]
    fn offset_cubes_iou() {
        let v = iou(&[cube(0.0, 1.0)], &[cube(0.5, 1.0)], IOU_RESOLUTION);
        // one cell of the 1.5-wide domain at R=64
        let quantum = 3.0 * (1.5f64 / 64.0) / 1.875;
        assert!((v - 1.0 / 15.0).abs() <= quantum, "{v}");
    }

    #[test]
    fn washer_benchmark_with_random_agent() {
        let corpus: Vec<Program> = (1..=4).map(|k| crate::fixtures::washer(1.0 + k as f64 * 0.25, 0.5, 0.3)).collect();
        let cfg = SearchConfig::new(crate::search::Procedure::Rollout, 20, 3);
        let b = run_benchmark(&corpus, &mut crate::agent::RandomPolicy::default(), &cfg, |_| {});
        assert_eq!(b.rows.len(), 4);
        assert_eq!(b.summary.exact_pct_at_20, 100.0);
        assert_eq!(b.summary.mean_conciseness, Some(1.0));
        let mut buf = Vec::new();
        write_csv(&b.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().contains("IoU@20,IoU@100"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn conciseness_ratio() {
        assert_eq!(conciseness(3, 4), Ok(0.75));
        assert_eq!(conciseness(5, 4), Ok(1.25));
        assert_eq!(conciseness(1, 0), Err(EvalError::MissingGroundTruth));
    }
}
