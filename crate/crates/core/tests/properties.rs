use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use cadrecon_core::agent::{ActionDistribution, RandomPolicy};
use cadrecon_core::brep::extract_graph;
use cadrecon_core::dsl::{execute, parse_program, rectangle, serialize_program, validate, DslError, PlaneRef, Program};
use cadrecon_core::env::{convert_to_face_extrusion, Env, FaceExtrude};
use cadrecon_core::eval::{exact_reconstruction, iou, IOU_RESOLUTION};
use cadrecon_core::fixtures;
use cadrecon_core::kernel::occupancy::occupancy;
use cadrecon_core::kernel::sketch::build_profiles;
use cadrecon_core::kernel::solid::bodies_bbox;
use cadrecon_core::search::{search, Procedure, SearchConfig};
use cadrecon_core::server;
use cadrecon_core::synth::{generate_convertible_corpus, generate_corpus, GenConfig};
use cadrecon_core::{BoolOp, Curve, Solid, SurfaceDesc, Vec2, Vec3, EPS_GEO};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn bodies_of(p: &Program) -> Vec<Solid> {
    execute(p).unwrap().final_bodies().to_vec()
}

fn ids(curves: &[Curve]) -> Vec<String> {
    build_profiles(curves, EPS_GEO).unwrap().into_iter().map(|p| p.id).collect()
}

fn boxes(a: (Vec2, Vec2, f64), b: (Vec2, Vec2, f64), op: BoolOp) -> Program {
    let ra = rectangle("a", a.0, a.1);
    let rb = rectangle("b", b.0, b.1);
    let mut p = Program::new();
    p.sketch(PlaneRef::Xy, ra.clone()).extrude(ids(&ra), a.2, BoolOp::NewBody);
    p.sketch(PlaneRef::Xy, rb.clone()).extrude(ids(&rb), b.2, op);
    p
}

fn volume(bodies: &[Solid]) -> f64 {
    bodies.iter().map(Solid::signed_volume).sum()
}

fn grid_box() -> impl Strategy<Value = (Vec2, Vec2, f64)> {
    (-8i32..8, -8i32..8, 1i32..10, 1i32..10, 1i32..10).prop_map(|(x, y, w, h, d)| {
        let s = 0.125;
        let min = Vec2::new(x as f64 * s, y as f64 * s);
        (min, min + Vec2::new(w as f64 * s, h as f64 * s), d as f64 * s)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn boolean_volume_bounds(a in grid_box(), b in grid_box()) {
        let va = (a.1.x - a.0.x) * (a.1.y - a.0.y) * a.2;
        let vb = (b.1.x - b.0.x) * (b.1.y - b.0.y) * b.2;
        let tol = 1e-9;
        if let Ok(t) = execute(&boxes(a, b, BoolOp::Join)) {
            let v = volume(t.final_bodies());
            prop_assert!(v + tol >= va.max(vb), "join {v} < max({va}, {vb})");
            t.final_bodies().iter().try_for_each(|s| s.check_closed()).unwrap();
        }
        if let Ok(t) = execute(&boxes(a, b, BoolOp::Intersect)) {
            prop_assert!(volume(t.final_bodies()) <= va.min(vb) + tol);
        }
        if let Ok(t) = execute(&boxes(a, b, BoolOp::Cut)) {
            prop_assert!(volume(t.final_bodies()) <= va + tol);
        }
    }

    #[test]
    fn translation_leaves_point_features_unchanged(dx in -8i32..8, dy in -8i32..8, dz in -8i32..8) {
        let bodies = bodies_of(&fixtures::stepped_block());
        let shift = Vec3::new(dx as f64 * 0.25, dy as f64 * 0.25, dz as f64 * 0.25);
        let moved: Vec<Solid> = bodies
            .iter()
            .cloned()
            .map(|mut s| {
                s.vertices.iter_mut().for_each(|v| *v += shift);
                for f in &mut s.faces {
                    match &mut f.surface {
                        SurfaceDesc::Plane { origin, .. } | SurfaceDesc::Cylinder { origin, .. } => *origin += shift,
                    }
                }
                s
            })
            .collect();
        let g = extract_graph(&bodies, &bodies_bbox(&bodies)).unwrap();
        let h = extract_graph(&moved, &bodies_bbox(&moved)).unwrap();
        prop_assert_eq!(g.nodes.len(), h.nodes.len());
        for a in &g.nodes {
            let b = &h.nodes[h.node_index(&a.face_id).unwrap()];
            for (p, q) in a.points.iter().zip(&b.points) {
                for k in 0..3 {
                    prop_assert!((p[k] - q[k]).abs() < 1e-9, "{} {:?} vs {:?}", a.face_id, p, q);
                }
            }
        }
    }
}

#[test]
fn execution_is_bit_deterministic() {
    for p in generate_corpus(&GenConfig::synthetic(41, (1, 3)), 15) {
        let (a, b) = (execute(&p).unwrap(), execute(&p).unwrap());
        assert_eq!(a.snapshots, b.snapshots);
        let prof = |t: &cadrecon_core::dsl::ExecutionTrace| t.sketches.iter().flat_map(|s| s.profiles.iter().map(|p| p.id.clone())).collect::<Vec<_>>();
        assert_eq!(prof(&a), prof(&b));
    }
}

/// Winding number of `p` around the polygon `poly`.
fn winding(poly: &[Vec2], p: Vec2) -> i32 {
    let mut w = 0;
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        let side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if a.y <= p.y && b.y > p.y && side > 0.0 {
            w += 1;
        } else if a.y > p.y && b.y <= p.y && side < 0.0 {
            w -= 1;
        }
    }
    w
}

#[test]
fn profile_areas_match_winding_number_grid() {
    let mut curves = rectangle("s", Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0));
    curves.push(Curve::circle("o", Vec2::new(0.2, 0.1), 0.3));
    curves.push(Curve::line("chord", Vec2::new(-1.5, -0.5), Vec2::new(1.5, 0.25)));
    let profiles = build_profiles(&curves, EPS_GEO).unwrap();
    let n = 800;
    let cell = 3.0 / n as f64;
    for pr in &profiles {
        let mut inside = 0usize;
        for i in 0..n {
            for j in 0..n {
                let p = Vec2::new(-1.5 + (i as f64 + 0.5) * cell, -1.5 + (j as f64 + 0.5) * cell);
                let w = winding(&pr.outer.points, p) + pr.holes.iter().map(|h| winding(&h.points, p)).sum::<i32>();
                if w != 0 {
                    inside += 1;
                }
            }
        }
        let grid = inside as f64 * cell * cell;
        assert!((grid - pr.area).abs() < 0.01, "profile {}: grid {grid} vs {}", pr.id, pr.area);
    }
    let total: f64 = profiles.iter().map(|p| p.area).sum();
    assert!((total - 4.0).abs() < 1e-9);
}

#[test]
fn graph_edges_and_trim_masks() {
    for p in generate_corpus(&GenConfig::synthetic(12, (1, 3)), 20) {
        let b = bodies_of(&p);
        let g = extract_graph(&b, &bodies_bbox(&b)).unwrap();
        let mut seen = std::collections::HashSet::new();
        for &(a, c) in &g.edges {
            assert!(a != c && a < g.nodes.len() && c < g.nodes.len());
            assert!(seen.insert((a.min(c), a.max(c))), "duplicate edge");
        }
        let adj = g.adjacency();
        for (i, nb) in adj.iter().enumerate() {
            for &j in nb {
                assert!(adj[j].contains(&i));
            }
        }
        assert!(g.nodes.iter().all(|n| n.trim_mask.iter().any(|&m| m)));
    }
    let b = bodies_of(&fixtures::cube(2.0));
    let g = extract_graph(&b, &bodies_bbox(&b)).unwrap();
    assert!(g.nodes.iter().all(|n| n.trim_mask.iter().all(|&m| m)));
}

#[test]
fn trace_prefixes_replay_and_round_trip() {
    for p in generate_corpus(&GenConfig::synthetic(77, (2, 3)), 10) {
        let trace = execute(&p).unwrap();
        for k in 1..=p.commands.len() {
            let prefix = Program { commands: p.commands[..k].to_vec(), ..p.clone() };
            if validate(&prefix).is_ok() {
                assert_eq!(execute(&prefix).unwrap().final_bodies(), trace.snapshots[k].as_slice());
            }
        }
        let again = parse_program(&serialize_program(&p)).unwrap();
        let (a, b) = (bodies_of(&p), bodies_of(&again));
        let bb = bodies_bbox(&a);
        assert_eq!(occupancy(&a, &bb, 64), occupancy(&b, &bb, 64));
    }
    let sq = rectangle("q", Vec2::ZERO, Vec2::new(1.0, 1.0));
    let mut bad = Program::new();
    bad.sketch(PlaneRef::Xy, sq.clone()).extrude(ids(&sq), 1.0, BoolOp::Cut);
    assert!(matches!(validate(&bad), Err(DslError::FirstExtrudeNotNewBody { .. })));
}

#[test]
fn env_budget_and_invalid_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in generate_convertible_corpus(&GenConfig::synthetic(5, (1, 3)), 8, 1) {
        let mut env = Env::new();
        let (graph, bbox) = env.set_target(bodies_of(&p)).unwrap();
        let n = graph.nodes.len();
        for k in 1..=12 {
            let before = occupancy(env.current(), &bbox, IOU_RESOLUTION);
            let a = FaceExtrude { start: rng.random_range(0..n), end: rng.random_range(0..n), op: BoolOp::from_index(rng.random_range(0..4)).unwrap() };
            let snapshot = env.snapshot();
            let r = env.step_face_extrude(&a).unwrap();
            assert_eq!(env.steps_taken(), k);
            if !r.valid {
                assert_eq!(occupancy(env.current(), &bbox, IOU_RESOLUTION), before);
            }
            let mut twin = Env::new();
            twin.set_target(bodies_of(&p)).unwrap();
            twin.restore(&snapshot);
            let r2 = twin.step_face_extrude(&a).unwrap();
            assert_eq!((r.valid, r.iou, r.exact, r.bodies), (r2.valid, r2.iou, r2.exact, r2.bodies));
        }
    }
}

#[test]
fn converted_designs_replay_exactly() {
    let corpus = generate_corpus(&GenConfig::synthetic(900, (1, 3)), 60);
    let mut converted = 0;
    for p in &corpus {
        let Ok(actions) = convert_to_face_extrusion(p) else { continue };
        converted += 1;
        let mut env = Env::new();
        env.set_target(bodies_of(p)).unwrap();
        let mut last = None;
        for a in &actions {
            last = Some(env.step_face_extrude(a).unwrap());
        }
        let r = last.unwrap();
        assert_eq!(r.iou, Some(1.0));
        assert!(r.exact);
    }
    assert!(converted > 20, "{converted} of 60 converted");
}

#[test]
fn search_series_are_monotone_and_saturate() {
    for (i, p) in generate_convertible_corpus(&GenConfig::synthetic(64, (1, 2)), 6, 1).iter().enumerate() {
        for procedure in [Procedure::Rollout, Procedure::Beam, Procedure::BestFirst] {
            let mut env = Env::new();
            env.set_target(bodies_of(p)).unwrap();
            let r = search(&mut env, &mut RandomPolicy::default(), &SearchConfig::new(procedure, 40, i as u64)).unwrap();
            assert!(r.best_iou_by_step.windows(2).all(|w| w[0] <= w[1]));
            if let Some(k) = r.exact_found_at {
                assert!(r.best_iou_by_step[k..].iter().all(|&v| v == 1.0), "{procedure}");
            }
        }
    }
}

#[test]
fn masked_actions_are_never_sampled() {
    let d = ActionDistribution {
        p_op: [0.0, 0.5, 0.5, 0.0],
        p_start: vec![0.0, 0.7, 0.0, 0.3],
        p_end_given_start: vec![vec![], vec![0.4, 0.0, 0.0, 0.6], vec![], vec![0.0, 1.0, 0.0, 0.0]],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..2000 {
        let a = d.sample(&mut rng);
        assert!(d.p_op[a.op.index()] > 0.0 && d.p_start[a.start] > 0.0 && d.p_end(a.start)[a.end] > 0.0, "{a:?}");
    }
    for (a, logp) in d.actions() {
        assert!(logp.is_finite() && d.p_op[a.op.index()] > 0.0 && d.p_start[a.start] > 0.0 && d.p_end(a.start)[a.end] > 0.0);
    }
}

#[test]
fn iou_one_iff_exact() {
    let corpus = generate_corpus(&GenConfig::synthetic(19, (1, 3)), 12);
    let bodies: Vec<Vec<Solid>> = corpus.iter().map(bodies_of).collect();
    for (i, a) in bodies.iter().enumerate() {
        assert!(exact_reconstruction(a, a));
        let b = &bodies[(i + 1) % bodies.len()];
        let bb = bodies_bbox(a).union(&bodies_bbox(b));
        let same_grid = occupancy(a, &bb, IOU_RESOLUTION) == occupancy(b, &bb, IOU_RESOLUTION);
        assert_eq!(iou(a, b, IOU_RESOLUTION) == 1.0, same_grid);
    }
}

fn session(addr: std::net::SocketAddr, lines: &[String]) -> Vec<String> {
    let stream = TcpStream::connect(addr).unwrap();
    let mut w = stream.try_clone().unwrap();
    let mut r = BufReader::new(stream);
    lines
        .iter()
        .map(|l| {
            writeln!(w, "{l}").unwrap();
            let mut s = String::new();
            r.read_line(&mut s).unwrap();
            s
        })
        .collect()
}

#[test]
fn interleaved_connections_match_serial_runs() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || server::serve(listener));
    let script = |p: &Program| -> Vec<String> {
        let program: Value = serde_json::from_str(&serialize_program(p)).unwrap();
        let mut out = vec![json!({"id": 1, "command": "set_target", "params": {"program": program}}).to_string()];
        for (k, a) in convert_to_face_extrusion(p).unwrap().iter().enumerate() {
            out.push(json!({"id": 2 + k, "command": "add_extrude_by_target_face", "params": {"start_face": a.start, "end_face": a.end, "operation": a.op.as_str()}}).to_string());
        }
        out.push(json!({"id": 99, "command": "graph", "params": {"which": "current"}}).to_string());
        out
    };
    let (sa, sb) = (script(&fixtures::stepped_block()), script(&fixtures::washer(1.0, 0.4, 0.3)));
    let serial = (session(addr, &sa), session(addr, &sb));
    let (ta, tb) = (sa.clone(), sb.clone());
    let ha = std::thread::spawn(move || session(addr, &ta));
    let hb = std::thread::spawn(move || session(addr, &tb));
    let parallel = (ha.join().unwrap(), hb.join().unwrap());
    assert_eq!(serial, parallel);
    for (req, resp) in sa.iter().zip(&serial.0) {
        let (q, r): (Value, Value) = (serde_json::from_str(req).unwrap(), serde_json::from_str(resp).unwrap());
        assert_eq!(q["id"], r["id"]);
        assert_eq!(r["status"], "ok");
    }
}
