use super::*;
use crate::brep::{FaceNode, GRID_CELLS};
use crate::fixtures;
use crate::kernel::SurfaceDesc;
use crate::math::{Aabb, Vec3};

fn target_of(p: &Program) -> FaceGraph {
    let mut env = Env::new();
    env.set_target(execute(p).unwrap().final_bodies().to_vec()).unwrap().0
}

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> FaceGraph {
    let nodes = (0..n)
        .map(|i| {
            let surface = if i == 0 && n > 2 {
                SurfaceDesc::Cylinder { origin: Vec3::ZERO, axis: Vec3::Z, radius: 1.0 }
            } else {
                SurfaceDesc::plane(Vec3::ZERO, Vec3::Z, Vec3::X)
            };
            let mut r3 = || [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
            FaceNode {
                face_id: format!("f{i}"),
                surface,
                points: (0..GRID_CELLS).map(|_| r3()).collect(),
                normals: (0..GRID_CELLS).map(|_| r3()).collect(),
                trim_mask: (0..GRID_CELLS).map(|_| rng.random::<bool>()).collect(),
                area: 1.0,
                centroid: Vec3::ZERO,
                triangles: Vec::new(),
            }
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < 0.5 {
                edges.push((a, b));
            }
        }
    }
    FaceGraph { nodes, edges, bbox: Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)) }
}

fn empty_graph() -> FaceGraph {
    FaceGraph::empty(Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)))
}

fn sums_to_one(p: &[f64]) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() <= 1e-6
}

#[test]
fn empty_current_forces_new_body() {
    let cube = target_of(&fixtures::cube(1.0));
    let params = PolicyParams::init(AgentKind::Gcn, 16, 3);
    let d = forward(&params, &empty_graph(), &cube).unwrap();
    assert_eq!(d.p_op, [1.0, 0.0, 0.0, 0.0]);
    assert!(sums_to_one(&d.p_start));
    for s in 0..6 {
        assert!(sums_to_one(d.p_end(s)));
    }
    assert_eq!(encode(&params, false, &empty_graph()).len(), 0);
    assert_eq!(encode(&params, true, &cube).len(), 6 * 16);
}

#[test]
fn washer_start_support_is_the_two_planar_faces() {
    let washer = target_of(&fixtures::washer(1.0, 0.5, 0.25));
    assert_eq!(washer.nodes.len(), 4);
    for kind in [AgentKind::Rand, AgentKind::Mlp, AgentKind::Gcn] {
        let d = forward(&PolicyParams::init(kind, 8, 1), &empty_graph(), &washer).unwrap();
        let support: Vec<usize> = (0..4).filter(|&i| d.p_start[i] > 0.0).collect();
        let planar: Vec<usize> = (0..4).filter(|&i| washer.nodes[i].is_planar()).collect();
        assert_eq!(support, planar);
        assert!(sums_to_one(&d.p_start));
    }
}

#[test]
fn uniform_loss_closed_form() {
    let d = ActionDistribution {
        p_op: [0.25; 4],
        p_start: vec![0.5, 0.5],
        p_end_given_start: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    };
    let l = loss(&d, &FaceExtrude { start: 0, end: 1, op: BoolOp::Cut }).unwrap();
    assert!((l - (4f64.ln() + 2f64.ln() + 2f64.ln())).abs() < 1e-12);
    let sure = ActionDistribution { p_op: [1.0, 0.0, 0.0, 0.0], p_start: vec![1.0, 0.0], p_end_given_start: vec![vec![0.0, 1.0], vec![]] };
    assert_eq!(loss(&sure, &FaceExtrude { start: 0, end: 1, op: BoolOp::NewBody }).unwrap(), 0.0);
    assert!(matches!(loss(&sure, &FaceExtrude { start: 1, end: 1, op: BoolOp::NewBody }), Err(AgentError::MaskedLabel("start"))));
}

#[test]
fn network_loss_matches_distribution_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = PolicyParams::init(AgentKind::Gcn, 12, 9);
    let ex = SupervisedExample {
        current_graph: random_graph(3, &mut rng),
        target_graph: random_graph(5, &mut rng),
        label: FaceExtrude { start: 2, end: 4, op: BoolOp::Join },
    };
    let d = forward(&params, &ex.current_graph, &ex.target_graph).unwrap();
    let (l, _) = loss_and_grad(&params, &[&ex]).unwrap();
    assert!((l - loss(&d, &ex.label).unwrap()).abs() < 1e-10);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [AgentKind::Gcn, AgentKind::Mlp] {
        let mut params = PolicyParams::init(kind, 6, 4);
        let ex = SupervisedExample {
            current_graph: random_graph(5, &mut rng),
            target_graph: random_graph(5, &mut rng),
            label: FaceExtrude { start: 1, end: 3, op: BoolOp::Cut },
        };
        let (_, grad) = loss_and_grad(&params, &[&ex]).unwrap();
        let h = 1e-5;
        for i in (0..params.data.len()).step_by(7) {
            let x = params.data[i];
            params.data[i] = x + h;
            let lp = loss_and_grad(&params, &[&ex]).unwrap().0;
            params.data[i] = x - h;
            let lm = loss_and_grad(&params, &[&ex]).unwrap().0;
            params.data[i] = x;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "{kind} param {i}: analytic {} numeric {fd}", grad[i]);
        }
    }
}

#[test]
fn target_permutation_permutes_start_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = PolicyParams::init(AgentKind::Gcn, 16, 2);
    let cur = random_graph(4, &mut rng);
    let t = random_graph(5, &mut rng);
    let perm = [3usize, 0, 4, 1, 2];
    let mut pt = t.clone();
    pt.nodes = perm.iter().map(|&i| t.nodes[i].clone()).collect();
    let inv: Vec<usize> = (0..5).map(|i| perm.iter().position(|&p| p == i).unwrap()).collect();
    pt.edges = t.edges.iter().map(|&(a, b)| (inv[a], inv[b])).collect();
    let d = forward(&params, &cur, &t).unwrap();
    let dp = forward(&params, &cur, &pt).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert!((dp.p_start[k] - d.p_start[i]).abs() < 1e-12);
    }
    assert_eq!(d.p_op, dp.p_op);
}

#[test]
fn overfits_one_example() {
    let cube = target_of(&fixtures::cube(1.0));
    let label = convert_to_face_extrusion(&fixtures::cube(1.0)).unwrap()[0];
    let ex = SupervisedExample { current_graph: empty_graph(), target_graph: cube, label };
    let mut cfg = TrainConfig::new(AgentKind::Gcn, 5);
    cfg.hidden = 32;
    cfg.epochs = 200;
    cfg.learning_rate = 1e-3;
    let report = train(std::slice::from_ref(&ex), &cfg, |_| {}).unwrap();
    let d = forward(&report.params, &ex.current_graph, &ex.target_graph).unwrap();
    assert!(loss(&d, &label).unwrap() < 0.01);
    assert_eq!(d.argmax_action(), label);
}

#[test]
fn plateau_decays_by_factor() {
    let mut s = PlateauSchedule::new(1e-4, 0.1, 10);
    s.observe(1.0);
    for _ in 0..9 {
        assert_eq!(s.observe(1.0), 1e-4);
    }
    assert_eq!(s.observe(1.0), 1e-4 * 0.1);
}

#[test]
fn rand_training_is_a_no_op() {
    let cube = target_of(&fixtures::cube(1.0));
    let label = convert_to_face_extrusion(&fixtures::cube(1.0)).unwrap()[0];
    let ex = SupervisedExample { current_graph: empty_graph(), target_graph: cube.clone(), label };
    let r = train(&[ex], &TrainConfig::new(AgentKind::Rand, 0), |_| {}).unwrap();
    assert!(r.history.is_empty() && r.params.data.is_empty());
    assert_eq!(forward(&r.params, &empty_graph(), &cube).unwrap(), uniform_distribution(&empty_graph(), &cube).unwrap());
    assert!(matches!(train(&[], &TrainConfig::new(AgentKind::Gcn, 0), |_| {}), Err(AgentError::EmptyDataset)));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let p = PolicyParams::init(AgentKind::Mlp, 8, 11);
    let text = serde_json::to_string(&p.to_json()).unwrap();
    let q = PolicyParams::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
    assert!(p.data.iter().zip(&q.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(p, q);
    let mut v = p.to_json();
    v["tensors"][0]["shape"] = json!([1, 2]);
    assert!(PolicyParams::from_json(&v).is_err());
}

#[test]
fn imitation_dataset_counts() {
    let ds = build_imitation_dataset(&[fixtures::cube(1.0), fixtures::stepped_block()]);
    assert_eq!(ds.convertible, 2);
    assert_eq!(ds.examples.len(), 3);
    assert!(ds.examples[0].current_graph.nodes.is_empty());
    assert_eq!(ds.examples[2].current_graph.nodes.len(), 6);
}

#[test]
fn sampling_never_returns_masked_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = [0.0, 0.3, 0.0, 0.7, 0.0];
    for _ in 0..500 {
        let i = categorical(&p, &mut rng);
        assert!(i == 1 || i == 3);
    }
}
