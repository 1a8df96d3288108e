use std::hint::black_box;

use cadrecon_bench::{bodies, named_designs, synthetic_designs};
use cadrecon_core::agent::{forward, AgentKind, PolicyParams, HIDDEN};
use cadrecon_core::brep::extract_graph;
use cadrecon_core::dsl::execute;
use cadrecon_core::eval::iou;
use cadrecon_core::kernel::solid::bodies_bbox;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn interpreter(c: &mut Criterion) {
    let mut g = c.benchmark_group("execute");
    for (name, p) in named_designs() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &p, |b, p| b.iter(|| execute(black_box(p)).unwrap()));
    }
    let corpus = synthetic_designs(8);
    g.bench_function("synthetic_x8", |b| {
        b.iter(|| corpus.iter().map(|p| execute(p).unwrap().final_bodies().len()).sum::<usize>())
    });
    g.finish();
}

fn graph_and_iou(c: &mut Criterion) {
    let target = bodies(&named_designs()[2].1);
    let other = bodies(&named_designs()[0].1);
    let bbox = bodies_bbox(&target);
    c.bench_function("extract_graph/stepped_block", |b| b.iter(|| extract_graph(black_box(&target), &bbox).unwrap()));
    let mut g = c.benchmark_group("iou");
    for res in [32usize, 64, 128] {
        g.bench_with_input(BenchmarkId::from_parameter(res), &res, |b, &r| b.iter(|| iou(&other, &target, r)));
    }
    g.finish();
}

fn policy_forward(c: &mut Criterion) {
    let target = bodies(&named_designs()[3].1);
    let graph = extract_graph(&target, &bodies_bbox(&target)).unwrap();
    let empty = extract_graph(&[], &bodies_bbox(&target)).unwrap();
    let mut g = c.benchmark_group("forward");
    for kind in [AgentKind::Mlp, AgentKind::Gcn] {
        let params = PolicyParams::init(kind, HIDDEN, 0);
        g.bench_function(kind.to_string(), |b| b.iter(|| forward(&params, black_box(&empty), &graph).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, interpreter, graph_and_iou, policy_forward);
criterion_main!(benches);
