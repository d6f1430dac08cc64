use std::hint::black_box;

use cim_bench::Scenario;
use cim_core::contest::simulate_batch;
use cim_core::deviation::{verify_best_response, VerifyOptions};
use cim_core::dist::expected_max;
use cim_core::equilibrium::{solve_equilibrium, solve_equilibrium_typed};
use cim_core::graph::derive_invitation_graph;
use cim_core::tree::build_order_tree;
use cim_core::InvitationProfile;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn order_tree(c: &mut Criterion) {
    let mut group = c.benchmark_group("order_tree");
    for n in [1_000usize, 10_000] {
        let s = Scenario::sparse(n, 7);
        let prof = InvitationProfile::all_invite(&s.graph);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| build_order_tree(&derive_invitation_graph(&s.graph, &prof)).unwrap())
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for n in [1_000usize, 10_000] {
        let s = Scenario::sparse(n, 7);
        group.bench_with_input(BenchmarkId::new("plain", n), &s, |b, s| {
            b.iter(|| solve_equilibrium(&s.tree, &s.params, &s.dist).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("typed", n), &s, |b, s| {
            b.iter(|| solve_equilibrium_typed(&s.tree, &s.params, &s.dist).unwrap())
        });
    }
    group.finish();
}

fn simulate(c: &mut Criterion) {
    let s = Scenario::sparse(4_000, 7);
    let (prof, _) = solve_equilibrium(&s.tree, &s.params, &s.dist).unwrap();
    c.bench_function("simulate/1000 tasks on 4000 nodes", |b| {
        b.iter(|| simulate_batch(&s.tree, &prof, &s.params, &s.dist, 1_000, black_box(3)))
    });
}

fn verify(c: &mut Criterion) {
    let s = Scenario::sparse(300, 7);
    let agent = s
        .graph
        .nodes()
        .filter(|&v| v != s.graph.requester())
        .max_by_key(|&v| s.graph.degree(v).min(8))
        .unwrap();
    let opts = VerifyOptions::default();
    c.bench_function("verify/one agent on 300 nodes", |b| {
        b.iter(|| verify_best_response(agent, &s.graph, &s.params, &s.dist, &opts).unwrap())
    });
}

fn order_statistic(c: &mut Criterion) {
    let s = Scenario::sparse(10, 7);
    c.bench_function("expected_max/n=4039", |b| b.iter(|| expected_max(&s.dist, black_box(4039)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = order_tree, solve, simulate, verify, order_statistic
}
criterion_main!(benches);
