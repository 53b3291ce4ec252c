use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iproto_bench::{acceptance_corpus, and_fanout, ping_pong};
use iproto_core::net::{build_reachability_graph, translate, verify, Bounds};
use iproto_core::protocol::{parse_protocol, serialize_protocol};
use iproto_core::runtime::{create_session, trace_conformance, AgentId, SessionOptions};

fn protocol_text(c: &mut Criterion) {
    let corpus = acceptance_corpus();
    let texts: Vec<String> = corpus.iter().map(serialize_protocol).collect();
    c.bench_function("serialize/500", |b| {
        b.iter(|| corpus.iter().map(serialize_protocol).count())
    });
    c.bench_function("parse/500", |b| {
        b.iter(|| texts.iter().map(|t| parse_protocol(t).unwrap()).count())
    });
}

fn translation(c: &mut Criterion) {
    let corpus = acceptance_corpus();
    c.bench_function("translate/500", |b| {
        b.iter(|| corpus.iter().map(|ip| translate(ip).unwrap()).count())
    });
}

fn reachability(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify/and-fanout");
    group.sample_size(10);
    for width in [4, 6, 8, 10] {
        let net = translate(&and_fanout(width)).unwrap();
        let nodes = build_reachability_graph(&net, Bounds::default()).node_count();
        group.bench_with_input(
            BenchmarkId::new(format!("{nodes} markings"), width),
            &net,
            |b, net| b.iter(|| verify(black_box(net), Bounds::default())),
        );
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate/ping-pong");
    for rounds in [5, 50] {
        let ip = ping_pong(rounds);
        let net = translate(&ip).unwrap();
        let report = verify(&net, Bounds::default());
        let bindings = BTreeMap::from([
            ("I".to_string(), AgentId::integrator("I")),
            ("E".to_string(), AgentId::enterprise("E")),
        ]);
        group.bench_with_input(BenchmarkId::from_parameter(rounds), &rounds, |b, _| {
            b.iter(|| {
                let options = SessionOptions {
                    verification: Some(report.clone()),
                    ..Default::default()
                };
                let mut s = create_session(&ip, &net, &bindings, 7, options).unwrap();
                s.run_to_completion(100_000);
                trace_conformance(s.trace(), &net).conformant
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    protocol_text,
    translation,
    reachability,
    simulation
);
criterion_main!(benches);
