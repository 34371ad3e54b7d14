//! Benchmarks for the hot paths: triple ingestion, reverse label reasoning,
//! entity mining, and the sequential-vs-parallel execution seam.
//!
//! The `exec` group runs the same per-question workload through
//! `exec::map_seq` and `exec::map_par` so the two strategies can be compared
//! in one report. To measure the crate built without rayon at all, rerun with
//! `cargo bench -p ort-core --no-default-features`; the `par` rows simply
//! disappear.

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use ort_core::exec;
use ort_core::kg::{build_index, KgStore, Triple};
use ort_core::ontology::{build_neighbor_dictionary, build_ontology_from_store, NeighborLabelDictionary};
use ort_core::miner::mine_entity_tree;
use ort_core::reasoner::{reverse_reason, CyclePolicy, LabelPath, QueryIntent};

/// Deterministic synthetic triples: 12 labels in a ring with a chordal skip,
/// so reverse trees branch without blowing up.
fn synthetic_triples(count: usize) -> Vec<Triple> {
    (0..count)
        .map(|i| {
            let a = i % 12;
            let b = if i % 3 == 0 { (a + 5) % 12 } else { (a + 1) % 12 };
            Triple::new(
                format!("e{}", i % 5_000),
                format!("d{}.l{a}.l{b}", i % 7),
                format!("e{}", (i * 13 + 7) % 5_000),
            )
        })
        .collect()
}

fn synthetic_store(count: usize) -> KgStore {
    build_index(synthetic_triples(count))
}

fn dictionary_for(store: &KgStore) -> NeighborLabelDictionary {
    build_neighbor_dictionary(&build_ontology_from_store(store))
}

fn bench_ingest(c: &mut Criterion) {
    let mut group = c.benchmark_group("ingest");
    for &size in &[1_000usize, 10_000] {
        let triples = synthetic_triples(size);
        group.throughput(Throughput::Elements(size as u64));
        group.bench_with_input(BenchmarkId::new("build_index", size), &triples, |b, t| {
            b.iter_batched(|| t.clone(), build_index, BatchSize::LargeInput);
        });
    }
    group.finish();
}

fn bench_reverse_reasoning(c: &mut Criterion) {
    let store = synthetic_store(10_000);
    let dictionary = dictionary_for(&store);
    let intent = QueryIntent::new(
        vec![("e0".into(), "l0".into())],
        vec![("the target".into(), "l6".into())],
    );

    let mut group = c.benchmark_group("reason");
    for &max_pop in &[3usize, 4] {
        group.bench_with_input(
            BenchmarkId::new("reverse_reason", max_pop),
            &max_pop,
            |b, &depth| {
                b.iter(|| {
                    reverse_reason(
                        black_box(&intent),
                        &dictionary,
                        depth,
                        CyclePolicy::ConstructionTime,
                    )
                    .unwrap()
                });
            },
        );
    }
    group.finish();
}

fn bench_mining(c: &mut Criterion) {
    let store = synthetic_store(20_000);
    let dictionary = dictionary_for(&store);
    let path = LabelPath {
        labels: vec!["l0".into(), "l1".into(), "l2".into()],
        seed_label: "l2".into(),
    };
    let conditions = vec![("e0".to_owned(), "l0".to_owned())];

    c.bench_function("mine/entity_tree", |b| {
        b.iter(|| {
            mine_entity_tree(
                black_box(&store),
                &dictionary,
                &path,
                &conditions,
                black_box(10),
                7,
            )
        });
    });
}

/// One unit of per-question work, as the eval fan-out performs it.
fn question_work(dictionary: &NeighborLabelDictionary, start: &str, goal: &str) -> usize {
    let intent = QueryIntent::new(
        vec![("entity".into(), start.to_owned())],
        vec![("goal".into(), goal.to_owned())],
    );
    reverse_reason(&intent, dictionary, 4, CyclePolicy::ConstructionTime)
        .map(|paths| paths.len())
        .unwrap_or(0)
}

fn bench_exec_strategies(c: &mut Criterion) {
    let store = synthetic_store(10_000);
    let dictionary = dictionary_for(&store);
    let questions: Vec<(String, String)> = (0..64)
        .map(|i| (format!("l{}", i % 12), format!("l{}", (i + 6) % 12)))
        .collect();

    let mut group = c.benchmark_group("exec");
    group.throughput(Throughput::Elements(questions.len() as u64));
    group.bench_with_input(BenchmarkId::new("seq", questions.len()), &questions, |b, q| {
        b.iter(|| exec::map_seq(q, |(s, g)| question_work(&dictionary, s, g)));
    });
    #[cfg(feature = "parallel")]
    group.bench_with_input(BenchmarkId::new("par", questions.len()), &questions, |b, q| {
        b.iter(|| exec::map_par(q, |(s, g)| question_work(&dictionary, s, g)));
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_ingest,
    bench_reverse_reasoning,
    bench_mining,
    bench_exec_strategies
);
criterion_main!(benches);
