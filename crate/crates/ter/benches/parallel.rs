//! Parallel vs. sequential throughput on the per-document stages.
//!
//! Each group pits the feature-gated data-parallel path (`map_slice`, rayon
//! when the `parallel` feature is on) against the always-sequential twin on
//! identical inputs. Without the feature the two coincide, so the comparison
//! is only meaningful on a default build with more than one core.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ter::corpus::synth::{generate_synthetic, generate_synthetic_seq, SynthConfig};
use ter::corpus::Document;
use ter::encoder::{encode_document, init_encoder_params, FeatureConfig, Vocab};
use ter::channels::{channel_forward, channel_probs, init_channel_params};
use ter::nncore::{Graph, ParamStore, Rng};
use ter::ontology::{number_roles, EventOntology};
use ter::par::{map_slice, map_slice_seq};
use ter::terstruct::{build_gold_matrices, plan_duplicates, TerMatrix};

const ONTOLOGY: &str = include_str!("../data/equity_events.toml");

fn corpus(docs: usize, ont: &EventOntology) -> (SynthConfig, Vec<Document>) {
    let cfg = SynthConfig {
        doc_count: docs,
        tokens_per_doc: 24,
        event_type_count: 4,
        roles_per_type: 4,
        events_per_doc: (1, 3),
        event_slots: 8,
        multi_role_rate: 0.5,
        shared_arg_rate: 0.3,
        seed: 99,
    };
    let docs = generate_synthetic(&cfg, ont).expect("synth");
    (cfg, docs)
}

fn bench_synthesis(c: &mut Criterion) {
    let ont = EventOntology::from_toml_str(ONTOLOGY).expect("ontology");
    let (cfg, _) = corpus(256, &ont);
    let mut group = c.benchmark_group("synthesis_256_docs");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", 256), |b| {
        b.iter(|| generate_synthetic(&cfg, &ont).unwrap())
    });
    group.bench_function(BenchmarkId::new("sequential", 256), |b| {
        b.iter(|| generate_synthetic_seq(&cfg, &ont).unwrap())
    });
    group.finish();
}

fn bench_gold_grids(c: &mut Criterion) {
    let ont = EventOntology::from_toml_str(ONTOLOGY).expect("ontology");
    let (_, docs) = corpus(256, &ont);
    let num = number_roles(&ont);
    let build = |d: &Document| -> Vec<TerMatrix> {
        build_gold_matrices(d, &ont, &num, 8).expect("gold")
    };
    let mut group = c.benchmark_group("gold_grids_256_docs");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", 256), |b| {
        b.iter(|| map_slice(&docs, build))
    });
    group.bench_function(BenchmarkId::new("sequential", 256), |b| {
        b.iter(|| map_slice_seq(&docs, build))
    });
    group.finish();
}

fn bench_forward_pass(c: &mut Criterion) {
    let ont = EventOntology::from_toml_str(ONTOLOGY).expect("ontology");
    let (_, docs) = corpus(32, &ont);
    let vocab = Vocab::build(&docs);
    let feature = FeatureConfig::desk();
    let m = 8;
    let mut store = ParamStore::new();
    let mut rng = Rng::new(5);
    init_encoder_params(&mut store, &vocab, &feature, m, ont.type_count(), &mut rng).unwrap();
    init_channel_params(&mut store, &feature, &ont, &mut rng).unwrap();

    let forward = |doc: &Document| -> usize {
        let mut g = Graph::new(false);
        let plan = plan_duplicates(doc, &ont);
        let h = encode_document(
            &mut g,
            &store,
            &vocab,
            &feature,
            doc,
            &plan,
            m,
            None,
            &mut Rng::new(0),
        )
        .expect("encode");
        let mut cells = 0;
        for t in 0..ont.type_count() {
            let logits = channel_forward(&mut g, &store, &feature, &ont, h, t).expect("channel");
            let probs = channel_probs(&mut g, logits);
            cells += g.value(probs).len();
        }
        cells
    };
    let mut group = c.benchmark_group("model_forward_32_docs");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", 32), |b| {
        b.iter(|| map_slice(&docs, forward))
    });
    group.bench_function(BenchmarkId::new("sequential", 32), |b| {
        b.iter(|| map_slice_seq(&docs, forward))
    });
    group.finish();
}

criterion_group!(benches, bench_synthesis, bench_gold_grids, bench_forward_pass);
criterion_main!(benches);
