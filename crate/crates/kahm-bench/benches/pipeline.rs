//! Benchmarks for each pipeline stage: model construction, gate scoring,
//! embedding prediction, exact search, and metric aggregation.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use kahm::{
    aggregate, build_index, build_model, paired_bootstrap, predict_embedding, search,
    selection_score, train_law_encoder, AggMode, BootstrapConfig, EncoderRegistry, Metric,
    MetricParams, ResampleUnit, SyntheticSpec, SystemScores, TrainConfig,
};
use kahm_bench::{pseudo_matrix, pseudo_results};

/// Small but realistic two-law benchmark world shared by the model benches.
fn bench_world() -> kahm::SyntheticData {
    let spec = SyntheticSpec {
        n_laws: 2,
        clusters_per_law: 2,
        lexical_dim: 16,
        semantic_dim: 16,
        samples_per_cluster: 32,
        teacher_noise_sigma: 0.02,
        lexical_distortion: 0.3,
        seed: 77,
    };
    kahm::generate_synthetic(&spec).expect("valid spec")
}

fn train_config() -> TrainConfig {
    TrainConfig {
        n_clusters: 2,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn bench_build_model(c: &mut Criterion) {
    let world = bench_world();
    let reference = world.laws[0].train_lexical.clone();
    c.bench_function("build_model_64x16", |b| {
        b.iter_batched(
            || reference.clone(),
            |x| build_model(black_box(x)).expect("builds"),
            BatchSize::SmallInput,
        )
    });
}

fn bench_train_law_encoder(c: &mut Criterion) {
    let world = bench_world();
    let law = &world.laws[0];
    let config = train_config();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("train_law_encoder_2x32", |b| {
        b.iter(|| {
            train_law_encoder(
                black_box(&law.train_lexical),
                black_box(&law.train_semantic),
                &config,
            )
            .expect("trains")
        })
    });
    group.finish();
}

fn bench_gate_and_predict(c: &mut Criterion) {
    let world = bench_world();
    let config = train_config();
    let entries: Vec<(String, kahm::ClusterSet)> = world
        .laws
        .iter()
        .map(|law| {
            let set = train_law_encoder(&law.train_lexical, &law.train_semantic, &config)
                .expect("trains");
            (law.law_id.clone(), set)
        })
        .collect();
    let registry = EncoderRegistry::new(entries).expect("unique laws");
    let query = world.test_queries.matrix.row(0).to_vec();

    c.bench_function("selection_score", |b| {
        let encoder = &registry.entries()[0].1;
        b.iter(|| selection_score(black_box(encoder), black_box(&query)).expect("scores"))
    });
    c.bench_function("predict_embedding", |b| {
        let encoder = &registry.entries()[0].1;
        b.iter(|| predict_embedding(black_box(&query), black_box(encoder)).expect("predicts"))
    });
    c.bench_function("encode_query_2_laws", |b| {
        b.iter(|| kahm::encode_query(black_box(&registry), black_box(&query), true).expect("routes"))
    });
}

fn bench_search(c: &mut Criterion) {
    let rows = 2048;
    let dim = 48;
    let vectors = pseudo_matrix(rows, dim, 11);
    let ids: Vec<String> = (0..rows).map(|i| format!("u{i:05}")).collect();
    let labels: Vec<String> = (0..rows).map(|i| format!("law{:02}", i % 3)).collect();
    let index = build_index(vectors, ids, labels).expect("builds");
    let query: Vec<f64> = pseudo_matrix(1, dim, 99).row(0).to_vec();
    c.bench_function("search_2048x48_top10", |b| {
        b.iter(|| search(black_box(&index), black_box(&query), 10).expect("searches"))
    });
}

fn bench_metrics(c: &mut Criterion) {
    let results = pseudo_results(500, 20, 3);
    let params = MetricParams::default();
    c.bench_function("aggregate_mrr_500q", |b| {
        b.iter(|| {
            aggregate(
                black_box(&results),
                Metric::Mrr,
                10,
                AggMode::Micro,
                &params,
            )
            .expect("aggregates")
        })
    });

    let gold: Vec<&str> = results.iter().map(|r| r.gold_label.as_str()).collect();
    let score = |offset: f64| SystemScores {
        name: format!("sys{offset}"),
        scores: results
            .iter()
            .enumerate()
            .map(|(i, _)| ((i % 10) as f64 / 10.0 + offset).min(1.0))
            .collect(),
    };
    let systems = [score(0.0), score(0.05)];
    let config = BootstrapConfig {
        resamples: 1000,
        ..BootstrapConfig::default()
    };
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(20);
    group.bench_function("paired_bootstrap_2x500x1000", |b| {
        b.iter(|| {
            paired_bootstrap(
                black_box(&systems),
                black_box(&gold),
                &config,
                ResampleUnit::Query,
            )
            .expect("bootstraps")
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_build_model,
    bench_train_law_encoder,
    bench_gate_and_predict,
    bench_search,
    bench_metrics
);
criterion_main!(benches);
