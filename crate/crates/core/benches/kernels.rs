use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use forge_core::cluster::{kmeans_restarts, sweep_k, ClusterConfig, KMeansParams};
use forge_core::dialogue::{IndexEntry, SummaryIndex};
use forge_core::gateway::EmbeddingVector;
use forge_core::ExecMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn blobs(n: usize, dim: usize, centers: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..centers)
        .map(|_| (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect())
        .collect();
    (0..n)
        .map(|i| means[i % centers].iter().map(|m| m + rng.gen_range(-0.5..0.5)).collect())
        .collect()
}

fn restarts(c: &mut Criterion) {
    let pts = blobs(2000, 64, 5, 1);
    let mut group = c.benchmark_group("kmeans_restarts");
    group.sample_size(10);
    for mode in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| kmeans_restarts(black_box(&pts), KMeansParams::new(5, 7), 8, mode).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let pts = blobs(1000, 64, 4, 2);
    let config = ClusterConfig::default();
    let mut group = c.benchmark_group("sweep_k");
    group.sample_size(10);
    for mode in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| sweep_k(black_box(&pts), &config, mode).unwrap())
        });
    }
    group.finish();
}

fn retrieval(c: &mut Criterion) {
    let vectors = blobs(20_000, 256, 16, 3);
    let query = vectors[17].clone();
    let entries = vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| IndexEntry {
            video_id: format!("v{i}"),
            title: format!("Video {i}"),
            summary: String::new(),
            vector: EmbeddingVector::new(v),
        })
        .collect();
    let index = SummaryIndex::from_entries(entries).unwrap();
    let mut group = c.benchmark_group("retrieval_search");
    for mode in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| index.search(black_box(&query), 3, mode))
        });
    }
    group.finish();
}

criterion_group!(benches, restarts, sweep, retrieval);
criterion_main!(benches);
