use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use drugnet::{build_cooccurrence, metric_closure, pca, tag_corpus, Resolution};
use drugnet_bench::{distance, fixture, proximity};

fn tagging(c: &mut Criterion) {
    let mut group = c.benchmark_group("tag");
    group.sample_size(10);
    for posts in [10_000, 50_000] {
        let f = fixture(500, posts, 200);
        group.throughput(Throughput::Elements(posts as u64));
        group.bench_with_input(BenchmarkId::from_parameter(posts), &f, |b, f| {
            b.iter(|| tag_corpus(&f.lexicon, f.timelines.clone()))
        });
    }
    group.finish();
}

fn cooccurrence(c: &mut Criterion) {
    let mut group = c.benchmark_group("cooccur");
    group.sample_size(10);
    let tagged = fixture(1000, 100_000, 500).tagged();
    for res in Resolution::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(res), &res, |b, &res| {
            b.iter(|| build_cooccurrence(&tagged, res))
        });
    }
    group.finish();
}

fn closure(c: &mut Criterion) {
    let mut group = c.benchmark_group("closure");
    group.sample_size(10);
    for vocab in [100, 300, 500] {
        let tagged = fixture(1000, 100_000, vocab).tagged();
        let graph = distance(&tagged, Resolution::Week, 10);
        group.bench_with_input(BenchmarkId::from_parameter(vocab), &graph, |b, g| {
            b.iter(|| metric_closure(g))
        });
    }
    group.finish();
}

fn spectra(c: &mut Criterion) {
    let mut group = c.benchmark_group("pca");
    group.sample_size(10);
    let tagged = fixture(1000, 100_000, 500).tagged();
    let graph = proximity(&tagged, Resolution::Week, 10);
    group.bench_function("500_terms", |b| b.iter(|| pca(&graph, 10).unwrap()));
    group.finish();
}

criterion_group!(benches, tagging, cooccurrence, closure, spectra);
criterion_main!(benches);
