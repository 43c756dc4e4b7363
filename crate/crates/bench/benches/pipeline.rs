use bandgauge::classifier::{forward, Architecture, DualNetParams};
use bandgauge::freq::{pws_lfm, sobel_hfm, PwsConfig};
use bandgauge::pipeline::{score_image, Classifier, ScoreConfig};
use bandgauge::rng::substream;
use bandgauge::scoring::pool_score;
use bandgauge_bench::{banded_scene, luma_patch};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn frequency_maps(c: &mut Criterion) {
    let mut group = c.benchmark_group("freq");
    for n in [64, 235] {
        let patch = luma_patch(n);
        group.bench_with_input(BenchmarkId::new("sobel_hfm", n), &patch, |b, p| {
            b.iter(|| sobel_hfm(black_box(p)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("pws_lfm", n), &patch, |b, p| {
            b.iter(|| pws_lfm(black_box(p), &PwsConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn classifier_forward(c: &mut Criterion) {
    let patch = luma_patch(64);
    let hfm = sobel_hfm(&patch).unwrap();
    let lfm = pws_lfm(&patch, &PwsConfig::default()).unwrap();
    let params: DualNetParams = DualNetParams::init(&Architecture::default(), &mut substream(0, "bench"));
    c.bench_function("forward_64", |b| b.iter(|| forward(&params, black_box(&hfm), black_box(&lfm)).unwrap()));
}

fn scoring(c: &mut Criterion) {
    let img = banded_scene(512, 4);
    let cfg = ScoreConfig { patch_size: 64, ..Default::default() };
    let baseline = Classifier::Baseline(Default::default());
    let map = score_image(&img, &cfg, &baseline).unwrap().map;
    c.bench_function("pool_score_512", |b| b.iter(|| pool_score(black_box(&map), 80.0).unwrap()));

    let mut group = c.benchmark_group("score_image");
    group.sample_size(10);
    group.bench_function("baseline_512", |b| b.iter(|| score_image(black_box(&img), &cfg, &baseline).unwrap()));
    group.finish();
}

criterion_group!(benches, frequency_maps, classifier_forward, scoring);
criterion_main!(benches);
