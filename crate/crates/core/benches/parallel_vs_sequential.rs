use criterion::{BenchmarkId, Criterion, criterion_group, criterion_main};
use lobspoof_core::detect::fit_iforest;
use lobspoof_core::features::WindowBatch;
use lobspoof_core::par::Execution;
use lobspoof_core::repr::{Autoencoder, EncoderSpec, Family, TrainConfig, batch_gradient, encode_batch};
use lobspoof_core::rng;
use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn windows(n: usize, t: usize, f: usize) -> WindowBatch {
    let mut r = rng::seeded(3);
    let ws = (0..n).map(|_| Array2::from_shape_simple_fn((t, f), || StandardNormal.sample(&mut r))).collect();
    let labels = (0..n).map(|i| (i % 8 == 0) as u8).collect();
    WindowBatch::from_windows(ws, labels).unwrap()
}

fn gradients(c: &mut Criterion) {
    let data = windows(64, 32, 12);
    let views: Vec<ArrayView2<f64>> = (0..data.len()).map(|i| data.window(i)).collect();
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group("batch_gradient");
    group.sample_size(10);
    for family in Family::ALL {
        let model = Autoencoder::new(EncoderSpec::new(family, 12, 32, 64)).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(family.name(), name), &exec, |b, &exec| {
                b.iter(|| batch_gradient(&model, &views, &data.labels, &cfg, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn encoding(c: &mut Criterion) {
    let data = windows(512, 32, 12);
    let model = Autoencoder::new(EncoderSpec::new(Family::Attention, 12, 32, 64)).unwrap();
    let mut group = c.benchmark_group("encode_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| encode_batch(&model, &data, exec).unwrap()));
    }
    group.finish();
}

fn forest(c: &mut Criterion) {
    let mut r = rng::seeded(5);
    let x = Array2::from_shape_simple_fn((4000, 64), || StandardNormal.sample(&mut r));
    let mut group = c.benchmark_group("iforest_fit");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| fit_iforest(x.view(), 100, 256, 7, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, gradients, encoding, forest);
criterion_main!(benches);
