use cal_core::data::{gen_mixture, MixtureSpec};
use cal_core::matrix::Matrix;
use cal_core::model::{backward_batch, forward_batch, sgd_step, MlpParams, OptimState};
use cal_core::noise::{inject_noise, NoiseGenConfig};
use cal_core::oracle::{argmin_over_classifiers, decoupling_residual_binary, suites, Objective};
use cal_core::rng::{self, substream};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

fn bench_exhaustive_search(c: &mut Criterion) {
    let mut rng = substream(1, rng::stream::SUITE);
    let inst = suites::random_binary_instance_with_signal(14, 0.0, 0.45, 0.2, &mut rng);
    c.bench_function("argmin over 2^14 classifiers", |b| {
        b.iter(|| argmin_over_classifiers(black_box(&inst), &Objective::PeerOnNoisy).unwrap())
    });
}

fn bench_identity_residual(c: &mut Criterion) {
    let mut rng = substream(2, rng::stream::SUITE);
    let inst = suites::random_binary_instance(64, 0.0, 0.45, &mut rng);
    let f = suites::random_classifier(&inst, &mut rng);
    c.bench_function("binary decoupling residual, 64 features", |b| {
        b.iter(|| decoupling_residual_binary(black_box(&inst), black_box(&f)).unwrap())
    });
}

fn bench_noise_injection(c: &mut Criterion) {
    let spec = MixtureSpec::ring(4, 2, 2.0, 10_000, 3);
    let ds = gen_mixture(&spec).unwrap();
    let cfg = NoiseGenConfig {
        eta: 0.4,
        num_classes: 4,
        feature_dim: 2,
        seed: 4,
    };
    c.bench_function("inject noise into 10k samples", |b| {
        b.iter(|| inject_noise(black_box(&ds.features), black_box(&ds.y_clean), &cfg).unwrap())
    });
}

fn bench_training_step(c: &mut Criterion) {
    let params = MlpParams::init(2, &[64, 64], 4, 5);
    let mut xrng = substream(6, rng::stream::DATA);
    let mut x = Matrix::zeros(128, 2);
    for v in x.data_mut() {
        *v = rand::Rng::random_range(&mut xrng, -2.0..2.0);
    }
    c.bench_function("forward+backward+sgd, batch 128, 2-64-64-4", |b| {
        b.iter_batched(
            || (params.clone(), OptimState::new(&params, 0.1, 0.9, 5e-4)),
            |(mut p, mut state)| {
                let cache = forward_batch(&p, &x).unwrap();
                let mut dlogits = Matrix::zeros(128, 4);
                for i in 0..128 {
                    let probs = cache.probs.row(i);
                    let g = cal_core::loss::ce_cutoff_grad(probs, i % 4, 1e-8);
                    dlogits.row_mut(i).copy_from_slice(&g);
                }
                let grads = backward_batch(&p, &cache, &dlogits).unwrap();
                sgd_step(&mut p, &grads, &mut state).unwrap();
                p
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_exhaustive_search,
    bench_identity_residual,
    bench_noise_injection,
    bench_training_step
);
criterion_main!(benches);
