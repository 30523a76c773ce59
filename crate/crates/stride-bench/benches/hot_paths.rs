//! Microbenchmarks for the latency-critical paths: the per-frame encoder,
//! the full streaming step (the live 60 FPS budget), one training update,
//! and the mixed-model deviance evaluation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use stride_core::datagen::{
    generate_trial, normalize_frame, SpeedCategory, StrikeCategory, SubjectProfile,
};
use stride_core::eval::bootstrap_mean_ci;
use stride_core::lmm::sim::{simulate_records, SimSpec};
use stride_core::lmm::{fit_lmm, FitCriterion, LmmData, ResponseTransform};
use stride_core::model::{ForecasterConfig, ForecasterModel, Task};
use stride_core::numerics::ops::{conv2d_same, conv2d_same_backward};
use stride_core::training::window_loss_with_grads;
use stride_core::{RngState, StreamMode, StreamState, Tensor};

fn f32_tensor(shape: &[usize], rng: &mut RngState) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    Tensor::<f64>::from_vec(shape, rng.uniform(n)).unwrap().cast()
}

fn bench_conv(c: &mut Criterion) {
    let mut rng = RngState::new(1);
    let input = f32_tensor(&[12, 25, 50], &mut rng);
    let kernels = f32_tensor(&[32, 12, 3, 3], &mut rng);
    let bias = f32_tensor(&[32], &mut rng);
    c.bench_function("conv2d_same 12->32 @25x50", |b| {
        b.iter(|| conv2d_same(black_box(&input), black_box(&kernels), black_box(&bias)).unwrap())
    });
    let grad = f32_tensor(&[32, 25, 50], &mut rng);
    c.bench_function("conv2d_same_backward 12->32 @25x50", |b| {
        b.iter(|| {
            conv2d_same_backward(black_box(&input), black_box(&kernels), black_box(&grad)).unwrap()
        })
    });
}

fn bench_inference(c: &mut Criterion) {
    let cop = ForecasterModel::<f32>::init_random(ForecasterConfig::default_for(Task::Cop), 1);
    let toi = ForecasterModel::<f32>::init_random(ForecasterConfig::default_for(Task::Toi), 2);
    let clip = generate_trial(
        &SubjectProfile::noise_free(0),
        SpeedCategory::Medium,
        StrikeCategory::Mid,
        3,
    );
    let frame = normalize_frame::<f32>(clip.frame_bytes(50));
    c.bench_function("encode_frame", |b| {
        b.iter(|| cop.encode_frame(black_box(&frame)).unwrap())
    });
    c.bench_function("stream step, both models (live budget)", |b| {
        b.iter_batched(
            || {
                let mut s1 = StreamState::new(&cop.config, StreamMode::Windowed);
                let mut s2 = StreamState::new(&toi.config, StreamMode::Windowed);
                for t in 0..15 {
                    let f = normalize_frame::<f32>(clip.frame_bytes(t));
                    cop.stream_predict(&f, &mut s1).unwrap();
                    toi.stream_predict(&f, &mut s2).unwrap();
                }
                (s1, s2)
            },
            |(mut s1, mut s2)| {
                let f = normalize_frame::<f32>(clip.frame_bytes(60));
                let a = cop.stream_predict(black_box(&f), &mut s1).unwrap();
                let b2 = toi.stream_predict(black_box(&f), &mut s2).unwrap();
                (a, b2)
            },
            BatchSize::LargeInput,
        )
    });
}

fn bench_training_update(c: &mut Criterion) {
    let model = ForecasterModel::<f32>::init_random(ForecasterConfig::default_for(Task::Cop), 5);
    let trial = generate_trial(
        &SubjectProfile::noise_free(1),
        SpeedCategory::Fast,
        StrikeCategory::Fore,
        7,
    );
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("window_loss_with_grads (one trial update)", |b| {
        b.iter(|| window_loss_with_grads(black_box(&model), black_box(&trial), Task::Cop).unwrap())
    });
    group.finish();
}

fn bench_statistics(c: &mut Criterion) {
    let records = simulate_records(&SimSpec::null_torso(8, 250), 11);
    let data = LmmData::from_records(&records, ResponseTransform::CubeRoot).unwrap();
    let mut group = c.benchmark_group("statistics");
    group.sample_size(20);
    group.bench_function("fit_lmm REML (8 subjects x 250 rows)", |b| {
        b.iter(|| fit_lmm(black_box(&data), FitCriterion::Reml).unwrap())
    });
    group.finish();
    let mut rng = RngState::new(13);
    let errs = rng.uniform(360);
    c.bench_function("bootstrap_mean_ci B=10000 n=360", |b| {
        b.iter(|| bootstrap_mean_ci(black_box(&errs), 10_000, 0.95, 17).unwrap())
    });
}

criterion_group!(
    benches,
    bench_conv,
    bench_inference,
    bench_training_update,
    bench_statistics
);
criterion_main!(benches);
