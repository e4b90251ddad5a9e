use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use xfnf_core::fields::{Arch, FieldModel};
use xfnf_core::metrics::ssim_2d;
use xfnf_core::synth::{generate_sequence, ToySequenceConfig, Transform};
use xfnf_core::transfer::{PreparedSignal, SharedTrainer, TrainConfig};

const GRID: usize = 64;

fn signals(arch: Arch) -> Vec<PreparedSignal> {
    let seq = generate_sequence(&ToySequenceConfig::new(Transform::Warp).with_grid(GRID, GRID)).unwrap();
    let grid = seq.to_grid().unwrap();
    (0..2)
        .map(|t| PreparedSignal::new(&grid.select(0, t).unwrap(), arch).unwrap())
        .collect()
}

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step");
    group.sample_size(20);
    for arch in Arch::ALL {
        let sigs = signals(arch);
        let config = TrainConfig { batch: 4096, lr: 1e-4, ..TrainConfig::default() };
        let mut trainer = SharedTrainer::new(arch.default_config(), 2, 1, sigs.len(), None, config).unwrap();
        group.bench_function(BenchmarkId::from_parameter(arch.name()), |b| {
            b.iter(|| black_box(trainer.step(&sigs).unwrap()))
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    group.sample_size(20);
    for arch in Arch::ALL {
        let model = FieldModel::<f32>::init(arch.default_config(), 2, 1, 0).unwrap();
        let sig = &signals(arch)[0];
        group.bench_function(BenchmarkId::from_parameter(arch.name()), |b| {
            b.iter(|| black_box(model.forward(&sig.coords).unwrap()))
        });
    }
    group.finish();
}

fn ssim(c: &mut Criterion) {
    let n = 256;
    let truth: Vec<f64> = (0..n * n).map(|i| ((i % n) as f64 * 0.05).sin() * ((i / n) as f64 * 0.03).cos()).collect();
    let pred: Vec<f64> = truth.iter().enumerate().map(|(i, v)| v + 0.01 * ((i * 7919 % 101) as f64 / 101.0 - 0.5)).collect();
    c.bench_function("ssim_256x256", |b| b.iter(|| black_box(ssim_2d(&pred, &truth, n, n, 2.0).unwrap())));
}

criterion_group!(benches, train_step, forward, ssim);
criterion_main!(benches);
