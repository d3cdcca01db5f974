use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use udfe_core::data::{synth_generate, SynthSpec};
use udfe_core::downstream::{rf_fit, LabeledSet, RfParams};
use udfe_core::experiment::{BenchmarkSpec, Variant};
use udfe_core::metrics::{fid, paired_mean, ssim, Pool16};
use udfe_core::training::Trainer;
use udfe_nn::parallel;

const MODES: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn train_step(c: &mut Criterion) {
    let spec = BenchmarkSpec::default();
    let (train, _) = spec.data().unwrap();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    for (name, on) in MODES {
        parallel::set_enabled(on);
        let mut trainer = Trainer::new(spec.model_config(Variant::Proposed), spec.run_config()).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| trainer.train_step(&train).unwrap()));
    }
    group.finish();
    parallel::set_enabled(true);
}

fn metrics(c: &mut Criterion) {
    let frames = synth_generate(&SynthSpec::new(32, 64, 1)).unwrap();
    let (a, b): (Vec<_>, Vec<_>) = frames.into_iter().map(|s| s.image).enumerate().partition(|(i, _)| i % 2 == 0);
    let a: Vec<_> = a.into_iter().map(|x| x.1).collect();
    let b: Vec<_> = b.into_iter().map(|x| x.1).collect();
    let mut group = c.benchmark_group("metrics");
    for (name, on) in MODES {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::new("ssim_mean", name), |bch| {
            bch.iter(|| paired_mean(&a, &b, |x, y| ssim(x, y, 2.0)).unwrap())
        });
        group.bench_function(BenchmarkId::new("fid_pool16", name), |bch| bch.iter(|| fid(&a, &b, &Pool16).unwrap()));
    }
    group.finish();
    parallel::set_enabled(true);
}

fn forest(c: &mut Criterion) {
    let set = LabeledSet::from_samples(&synth_generate(&SynthSpec::new(60, 32, 2)).unwrap()).unwrap();
    let params = RfParams { n_trees: 50, ..RfParams::default() };
    let mut group = c.benchmark_group("rf_fit");
    group.sample_size(10);
    for (name, on) in MODES {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| rf_fit(&set.x, &set.y, &params).unwrap()));
    }
    group.finish();
    parallel::set_enabled(true);
}

criterion_group!(benches, train_step, metrics, forest);
criterion_main!(benches);
