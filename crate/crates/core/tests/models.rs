mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use udfe_core::data::{synth_generate, SynthSpec};
use udfe_core::models::{build_models, count_parameters, GeneratorHooks, ModelConfig, Stem};
use udfe_core::training::{RunConfig, Trainer};
use udfe_core::{Discriminator, Generator};
use udfe_nn::{grad_check_params, GradCheckConfig, Mode, ParamKind, Tape, Tensor};

fn small(size: usize, levels: usize) -> ModelConfig {
    ModelConfig {
        image_size: size,
        levels,
        base_width: 4,
        noise_dim: 8,
        embedding_dim: 8,
        ..ModelConfig::default()
    }
}

fn noise(b: usize, d: usize, seed: u64) -> Tensor<f32> {
    Tensor::randn(vec![b, d], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn generate(g: &mut Generator, z: &Tensor<f32>, labels: &[usize], hooks: GeneratorHooks) -> Tensor<f32> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let y = g.forward_with(&mut tape, Mode::Eval, zv, labels, hooks).unwrap();
    tape.value(y).clone()
}

fn discriminate(d: &mut Discriminator, x: &Tensor<f32>, labels: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = d.forward(&mut tape, Mode::Eval, xv, labels).unwrap();
    (tape.value(out.global).clone(), tape.value(out.local).clone())
}

#[test]
fn same_seed_same_registries() {
    let c = small(32, 3);
    let (g1, d1) = build_models::<f32>(&c, 5).unwrap();
    let (g2, d2) = build_models::<f32>(&c, 5).unwrap();
    assert!(g1.params.bitwise_eq(&g2.params));
    assert!(d1.params.bitwise_eq(&d2.params));
    let (g3, _) = build_models::<f32>(&c, 6).unwrap();
    assert!(!g1.params.bitwise_eq(&g3.params));
}

#[test]
fn parameter_names_unique() {
    let (g, d) = build_models::<f32>(&ModelConfig::default(), 0).unwrap();
    for store in [&g.params, &d.params] {
        let mut names: Vec<_> = store.entries().iter().map(|e| e.name.clone()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }
}

#[test]
fn default_bottleneck_is_8x8() {
    let c = ModelConfig::default();
    assert_eq!((c.image_size, c.levels), (128, 4));
    assert_eq!(c.bottleneck_side(), 8);
}

#[test]
fn dfe_adds_parameters() {
    let on = small(32, 3);
    let off = ModelConfig { use_dfe: false, ..on.clone() };
    let (g_on, _) = build_models::<f32>(&on, 1).unwrap();
    let (g_off, _) = build_models::<f32>(&off, 1).unwrap();
    assert!(count_parameters(&g_off.params) < count_parameters(&g_on.params));
}

#[test]
fn invalid_config_names_field() {
    let c = ModelConfig { image_size: 16, levels: 3, ..ModelConfig::default() };
    let msg = build_models::<f32>(&c, 0).err().unwrap().to_string();
    assert!(msg.contains("levels"), "{msg}");
}

#[test]
fn full_size_shapes_and_range() {
    let c = ModelConfig::default();
    let (mut g, mut d) = build_models::<f32>(&c, 3).unwrap();
    let z = noise(2, c.noise_dim, 1);
    let img = generate(&mut g, &z, &[0, 1], GeneratorHooks::default());
    assert_eq!(img.shape(), &[2, 1, 128, 128]);
    assert!(img.data().iter().all(|&v| v > -1.0 && v < 1.0));

    let x = Tensor::randn(vec![3, 1, 128, 128], 0.5, &mut ChaCha8Rng::seed_from_u64(2));
    let (global, local) = discriminate(&mut d, &x, &[0, 1, 1]);
    assert_eq!(global.shape(), &[3]);
    assert_eq!(local.shape(), &[3, 1, 128, 128]);
}

#[test]
fn direct_stem_shapes() {
    let c = ModelConfig { stem: Stem::Direct, ..small(32, 3) };
    let (mut g, _) = build_models::<f32>(&c, 3).unwrap();
    let img = generate(&mut g, &noise(2, 8, 1), &[0, 1], GeneratorHooks::default());
    assert_eq!(img.shape(), &[2, 1, 32, 32]);
}

#[test]
fn eval_forward_deterministic() {
    let c = small(32, 3);
    let (mut g, _) = build_models::<f32>(&c, 3).unwrap();
    let z = noise(4, 8, 9);
    let a = generate(&mut g, &z, &[0, 1, 0, 1], GeneratorHooks::default());
    let b = generate(&mut g, &z, &[0, 1, 0, 1], GeneratorHooks::default());
    assert_eq!(a.data(), b.data());
}

#[test]
fn invalid_label_rejected() {
    let c = small(32, 3);
    let (mut g, mut d) = build_models::<f32>(&c, 3).unwrap();
    let mut tape = Tape::new();
    let zv = tape.constant(noise(1, 8, 1));
    assert!(g.forward(&mut tape, Mode::Eval, zv, &[2]).is_err());
    let xv = tape.constant(Tensor::zeros(vec![1, 1, 32, 32]));
    assert!(d.forward(&mut tape, Mode::Eval, xv, &[2]).is_err());
}

#[test]
fn wrong_image_shape_rejected() {
    let (_, mut d) = build_models::<f32>(&small(32, 3), 3).unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::zeros(vec![1, 1, 16, 16]));
    assert!(d.forward(&mut tape, Mode::Eval, xv, &[0]).is_err());
}

#[test]
fn non_finite_noise_rejected() {
    let (mut g, _) = build_models::<f32>(&small(32, 3), 3).unwrap();
    let mut z = noise(1, 8, 1);
    z.data_mut()[0] = f32::NAN;
    let mut tape = Tape::new();
    let zv = tape.constant(z);
    assert!(g.forward(&mut tape, Mode::Eval, zv, &[0]).is_err());
}

#[test]
fn every_skip_matters() {
    let c = small(32, 3);
    let (mut g, _) = build_models::<f32>(&c, 4).unwrap();
    let z = noise(2, 8, 3);
    let base = generate(&mut g, &z, &[0, 1], GeneratorHooks::default());
    for skip in 0..=c.levels {
        let hooks = GeneratorHooks { zero_skip: Some(skip), ..Default::default() };
        let out = generate(&mut g, &z, &[0, 1], hooks);
        assert_ne!(out.data(), base.data(), "skip {skip} had no effect");
    }
}

#[test]
fn no_dfe_equals_bypassed_dfe() {
    let on = small(32, 3);
    let off = ModelConfig { use_dfe: false, ..on.clone() };
    let (mut g_on, _) = build_models::<f32>(&on, 8).unwrap();
    let (mut g_off, _) = build_models::<f32>(&off, 8).unwrap();
    let z = noise(3, 8, 4);
    let a = generate(&mut g_off, &z, &[0, 1, 1], GeneratorHooks::default());
    let b = generate(&mut g_on, &z, &[0, 1, 1], GeneratorHooks { bypass_dfe: true, ..Default::default() });
    assert_eq!(a.data(), b.data());
    let c = generate(&mut g_on, &z, &[0, 1, 1], GeneratorHooks::default());
    assert_ne!(a.data(), c.data());
}

#[test]
fn cbatchnorm_label_changes_global_logit() {
    let (_, mut d) = build_models::<f32>(&small(32, 3), 2).unwrap();
    let x = Tensor::randn(vec![1, 1, 32, 32], 0.5, &mut ChaCha8Rng::seed_from_u64(5));
    let (g0, _) = discriminate(&mut d, &x, &[0]);
    let (g1, _) = discriminate(&mut d, &x, &[1]);
    assert_ne!(g0.data()[0], g1.data()[0]);
}

#[test]
fn without_cbatchnorm_label_is_ignored() {
    let c = ModelConfig { use_cbatchnorm: false, ..small(32, 3) };
    let (_, mut d) = build_models::<f32>(&c, 2).unwrap();
    let x = Tensor::randn(vec![1, 1, 32, 32], 0.5, &mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(discriminate(&mut d, &x, &[0]).0.data(), discriminate(&mut d, &x, &[1]).0.data());
}

#[test]
fn zero_parameters_give_finite_logits() {
    let c = small(32, 3);
    let (mut g, mut d) = build_models::<f32>(&c, 2).unwrap();
    for store in [&mut g.params, &mut d.params] {
        for id in store.ids().collect::<Vec<_>>() {
            if store.entry(id).kind == udfe_nn::ParamKind::Trainable {
                let t = store.get_mut(id);
                *t = t.map(|_| 0.0);
            }
        }
    }
    let img = generate(&mut g, &noise(2, 8, 1), &[0, 1], GeneratorHooks::default());
    assert!(img.all_finite());
    for mode in [Mode::Eval, Mode::Train] {
        let mut tape = Tape::new();
        let xv = tape.constant(img.clone());
        let out = d.forward(&mut tape, mode, xv, &[0, 1]).unwrap();
        assert!(tape.value(out.global).all_finite());
        assert!(tape.value(out.local).all_finite());
    }
}

#[test]
fn label_changes_output_after_training_step() {
    let c = ModelConfig { noise_dim: 16, base_width: 4, ..small(32, 3) };
    let run = RunConfig { steps: 1, batch_size: 4, seed: 1, ..RunConfig::default() };
    let data = synth_generate(&SynthSpec::new(4, 32, 1)).unwrap();
    let mut t = Trainer::new(c.clone(), run).unwrap();
    t.train(&data).unwrap();
    let z = noise(1, 16, 2);
    let a = generate(&mut t.generator, &z, &[0], GeneratorHooks::default());
    let b = generate(&mut t.generator, &z, &[1], GeneratorHooks::default());
    let mad: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64;
    assert!(mad > 0.0);
}

#[test]
fn end_to_end_gradient() {
    let rep = common::end_to_end_report(3e-3);
    assert!(rep.pass, "max rel {:.3e} at {:?}", rep.max_rel_error, rep.worst);
}

/// At a generic point (seeded init, unit-gain weights, eval mode) a small
/// step sees no kink crossings, so inactive hinges are covered as well.
#[test]
fn end_to_end_gradient_generic_point_small_step() {
    let c = small(32, 3);
    let (g, d) = build_models::<f32>(&c, 22).unwrap();
    let mut g = g.cast::<f64>();
    let mut d = d.cast::<f64>();
    for store in [&mut g.params, &mut d.params] {
        for id in store.ids().collect::<Vec<_>>() {
            let e = store.entry(id);
            if e.kind != ParamKind::Trainable {
                continue;
            }
            let s = e.tensor.shape().to_vec();
            let is_up = e.name.contains(".up");
            let t = store.get_mut(id);
            if s.len() < 2 {
                let jitter: Tensor<f64> = Tensor::randn(s, 0.1, &mut ChaCha8Rng::seed_from_u64(id.0 as u64));
                t.add_assign(&jitter).unwrap();
            } else {
                let fan_in: usize = if s.len() == 4 && is_up { s[0] * 4 } else { s[1..].iter().product() };
                let f = 1.0 / (0.02 * (fan_in.max(1) as f64).sqrt());
                *t = t.map(|v| v * f);
            }
        }
    }
    let z: Tensor<f64> = Tensor::randn(vec![2, 8], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let r: Tensor<f64> = Tensor::randn(vec![2, 1, 32, 32], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let labels = [0, 1];
    let cfg = GradCheckConfig { step: 1e-5, max_coords_per_tensor: Some(8), ..GradCheckConfig::default() };
    let (gnet, dnet) = (g.net.clone(), d.net.clone());
    let mut stores = [std::mem::take(&mut g.params), std::mem::take(&mut d.params)];
    let rep = grad_check_params(
        &cfg,
        |t, s| {
            let (gs, ds) = s.split_at_mut(1);
            let zv = t.constant(z.clone());
            let img = gnet.forward(&mut udfe_nn::Ctx::new(t, &mut gs[0], Mode::Eval), zv, &labels)?;
            let out = dnet.forward(&mut udfe_nn::Ctx::new(t, &mut ds[0], Mode::Eval), img, &labels)?;
            let rv = t.constant(r.clone());
            let p = t.mul(out.local, rv)?;
            let local = t.sum(p);
            let global = t.sum(out.global);
            t.add(local, global)
        },
        &mut stores,
        1e-3,
    )
    .unwrap();
    assert!(rep.pass, "max rel {:.3e} at {:?}", rep.max_rel_error, rep.worst);
}
