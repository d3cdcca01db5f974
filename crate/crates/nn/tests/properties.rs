use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udfe_nn::layers::{
    batchnorm2d_forward, BatchNorm2d, BatchNormState, ConditionalBatchNorm2d, Embedding,
};
use udfe_nn::ops::{self, Activation, ConvGeometry};
use udfe_nn::{Ctx, Init, Mode, ParamStore, Tape, Tensor};

#[test]
fn conv_transpose_is_adjoint_of_conv_over_100_geometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let k = [1usize, 3, 4][trial % 3];
        let stride = 1 + (trial / 3) % 2;
        let padding = rng.random_range(0..k.div_ceil(2).max(1));
        let g = ConvGeometry::new(k, stride, padding);
        // Choose the transposed-conv input size first so the geometry is exact.
        let h_small = rng.random_range(1..6usize);
        let w_small = rng.random_range(1..6usize);
        let (Some(h), Some(w)) = (g.transpose_out(h_small), g.transpose_out(w_small)) else {
            continue;
        };
        let (b, cin, cout) = (
            rng.random_range(1..3usize),
            rng.random_range(1..4usize),
            rng.random_range(1..4usize),
        );
        let x = Tensor::<f64>::randn(vec![b, cin, h, w], 1.0, &mut rng);
        let wt = Tensor::<f64>::randn(vec![cout, cin, k, k], 1.0, &mut rng);
        let y = Tensor::<f64>::randn(vec![b, cout, h_small, w_small], 1.0, &mut rng);
        let cx = ops::conv2d(&x, &wt, None, g).unwrap();
        assert_eq!(cx.shape(), y.shape(), "geometry {g:?} h={h} w={w}");
        // conv_transpose weight layout is [Cin_t, Cout_t] = [cout, cin].
        let ty = ops::conv_transpose2d(&y, &wt, None, g).unwrap();
        let lhs = cx.dot(&y).unwrap();
        let rhs = x.dot(&ty).unwrap();
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-5, "worst relative adjointness error {worst:e}");
}

#[test]
fn train_mode_batchnorm_standardizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for shape in [[4, 3, 4, 4], [64, 2, 1, 1], [2, 5, 8, 4]] {
        let x = Tensor::<f64>::randn(shape.to_vec(), 3.0, &mut rng).map(|v| v + 2.0);
        let c = shape[1];
        let mut st = BatchNormState::new(c);
        let y = batchnorm2d_forward(&x, &Tensor::ones(vec![c]), &Tensor::zeros(vec![c]), &mut st)
            .unwrap();
        let stats = ops::channel_stats(&y).unwrap();
        for ch in 0..c {
            assert!(stats.mean[ch].abs() < 1e-4);
            assert!((stats.var[ch] - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn conditional_with_identity_mlps_equals_plain_batchnorm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let init = Init::new(4);
    let mut store = ParamStore::<f32>::new();
    let emb = Embedding::new(&mut store, &init, "emb", 2, 8).unwrap();
    let cbn = ConditionalBatchNorm2d::new(&mut store, &init, "cbn", 3, 8).unwrap();
    let bn = BatchNorm2d::new(&mut store, "bn", 3).unwrap();
    for mlp in [&cbn.gamma_mlp, &cbn.beta_mlp] {
        *store.get_mut(mlp.output.weight) = Tensor::zeros(vec![3, 8]);
        *store.get_mut(mlp.output.bias) = Tensor::zeros(vec![3]);
    }
    let x = Tensor::<f32>::randn(vec![4, 3, 5, 5], 1.5, &mut rng);
    for mode in [Mode::Train, Mode::Eval] {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut cx = Ctx::new(&mut tape, &mut store, mode);
        let e = emb.lookup(&mut cx, &[0, 1, 1, 0]).unwrap();
        let a = cbn.forward(&mut cx, xv, e).unwrap();
        let b = bn.forward(&mut cx, xv).unwrap();
        for (p, q) in tape.value(a).data().iter().zip(tape.value(b).data()) {
            assert!((p - q).abs() < 1e-6);
        }
    }
}

#[test]
fn conditional_outputs_differ_across_classes() {
    let init = Init::new(5);
    let mut store = ParamStore::<f32>::new();
    let emb = Embedding::new(&mut store, &init, "emb", 2, 8).unwrap();
    let cbn = ConditionalBatchNorm2d::new(&mut store, &init, "cbn", 2, 8).unwrap();
    let x = Tensor::<f32>::randn(vec![2, 2, 3, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let run = |store: &mut ParamStore<f32>, label: usize| {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut cx = Ctx::new(&mut tape, store, Mode::Eval);
        let e = emb.lookup(&mut cx, &[label, label]).unwrap();
        let y = cbn.forward(&mut cx, xv, e).unwrap();
        tape.value(y).clone()
    };
    let a = run(&mut store, 0);
    let b = run(&mut store, 1);
    assert_ne!(a, b);
}

#[test]
fn conditional_rejects_out_of_range_label() {
    let init = Init::new(5);
    let mut store = ParamStore::<f32>::new();
    let emb = Embedding::new(&mut store, &init, "emb", 2, 4).unwrap();
    let mut tape = Tape::new();
    let mut cx = Ctx::new(&mut tape, &mut store, Mode::Eval);
    assert!(emb.lookup(&mut cx, &[0, 2]).is_err());
}

#[test]
fn eval_mode_layer_does_not_touch_buffers() {
    let mut store = ParamStore::<f32>::new();
    let bn = BatchNorm2d::new(&mut store, "bn", 2).unwrap();
    let x = Tensor::<f32>::randn(vec![3, 2, 2, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut cx = Ctx::new(&mut tape, &mut store, Mode::Train);
        bn.forward(&mut cx, xv).unwrap();
    }
    let snapshot = store.clone();
    for _ in 0..3 {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut cx = Ctx::new(&mut tape, &mut store, Mode::Eval);
        bn.forward(&mut cx, xv).unwrap();
    }
    assert!(store.bitwise_eq(&snapshot));
}

proptest! {
    #[test]
    // Strict bounds hold until f64 rounding saturates (|x| ~ 19 for tanh).
    fn sigmoid_and_tanh_stay_in_open_interval(x in -15.0f64..15.0) {
        let s = Activation::Sigmoid.apply(x);
        let t = Activation::Tanh.apply(x);
        prop_assert!(s > 0.0 && s < 1.0);
        prop_assert!(t > -1.0 && t < 1.0);
    }

    #[test]
    fn saturated_activations_stay_in_closed_interval(x in -1e4f64..1e4) {
        let s = Activation::Sigmoid.apply(x as f32);
        let t = Activation::Tanh.apply(x as f32);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((-1.0..=1.0).contains(&t));
    }

    #[test]
    fn reshape_preserves_element_count(a in 1usize..6, b in 1usize..6, c in 1usize..6) {
        let t = Tensor::<f32>::zeros(vec![a, b, c]);
        prop_assert!(t.reshape(vec![a * b, c]).is_ok());
        prop_assert!(t.reshape(vec![a * b * c + 1]).is_err());
    }
}
