use std::f64::consts::LN_2;

use proptest::prelude::*;
use udfe_core::models::Reduction;
use udfe_core::training::{discriminator_loss, generator_loss, GeneratorLossForm};
use udfe_nn::{Tape, Tensor, Var};

struct Logits {
    gr: Tensor<f64>,
    gf: Tensor<f64>,
    lr: Tensor<f64>,
    lf: Tensor<f64>,
}

fn filled(b: usize, s: usize, real: f64, fake: f64) -> Logits {
    Logits {
        gr: Tensor::full(vec![b], real),
        gf: Tensor::full(vec![b], fake),
        lr: Tensor::full(vec![b, 1, s, s], real),
        lf: Tensor::full(vec![b, 1, s, s], fake),
    }
}

fn d_loss(l: &Logits, reduction: Reduction) -> (f64, f64, f64) {
    let mut t = Tape::new();
    let v: Vec<Var> = [&l.gr, &l.gf, &l.lr, &l.lf].iter().map(|x| t.leaf((*x).clone(), true)).collect();
    let terms = discriminator_loss(&mut t, v[0], v[1], v[2], v[3], reduction).unwrap();
    let get = |x| t.value(x).item().unwrap();
    (get(terms.total), get(terms.global), get(terms.local))
}

fn g_loss(gf: &Tensor<f64>, lf: &Tensor<f64>, form: GeneratorLossForm, reduction: Reduction) -> (f64, f64, f64) {
    let mut t = Tape::new();
    let a = t.leaf(gf.clone(), true);
    let b = t.leaf(lf.clone(), true);
    let terms = generator_loss(&mut t, a, b, form, reduction).unwrap();
    let get = |x| t.value(x).item().unwrap();
    (get(terms.total), get(terms.global), get(terms.local))
}

#[test]
fn indifference_point_mean() {
    let (total, global, local) = d_loss(&filled(4, 8, 0.0, 0.0), Reduction::Mean);
    assert!((global - 2.0 * LN_2).abs() < 1e-6);
    assert!((local - 2.0 * LN_2).abs() < 1e-6);
    assert!((total - 2.7726).abs() < 1e-4);
}

#[test]
fn sum_reduction_two_by_two() {
    let (_, _, local) = d_loss(&filled(1, 2, 0.0, 0.0), Reduction::Sum);
    assert!((local - 8.0 * LN_2).abs() < 1e-9);
    assert!((local - 5.5452).abs() < 1e-4);
}

#[test]
fn sum_reduction_scales_with_pixels() {
    let (_, _, local) = d_loss(&filled(1, 32, 0.0, 0.0), Reduction::Sum);
    assert!((local - 2.0 * LN_2 * 1024.0).abs() < 1e-4);
}

#[test]
fn confident_discriminator_limit() {
    for reduction in [Reduction::Mean, Reduction::Sum] {
        let (total, _, _) = d_loss(&filled(3, 4, 20.0, -20.0), reduction);
        assert!(total < 1e-6 && total >= 0.0, "{total}");
    }
}

#[test]
fn global_gradients_opposite_at_indifference() {
    let b = 4;
    let l = filled(b, 4, 0.0, 0.0);
    let mut t = Tape::new();
    let v: Vec<Var> = [&l.gr, &l.gf, &l.lr, &l.lf].iter().map(|x| t.leaf((*x).clone(), true)).collect();
    let terms = discriminator_loss(&mut t, v[0], v[1], v[2], v[3], Reduction::Mean).unwrap();
    let g = t.backward(terms.global).unwrap();
    let (gr, gf) = (g.wrt(v[0]), g.wrt(v[1]));
    for (r, f) in gr.data().iter().zip(gf.data()) {
        assert!((r + f).abs() < 1e-15);
        assert!((r + 0.5 / b as f64).abs() < 1e-12);
    }
}

#[test]
fn stable_matches_naive() {
    let naive_softplus = |x: f64| -(1.0 / (1.0 + (-x).exp())).ln();
    let mut x = -10.0;
    while x <= 10.0 {
        let (_, global, _) = d_loss(&filled(1, 1, x, -x), Reduction::Mean);
        let naive = naive_softplus(x) + -(1.0 - 1.0 / (1.0 + (x).exp())).ln();
        assert!((global - naive).abs() < 1e-5, "x={x}: {global} vs {naive}");
        x += 0.25;
    }
}

#[test]
fn non_finite_logits_rejected() {
    let mut l = filled(2, 2, 0.0, 0.0);
    l.lf.data_mut()[3] = f64::NAN;
    let mut t = Tape::new();
    let v: Vec<Var> = [&l.gr, &l.gf, &l.lr, &l.lf].iter().map(|x| t.leaf((*x).clone(), true)).collect();
    assert!(discriminator_loss(&mut t, v[0], v[1], v[2], v[3], Reduction::Mean).is_err());
    let mut gf = Tensor::zeros(vec![2]);
    gf.data_mut()[0] = f64::INFINITY;
    let (a, b) = (t.leaf(gf, true), t.leaf(Tensor::zeros(vec![2, 1, 2, 2]), true));
    assert!(generator_loss(&mut t, a, b, GeneratorLossForm::NonSaturating, Reduction::Mean).is_err());
}

#[test]
fn non_saturating_at_zero() {
    let l = filled(2, 4, 0.0, 0.0);
    let (total, global, local) = g_loss(&l.gf, &l.lf, GeneratorLossForm::NonSaturating, Reduction::Mean);
    assert!((global - LN_2).abs() < 1e-12);
    assert!((local - LN_2).abs() < 1e-12);
    assert!((total - 2.0 * LN_2).abs() < 1e-12);
}

#[test]
fn fooled_discriminator_limit() {
    let l = filled(2, 4, 0.0, 20.0);
    let (total, _, _) = g_loss(&l.gf, &l.lf, GeneratorLossForm::NonSaturating, Reduction::Mean);
    assert!(total < 1e-6);
}

/// `E[log(1 - D)]` at `D = 1/2` is `-ln 2` per head: the same magnitude as
/// the non-saturating form, with the sign the formula gives.
#[test]
fn minimax_at_zero() {
    let l = filled(2, 4, 0.0, 0.0);
    let (_, ns_g, ns_l) = g_loss(&l.gf, &l.lf, GeneratorLossForm::NonSaturating, Reduction::Mean);
    let (total, mm_g, mm_l) = g_loss(&l.gf, &l.lf, GeneratorLossForm::Minimax, Reduction::Mean);
    assert!((mm_g + LN_2).abs() < 1e-12);
    assert!((mm_l + LN_2).abs() < 1e-12);
    assert!((mm_g.abs() - ns_g).abs() < 1e-12 && (mm_l.abs() - ns_l).abs() < 1e-12);
    assert!((total + 2.0 * LN_2).abs() < 1e-12);
}

fn logits(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-40.0f64..40.0, len)
}

proptest! {
    #[test]
    fn discriminator_loss_non_negative(gr in logits(2), gf in logits(2), lr in logits(8), lf in logits(8), sum in any::<bool>()) {
        let l = Logits {
            gr: Tensor::new(vec![2], gr).unwrap(),
            gf: Tensor::new(vec![2], gf).unwrap(),
            lr: Tensor::new(vec![2, 1, 2, 2], lr).unwrap(),
            lf: Tensor::new(vec![2, 1, 2, 2], lf).unwrap(),
        };
        let reduction = if sum { Reduction::Sum } else { Reduction::Mean };
        let (total, global, local) = d_loss(&l, reduction);
        prop_assert!(total >= 0.0 && global >= 0.0 && local >= 0.0);
        prop_assert!(total.is_finite());
    }

    #[test]
    fn generator_loss_signs(gf in logits(2), lf in logits(8)) {
        let gf = Tensor::new(vec![2], gf).unwrap();
        let lf = Tensor::new(vec![2, 1, 2, 2], lf).unwrap();
        let (ns, _, _) = g_loss(&gf, &lf, GeneratorLossForm::NonSaturating, Reduction::Mean);
        let (mm, _, _) = g_loss(&gf, &lf, GeneratorLossForm::Minimax, Reduction::Mean);
        prop_assert!(ns >= 0.0 && ns.is_finite());
        prop_assert!(mm <= 0.0 && mm.is_finite());
    }
}
