//! Shared construction for the end-to-end generator → discriminator gradient check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use udfe_core::models::{build_models, ModelConfig};
use udfe_nn::{grad_check_params, GradCheckConfig, GradCheckReport, Mode, ParamKind, ParamStore, Tensor};

/// 32×32, three levels, base width 4.
pub fn e2e_config() -> ModelConfig {
    ModelConfig {
        image_size: 32,
        levels: 3,
        base_width: 4,
        noise_dim: 8,
        embedding_dim: 8,
        ..ModelConfig::default()
    }
}

/// Move the seeded models to a point inside one linear region of every
/// hinge, so a 1e-3 central difference measures the derivative rather than
/// a kink crossing.
///
/// * weights rescaled to gain `1/sqrt(fan_in)` (smaller where the input is large);
/// * every normalization offset and every bias feeding a ReLU-type hinge
///   shifted by +5, i.e. about five standard deviations from the kink;
/// * generator levels that feed a DFE block get per-channel offsets
///   `5 + c` with gain 0.1, so the channel maximum never changes hands;
/// * remaining biases get small seeded noise so no pre-activation is
///   exactly zero.
pub fn linear_region_point(store: &mut ParamStore<f64>) {
    let gain = |n: &str| {
        if n.contains("dfe.squeeze") {
            0.01
        } else if n.contains("global.hidden") {
            0.1
        } else if n.contains("dfe.spatial") || n == "gen.out.weight" {
            0.05
        } else if n.contains("_mlp.out") {
            0.02
        } else {
            1.0
        }
    };
    for id in store.ids().collect::<Vec<_>>() {
        let e = store.entry(id);
        if e.kind != ParamKind::Trainable {
            continue;
        }
        let n = e.name.clone();
        let s = e.tensor.shape().to_vec();
        if s.len() < 2 {
            let hinge = n.ends_with("bn.beta")
                || n.ends_with("beta_mlp.out.bias")
                || n.ends_with("mlp.hidden.bias")
                || n.ends_with("dfe.squeeze.bias")
                || n.ends_with("global.hidden.bias")
                || n == "disc.in.bias";
            let feeds_dfe = n.starts_with("gen.enc") || n.starts_with("gen.dec");
            let jitter: Tensor<f64> = Tensor::randn(s, 0.1, &mut ChaCha8Rng::seed_from_u64(id.0 as u64));
            let t = store.get_mut(id);
            t.add_assign(&jitter).unwrap();
            if hinge {
                *t = t.map(|v| v + 5.0);
            }
            if feeds_dfe && n.ends_with("bn.beta") {
                t.data_mut().iter_mut().enumerate().for_each(|(c, v)| *v += c as f64);
            }
            if feeds_dfe && n.ends_with("bn.gamma") {
                *t = t.map(|v| v * 0.1);
            }
            continue;
        }
        let fan_in = if n.ends_with("embed.table") {
            1
        } else if n.contains(".up") {
            s[0] * s[2] * s[3] / 4
        } else {
            s[1..].iter().product()
        };
        let f = gain(&n) / (0.02 * (fan_in as f64).sqrt());
        let t = store.get_mut(id);
        *t = t.map(|v| v * f);
    }
}

/// G → D composition in `f64`, train-mode batch norm, gradients into both
/// parameter sets. The scalar is `sum(local ⊙ r) + sum(global)`.
pub fn end_to_end_report(tol: f64) -> GradCheckReport {
    let (g, d) = build_models::<f32>(&e2e_config(), 21).unwrap();
    let mut g = g.cast::<f64>();
    let mut d = d.cast::<f64>();
    linear_region_point(&mut g.params);
    linear_region_point(&mut d.params);
    let z: Tensor<f64> = Tensor::randn(vec![2, 8], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let r: Tensor<f64> = Tensor::randn(vec![2, 1, 32, 32], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let labels = [0, 1];
    let cfg = GradCheckConfig { max_coords_per_tensor: Some(16), ..GradCheckConfig::default() };
    let (gnet, dnet) = (g.net.clone(), d.net.clone());
    let mut stores = [std::mem::take(&mut g.params), std::mem::take(&mut d.params)];
    grad_check_params(
        &cfg,
        |t, s| {
            let (gs, ds) = s.split_at_mut(1);
            let zv = t.constant(z.clone());
            let img = {
                let mut cx = udfe_nn::Ctx::new(t, &mut gs[0], Mode::Train);
                gnet.forward(&mut cx, zv, &labels)?
            };
            let out = {
                let mut cx = udfe_nn::Ctx::new(t, &mut ds[0], Mode::Train);
                dnet.forward(&mut cx, img, &labels)?
            };
            let rv = t.constant(r.clone());
            let p = t.mul(out.local, rv)?;
            let local = t.sum(p);
            let global = t.sum(out.global);
            t.add(local, global)
        },
        &mut stores,
        tol,
    )
    .unwrap()
}
