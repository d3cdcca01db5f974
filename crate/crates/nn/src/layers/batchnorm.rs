use crate::error::{arg_err, shape_err, Result};
use crate::init::Init;
use crate::ops::{channel_stats, normalize};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::{lit, Scalar};
use crate::tape::Var;
use crate::tensor::Tensor;

use super::{Ctx, Mlp, Mode};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics and hyperparameters of one normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T: Scalar = f32> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
    pub mode: Mode,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::ones(vec![channels]),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPS,
            mode: Mode::Train,
        }
    }
}

/// Blend batch statistics into running buffers (variance stored unbiased).
fn update_running<T: Scalar>(
    mean: &mut [T],
    var: &mut [T],
    batch_mean: &[T],
    batch_var: &[T],
    count: usize,
    momentum: f64,
) {
    let m = lit::<T>(momentum);
    let keep = T::one() - m;
    let unbias = lit::<T>(count as f64 / (count - 1) as f64);
    for c in 0..mean.len() {
        mean[c] = keep * mean[c] + m * batch_mean[c];
        var[c] = keep * var[c] + m * batch_var[c] * unbias;
    }
}

fn check_train_count(count: usize) -> Result<()> {
    if count < 2 {
        return Err(arg_err(
            "batchnorm",
            format!("train mode needs at least 2 values per channel, got {count}"),
        ));
    }
    Ok(())
}

/// Stand-alone batch normalization of a `[B,C,H,W]` tensor.
pub fn batchnorm2d_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &mut BatchNormState<T>,
) -> Result<Tensor<T>> {
    let [_, c, _, _] = input.dims4("batchnorm")?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err("batchnorm", "gamma/beta must have one entry per channel"));
    }
    let xhat = match state.mode {
        Mode::Train => {
            let stats = channel_stats(input)?;
            check_train_count(stats.count)?;
            let (xhat, _) = normalize(input, &stats.mean, &stats.var, state.epsilon)?;
            update_running(
                state.running_mean.data_mut(),
                state.running_var.data_mut(),
                &stats.mean,
                &stats.var,
                stats.count,
                state.momentum,
            );
            xhat
        }
        Mode::Eval => {
            normalize(
                input,
                state.running_mean.data(),
                state.running_var.data(),
                state.epsilon,
            )?
            .0
        }
    };
    let plane: usize = input.shape()[2] * input.shape()[3];
    let mut out = xhat.into_data();
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let ch = i % c;
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        chunk.iter_mut().for_each(|v| *v = g * *v + b);
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Normalization core shared by the plain and class-conditional layers.
#[derive(Debug, Clone)]
struct NormCore {
    running_mean: ParamId,
    running_var: ParamId,
    channels: usize,
    eps: f64,
    momentum: f64,
}

impl NormCore {
    fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            running_mean: store.register(
                format!("{name}.running_mean"),
                Tensor::zeros(vec![channels]),
                ParamKind::Buffer,
            )?,
            running_var: store.register(
                format!("{name}.running_var"),
                Tensor::ones(vec![channels]),
                ParamKind::Buffer,
            )?,
            channels,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        })
    }

    fn normalize<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let [_, c, _, _] = cx.tape.value(x).dims4("batchnorm")?;
        if c != self.channels {
            return Err(shape_err(
                "batchnorm",
                format!("layer has {} channels, input has {c}", self.channels),
            ));
        }
        match cx.mode {
            Mode::Train => {
                let stats = channel_stats(cx.tape.value(x))?;
                check_train_count(stats.count)?;
                let out = cx.tape.normalize(x, &stats.mean, &stats.var, self.eps, true)?;
                let mut mean = cx.params.get(self.running_mean).clone();
                let mut var = cx.params.get(self.running_var).clone();
                update_running(
                    mean.data_mut(),
                    var.data_mut(),
                    &stats.mean,
                    &stats.var,
                    stats.count,
                    self.momentum,
                );
                *cx.params.get_mut(self.running_mean) = mean;
                *cx.params.get_mut(self.running_var) = var;
                Ok(out)
            }
            Mode::Eval => {
                let mean = cx.params.get(self.running_mean).data().to_vec();
                let var = cx.params.get(self.running_var).data().to_vec();
                cx.tape.normalize(x, &mean, &var, self.eps, false)
            }
        }
    }
}

/// Batch normalization with a learned per-channel affine transform.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    core: NormCore,
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        let gamma = store.register(
            format!("{name}.gamma"),
            Tensor::ones(vec![channels]),
            ParamKind::Trainable,
        )?;
        let beta = store.register(
            format!("{name}.beta"),
            Tensor::zeros(vec![channels]),
            ParamKind::Trainable,
        )?;
        Ok(Self {
            core: NormCore::new(store, name, channels)?,
            gamma,
            beta,
        })
    }

    pub fn channels(&self) -> usize {
        self.core.channels
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let xhat = self.core.normalize(cx, x)?;
        let c = self.core.channels;
        let g = cx.param(self.gamma);
        let g = cx.tape.reshape(g, &[1, c, 1, 1])?;
        let b = cx.param(self.beta);
        let b = cx.tape.reshape(b, &[1, c, 1, 1])?;
        let y = cx.tape.mul(xhat, g)?;
        cx.tape.add(y, b)
    }
}

/// Batch normalization whose scale and shift are produced per sample from a
/// class embedding: `gamma(c) * x_hat + beta(c)`.
///
/// `gamma(c) = 1 + mlp_gamma(e_c)` so a zero MLP output means unit scale.
#[derive(Debug, Clone)]
pub struct ConditionalBatchNorm2d {
    core: NormCore,
    pub gamma_mlp: Mlp,
    pub beta_mlp: Mlp,
}

impl ConditionalBatchNorm2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &Init,
        name: &str,
        channels: usize,
        embedding_dim: usize,
    ) -> Result<Self> {
        Ok(Self {
            gamma_mlp: Mlp::new(
                store,
                init,
                &format!("{name}.gamma_mlp"),
                embedding_dim,
                embedding_dim,
                channels,
            )?,
            beta_mlp: Mlp::new(
                store,
                init,
                &format!("{name}.beta_mlp"),
                embedding_dim,
                embedding_dim,
                channels,
            )?,
            core: NormCore::new(store, name, channels)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.core.channels
    }

    /// `embedding` is `[B, embedding_dim]`, one row per sample.
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var, embedding: Var) -> Result<Var> {
        let b = cx.tape.value(x).shape()[0];
        if cx.tape.value(embedding).shape().first() != Some(&b) {
            return Err(shape_err(
                "cbatchnorm",
                "embedding rows must match the batch size",
            ));
        }
        let xhat = self.core.normalize(cx, x)?;
        let c = self.core.channels;
        let g = self.gamma_mlp.forward(cx, embedding)?;
        let g = cx.tape.add_scalar(g, 1.0);
        let g = cx.tape.reshape(g, &[b, c, 1, 1])?;
        let s = self.beta_mlp.forward(cx, embedding)?;
        let s = cx.tape.reshape(s, &[b, c, 1, 1])?;
        let y = cx.tape.mul(xhat, g)?;
        cx.tape.add(y, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Embedding;
    use crate::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_batch_normalizes_to_zero() {
        let x = Tensor::<f32>::full(vec![4, 2, 3, 3], 1.7);
        let mut st = BatchNormState::new(2);
        let y = batchnorm2d_forward(&x, &Tensor::ones(vec![2]), &Tensor::zeros(vec![2]), &mut st)
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn plus_minus_one_closed_form() {
        let x = Tensor::<f64>::new(vec![2, 1, 1, 1], vec![-1.0, 1.0]).unwrap();
        let mut st = BatchNormState::new(1);
        let y = batchnorm2d_forward(&x, &Tensor::ones(vec![1]), &Tensor::zeros(vec![1]), &mut st)
            .unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] + expect).abs() < 1e-12);
        assert!((y.data()[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn affine_applied_after_normalization() {
        // Eval mode with zero mean / unit variance (minus eps) leaves x_hat ~= x.
        let x = Tensor::<f64>::new(vec![1, 1, 1, 2], vec![0.5, -0.25]).unwrap();
        let mut st = BatchNormState::new(1);
        st.mode = Mode::Eval;
        st.running_var = Tensor::full(vec![1], 1.0 - 1e-5);
        let y = batchnorm2d_forward(
            &x,
            &Tensor::full(vec![1], 2.0),
            &Tensor::full(vec![1], 1.0),
            &mut st,
        )
        .unwrap();
        assert!((y.data()[0] - 2.0).abs() < 1e-12);
        assert!((y.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn train_mode_rejects_single_value() {
        let x = Tensor::<f32>::zeros(vec![1, 3, 1, 1]);
        let mut st = BatchNormState::new(3);
        assert!(batchnorm2d_forward(&x, &Tensor::ones(vec![3]), &Tensor::zeros(vec![3]), &mut st)
            .is_err());
    }

    #[test]
    fn eval_mode_leaves_state_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f32>::randn(vec![4, 3, 4, 4], 1.0, &mut rng);
        let mut st = BatchNormState::new(3);
        batchnorm2d_forward(&x, &Tensor::ones(vec![3]), &Tensor::zeros(vec![3]), &mut st).unwrap();
        st.mode = Mode::Eval;
        let snapshot = st.clone();
        for _ in 0..5 {
            batchnorm2d_forward(&x, &Tensor::ones(vec![3]), &Tensor::zeros(vec![3]), &mut st)
                .unwrap();
        }
        assert_eq!(st, snapshot);
    }

    #[test]
    fn conditional_with_hand_set_affine() {
        // gamma(c) = 2, beta(c) = -1 applied to x_hat = 0.5 gives 0.
        let mut store = ParamStore::<f64>::new();
        let init = Init::new(0);
        let emb = Embedding::new(&mut store, &init, "emb", 2, 4).unwrap();
        let cbn = ConditionalBatchNorm2d::new(&mut store, &init, "cbn", 1, 4).unwrap();
        for mlp in [&cbn.gamma_mlp, &cbn.beta_mlp] {
            *store.get_mut(mlp.output.weight) = Tensor::zeros(vec![1, 4]);
        }
        *store.get_mut(cbn.gamma_mlp.output.bias) = Tensor::full(vec![1], 1.0);
        *store.get_mut(cbn.beta_mlp.output.bias) = Tensor::full(vec![1], -1.0);
        // Eval mode, running mean 0 and var 1 - eps: x_hat == x.
        let rv = store.id("cbn.running_var").unwrap();
        *store.get_mut(rv) = Tensor::full(vec![1], 1.0 - 1e-5);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(vec![1, 1, 1, 1], 0.5));
        let mut cx = Ctx::new(&mut tape, &mut store, Mode::Eval);
        let e = emb.lookup(&mut cx, &[1]).unwrap();
        let y = cbn.forward(&mut cx, x, e).unwrap();
        assert!(tape.value(y).data()[0].abs() < 1e-12);
    }
}
