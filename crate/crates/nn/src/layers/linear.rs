use crate::error::Result;
use crate::init::{Init, INIT_STD};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

use super::Ctx;

/// Affine map `x W^T + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &Init,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Result<Self> {
        let wname = format!("{name}.weight");
        let weight = store.register(
            &wname,
            init.normal(&wname, vec![out_features, in_features], INIT_STD),
            ParamKind::Trainable,
        )?;
        let bias = store.register(
            format!("{name}.bias"),
            Tensor::zeros(vec![out_features]),
            ParamKind::Trainable,
        )?;
        Ok(Self {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = cx.param(self.weight);
        let b = cx.param(self.bias);
        cx.tape.linear(x, w, Some(b))
    }
}

/// Two affine layers with a ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &Init,
        name: &str,
        in_features: usize,
        hidden: usize,
        out_features: usize,
    ) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(store, init, &format!("{name}.hidden"), in_features, hidden)?,
            output: Linear::new(store, init, &format!("{name}.out"), hidden, out_features)?,
        })
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.hidden.forward(cx, x)?;
        let h = cx.tape.relu(h);
        self.output.forward(cx, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use crate::Tape;

    #[test]
    fn identity_weight_zero_bias_passes_input() {
        let mut store = ParamStore::<f32>::new();
        let lin = Linear::new(&mut store, &Init::new(0), "l", 3, 3).unwrap();
        let eye: Vec<f32> = (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        *store.get_mut(lin.weight) = Tensor::new(vec![3, 3], eye).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.25, -4.0]).unwrap());
        let mut cx = Ctx::new(&mut tape, &mut store, Mode::Eval);
        let y = lin.forward(&mut cx, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn zero_weight_emits_bias_rows() {
        let mut store = ParamStore::<f32>::new();
        let lin = Linear::new(&mut store, &Init::new(0), "l", 3, 2).unwrap();
        *store.get_mut(lin.weight) = Tensor::zeros(vec![2, 3]);
        *store.get_mut(lin.bias) = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(vec![4, 3]));
        let mut cx = Ctx::new(&mut tape, &mut store, Mode::Eval);
        let y = lin.forward(&mut cx, x).unwrap();
        for row in tape.value(y).data().chunks(2) {
            assert_eq!(row, &[0.5, -1.5]);
        }
    }
}
