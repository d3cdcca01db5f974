use crate::error::Result;
use crate::init::{Init, INIT_STD};
use crate::ops::ConvGeometry;
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

use super::Ctx;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geometry: ConvGeometry,
}

impl Conv2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &Init,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        geometry: ConvGeometry,
    ) -> Result<Self> {
        let k = geometry.kernel;
        let wname = format!("{name}.weight");
        let weight = store.register(
            &wname,
            init.normal(&wname, vec![out_ch, in_ch, k, k], INIT_STD),
            ParamKind::Trainable,
        )?;
        let bias = store.register(
            format!("{name}.bias"),
            Tensor::zeros(vec![out_ch]),
            ParamKind::Trainable,
        )?;
        Ok(Self {
            weight,
            bias,
            geometry,
        })
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = cx.param(self.weight);
        let b = cx.param(self.bias);
        cx.tape.conv2d(x, w, Some(b), self.geometry)
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geometry: ConvGeometry,
}

impl ConvTranspose2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &Init,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        geometry: ConvGeometry,
    ) -> Result<Self> {
        let k = geometry.kernel;
        let wname = format!("{name}.weight");
        let weight = store.register(
            &wname,
            init.normal(&wname, vec![in_ch, out_ch, k, k], INIT_STD),
            ParamKind::Trainable,
        )?;
        let bias = store.register(
            format!("{name}.bias"),
            Tensor::zeros(vec![out_ch]),
            ParamKind::Trainable,
        )?;
        Ok(Self {
            weight,
            bias,
            geometry,
        })
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = cx.param(self.weight);
        let b = cx.param(self.bias);
        cx.tape.conv_transpose2d(x, w, Some(b), self.geometry)
    }
}
