//! Parameterized layers. Each layer owns [`ParamId`](crate::ParamId)s into a
//! [`ParamStore`] and evaluates on a [`Tape`] through a [`Ctx`].

mod batchnorm;
mod conv;
mod embedding;
mod linear;

pub use batchnorm::{batchnorm2d_forward, BatchNorm2d, BatchNormState, ConditionalBatchNorm2d};
pub use conv::{Conv2d, ConvTranspose2d};
pub use embedding::Embedding;
pub use linear::{Linear, Mlp};

use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::Tape;

/// Train mode uses batch statistics and updates running buffers; eval mode
/// is a pure function of input and stored state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything a layer needs to evaluate.
pub struct Ctx<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a mut ParamStore<T>,
    pub mode: Mode,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, params: &'a mut ParamStore<T>, mode: Mode) -> Self {
        Self { tape, params, mode }
    }

    pub fn param(&mut self, id: crate::ParamId) -> crate::Var {
        self.tape.param(self.params, id)
    }
}
