//! Generator and dual-head discriminator.
//!
//! Generator: `z ⊕ e_c` → linear projection → upsampling stem → U-Net with
//! strided 3×3 encoder convolutions and 4×4 transposed-convolution decoder,
//! batch norm and ReLU throughout, one DFE block after every encoder and
//! decoder level, and a 3×3 output convolution into `tanh`.
//!
//! Discriminator: U-Net encoder with LeakyReLU(0.2), normalized by
//! class-conditional batch norm when `use_cbatchnorm` is set (standard batch
//! norm otherwise). A two-layer MLP on the pooled bottleneck gives one
//! global logit per image; the decoder with skips gives one logit per pixel.
//! Conditional normalization is used in the discriminator only.

mod config;
mod discriminator;
mod generator;

pub use config::{ModelConfig, Reduction, Stem, DIRECT_STEM_MAX_SIZE};
pub use discriminator::{Discriminator, DiscriminatorNet, DiscriminatorOutput, LEAKY_SLOPE};
pub use generator::{Generator, GeneratorHooks, GeneratorNet};

use udfe_nn::{Init, Scalar};

use crate::error::Result;

/// Build both networks with parameters drawn from `seed`.
///
/// Each parameter's initial value depends only on `(seed, name)`, so
/// configurations that differ by ablation flags share every common tensor.
pub fn build_models<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<(Generator<T>, Discriminator<T>)> {
    config.validate()?;
    let init = Init::new(seed);
    Ok((Generator::new(config, &init)?, Discriminator::new(config, &init)?))
}

/// Total number of scalar trainable parameters in a store.
pub fn count_parameters<T: Scalar>(store: &udfe_nn::ParamStore<T>) -> usize {
    store
        .entries()
        .iter()
        .filter(|e| e.kind == udfe_nn::ParamKind::Trainable)
        .map(|e| e.tensor.len())
        .sum()
}
