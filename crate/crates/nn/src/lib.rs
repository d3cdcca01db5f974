//! Tensor, reverse-mode tape and neural layers for the adversarial
//! ultrasound synthesis toolkit.
//!
//! The backend is deliberately small: dense row-major tensors, a tape of
//! eagerly evaluated ops, and finite-difference checking in `f64`. Layers
//! keep their weights in a named [`ParamStore`] so checkpoints and
//! optimizers can address them by stable names.

pub mod error;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod ops;
pub mod parallel;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{NnError, Result};
pub use gradcheck::{grad_check, grad_check_params, grad_check_with, GradCheckConfig, GradCheckReport};
pub use init::Init;
pub use layers::{Ctx, Mode};
pub use params::{ParamEntry, ParamId, ParamKind, ParamStore};
pub use scalar::Scalar;
pub use tape::{Gradients, ParamGrads, Tape, Var};
pub use tensor::Tensor;
