//! Conditional adversarial synthesis of functional-ultrasound frames.
//!
//! The generator is a U-Net with detail feature enhancement ([`dfe`]) blocks
//! after every level; the discriminator is a U-Net with a global realness
//! head on its bottleneck and a per-pixel head on its decoder, and can
//! normalize its encoder with class-conditional batch norm. Around the
//! models sit the adversarial losses and training loop, image readers and a
//! seeded phantom generator, SSIM/MS-SSIM/Fréchet metrics, and a
//! PCA + random forest classifier used to measure whether synthetic frames
//! help a downstream task.

pub mod data;
pub mod dfe;
pub mod downstream;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod training;

pub use error::{Error, Result};
pub use models::{build_models, Discriminator, Generator, ModelConfig};
