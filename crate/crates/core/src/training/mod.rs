//! Adversarial losses, Adam, the alternating training loop and checkpoints.

mod adam;
pub mod checkpoint;
mod losses;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, RngState};
pub use losses::{discriminator_loss, generator_loss, GeneratorLossForm, LossTerms};
pub use trainer::{generate_images, write_loss_csv, LossRecord, RunConfig, Trainer, LOSS_CSV_HEADER};
