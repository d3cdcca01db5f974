//! Image I/O, preprocessing, split bookkeeping and a seeded phantom
//! generator.
//!
//! Images are `[1,S,S]` tensors in `[-1,1]`. No augmentation is applied
//! anywhere.

mod manifest;
mod pgm;
mod raw;
mod splits;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use udfe_nn::Tensor;

pub use manifest::{load_manifest, load_manifest_samples, save_manifest, ManifestEntry, Split};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use raw::{decode_raw, encode_raw, read_raw, write_raw, RAW_MAGIC};
pub use splits::{make_splits, SplitCounts};
pub use synth::{synth_generate, SynthSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unrecognized file magic {0:?}")]
    UnknownMagic(Vec<u8>),
    #[error("dimension header overflows: {0}")]
    DimensionOverflow(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dataset request: {0}")]
    Invalid(String),
}

pub type DataResult<T> = std::result::Result<T, DataError>;

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Motor task. Also known as "guitar" playing; both names refer to
/// this one condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Piano,
    LineConnecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    Rest,
    Task,
}

impl State {
    /// Binary label: rest = 0, task = 1.
    pub fn label(self) -> usize {
        match self {
            State::Rest => 0,
            State::Task => 1,
        }
    }

    pub fn from_label(label: usize) -> Option<Self> {
        match label {
            0 => Some(State::Rest),
            1 => Some(State::Task),
            _ => None,
        }
    }
}

/// Positive class for precision and recall.
pub const TASK_LABEL: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FusSample {
    /// `[1,S,S]` in `[-1,1]`.
    pub image: Tensor<f32>,
    pub task: Task,
    pub state: State,
    pub label: usize,
}

impl FusSample {
    pub fn new(image: Tensor<f32>, task: Task, state: State) -> Self {
        Self {
            image,
            task,
            state,
            label: state.label(),
        }
    }
}

/// Read a PGM (`P5`) or raw tensor file as `[1,H,W]`, chosen by magic.
pub fn load_image(path: &Path) -> DataResult<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    if bytes.starts_with(RAW_MAGIC) {
        let t = decode_raw(&bytes)?;
        return match *t.shape() {
            [h, w] => Ok(t.into_reshape(vec![1, h, w]).expect("same length")),
            [1, _, _] => Ok(t),
            ref s => Err(DataError::Malformed(format!("expected a [H,W] or [1,H,W] image, got {s:?}"))),
        };
    }
    Err(DataError::UnknownMagic(bytes.iter().take(8).copied().collect()))
}

/// Centered `size × size` window with floor offsets; never pads.
pub fn center_crop(image: &Tensor<f32>, size: usize) -> DataResult<Tensor<f32>> {
    let (h, w) = match *image.shape() {
        [1, h, w] => (h, w),
        ref s => return Err(DataError::Invalid(format!("expected [1,H,W], got {s:?}"))),
    };
    if size == 0 || h < size || w < size {
        return Err(DataError::Invalid(format!("cannot crop {h}x{w} to {size}x{size}")));
    }
    let (oy, ox) = ((h - size) / 2, (w - size) / 2);
    let src = image.data();
    let mut out = Vec::with_capacity(size * size);
    for y in oy..oy + size {
        out.extend_from_slice(&src[y * w + ox..y * w + ox + size]);
    }
    Ok(Tensor::new(vec![1, size, size], out).expect("crop shape"))
}
