//! Checkpoint directories.
//!
//! ```text
//! <dir>/manifest.json   config, run settings, step, RNG state, optimizer
//!                       step counts and a table of tensors
//! <dir>/tensors.bin     b"UDFECKPT" followed by every tensor as
//!                       little-endian f32, at the byte offsets in the table
//! ```
//!
//! Serialization is a pure function of the state, so save → load → save
//! reproduces both files byte for byte.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use udfe_nn::{ParamKind, ParamStore, Tensor};

use super::adam::{AdamConfig, AdamState};
use super::trainer::RunConfig;
use crate::models::{build_models, ModelConfig};

pub const CKPT_MAGIC: &[u8; 8] = b"UDFECKPT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";
const FORMAT: &str = "udfe-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("tensor file does not start with the checkpoint magic")]
    BadMagic,
    #[error("checkpoint truncated: needed {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint does not match the configuration: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint manifest is invalid: {0}")]
    Json(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type CkResult<T> = std::result::Result<T, CheckpointError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializable position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte key as hex.
    pub key: String,
    pub stream: u64,
    /// 128-bit word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            key: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn parse(&self) -> CkResult<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = || CheckpointError::Json("malformed RNG state".into());
        if self.key.len() != 64 {
            return Err(bad());
        }
        let mut key = [0u8; 32];
        for (i, b) in key.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.key[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }

    pub fn restore(&self) -> ChaCha8Rng {
        self.parse().expect("validated when loaded")
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub run: RunConfig,
    pub step: u64,
    pub rng: RngState,
    pub generator: ParamStore<f32>,
    pub discriminator: ParamStore<f32>,
    pub g_opt: AdamState,
    pub d_opt: AdamState,
}

impl Checkpoint {
    /// Bitwise equality of every tensor plus all scalar state.
    pub fn bitwise_eq(&self, other: &Checkpoint) -> bool {
        let opt_eq = |a: &AdamState, b: &AdamState| {
            a.t == b.t
                && a.config == b.config
                && a.m.iter().chain(&a.v).zip(b.m.iter().chain(&b.v)).all(|(x, y)| bits_eq(x, y))
        };
        self.config == other.config
            && self.run == other.run
            && self.step == other.step
            && self.rng == other.rng
            && self.generator.bitwise_eq(&other.generator)
            && self.discriminator.bitwise_eq(&other.discriminator)
            && opt_eq(&self.g_opt, &other.g_opt)
            && opt_eq(&self.d_opt, &other.d_opt)
    }
}

fn bits_eq(a: &Tensor<f32>, b: &Tensor<f32>) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerEntry {
    t: u64,
    #[serde(flatten)]
    config: AdamConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    group: String,
    kind: String,
    shape: Vec<usize>,
    /// Byte offset into `tensors.bin`.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    run: RunConfig,
    step: u64,
    rng: RngState,
    generator_optimizer: OptimizerEntry,
    discriminator_optimizer: OptimizerEntry,
    tensors: Vec<TensorEntry>,
}

const GROUPS: [&str; 6] = [
    "generator",
    "generator.adam_m",
    "generator.adam_v",
    "discriminator",
    "discriminator.adam_m",
    "discriminator.adam_v",
];

/// `(group, name, kind, tensor)` in file order.
fn tensor_order(ck: &Checkpoint) -> Vec<(&'static str, &str, ParamKind, &Tensor<f32>)> {
    let mut out = Vec::new();
    for (gi, (store, opt)) in [(&ck.generator, &ck.g_opt), (&ck.discriminator, &ck.d_opt)]
        .into_iter()
        .enumerate()
    {
        for e in store.entries() {
            out.push((GROUPS[3 * gi], e.name.as_str(), e.kind, &e.tensor));
        }
        for (j, moments) in [&opt.m, &opt.v].into_iter().enumerate() {
            for (e, t) in store.entries().iter().zip(moments) {
                out.push((GROUPS[3 * gi + 1 + j], e.name.as_str(), e.kind, t));
            }
        }
    }
    out
}

fn kind_name(k: ParamKind) -> &'static str {
    match k {
        ParamKind::Trainable => "trainable",
        ParamKind::Buffer => "buffer",
    }
}

/// The two files of a checkpoint as bytes.
pub fn encode(ck: &Checkpoint) -> (Vec<u8>, Vec<u8>) {
    let mut blob = CKPT_MAGIC.to_vec();
    let mut tensors = Vec::new();
    for (group, name, kind, t) in tensor_order(ck) {
        tensors.push(TensorEntry {
            name: name.to_string(),
            group: group.to_string(),
            kind: kind_name(kind).to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len(),
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let opt = |o: &AdamState| OptimizerEntry { t: o.t, config: o.config };
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        config: ck.config.clone(),
        run: ck.run.clone(),
        step: ck.step,
        rng: ck.rng.clone(),
        generator_optimizer: opt(&ck.g_opt),
        discriminator_optimizer: opt(&ck.d_opt),
        tensors,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    (json, blob)
}

pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> CkResult<()> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let (json, blob) = encode(ck);
    let m = dir.join(MANIFEST_FILE);
    std::fs::write(&m, json).map_err(io(&m))?;
    let t = dir.join(TENSORS_FILE);
    std::fs::write(&t, blob).map_err(io(&t))
}

/// Parse both files. With `expected`, the stored model config must equal it.
pub fn decode(json: &[u8], blob: &[u8], expected: Option<&ModelConfig>) -> CkResult<Checkpoint> {
    if !blob.starts_with(CKPT_MAGIC) {
        return Err(if blob.len() < CKPT_MAGIC.len() && CKPT_MAGIC.starts_with(blob) {
            CheckpointError::Truncated { expected: CKPT_MAGIC.len(), found: blob.len() }
        } else {
            CheckpointError::BadMagic
        });
    }
    let m: Manifest = serde_json::from_slice(json).map_err(|e| CheckpointError::Json(e.to_string()))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(CheckpointError::Json(format!("unsupported format {} v{}", m.format, m.version)));
    }
    if let Some(cfg) = expected {
        if *cfg != m.config {
            return Err(CheckpointError::ConfigMismatch(
                "stored model configuration differs from the requested one".into(),
            ));
        }
    }
    let rng = m.rng.parse().map(|_| m.rng.clone())?;
    let (generator, discriminator) = build_models::<f32>(&m.config, 0)
        .map_err(|e| CheckpointError::ConfigMismatch(e.to_string()))?;
    let mut ck = Checkpoint {
        g_opt: AdamState::new(m.generator_optimizer.config, &generator.params),
        d_opt: AdamState::new(m.discriminator_optimizer.config, &discriminator.params),
        config: m.config,
        run: m.run,
        step: m.step,
        rng,
        generator: generator.params,
        discriminator: discriminator.params,
    };
    ck.g_opt.t = m.generator_optimizer.t;
    ck.d_opt.t = m.discriminator_optimizer.t;

    let expected_entries = tensor_order(&ck).len();
    if m.tensors.len() != expected_entries {
        return Err(CheckpointError::ConfigMismatch(format!(
            "{} tensors stored, {} expected",
            m.tensors.len(),
            expected_entries
        )));
    }
    let mut cursor = CKPT_MAGIC.len();
    let mut values = Vec::with_capacity(m.tensors.len());
    for (entry, (group, name, kind, t)) in m.tensors.iter().zip(tensor_order(&ck)) {
        if entry.group != group || entry.name != name || entry.kind != kind_name(kind) || entry.shape != t.shape() {
            return Err(CheckpointError::ConfigMismatch(format!(
                "tensor {}:{} {:?} does not match {group}:{name} {:?}",
                entry.group,
                entry.name,
                entry.shape,
                t.shape()
            )));
        }
        if entry.offset != cursor {
            return Err(CheckpointError::Json(format!("unexpected offset for {}:{}", entry.group, entry.name)));
        }
        let end = cursor + 4 * t.len();
        if blob.len() < end {
            return Err(CheckpointError::Truncated { expected: end, found: blob.len() });
        }
        let data: Vec<f32> = blob[cursor..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        values.push(Tensor::new(t.shape().to_vec(), data).expect("shape checked"));
        cursor = end;
    }
    if blob.len() != cursor {
        return Err(CheckpointError::Json(format!("{} trailing bytes in tensor file", blob.len() - cursor)));
    }

    let mut it = values.into_iter();
    for (store, opt) in [(&mut ck.generator, &mut ck.g_opt), (&mut ck.discriminator, &mut ck.d_opt)] {
        for id in store.ids().collect::<Vec<_>>() {
            *store.get_mut(id) = it.next().expect("counted");
        }
        for slot in opt.m.iter_mut() {
            *slot = it.next().expect("counted");
        }
        for slot in opt.v.iter_mut() {
            *slot = it.next().expect("counted");
        }
    }
    Ok(ck)
}

pub fn load_checkpoint(dir: &Path, expected: Option<&ModelConfig>) -> CkResult<Checkpoint> {
    let m = dir.join(MANIFEST_FILE);
    let json = std::fs::read(&m).map_err(io(&m))?;
    let t = dir.join(TENSORS_FILE);
    let blob = std::fs::read(&t).map_err(io(&t))?;
    decode(&json, &blob, expected)
}
