//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! model.image_size = 32
//! train.steps = 100
//! data.manifest = frames/manifest.json
//! ```
//!
//! Keys outside [`KNOWN_KEYS`] are rejected when the file is read. Keys a
//! command does not use are reported with a warning.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use udfe_core::downstream::{MaxFeatures, RfParams};
use udfe_core::experiment::BenchmarkSpec;
use udfe_core::models::{ModelConfig, Reduction, Stem};
use udfe_core::training::{GeneratorLossForm, RunConfig};

use crate::Failure;

pub const KNOWN_KEYS: &[&str] = &[
    "model.image_size",
    "model.levels",
    "model.base_width",
    "model.noise_dim",
    "model.embedding_dim",
    "model.num_classes",
    "model.use_dfe",
    "model.use_cbatchnorm",
    "model.local_loss_reduction",
    "model.reduction_ratio",
    "model.stem",
    "train.steps",
    "train.batch_size",
    "train.seed",
    "train.d_steps_per_g",
    "train.generator_loss",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "data.manifest",
    "data.crop",
    "data.n_per_class",
    "data.seed",
    "data.n_train",
    "data.n_test",
    "downstream.pca_k",
    "downstream.n_trees",
    "downstream.max_features",
    "downstream.min_samples_split",
    "downstream.bootstrap",
    "downstream.seed",
    "ablate.synth_per_class",
    "ablate.sample_seed",
];

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    /// Directory relative paths resolve against.
    base: PathBuf,
    used: RefCell<BTreeSet<String>>,
}

fn bad(key: &str, detail: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("`{key}`: {detail}"))
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Failure::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(bad(k, format!("unknown key (line {})", n + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(bad(k, format!("set twice (line {})", n + 1)));
            }
        }
        Ok(Self { values, base: base.to_path_buf(), used: RefCell::default() })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).map(|v| v.parse::<T>().map_err(|e| bad(key, format!("`{v}`: {e}")))).transpose()
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), Failure>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)], slot: &mut T) -> Result<(), Failure> {
        if let Some(v) = self.raw(key) {
            let names: Vec<&str> = options.iter().map(|o| o.0).collect();
            *slot = options
                .iter()
                .find(|o| o.0 == v)
                .map(|o| o.1)
                .ok_or_else(|| bad(key, format!("`{v}` is not one of {}", names.join(", "))))?;
        }
        Ok(())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }

    /// Set keys no command looked at.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }

    pub fn model(&self, mut m: ModelConfig) -> Result<ModelConfig, Failure> {
        self.set("model.image_size", &mut m.image_size)?;
        self.set("model.levels", &mut m.levels)?;
        self.set("model.base_width", &mut m.base_width)?;
        self.set("model.noise_dim", &mut m.noise_dim)?;
        self.set("model.embedding_dim", &mut m.embedding_dim)?;
        self.set("model.num_classes", &mut m.num_classes)?;
        self.set("model.use_dfe", &mut m.use_dfe)?;
        self.set("model.use_cbatchnorm", &mut m.use_cbatchnorm)?;
        self.choice(
            "model.local_loss_reduction",
            &[("mean", Reduction::Mean), ("sum", Reduction::Sum)],
            &mut m.local_loss_reduction,
        )?;
        self.set("model.reduction_ratio", &mut m.reduction_ratio)?;
        self.choice("model.stem", &[("upsample", Stem::Upsample), ("direct", Stem::Direct)], &mut m.stem)?;
        m.validate()?;
        Ok(m)
    }

    pub fn run(&self, mut r: RunConfig) -> Result<RunConfig, Failure> {
        self.set("train.steps", &mut r.steps)?;
        self.set("train.batch_size", &mut r.batch_size)?;
        self.set("train.seed", &mut r.seed)?;
        self.set("train.d_steps_per_g", &mut r.d_steps_per_g)?;
        self.choice(
            "train.generator_loss",
            &[("non_saturating", GeneratorLossForm::NonSaturating), ("minimax", GeneratorLossForm::Minimax)],
            &mut r.generator_loss,
        )?;
        self.set("train.lr", &mut r.adam.lr)?;
        self.set("train.beta1", &mut r.adam.beta1)?;
        self.set("train.beta2", &mut r.adam.beta2)?;
        self.set("train.eps", &mut r.adam.eps)?;
        r.validate()?;
        Ok(r)
    }

    pub fn forest(&self, mut p: RfParams) -> Result<RfParams, Failure> {
        self.set("downstream.n_trees", &mut p.n_trees)?;
        if let Some(v) = self.raw("downstream.max_features") {
            p.max_features = match v {
                "sqrt" => MaxFeatures::Sqrt,
                "all" => MaxFeatures::All,
                n => MaxFeatures::Count(
                    n.parse().map_err(|_| bad("downstream.max_features", format!("`{n}`: expected sqrt, all or a count")))?,
                ),
            };
        }
        self.set("downstream.min_samples_split", &mut p.min_samples_split)?;
        self.set("downstream.bootstrap", &mut p.bootstrap)?;
        self.set("downstream.seed", &mut p.seed)?;
        if p.n_trees == 0 {
            return Err(bad("downstream.n_trees", "must be positive"));
        }
        Ok(p)
    }

    pub fn benchmark(&self) -> Result<BenchmarkSpec, Failure> {
        let mut s = BenchmarkSpec::default();
        self.set("model.image_size", &mut s.image_size)?;
        self.set("model.levels", &mut s.levels)?;
        self.set("model.base_width", &mut s.base_width)?;
        self.set("model.noise_dim", &mut s.noise_dim)?;
        self.set("train.batch_size", &mut s.batch_size)?;
        self.set("train.steps", &mut s.steps)?;
        self.set("train.seed", &mut s.model_seed)?;
        self.set("data.n_train", &mut s.n_real_train)?;
        self.set("data.n_test", &mut s.n_test)?;
        self.set("data.seed", &mut s.data_seed)?;
        self.set("ablate.synth_per_class", &mut s.synth_per_class)?;
        self.set("ablate.sample_seed", &mut s.sample_seed)?;
        self.set("downstream.pca_k", &mut s.pca_k)?;
        s.rf = self.forest(s.rf)?;
        Ok(s)
    }
}
