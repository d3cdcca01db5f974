//! The fixed desk-scale benchmark and the four-way ablation built on it.
//!
//! A variant is trained on the small real training set, asked for
//! class-conditioned samples, and judged by how a PCA + random forest
//! classifier trained on real ∪ synthetic frames scores on held-out real
//! frames.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{make_splits, synth_generate, FusSample, SplitCounts, State, SynthSpec};
use crate::downstream::{augmentation_experiment, AugmentationResult, LabeledSet, MaxFeatures, RfParams, REPORT_CSV_HEADER};
use crate::error::Result;
use crate::models::{ModelConfig, Reduction, Stem};
use crate::training::{generate_images, LossRecord, RunConfig, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Neither DFE nor conditional batch norm.
    Original,
    /// Conditional batch norm only.
    WoDfe,
    /// DFE only.
    WoCbatch,
    /// Both.
    Proposed,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Original, Variant::WoDfe, Variant::WoCbatch, Variant::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::WoDfe => "wo_dfe",
            Variant::WoCbatch => "wo_cbatch",
            Variant::Proposed => "proposed",
        }
    }

    /// `(use_dfe, use_cbatchnorm)`
    pub fn flags(self) -> (bool, bool) {
        match self {
            Variant::Original => (false, false),
            Variant::WoDfe => (false, true),
            Variant::WoCbatch => (true, false),
            Variant::Proposed => (true, true),
        }
    }

    pub fn apply(self, config: &ModelConfig) -> ModelConfig {
        let (use_dfe, use_cbatchnorm) = self.flags();
        ModelConfig { use_dfe, use_cbatchnorm, ..config.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub image_size: usize,
    pub levels: usize,
    pub base_width: usize,
    pub noise_dim: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub n_real_train: usize,
    pub n_test: usize,
    /// Generated frames per class added to the real training set.
    pub synth_per_class: usize,
    pub data_seed: u64,
    pub model_seed: u64,
    pub sample_seed: u64,
    pub pca_k: usize,
    pub rf: RfParams,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            image_size: 32,
            levels: 3,
            base_width: 8,
            noise_dim: 32,
            batch_size: 8,
            steps: 500,
            n_real_train: 40,
            n_test: 200,
            synth_per_class: 40,
            data_seed: 2024,
            model_seed: 7,
            sample_seed: 99,
            pca_k: 32,
            rf: RfParams {
                n_trees: 100,
                max_features: MaxFeatures::Sqrt,
                min_samples_split: 2,
                bootstrap: true,
                seed: 11,
            },
        }
    }
}

impl BenchmarkSpec {
    pub fn model_config(&self, variant: Variant) -> ModelConfig {
        variant.apply(&ModelConfig {
            image_size: self.image_size,
            levels: self.levels,
            base_width: self.base_width,
            noise_dim: self.noise_dim,
            embedding_dim: 32,
            num_classes: 2,
            use_dfe: true,
            use_cbatchnorm: true,
            local_loss_reduction: Reduction::Mean,
            reduction_ratio: 8,
            stem: Stem::Upsample,
        })
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            seed: self.model_seed,
            ..RunConfig::default()
        }
    }

    /// Stratified real training and test sets drawn from one phantom pool.
    pub fn data(&self) -> Result<(Vec<FusSample>, Vec<FusSample>)> {
        let total = self.n_real_train + self.n_test;
        let pool = synth_generate(&SynthSpec::new(total.div_ceil(2), self.image_size, self.data_seed))?;
        let counts = SplitCounts { train: self.n_real_train, test: self.n_test };
        Ok(make_splits(&pool, counts, self.data_seed ^ 0x5151)?)
    }
}

/// `per_class` generated frames of each class, rest first.
pub fn synthetic_samples(trainer: &mut Trainer, per_class: usize, seed: u64) -> Result<Vec<FusSample>> {
    let labels: Vec<usize> = (0..2 * per_class).map(|i| usize::from(i >= per_class)).collect();
    let images = generate_images(&mut trainer.generator, &labels, seed)?;
    let task = crate::data::Task::Piano;
    Ok(images
        .into_iter()
        .zip(&labels)
        .map(|(img, &l)| FusSample::new(img, task, State::from_label(l).expect("binary label")))
        .collect())
}

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub result: AugmentationResult,
    pub losses: Vec<LossRecord>,
}

pub fn train_variant(spec: &BenchmarkSpec, variant: Variant, train: &[FusSample]) -> Result<(Trainer, Vec<LossRecord>)> {
    let mut trainer = Trainer::new(spec.model_config(variant), spec.run_config())?;
    let losses = trainer.train(train)?;
    Ok((trainer, losses))
}

/// Score an already trained generator with the augmentation experiment.
pub fn evaluate_generator(
    spec: &BenchmarkSpec,
    trainer: &mut Trainer,
    train: &[FusSample],
    test: &[FusSample],
) -> Result<AugmentationResult> {
    let synth = synthetic_samples(trainer, spec.synth_per_class, spec.sample_seed)?;
    augmentation_experiment(
        &LabeledSet::from_samples(train)?,
        &LabeledSet::from_samples(&synth)?,
        &LabeledSet::from_samples(test)?,
        spec.pca_k,
        &spec.rf,
    )
}

pub fn run_variant(spec: &BenchmarkSpec, variant: Variant, train: &[FusSample], test: &[FusSample]) -> Result<VariantOutcome> {
    let (mut trainer, losses) = train_variant(spec, variant, train)?;
    let result = evaluate_generator(spec, &mut trainer, train, test)?;
    log::info!(
        "{}: baseline {:.3} augmented {:.3}",
        variant.name(),
        result.baseline.accuracy,
        result.augmented.accuracy
    );
    Ok(VariantOutcome { variant, result, losses })
}

/// All four variants with identical seeds, data and step budget.
pub fn run_ablation(spec: &BenchmarkSpec) -> Result<Vec<VariantOutcome>> {
    let (train, test) = spec.data()?;
    Variant::ALL
        .iter()
        .map(|&v| run_variant(spec, v, &train, &test))
        .collect()
}

/// Metadata comment line, header, then one augmented-classifier row per variant.
pub fn write_ablation_csv<W: Write>(mut w: W, spec: &BenchmarkSpec, rows: &[VariantOutcome]) -> std::io::Result<()> {
    writeln!(
        w,
        "# seed={} steps={} batch_size={} data_seed={} n_real_train={} synth_per_class={}",
        spec.model_seed, spec.steps, spec.batch_size, spec.data_seed, spec.n_real_train, spec.synth_per_class
    )?;
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.result.augmented.csv_row(r.variant.name()))?;
    }
    Ok(())
}
