//! Task-state classification from flattened frames: PCA followed by a
//! random forest, and the experiment comparing real-only training against
//! real plus synthetic training.

mod forest;
mod pca;
mod report;

use nalgebra::DMatrix;

pub use forest::{gini, rf_fit, rf_predict, DecisionTree, MaxFeatures, Node, RandomForest, RfParams};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use report::{classification_report, write_report_csv, ClassificationReport, REPORT_CSV_HEADER};

use crate::data::{FusSample, TASK_LABEL};
use crate::error::{invalid, Result};

pub const DEFAULT_PCA_K: usize = 32;

/// Feature rows with one label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    /// `[N, D]`
    pub x: DMatrix<f64>,
    pub y: Vec<usize>,
}

impl LabeledSet {
    pub fn new(x: DMatrix<f64>, y: Vec<usize>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(invalid(format!("{} rows vs {} labels", x.nrows(), y.len())));
        }
        Ok(Self { x, y })
    }

    /// Flattened images as rows.
    pub fn from_samples(samples: &[FusSample]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(invalid("empty sample set"));
        };
        let d = first.image.len();
        if samples.iter().any(|s| s.image.len() != d) {
            return Err(invalid("images differ in size"));
        }
        let x = DMatrix::from_row_iterator(
            samples.len(),
            d,
            samples.iter().flat_map(|s| s.image.data().iter().map(|&v| v as f64)),
        );
        Ok(Self {
            x,
            y: samples.iter().map(|s| s.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.y.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &LabeledSet) -> Result<LabeledSet> {
        if self.x.ncols() != other.x.ncols() {
            return Err(invalid("feature dimensions differ"));
        }
        let (n, m, d) = (self.len(), other.len(), self.x.ncols());
        let x = DMatrix::from_fn(n + m, d, |i, j| if i < n { self.x[(i, j)] } else { other.x[(i - n, j)] });
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(LabeledSet { x, y })
    }
}

/// PCA fitted on `train`, forest on the projected rows, report on `test`.
/// `k` is clamped to `min(N − 1, D)` of the training set.
pub fn fit_and_evaluate(train: &LabeledSet, test: &LabeledSet, pca_k: usize, rf: &RfParams) -> Result<ClassificationReport> {
    let k = pca_k.min(train.len().saturating_sub(1)).min(train.x.ncols()).max(1);
    let pca = pca_fit(&train.x, k)?;
    let forest = rf_fit(&pca.transform(&train.x)?, &train.y, rf)?;
    let pred = forest.predict(&pca.transform(&test.x)?)?;
    classification_report(&test.y, &pred, TASK_LABEL)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationResult {
    pub baseline: ClassificationReport,
    pub augmented: ClassificationReport,
    pub delta_accuracy: f64,
}

/// Baseline trains on `real_train`; the augmented pipeline on
/// `real_train ∪ synth_train`. Both are scored on the same `test` set.
pub fn augmentation_experiment(
    real_train: &LabeledSet,
    synth_train: &LabeledSet,
    test: &LabeledSet,
    pca_k: usize,
    rf: &RfParams,
) -> Result<AugmentationResult> {
    if synth_train.is_empty() {
        return Err(invalid("synthetic training set is empty"));
    }
    let (a, b, c) = (real_train.classes(), synth_train.classes(), test.classes());
    if !b.iter().all(|l| a.contains(l)) || !c.iter().all(|l| a.contains(l)) {
        return Err(invalid(format!("label spaces disagree: real {a:?}, synthetic {b:?}, test {c:?}")));
    }
    let baseline = fit_and_evaluate(real_train, test, pca_k, rf)?;
    let augmented = fit_and_evaluate(&real_train.concat(synth_train)?, test, pca_k, rf)?;
    Ok(AugmentationResult {
        baseline,
        augmented,
        delta_accuracy: augmented.accuracy - baseline.accuracy,
    })
}
