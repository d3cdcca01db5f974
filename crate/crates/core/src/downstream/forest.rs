use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use udfe_nn::parallel;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(k))` candidate features per split.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, k: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((k as f64).sqrt().ceil() as usize).clamp(1, k),
            MaxFeatures::All => k,
            MaxFeatures::Count(n) => n.clamp(1, k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { counts: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub params: RfParams,
    pub n_features: usize,
    pub n_classes: usize,
    pub trees: Vec<DecisionTree>,
}

/// `1 − Σ pᵢ²` of a label multiset.
pub fn gini(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(invalid("Gini impurity of an empty set"));
    }
    let n_classes = labels.iter().max().expect("non-empty") + 1;
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(gini_of_counts(&counts))
}

fn gini_of_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// `n · gini`, the quantity minimized over a split's children.
fn weighted(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    n as f64 - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

/// Best split of one feature for the samples `idx`:
/// `(children impurity, threshold)` or `None` for a constant feature.
pub(crate) fn best_threshold(
    x: &DMatrix<f64>,
    y: &[usize],
    idx: &[usize],
    feature: usize,
    n_classes: usize,
) -> Option<(f64, f64)> {
    let col = x.column(feature);
    let mut vals: Vec<(f64, usize)> = idx.iter().map(|&i| (col[i], y[i])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = vals.len();
    let mut total = vec![0usize; n_classes];
    for &(_, l) in &vals {
        total[l] += 1;
    }
    let mut left = vec![0usize; n_classes];
    let mut right = total;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let l = vals[i].1;
        left[l] += 1;
        right[l] -= 1;
        let (a, b) = (vals[i].0, vals[i + 1].0);
        if a == b {
            continue;
        }
        let imp = weighted(&left, i + 1) + weighted(&right, n - i - 1);
        let mut thr = a + (b - a) / 2.0;
        if thr >= b {
            thr = a;
        }
        if best.is_none_or(|(bi, _)| imp < bi) {
            best = Some((imp, thr));
        }
    }
    best
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [usize],
    n_classes: usize,
    m: usize,
    min_split: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, counts: Vec<usize>) -> usize {
        self.nodes.push(Node::Leaf { counts });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < self.min_split {
            return self.leaf(counts);
        }
        // Visit features in a random order until `m` non-constant ones have
        // been examined; keep the best, ties to lower feature then threshold.
        let k = self.x.ncols();
        let order = sample(rng, k, k).into_vec();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        for f in order {
            if visited == self.m {
                break;
            }
            let Some((imp, thr)) = best_threshold(self.x, self.y, idx, f, self.n_classes) else {
                continue;
            };
            visited += 1;
            let better = match best {
                None => true,
                Some((bi, bf, bt)) => imp < bi || (imp == bi && (f < bf || (f == bf && thr < bt))),
            };
            if better {
                best = Some((imp, f, thr));
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(counts);
        };
        let col = self.x.column(feature);
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let left = self.grow(&l, rng);
        let right = self.grow(&r, rng);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return argmax_lowest(counts),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

/// Fit `n_trees` Gini trees. Tree `t` draws its bootstrap sample and feature
/// orders from ChaCha stream `t` of `seed`, so the forest is identical
/// whether trees are built in parallel or not.
pub fn rf_fit(x: &DMatrix<f64>, y: &[usize], params: &RfParams) -> Result<RandomForest> {
    let (n, k) = x.shape();
    if n < 2 || y.len() != n {
        return Err(invalid(format!("need at least 2 labelled rows ({} rows, {} labels)", n, y.len())));
    }
    if k == 0 || params.n_trees == 0 {
        return Err(invalid("forest needs at least one feature and one tree"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("features must be finite"));
    }
    let n_classes = y.iter().max().expect("non-empty") + 1;
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(invalid("training labels contain a single class"));
    }
    let m = params.max_features.resolve(k);
    let trees = parallel::map_range(params.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(t as u64);
        let idx: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut b = Builder {
            x,
            y,
            n_classes,
            m,
            min_split: params.min_samples_split.max(2),
            nodes: Vec::new(),
        };
        b.grow(&idx, &mut rng);
        DecisionTree { nodes: b.nodes }
    });
    Ok(RandomForest {
        params: *params,
        n_features: k,
        n_classes,
        trees,
    })
}

impl RandomForest {
    /// Majority vote; ties go to the smallest class id.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        if x.ncols() != self.n_features {
            return Err(invalid(format!("expected {} features, got {}", self.n_features, x.ncols())));
        }
        Ok(parallel::map_range(x.nrows(), |i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let mut votes = vec![0usize; self.n_classes];
            for t in &self.trees {
                votes[t.predict_row(&row)] += 1;
            }
            argmax_lowest(&votes)
        }))
    }
}

pub fn rf_predict(forest: &RandomForest, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    forest.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[1, 1, 1]).unwrap(), 0.0);
        assert_eq!(gini(&[0, 1]).unwrap(), 0.5);
        assert_eq!(gini(&[0, 0, 0, 1]).unwrap(), 0.375);
        assert!(gini(&[]).is_err());
    }

    #[test]
    fn sqrt_rule_rounds_up() {
        assert_eq!(MaxFeatures::Sqrt.resolve(32), 6);
        assert_eq!(MaxFeatures::Sqrt.resolve(16), 4);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
    }

    #[test]
    fn vote_ties_go_to_smallest_class() {
        assert_eq!(argmax_lowest(&[2, 2, 1]), 0);
        assert_eq!(argmax_lowest(&[1, 3, 3]), 1);
    }

    #[test]
    fn threshold_is_a_midpoint() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 3.0, 4.0]);
        let (imp, thr) = best_threshold(&x, &[0, 0, 1, 1], &[0, 1, 2, 3], 0, 2).unwrap();
        assert_eq!((imp, thr), (0.0, 2.0));
        assert!(best_threshold(&DMatrix::zeros(3, 1), &[0, 1, 0], &[0, 1, 2], 0, 2).is_none());
    }
}
