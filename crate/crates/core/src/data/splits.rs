use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, DataResult, FusSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

/// Seeded, label-stratified disjoint split with exact sizes.
///
/// Each label contributes `train · n_label / n` samples to the training set,
/// rounded by largest remainder so the totals are exact; the test set is
/// filled the same way from what remains.
pub fn make_splits(
    samples: &[FusSample],
    counts: SplitCounts,
    seed: u64,
) -> DataResult<(Vec<FusSample>, Vec<FusSample>)> {
    let n = samples.len();
    if counts.train + counts.test > n {
        return Err(DataError::Invalid(format!(
            "requested {} + {} samples from {n}",
            counts.train, counts.test
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_labels = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for (i, s) in samples.iter().enumerate() {
        by_label[s.label].push(i);
    }
    for idx in &mut by_label {
        idx.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = by_label.iter().map(Vec::len).collect();
    let train_q = apportion(counts.train, &sizes, n);
    let left: Vec<usize> = sizes.iter().zip(&train_q).map(|(s, t)| s - t).collect();
    let test_q = apportion(counts.test, &left, n - counts.train);

    let mut train = Vec::with_capacity(counts.train);
    let mut test = Vec::with_capacity(counts.test);
    for (l, idx) in by_label.iter().enumerate() {
        train.extend(idx[..train_q[l]].iter().map(|&i| samples[i].clone()));
        test.extend(idx[train_q[l]..train_q[l] + test_q[l]].iter().map(|&i| samples[i].clone()));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

/// Largest-remainder apportionment of `total` over groups of `sizes`
/// (summing to `n`), never exceeding a group's size.
fn apportion(total: usize, sizes: &[usize], n: usize) -> Vec<usize> {
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut q: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let mut rem: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| (total * s % n, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut missing = total - q.iter().sum::<usize>();
    for &(_, i) in rem.iter().cycle().take(rem.len() * 2) {
        if missing == 0 {
            break;
        }
        if q[i] < sizes[i] {
            q[i] += 1;
            missing -= 1;
        }
    }
    q
}
