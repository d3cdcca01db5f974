//! Dataset paths on the command line.
//!
//! A path is one of: a manifest file, a directory holding `manifest.json`,
//! or a directory of `gen_<label>_<i>.pgm` files as written by `generate`.

use std::path::Path;

use udfe_core::data::{center_crop, load_manifest_samples, read_pgm, DataError, FusSample, Split, State, Task};

use crate::Failure;

pub const MANIFEST_NAME: &str = "manifest.json";

/// `(label, index)` of a `gen_<label>_<i>.pgm` file name.
pub fn parse_generated_name(name: &str) -> Option<(usize, usize)> {
    let stem = name.strip_prefix("gen_")?.strip_suffix(".pgm")?;
    let (label, index) = stem.split_once('_')?;
    Some((label.parse().ok()?, index.parse().ok()?))
}

/// Load samples; `split` filters manifest entries and is ignored for
/// generated directories.
pub fn load(path: &Path, split: Option<Split>, crop: Option<usize>) -> Result<Vec<FusSample>, Failure> {
    let not_found = || DataError::Invalid(format!("{}: no such dataset", path.display()));
    let samples = if path.is_file() {
        load_manifest_samples(path, split, crop)?
    } else if path.is_dir() {
        let manifest = path.join(MANIFEST_NAME);
        if manifest.is_file() {
            load_manifest_samples(&manifest, split, crop)?
        } else {
            load_generated(path, crop)?
        }
    } else {
        return Err(not_found().into());
    };
    if samples.is_empty() {
        return Err(DataError::Invalid(format!("{}: dataset is empty", path.display())).into());
    }
    Ok(samples)
}

fn load_generated(dir: &Path, crop: Option<usize>) -> Result<Vec<FusSample>, Failure> {
    let io = |e| DataError::Io { path: dir.display().to_string(), source: e };
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        if let Some(key) = entry.file_name().to_str().and_then(parse_generated_name) {
            found.push((key, entry.path()));
        }
    }
    found.sort();
    found
        .into_iter()
        .map(|((label, _), p)| {
            let state = State::from_label(label)
                .ok_or_else(|| DataError::Invalid(format!("{}: label {label} is not binary", p.display())))?;
            let mut image = read_pgm(&p)?;
            if let Some(size) = crop {
                image = center_crop(&image, size)?;
            }
            Ok(FusSample::new(image, Task::Piano, state))
        })
        .collect()
}
