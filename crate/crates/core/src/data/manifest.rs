use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{center_crop, io_err, load_image, DataError, DataResult, FusSample, State, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One manifest row. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub task: Task,
    pub state: State,
    pub split: Split,
}

pub fn load_manifest(path: &Path) -> DataResult<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| DataError::Malformed(format!("{}: {e}", path.display())))?;
    let mut seen: HashMap<&Path, Split> = HashMap::new();
    for e in &entries {
        if let Some(&prev) = seen.get(e.path.as_path()) {
            if prev != e.split {
                return Err(DataError::Invalid(format!(
                    "{} appears in both train and test splits",
                    e.path.display()
                )));
            }
        }
        seen.insert(&e.path, e.split);
    }
    Ok(entries)
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> DataResult<()> {
    let text = serde_json::to_string_pretty(entries).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Load every image of `split` (all splits when `None`), center-cropped to
/// `crop` when given.
pub fn load_manifest_samples(
    path: &Path,
    split: Option<Split>,
    crop: Option<usize>,
) -> DataResult<Vec<FusSample>> {
    let base = path.parent().unwrap_or(Path::new("."));
    load_manifest(path)?
        .into_iter()
        .filter(|e| split.is_none_or(|s| s == e.split))
        .map(|e| {
            let p = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
            let mut image = load_image(&p)?;
            if let Some(size) = crop {
                image = center_crop(&image, size)?;
            }
            if image.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(DataError::Malformed(format!("{}: values outside [-1,1]", p.display())));
            }
            Ok(FusSample::new(image, e.task, e.state))
        })
        .collect()
}
