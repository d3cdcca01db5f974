use std::path::Path;

use nalgebra::DMatrix;
use udfe_nn::{parallel, Tensor};

use crate::data::read_raw;
use crate::error::{invalid, Result};

/// Maps a set of images to `[N, D]` embedding rows.
pub trait FeatureExtractor: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, images: &[Tensor<f32>]) -> Result<DMatrix<f64>>;
}

pub const POOL_SIDE: usize = 16;

/// Area-average each image down to 16×16 and flatten (`D = 256`).
#[derive(Debug, Clone, Copy, Default)]
pub struct Pool16;

impl FeatureExtractor for Pool16 {
    fn name(&self) -> &str {
        "pool16"
    }

    fn dim(&self) -> usize {
        POOL_SIDE * POOL_SIDE
    }

    fn extract(&self, images: &[Tensor<f32>]) -> Result<DMatrix<f64>> {
        let rows = parallel::map_range(images.len(), |i| area_resize(&images[i], POOL_SIDE));
        let mut m = DMatrix::zeros(images.len(), self.dim());
        for (i, r) in rows.into_iter().enumerate() {
            let r = r?;
            for (j, v) in r.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }
}

/// Overlap weights of source cells `0..n` onto `out` equal-width target cells.
fn area_weights(n: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / out as f64;
    (0..out)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut w = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < n {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((i, overlap / scale));
                }
                i += 1;
            }
            w
        })
        .collect()
}

/// Area-weighted resampling of `[1,H,W]` (or `[H,W]`) to `side × side`,
/// flattened row-major. Exact block means when `side` divides the input.
pub fn area_resize(image: &Tensor<f32>, side: usize) -> Result<Vec<f64>> {
    let (h, w) = match *image.shape() {
        [1, h, w] | [h, w] => (h, w),
        ref s => return Err(invalid(format!("expected a [1,H,W] image, got {s:?}"))),
    };
    if side == 0 {
        return Err(invalid("resize target must be positive"));
    }
    let (wy, wx) = (area_weights(h, side), area_weights(w, side));
    let d = image.data();
    let mut out = Vec::with_capacity(side * side);
    for ry in &wy {
        for rx in &wx {
            let mut acc = 0.0;
            for &(y, a) in ry {
                for &(x, b) in rx {
                    acc += a * b * d[y * w + x] as f64;
                }
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// `[N, D]` external embeddings stored as a raw tensor.
pub fn load_features(path: &Path) -> Result<DMatrix<f64>> {
    let t = read_raw(path)?;
    let [n, d] = match *t.shape() {
        [n, d] => [n, d],
        ref s => return Err(invalid(format!("feature file must be [N,D], got {s:?}"))),
    };
    Ok(DMatrix::from_row_iterator(n, d, t.data().iter().map(|&v| v as f64)))
}
