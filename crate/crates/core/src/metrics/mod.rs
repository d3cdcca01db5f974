//! Image-quality metrics: SSIM, MS-SSIM and the Fréchet distance between
//! Gaussian fits of embedded image sets.
//!
//! Set-level SSIM and MS-SSIM are means over index-aligned pairs
//! (`real[i]` against `fake[i]`).

mod extract;
mod frechet;
mod ssim;

use nalgebra::DMatrix;
use udfe_nn::Tensor;

pub use extract::{area_resize, load_features, FeatureExtractor, Pool16, POOL_SIDE};
pub use frechet::{frechet_distance, matrix_sqrt_psd, GaussianSummary};
pub use ssim::{ms_ssim, ms_ssim_min_size, ms_ssim_scales, ssim, K1, K2, MS_SSIM_WEIGHTS, SIGMA, WINDOW};

use crate::error::{invalid, Result};

/// Fréchet distance between feature sets given as `[N, D]` rows.
pub fn fid_features(real: &DMatrix<f64>, fake: &DMatrix<f64>) -> Result<f64> {
    if real.ncols() != fake.ncols() {
        return Err(invalid(format!(
            "feature dimensions differ: {} vs {}",
            real.ncols(),
            fake.ncols()
        )));
    }
    for (side, m) in [("real", real), ("fake", fake)] {
        if m.nrows() < 2 {
            return Err(invalid(format!("{side} set needs at least 2 samples")));
        }
        if m.nrows() <= m.ncols() {
            log::warn!(
                "{side} set has {} samples for {} features; covariance is rank deficient",
                m.nrows(),
                m.ncols()
            );
        }
    }
    frechet_distance(&GaussianSummary::fit(real)?, &GaussianSummary::fit(fake)?)
}

pub fn fid(real: &[Tensor<f32>], fake: &[Tensor<f32>], extractor: &dyn FeatureExtractor) -> Result<f64> {
    if real.len() < 2 || fake.len() < 2 {
        return Err(invalid("FID needs at least 2 images per side"));
    }
    fid_features(&extractor.extract(real)?, &extractor.extract(fake)?)
}

/// Mean of `metric` over index-aligned pairs.
pub fn paired_mean<F>(real: &[Tensor<f32>], fake: &[Tensor<f32>], metric: F) -> Result<f64>
where
    F: Fn(&Tensor<f32>, &Tensor<f32>) -> Result<f64> + Sync,
{
    if real.is_empty() || real.len() != fake.len() {
        return Err(invalid(format!("paired metric needs equal non-empty sets ({} vs {})", real.len(), fake.len())));
    }
    let vals = udfe_nn::parallel::map_range(real.len(), |i| metric(&real[i], &fake[i]));
    let mut sum = 0.0;
    for v in vals {
        sum += v?;
    }
    Ok(sum / real.len() as f64)
}
