use serde::{Deserialize, Serialize};

use crate::dfe::DEFAULT_REDUCTION_RATIO;
use crate::error::{config_err, Result};

/// How per-pixel terms of the local adversarial loss are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum over pixels, averaged over the batch.
    Sum,
    /// Mean over all elements; keeps the local term on the global term's scale.
    Mean,
}

/// How the generator turns `z ⊕ e_c` into a full-resolution feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stem {
    /// Project to `S/4 × S/4`, then two stride-2 transposed convolutions.
    Upsample,
    /// Project straight to `S × S`. Only allowed for `image_size ≤ 32`.
    Direct,
}

pub const DIRECT_STEM_MAX_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub levels: usize,
    pub base_width: usize,
    pub noise_dim: usize,
    pub embedding_dim: usize,
    pub num_classes: usize,
    pub use_dfe: bool,
    pub use_cbatchnorm: bool,
    pub local_loss_reduction: Reduction,
    pub reduction_ratio: usize,
    pub stem: Stem,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            levels: 4,
            base_width: 16,
            noise_dim: 128,
            embedding_dim: 32,
            num_classes: 2,
            use_dfe: true,
            use_cbatchnorm: true,
            local_loss_reduction: Reduction::Mean,
            reduction_ratio: DEFAULT_REDUCTION_RATIO,
            stem: Stem::Upsample,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("levels", self.levels),
            ("base_width", self.base_width),
            ("noise_dim", self.noise_dim),
            ("embedding_dim", self.embedding_dim),
            ("num_classes", self.num_classes),
            ("reduction_ratio", self.reduction_ratio),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(config_err(field, "must be positive"));
            }
        }
        if !self.image_size.is_power_of_two() {
            return Err(config_err(
                "image_size",
                format!("{} is not a power of two", self.image_size),
            ));
        }
        if self.levels >= usize::BITS as usize || self.image_size >> self.levels < 4 {
            return Err(config_err(
                "levels",
                format!(
                    "image_size / 2^levels must be at least 4 ({} / 2^{})",
                    self.image_size, self.levels
                ),
            ));
        }
        if self.stem == Stem::Direct && self.image_size > DIRECT_STEM_MAX_SIZE {
            return Err(config_err(
                "stem",
                format!("direct projection needs image_size <= {DIRECT_STEM_MAX_SIZE}"),
            ));
        }
        Ok(())
    }

    /// Channel count at encoder level `i` (level 0 is full resolution).
    pub fn width(&self, level: usize) -> usize {
        self.base_width << level
    }

    /// Spatial side at encoder level `i`.
    pub fn side(&self, level: usize) -> usize {
        self.image_size >> level
    }

    pub fn bottleneck_side(&self) -> usize {
        self.side(self.levels)
    }
}
