use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Standard deviation for conv/linear weights and embeddings.
pub const INIT_STD: f64 = 0.02;

/// Seeded initializer whose draws depend only on `(seed, parameter name)`.
///
/// Adding or removing a layer therefore leaves every other layer's initial
/// values untouched, which lets ablated networks share weights bit-for-bit
/// with the full network.
#[derive(Debug, Clone, Copy)]
pub struct Init {
    seed: u64,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng_for(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ fnv1a(name.as_bytes())))
    }

    pub fn normal<T: Scalar>(&self, name: &str, shape: impl Into<Vec<usize>>, std: f64) -> Tensor<T> {
        Tensor::randn(shape, std, &mut self.rng_for(name))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
