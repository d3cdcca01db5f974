use crate::error::{arg_err, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// Per-channel statistics used by a normalization pass.
#[derive(Debug, Clone)]
pub struct ChannelStats<T: Scalar> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    /// Number of values reduced per channel.
    pub count: usize,
}

/// Mean and biased variance over (B, H, W) for each channel, in f64.
pub fn channel_stats<T: Scalar>(input: &Tensor<T>) -> Result<ChannelStats<T>> {
    let [b, c, h, w] = input.dims4("batchnorm")?;
    let plane = h * w;
    let count = b * plane;
    let x = input.data();
    let mut mean = Vec::with_capacity(c);
    let mut var = Vec::with_capacity(c);
    for ch in 0..c {
        let mut sum = 0.0f64;
        for s in 0..b {
            let off = (s * c + ch) * plane;
            sum += x[off..off + plane]
                .iter()
                .map(|v| v.to_f64().unwrap_or(f64::NAN))
                .sum::<f64>();
        }
        let m = sum / count as f64;
        let mut sq = 0.0f64;
        for s in 0..b {
            let off = (s * c + ch) * plane;
            sq += x[off..off + plane]
                .iter()
                .map(|v| {
                    let d = v.to_f64().unwrap_or(f64::NAN) - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean.push(lit(m));
        var.push(lit(sq / count as f64));
    }
    Ok(ChannelStats { mean, var, count })
}

/// `(x - mean) / sqrt(var + eps)` per channel. Returns the normalized map and
/// the per-channel inverse standard deviations.
pub fn normalize<T: Scalar>(
    input: &Tensor<T>,
    mean: &[T],
    var: &[T],
    eps: f64,
) -> Result<(Tensor<T>, Vec<T>)> {
    let [b, c, h, w] = input.dims4("batchnorm")?;
    if mean.len() != c || var.len() != c {
        return Err(arg_err("batchnorm", "statistics length does not match channels"));
    }
    let plane = h * w;
    let inv_std: Vec<T> = var
        .iter()
        .map(|&v| T::one() / (v + lit(eps)).sqrt())
        .collect();
    let mut out = input.data().to_vec();
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let ch = i % c;
        let (m, s) = (mean[ch], inv_std[ch]);
        chunk.iter_mut().for_each(|v| *v = (*v - m) * s);
    }
    Ok((Tensor::new(vec![b, c, h, w], out)?, inv_std))
}

/// Input gradient of [`normalize`].
///
/// With `batch_stats` the mean and variance are functions of the input and
/// the full batch-norm Jacobian is applied; otherwise the statistics are
/// constants and the map is a per-channel affine scale.
pub fn normalize_backward<T: Scalar>(
    normalized: &Tensor<T>,
    inv_std: &[T],
    grad_out: &Tensor<T>,
    batch_stats: bool,
) -> Result<Tensor<T>> {
    let [b, c, h, w] = normalized.dims4("batchnorm_backward")?;
    let plane = h * w;
    let g = grad_out.data();
    let xh = normalized.data();
    let mut dx = vec![T::zero(); g.len()];
    if !batch_stats {
        for (i, (d, &gv)) in dx.iter_mut().zip(g).enumerate() {
            *d = gv * inv_std[(i / plane) % c];
        }
        return Tensor::new(vec![b, c, h, w], dx);
    }
    let n = lit::<T>((b * plane) as f64);
    for ch in 0..c {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for s in 0..b {
            let off = (s * c + ch) * plane;
            for i in off..off + plane {
                sum_g += g[i];
                sum_gx += g[i] * xh[i];
            }
        }
        let k = inv_std[ch] / n;
        for s in 0..b {
            let off = (s * c + ch) * plane;
            for i in off..off + plane {
                dx[i] = k * (n * g[i] - sum_g - xh[i] * sum_gx);
            }
        }
    }
    Tensor::new(vec![b, c, h, w], dx)
}
