use crate::error::{arg_err, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// Pooling reductions over a `[B,C,H,W]` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    /// Mean over H and W, giving `[B,C,1,1]`.
    SpatialGlobalAvg,
    /// Max over H and W, giving `[B,C,1,1]`.
    SpatialGlobalMax,
    /// Mean over C, giving `[B,1,H,W]`.
    ChannelMean,
    /// Max over C, giving `[B,1,H,W]`.
    ChannelMax,
    /// Non-overlapping 2x2 mean, giving `[B,C,H/2,W/2]`.
    Avg2x2,
}

/// Pooled value plus, for max kinds, the flat input index that won.
pub struct Pooled<T: Scalar> {
    pub output: Tensor<T>,
    pub argmax: Option<Vec<usize>>,
}

pub fn pool<T: Scalar>(input: &Tensor<T>, kind: PoolKind) -> Result<Tensor<T>> {
    pool_with_indices(input, kind).map(|p| p.output)
}

pub fn pool_with_indices<T: Scalar>(input: &Tensor<T>, kind: PoolKind) -> Result<Pooled<T>> {
    let [b, c, h, w] = input.dims4("pool")?;
    let x = input.data();
    let plane = h * w;
    match kind {
        PoolKind::SpatialGlobalAvg => {
            let inv = lit::<T>(1.0 / plane as f64);
            let data = x.chunks(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
            Ok(Pooled {
                output: Tensor::new(vec![b, c, 1, 1], data)?,
                argmax: None,
            })
        }
        PoolKind::SpatialGlobalMax => {
            let mut idx = Vec::with_capacity(b * c);
            let mut data = Vec::with_capacity(b * c);
            for (pi, p) in x.chunks(plane).enumerate() {
                let (best, v) = argmax(p.iter().copied());
                idx.push(pi * plane + best);
                data.push(v);
            }
            Ok(Pooled {
                output: Tensor::new(vec![b, c, 1, 1], data)?,
                argmax: Some(idx),
            })
        }
        PoolKind::ChannelMean => {
            let inv = lit::<T>(1.0 / c as f64);
            let mut data = vec![T::zero(); b * plane];
            for s in 0..b {
                let out = &mut data[s * plane..(s + 1) * plane];
                for ch in 0..c {
                    let src = &x[(s * c + ch) * plane..(s * c + ch + 1) * plane];
                    out.iter_mut().zip(src).for_each(|(o, &v)| *o += v);
                }
                out.iter_mut().for_each(|o| *o *= inv);
            }
            Ok(Pooled {
                output: Tensor::new(vec![b, 1, h, w], data)?,
                argmax: None,
            })
        }
        PoolKind::ChannelMax => {
            let mut data = Vec::with_capacity(b * plane);
            let mut idx = Vec::with_capacity(b * plane);
            for s in 0..b {
                for p in 0..plane {
                    let (best, v) = argmax((0..c).map(|ch| x[(s * c + ch) * plane + p]));
                    idx.push((s * c + best) * plane + p);
                    data.push(v);
                }
            }
            Ok(Pooled {
                output: Tensor::new(vec![b, 1, h, w], data)?,
                argmax: Some(idx),
            })
        }
        PoolKind::Avg2x2 => {
            if h % 2 != 0 || w % 2 != 0 {
                return Err(arg_err(
                    "pool",
                    format!("avg_2x2 needs even spatial dims, got {h}x{w}"),
                ));
            }
            let (ho, wo) = (h / 2, w / 2);
            let quarter = lit::<T>(0.25);
            let mut data = Vec::with_capacity(b * c * ho * wo);
            for p in x.chunks(plane) {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let r0 = 2 * oy * w + 2 * ox;
                        let r1 = r0 + w;
                        data.push((p[r0] + p[r0 + 1] + p[r1] + p[r1 + 1]) * quarter);
                    }
                }
            }
            Ok(Pooled {
                output: Tensor::new(vec![b, c, ho, wo], data)?,
                argmax: None,
            })
        }
    }
}

/// First index of the maximum (ties resolve to the lowest index).
fn argmax<T: Scalar>(it: impl Iterator<Item = T>) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (i, v) in it.enumerate() {
        if v > best.1 || i == 0 {
            best = (i, v);
        }
    }
    best
}

/// Gradient of [`pool`] with respect to its input.
pub fn pool_backward<T: Scalar>(
    input_shape: &[usize],
    kind: PoolKind,
    argmax: Option<&[usize]>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let plane = h * w;
    let g = grad_out.data();
    let mut dx = vec![T::zero(); b * c * plane];
    match kind {
        PoolKind::SpatialGlobalAvg => {
            let inv = lit::<T>(1.0 / plane as f64);
            for (chunk, &gv) in dx.chunks_mut(plane).zip(g) {
                chunk.fill(gv * inv);
            }
        }
        PoolKind::SpatialGlobalMax | PoolKind::ChannelMax => {
            let idx = argmax.ok_or_else(|| arg_err("pool_backward", "missing argmax"))?;
            for (&i, &gv) in idx.iter().zip(g) {
                dx[i] += gv;
            }
        }
        PoolKind::ChannelMean => {
            let inv = lit::<T>(1.0 / c as f64);
            for s in 0..b {
                let gs = &g[s * plane..(s + 1) * plane];
                for ch in 0..c {
                    let d = &mut dx[(s * c + ch) * plane..(s * c + ch + 1) * plane];
                    d.iter_mut().zip(gs).for_each(|(o, &v)| *o = v * inv);
                }
            }
        }
        PoolKind::Avg2x2 => {
            let (ho, wo) = (h / 2, w / 2);
            let quarter = lit::<T>(0.25);
            for (pi, d) in dx.chunks_mut(plane).enumerate() {
                let gp = &g[pi * ho * wo..(pi + 1) * ho * wo];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let v = gp[oy * wo + ox] * quarter;
                        let r0 = 2 * oy * w + 2 * ox;
                        d[r0] = v;
                        d[r0 + 1] = v;
                        d[r0 + w] = v;
                        d[r0 + w + 1] = v;
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}
