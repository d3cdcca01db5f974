use udfe_nn::Tensor;

use crate::error::{invalid, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
/// Per-scale exponents of the standard five-scale MS-SSIM.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Single-channel image in `f64`.
#[derive(Debug, Clone)]
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        match *t.shape() {
            [1, h, w] | [h, w] => Ok(Self { h, w, data: t.to_f64_vec() }),
            ref s => Err(invalid(format!("expected a [1,H,W] image, got {s:?}"))),
        }
    }

    fn downsample(&self) -> Self {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                data.push(0.25 * (self.data[i] + self.data[i + 1] + self.data[i + self.w] + self.data[i + self.w + 1]));
            }
        }
        Self { h, w, data }
    }
}

fn gaussian(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering.
fn filter(p: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean luminance·contrast·structure and mean contrast·structure maps.
fn ssim_terms(a: &Plane, b: &Plane, range: f64, window: usize, sigma: f64) -> (f64, f64) {
    let k = gaussian(window, sigma);
    let f = |v: &[f64]| filter(v, a.h, a.w, &k);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = f(&a.data);
    let mu_b = f(&b.data);
    let s_aa = f(&prod(&a.data, &a.data));
    let s_bb = f(&prod(&b.data, &b.data));
    let s_ab = f(&prod(&a.data, &b.data));
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let n = mu_a.len() as f64;
    let (mut full, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = s_aa[i] - ma * ma;
        let vb = s_bb[i] - mb * mb;
        let cov = s_ab[i] - ma * mb;
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let c = (2.0 * cov + c2) / (va + vb + c2);
        full += l * c;
        cs += c;
    }
    (full / n, cs / n)
}

fn pair(x: &Tensor<f32>, y: &Tensor<f32>, range: f64) -> Result<(Plane, Plane)> {
    if x.shape() != y.shape() {
        return Err(invalid(format!("image shapes differ: {:?} vs {:?}", x.shape(), y.shape())));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(invalid("dynamic range must be positive"));
    }
    Ok((Plane::from_tensor(x)?, Plane::from_tensor(y)?))
}

/// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5).
pub fn ssim(x: &Tensor<f32>, y: &Tensor<f32>, dynamic_range: f64) -> Result<f64> {
    let (a, b) = pair(x, y, dynamic_range)?;
    if a.h < WINDOW || a.w < WINDOW {
        return Err(invalid(format!("SSIM needs images of at least {WINDOW}x{WINDOW}")));
    }
    Ok(ssim_terms(&a, &b, dynamic_range, WINDOW, SIGMA).0)
}

/// Smallest side accepted by [`ms_ssim_scales`]: every scale but the
/// coarsest must hold a full 11×11 window.
pub fn ms_ssim_min_size(scales: usize) -> usize {
    if scales <= 1 {
        WINDOW
    } else {
        WINDOW << (scales - 2)
    }
}

/// Five-scale MS-SSIM.
pub fn ms_ssim(x: &Tensor<f32>, y: &Tensor<f32>, dynamic_range: f64) -> Result<f64> {
    ms_ssim_scales(x, y, dynamic_range, MS_SSIM_WEIGHTS.len())
}

/// MS-SSIM over the first `scales` scales, exponents renormalized to sum
/// to one.
///
/// Contrast-structure terms at the finer scales and full SSIM at the
/// coarsest, each clamped at zero before exponentiation. At the coarsest
/// scale the window shrinks to the largest odd size that fits, with σ
/// scaled in proportion.
pub fn ms_ssim_scales(x: &Tensor<f32>, y: &Tensor<f32>, dynamic_range: f64, scales: usize) -> Result<f64> {
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() {
        return Err(invalid(format!("MS-SSIM supports 1 to {} scales", MS_SSIM_WEIGHTS.len())));
    }
    let (mut a, mut b) = pair(x, y, dynamic_range)?;
    let min = ms_ssim_min_size(scales);
    let div = 1usize << (scales - 1);
    if a.h < min || a.w < min {
        return Err(invalid(format!(
            "{scales}-scale MS-SSIM needs images of at least {min}x{min}, got {}x{}",
            a.h, a.w
        )));
    }
    if a.h % div != 0 || a.w % div != 0 {
        return Err(invalid(format!("image sides must be divisible by {div} for {scales} scales")));
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let mut result = 1.0;
    for (j, &wt) in weights.iter().enumerate() {
        let last = j + 1 == scales;
        let (win, sigma) = if a.h.min(a.w) >= WINDOW {
            (WINDOW, SIGMA)
        } else {
            let n = a.h.min(a.w);
            let n = if n % 2 == 0 { n - 1 } else { n };
            (n, SIGMA * n as f64 / WINDOW as f64)
        };
        let (full, cs) = ssim_terms(&a, &b, dynamic_range, win, sigma);
        let term = if last { full } else { cs };
        result *= term.max(0.0).powf(wt / total);
        if !last {
            a = a.downsample();
            b = b.downsample();
        }
    }
    Ok(result)
}
