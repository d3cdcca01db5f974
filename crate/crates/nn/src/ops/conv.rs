//! 2-D convolution and its adjoint, lowered to GEMM via im2col.
//!
//! Cross-correlation convention, NCHW layout, square kernels. The batch axis
//! is processed in parallel; weight gradients are accumulated sample by
//! sample in order so the result does not depend on scheduling.

use crate::error::{arg_err, shape_err, Result};
use crate::parallel;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Spatial geometry shared by a convolution and its transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.kernel == 0 {
            return Err(arg_err(op, "kernel size must be at least 1"));
        }
        if self.stride == 0 {
            return Err(arg_err(op, "stride must be at least 1"));
        }
        Ok(())
    }

    /// Output extent of a forward convolution over `n` input positions.
    pub fn conv_out(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    /// Output extent of a transposed convolution over `n` input positions.
    pub fn transpose_out(&self, n: usize) -> Option<usize> {
        let full = (n - 1) * self.stride + self.kernel;
        (full > 2 * self.padding).then(|| full - 2 * self.padding)
    }
}

/// Unfold one `[c, h, w]` image into `[c*k*k, ho*wo]` patch columns.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    img: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeometry,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let k = g.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        let src = &img[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            srow[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch columns back into an image.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeometry,
    ho: usize,
    wo: usize,
    img: &mut [T],
) {
    let k = g.kernel;
    let plane = ho * wo;
    img.fill(T::zero());
    for ci in 0..c {
        let dst = &mut img[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            drow[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Scalar>(op: &'static str, bias: Option<&Tensor<T>>, n: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [n] {
            return Err(shape_err(
                op,
                format!("bias shape {:?}, expected [{n}]", b.shape()),
            ));
        }
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut [T], bias: Option<&Tensor<T>>, plane: usize) {
    if let Some(b) = bias {
        for (ch, &bv) in out.chunks_mut(plane).zip(b.data()) {
            ch.iter_mut().for_each(|v| *v += bv);
        }
    }
}

struct ConvDims {
    b: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    ho: usize,
    wo: usize,
}

fn conv2d_dims<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    g: ConvGeometry,
) -> Result<ConvDims> {
    const OP: &str = "conv2d";
    g.validate(OP)?;
    let [b, cin, h, w] = input.dims4(OP)?;
    let [cout, wcin, kh, kw] = weight.dims4(OP)?;
    if kh != g.kernel || kw != g.kernel {
        return Err(shape_err(
            OP,
            format!("weight kernel {kh}x{kw} does not match geometry k={}", g.kernel),
        ));
    }
    if wcin != cin {
        return Err(shape_err(
            OP,
            format!("input has {cin} channels, weight expects {wcin}"),
        ));
    }
    let ho = g
        .conv_out(h)
        .ok_or_else(|| shape_err(OP, format!("H + 2*padding < k for H={h}")))?;
    let wo = g
        .conv_out(w)
        .ok_or_else(|| shape_err(OP, format!("W + 2*padding < k for W={w}")))?;
    Ok(ConvDims {
        b,
        cin,
        h,
        w,
        cout,
        ho,
        wo,
    })
}

/// Cross-correlation of `input` `[B,Cin,H,W]` with `weight` `[Cout,Cin,k,k]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: ConvGeometry,
) -> Result<Tensor<T>> {
    let d = conv2d_dims(input, weight, g)?;
    check_bias("conv2d", bias, d.cout)?;
    let ckk = d.cin * g.kernel * g.kernel;
    let plane = d.ho * d.wo;
    let mut out = vec![T::zero(); d.b * d.cout * plane];
    let x = input.data();
    let wdata = weight.data();
    parallel::for_each_chunk_mut(&mut out, d.cout * plane, |s, ys| {
        let mut cols = vec![T::zero(); ckk * plane];
        let xs = &x[s * d.cin * d.h * d.w..(s + 1) * d.cin * d.h * d.w];
        im2col(xs, d.cin, d.h, d.w, g, d.ho, d.wo, &mut cols);
        T::gemm(
            d.cout,
            ckk,
            plane,
            T::one(),
            wdata,
            (ckk as isize, 1),
            &cols,
            (plane as isize, 1),
            T::zero(),
            ys,
            (plane as isize, 1),
        );
        add_bias(ys, bias, plane);
    });
    Tensor::new(vec![d.b, d.cout, d.ho, d.wo], out)
}

/// Gradients of [`conv2d`] given the upstream gradient `grad_out`.
pub struct ConvGrads<T: Scalar> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

fn bias_grad<T: Scalar>(dy: &[T], b: usize, c: usize, plane: usize) -> Vec<T> {
    let mut db = vec![T::zero(); c];
    for s in 0..b {
        for (co, acc) in db.iter_mut().enumerate() {
            let off = (s * c + co) * plane;
            *acc += dy[off..off + plane].iter().copied().sum::<T>();
        }
    }
    db
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    g: ConvGeometry,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let d = conv2d_dims(input, weight, g)?;
    if grad_out.shape() != [d.b, d.cout, d.ho, d.wo] {
        return Err(shape_err("conv2d_backward", "gradient shape mismatch"));
    }
    let ckk = d.cin * g.kernel * g.kernel;
    let plane = d.ho * d.wo;
    let in_len = d.cin * d.h * d.w;
    let x = input.data();
    let dy = grad_out.data();
    let wdata = weight.data();

    let dw = need[1].then(|| {
        let mut all_cols = vec![T::zero(); d.b * ckk * plane];
        parallel::for_each_chunk_mut(&mut all_cols, ckk * plane, |s, cols| {
            im2col(&x[s * in_len..(s + 1) * in_len], d.cin, d.h, d.w, g, d.ho, d.wo, cols);
        });
        let mut dw = vec![T::zero(); d.cout * ckk];
        for s in 0..d.b {
            // dW += dY_s [Cout, P] * cols_s^T [P, CKK]
            T::gemm(
                d.cout,
                plane,
                ckk,
                T::one(),
                &dy[s * d.cout * plane..(s + 1) * d.cout * plane],
                (plane as isize, 1),
                &all_cols[s * ckk * plane..(s + 1) * ckk * plane],
                (1, plane as isize),
                T::one(),
                &mut dw,
                (ckk as isize, 1),
            );
        }
        Tensor::new(weight.shape().to_vec(), dw)
    });

    let dx = need[0].then(|| {
        let mut dx = vec![T::zero(); d.b * in_len];
        parallel::for_each_chunk_mut(&mut dx, in_len, |s, dxs| {
            let mut dcols = vec![T::zero(); ckk * plane];
            // dcols = W^T [CKK, Cout] * dY_s [Cout, P]
            T::gemm(
                ckk,
                d.cout,
                plane,
                T::one(),
                wdata,
                (1, ckk as isize),
                &dy[s * d.cout * plane..(s + 1) * d.cout * plane],
                (plane as isize, 1),
                T::zero(),
                &mut dcols,
                (plane as isize, 1),
            );
            col2im(&dcols, d.cin, d.h, d.w, g, d.ho, d.wo, dxs);
        });
        Tensor::new(input.shape().to_vec(), dx)
    });

    let db = need[2].then(|| Tensor::new(vec![d.cout], bias_grad(dy, d.b, d.cout, plane)));
    Ok(ConvGrads {
        input: dx.transpose()?,
        weight: dw.transpose()?,
        bias: db.transpose()?,
    })
}

fn conv_t_dims<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    g: ConvGeometry,
) -> Result<ConvDims> {
    const OP: &str = "conv_transpose2d";
    g.validate(OP)?;
    let [b, cin, h, w] = input.dims4(OP)?;
    let [wcin, cout, kh, kw] = weight.dims4(OP)?;
    if kh != g.kernel || kw != g.kernel {
        return Err(shape_err(
            OP,
            format!("weight kernel {kh}x{kw} does not match geometry k={}", g.kernel),
        ));
    }
    if wcin != cin {
        return Err(shape_err(
            OP,
            format!("input has {cin} channels, weight expects {wcin}"),
        ));
    }
    let ho = g
        .transpose_out(h)
        .ok_or_else(|| shape_err(OP, "output would be empty"))?;
    let wo = g
        .transpose_out(w)
        .ok_or_else(|| shape_err(OP, "output would be empty"))?;
    Ok(ConvDims {
        b,
        cin,
        h,
        w,
        cout,
        ho,
        wo,
    })
}

/// Transposed convolution: the adjoint of [`conv2d`] with the same geometry.
/// `weight` is `[Cin, Cout, k, k]`.
pub fn conv_transpose2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: ConvGeometry,
) -> Result<Tensor<T>> {
    let d = conv_t_dims(input, weight, g)?;
    check_bias("conv_transpose2d", bias, d.cout)?;
    let okk = d.cout * g.kernel * g.kernel;
    let in_plane = d.h * d.w;
    let out_plane = d.ho * d.wo;
    let x = input.data();
    let wdata = weight.data();
    let mut out = vec![T::zero(); d.b * d.cout * out_plane];
    parallel::for_each_chunk_mut(&mut out, d.cout * out_plane, |s, ys| {
        let mut cols = vec![T::zero(); okk * in_plane];
        // cols = W^T [OKK, Cin] * x_s [Cin, HW]
        T::gemm(
            okk,
            d.cin,
            in_plane,
            T::one(),
            wdata,
            (1, okk as isize),
            &x[s * d.cin * in_plane..(s + 1) * d.cin * in_plane],
            (in_plane as isize, 1),
            T::zero(),
            &mut cols,
            (in_plane as isize, 1),
        );
        col2im(&cols, d.cout, d.ho, d.wo, g, d.h, d.w, ys);
        add_bias(ys, bias, out_plane);
    });
    Tensor::new(vec![d.b, d.cout, d.ho, d.wo], out)
}

pub fn conv_transpose2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    g: ConvGeometry,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let d = conv_t_dims(input, weight, g)?;
    if grad_out.shape() != [d.b, d.cout, d.ho, d.wo] {
        return Err(shape_err("conv_transpose2d_backward", "gradient shape mismatch"));
    }
    let okk = d.cout * g.kernel * g.kernel;
    let in_plane = d.h * d.w;
    let out_plane = d.ho * d.wo;
    let x = input.data();
    let dy = grad_out.data();
    let wdata = weight.data();

    let mut all_cols = vec![T::zero(); d.b * okk * in_plane];
    if need[0] || need[1] {
        parallel::for_each_chunk_mut(&mut all_cols, okk * in_plane, |s, cols| {
            let dys = &dy[s * d.cout * out_plane..(s + 1) * d.cout * out_plane];
            im2col(dys, d.cout, d.ho, d.wo, g, d.h, d.w, cols);
        });
    }

    let dx = need[0].then(|| {
        let mut dx = vec![T::zero(); d.b * d.cin * in_plane];
        parallel::for_each_chunk_mut(&mut dx, d.cin * in_plane, |s, dxs| {
            T::gemm(
                d.cin,
                okk,
                in_plane,
                T::one(),
                wdata,
                (okk as isize, 1),
                &all_cols[s * okk * in_plane..(s + 1) * okk * in_plane],
                (in_plane as isize, 1),
                T::zero(),
                dxs,
                (in_plane as isize, 1),
            );
        });
        Tensor::new(input.shape().to_vec(), dx)
    });

    let dw = need[1].then(|| {
        let mut dw = vec![T::zero(); d.cin * okk];
        for s in 0..d.b {
            // dW += x_s [Cin, HW] * cols_s^T [HW, OKK]
            T::gemm(
                d.cin,
                in_plane,
                okk,
                T::one(),
                &x[s * d.cin * in_plane..(s + 1) * d.cin * in_plane],
                (in_plane as isize, 1),
                &all_cols[s * okk * in_plane..(s + 1) * okk * in_plane],
                (1, in_plane as isize),
                T::one(),
                &mut dw,
                (okk as isize, 1),
            );
        }
        Tensor::new(weight.shape().to_vec(), dw)
    });

    let db = need[2].then(|| Tensor::new(vec![d.cout], bias_grad(dy, d.b, d.cout, out_plane)));
    Ok(ConvGrads {
        input: dx.transpose()?,
        weight: dw.transpose()?,
        bias: db.transpose()?,
    })
}
