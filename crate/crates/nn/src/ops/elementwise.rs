//! Broadcasting binary ops over equal-rank tensors where every axis either
//! matches or has extent 1.

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Mul,
}

pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(shape_err(
            "broadcast",
            format!("rank mismatch {a:?} vs {b:?}"),
        ));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(shape_err("broadcast", format!("{a:?} vs {b:?}"))),
        })
        .collect()
}

/// Row-major strides with zeros on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i] = if shape[i] == 1 && out[i] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visit every output position with the flat offsets into `a` and `b`.
fn for_each_index(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for flat in 0..n {
        f(flat, oa, ob);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

pub fn binary<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: BinaryOp) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| match op {
                BinaryOp::Add => x + y,
                BinaryOp::Mul => x * y,
            })
            .collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let out = broadcast_shape(a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let n: usize = out.iter().product();
    let mut data = vec![T::zero(); n];
    let (xa, xb) = (a.data(), b.data());
    for_each_index(&out, &sa, &sb, |i, ia, ib| {
        data[i] = match op {
            BinaryOp::Add => xa[ia] + xb[ib],
            BinaryOp::Mul => xa[ia] * xb[ib],
        };
    });
    Tensor::new(out, data)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary(a, b, BinaryOp::Add)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary(a, b, BinaryOp::Mul)
}

/// Gradients of `op(a, b)` with broadcast axes summed back out.
pub fn binary_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    op: BinaryOp,
    grad_out: &Tensor<T>,
    need: [bool; 2],
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let out = grad_out.shape();
    let sa = broadcast_strides(a.shape(), out);
    let sb = broadcast_strides(b.shape(), out);
    let mut ga = need[0].then(|| vec![T::zero(); a.len()]);
    let mut gb = need[1].then(|| vec![T::zero(); b.len()]);
    let g = grad_out.data();
    let (xa, xb) = (a.data(), b.data());
    for_each_index(out, &sa, &sb, |i, ia, ib| {
        let (da, db) = match op {
            BinaryOp::Add => (g[i], g[i]),
            BinaryOp::Mul => (g[i] * xb[ib], g[i] * xa[ia]),
        };
        if let Some(ga) = ga.as_mut() {
            ga[ia] += da;
        }
        if let Some(gb) = gb.as_mut() {
            gb[ib] += db;
        }
    });
    Ok((
        ga.map(|d| Tensor::new(a.shape().to_vec(), d)).transpose()?,
        gb.map(|d| Tensor::new(b.shape().to_vec(), d)).transpose()?,
    ))
}

/// Concatenate along `axis`; all other extents must agree.
pub fn concat<T: Scalar>(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| shape_err("concat", "no inputs"))?;
    let rank = first.ndim();
    if axis >= rank {
        return Err(shape_err("concat", format!("axis {axis} for rank {rank}")));
    }
    for p in parts {
        let ok = p.ndim() == rank
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !ok {
            return Err(shape_err(
                "concat",
                format!("{:?} vs {:?} along axis {axis}", p.shape(), first.shape()),
            ));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total_axis: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for p in parts {
            let blk = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * blk..(o + 1) * blk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total_axis;
    Tensor::new(shape, data)
}

/// Split `grad` back into pieces with the given extents along `axis`.
pub fn concat_backward<T: Scalar>(
    grad: &Tensor<T>,
    part_shapes: &[Vec<usize>],
    axis: usize,
) -> Result<Vec<Tensor<T>>> {
    let outer: usize = grad.shape()[..axis].iter().product();
    let inner: usize = grad.shape()[axis + 1..].iter().product();
    let total = grad.shape()[axis] * inner;
    let mut offset = 0;
    let mut out = Vec::with_capacity(part_shapes.len());
    for shape in part_shapes {
        let blk = shape[axis] * inner;
        let mut data = Vec::with_capacity(outer * blk);
        for o in 0..outer {
            data.extend_from_slice(&grad.data()[o * total + offset..o * total + offset + blk]);
        }
        offset += blk;
        out.push(Tensor::new(shape.clone(), data)?);
    }
    Ok(out)
}
