use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `input [B,Din] * weight^T [Din,Dout] + bias`.
pub fn linear<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let [b, din] = input.dims2("linear")?;
    let [dout, wdin] = weight.dims2("linear")?;
    if din != wdin {
        return Err(shape_err(
            "linear",
            format!("input width {din}, weight expects {wdin}"),
        ));
    }
    let mut out = vec![T::zero(); b * dout];
    if let Some(bias) = bias {
        if bias.shape() != [dout] {
            return Err(shape_err(
                "linear",
                format!("bias shape {:?}, expected [{dout}]", bias.shape()),
            ));
        }
        for row in out.chunks_mut(dout) {
            row.copy_from_slice(bias.data());
        }
    }
    T::gemm(
        b,
        din,
        dout,
        T::one(),
        input.data(),
        (din as isize, 1),
        weight.data(),
        (1, din as isize),
        T::one(),
        &mut out,
        (dout as isize, 1),
    );
    Tensor::new(vec![b, dout], out)
}

pub struct LinearGrads<T: Scalar> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need: [bool; 3],
) -> Result<LinearGrads<T>> {
    let [b, din] = input.dims2("linear_backward")?;
    let [dout, _] = weight.dims2("linear_backward")?;
    let g = grad_out.data();
    let dx = need[0].then(|| {
        let mut dx = vec![T::zero(); b * din];
        T::gemm(
            b,
            dout,
            din,
            T::one(),
            g,
            (dout as isize, 1),
            weight.data(),
            (din as isize, 1),
            T::zero(),
            &mut dx,
            (din as isize, 1),
        );
        Tensor::new(vec![b, din], dx)
    });
    let dw = need[1].then(|| {
        let mut dw = vec![T::zero(); dout * din];
        T::gemm(
            dout,
            b,
            din,
            T::one(),
            g,
            (1, dout as isize),
            input.data(),
            (din as isize, 1),
            T::zero(),
            &mut dw,
            (din as isize, 1),
        );
        Tensor::new(vec![dout, din], dw)
    });
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); dout];
        for row in g.chunks(dout) {
            db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
        }
        Tensor::new(vec![dout], db)
    });
    Ok(LinearGrads {
        input: dx.transpose()?,
        weight: dw.transpose()?,
        bias: db.transpose()?,
    })
}
