//! Reverse-mode automatic differentiation over an eagerly evaluated tape.
//!
//! Every op computes its value immediately and appends a node recording its
//! inputs. [`Tape::backward`] walks the nodes in reverse and accumulates
//! vector-Jacobian products, skipping nodes that no trainable leaf reaches.

use std::collections::{HashMap, HashSet};

use crate::error::{arg_err, shape_err, NnError, Result};
use crate::ops::{self, Activation, BinaryOp, ConvGeometry, PoolKind};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T: Scalar> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        g: ConvGeometry,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        g: ConvGeometry,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Binary {
        a: Var,
        b: Var,
        op: BinaryOp,
    },
    Scale {
        x: Var,
        factor: T,
    },
    Shift {
        x: Var,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    Pool {
        x: Var,
        kind: PoolKind,
        argmax: Option<Vec<usize>>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Reshape {
        x: Var,
    },
    Normalize {
        x: Var,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Gather {
        table: Var,
        rows: Vec<usize>,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
}

#[derive(Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation graph. Single owner; build one per step.
#[derive(Debug)]
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<(u64, ParamId), Var>,
    frozen: HashSet<u64>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            frozen: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Input value; gradients flow to it iff `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Parameters of `store` will be placed on this tape without gradients.
    pub fn freeze(&mut self, store: &ParamStore<T>) {
        self.frozen.insert(store.uid());
    }

    /// Leaf for a store entry. Repeated requests return the same node so
    /// gradients of shared parameters accumulate in one place.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let key = (store.uid(), id);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let rg = store.entry(id).kind == ParamKind::Trainable && !self.frozen.contains(&store.uid());
        let v = self.leaf(store.get(id).clone(), rg);
        self.params.insert(key, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, g: ConvGeometry) -> Result<Var> {
        let value = ops::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), g)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::Conv2d { x, w, b, g }, rg))
    }

    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        g: ConvGeometry,
    ) -> Result<Var> {
        let value =
            ops::conv_transpose2d(self.value(x), self.value(w), b.map(|b| self.value(b)), g)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, g }, rg))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let value = ops::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let value = ops::binary(self.value(a), self.value(b), op)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Binary { a, b, op }, rg))
    }

    /// Broadcasting sum.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Add)
    }

    /// Broadcasting product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Mul)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = lit::<T>(factor);
        let value = self.value(x).map(|v| v * f);
        let rg = self.rg(x);
        self.push(value, Op::Scale { x, factor: f }, rg)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = lit::<T>(c);
        let value = self.value(x).map(|v| v + c);
        let rg = self.rg(x);
        self.push(value, Op::Shift { x }, rg)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let value = ops::activation(self.value(x), kind);
        let rg = self.rg(x);
        self.push(value, Op::Act { x, kind }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Softplus)
    }

    pub fn pool(&mut self, x: Var, kind: PoolKind) -> Result<Var> {
        let pooled = ops::pool_with_indices(self.value(x), kind)?;
        let rg = self.rg(x);
        Ok(self.push(
            pooled.output,
            Op::Pool {
                x,
                kind,
                argmax: pooled.argmax,
            },
            rg,
        ))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = ops::concat(&values, axis)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Per-channel `(x - mean) / sqrt(var + eps)` on a `[B,C,H,W]` value.
    ///
    /// With `batch_stats` the statistics are treated as functions of `x`
    /// (training-mode batch norm); otherwise they are constants.
    pub fn normalize(
        &mut self,
        x: Var,
        mean: &[T],
        var: &[T],
        eps: f64,
        batch_stats: bool,
    ) -> Result<Var> {
        let (value, inv_std) = ops::normalize(self.value(x), mean, var, eps)?;
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::Normalize {
                x,
                inv_std,
                batch_stats,
            },
            rg,
        ))
    }

    /// Rows of a `[N, D]` table, giving `[rows.len(), D]`.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let [n, d] = t.dims2("gather_rows")?;
        if rows.is_empty() {
            return Err(arg_err("gather_rows", "no rows requested"));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= n {
                return Err(NnError::LabelOutOfRange {
                    label: r,
                    num_classes: n,
                });
            }
            data.extend_from_slice(&t.data()[r * d..(r + 1) * d]);
        }
        let value = Tensor::new(vec![rows.len(), d], data)?;
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / lit(t.len() as f64));
        let rg = self.rg(x);
        self.push(value, Op::Mean { x }, rg)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let out = self.value(loss);
        if out.len() != 1 {
            return Err(NnError::NotScalar(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(out.shape().to_vec()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let contributions = self.vjp(node, &g)?;
            for (v, dv) in contributions {
                if !self.rg(v) {
                    continue;
                }
                match grads[v.0].as_mut() {
                    Some(acc) => acc.add_assign(&dv)?,
                    None => grads[v.0] = Some(dv),
                }
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
            params: self.params.clone(),
        })
    }

    fn vjp(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, g: geo } => {
                let need = [self.rg(*x), self.rg(*w), b.is_some_and(|b| self.rg(b))];
                let gr = ops::conv2d_backward(self.value(*x), self.value(*w), g, *geo, need)?;
                push_some(&mut out, *x, gr.input);
                push_some(&mut out, *w, gr.weight);
                if let Some(b) = b {
                    push_some(&mut out, *b, gr.bias);
                }
            }
            Op::ConvTranspose2d { x, w, b, g: geo } => {
                let need = [self.rg(*x), self.rg(*w), b.is_some_and(|b| self.rg(b))];
                let gr =
                    ops::conv_transpose2d_backward(self.value(*x), self.value(*w), g, *geo, need)?;
                push_some(&mut out, *x, gr.input);
                push_some(&mut out, *w, gr.weight);
                if let Some(b) = b {
                    push_some(&mut out, *b, gr.bias);
                }
            }
            Op::Linear { x, w, b } => {
                let need = [self.rg(*x), self.rg(*w), b.is_some_and(|b| self.rg(b))];
                let gr = ops::linear_backward(self.value(*x), self.value(*w), g, need)?;
                push_some(&mut out, *x, gr.input);
                push_some(&mut out, *w, gr.weight);
                if let Some(b) = b {
                    push_some(&mut out, *b, gr.bias);
                }
            }
            Op::Binary { a, b, op } => {
                let need = [self.rg(*a), self.rg(*b)];
                let (ga, gb) =
                    ops::binary_backward(self.value(*a), self.value(*b), *op, g, need)?;
                push_some(&mut out, *a, ga);
                push_some(&mut out, *b, gb);
            }
            Op::Scale { x, factor } => out.push((*x, g.map(|v| v * *factor))),
            Op::Shift { x } => out.push((*x, g.clone())),
            Op::Act { x, kind } => {
                let xs = self.value(*x).data();
                let ys = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(xs.iter().zip(ys))
                    .map(|(&gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                out.push((*x, Tensor::new(g.shape().to_vec(), data)?));
            }
            Op::Pool { x, kind, argmax } => {
                let dx =
                    ops::pool_backward(self.value(*x).shape(), *kind, argmax.as_deref(), g)?;
                out.push((*x, dx));
            }
            Op::Concat { parts, axis } => {
                let shapes: Vec<Vec<usize>> =
                    parts.iter().map(|&p| self.value(p).shape().to_vec()).collect();
                let pieces = ops::concat_backward(g, &shapes, *axis)?;
                out.extend(parts.iter().copied().zip(pieces));
            }
            Op::Reshape { x } => {
                out.push((*x, g.reshape(self.value(*x).shape().to_vec())?));
            }
            Op::Normalize {
                x,
                inv_std,
                batch_stats,
            } => {
                let dx = ops::normalize_backward(&node.value, inv_std, g, *batch_stats)?;
                out.push((*x, dx));
            }
            Op::Gather { table, rows } => {
                let shape = self.value(*table).shape().to_vec();
                let d = shape[1];
                let mut dt = Tensor::zeros(shape);
                for (i, &r) in rows.iter().enumerate() {
                    let src = &g.data()[i * d..(i + 1) * d];
                    dt.data_mut()[r * d..(r + 1) * d]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(a, &b)| *a += b);
                }
                out.push((*table, dt));
            }
            Op::Sum { x } => {
                let gv = g.data()[0];
                out.push((*x, Tensor::full(self.value(*x).shape().to_vec(), gv)));
            }
            Op::Mean { x } => {
                let t = self.value(*x);
                let gv = g.data()[0] / lit(t.len() as f64);
                out.push((*x, Tensor::full(t.shape().to_vec(), gv)));
            }
        }
        Ok(out)
    }
}

fn push_some<T: Scalar>(out: &mut Vec<(Var, Tensor<T>)>, v: Var, g: Option<Tensor<T>>) {
    if let Some(g) = g {
        out.push((v, g));
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
    params: HashMap<(u64, ParamId), Var>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `v`; zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0].clone()))
    }

    /// Gradients for every trainable entry of `store`, indexed by [`ParamId`].
    /// Buffers map to `None`; trainable entries the loss never touched get
    /// zeros.
    pub fn for_store(&self, store: &ParamStore<T>) -> ParamGrads<T> {
        let grads = store
            .ids()
            .map(|id| {
                let entry = store.entry(id);
                (entry.kind == ParamKind::Trainable).then(|| {
                    self.params
                        .get(&(store.uid(), id))
                        .and_then(|v| self.grads[v.0].clone())
                        .unwrap_or_else(|| Tensor::zeros(entry.tensor.shape().to_vec()))
                })
            })
            .collect();
        ParamGrads { grads }
    }
}

/// Per-entry gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct ParamGrads<T: Scalar> {
    pub grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::all_finite)
    }

    /// Element-wise sum of two gradient sets with the same layout.
    pub fn accumulate(&mut self, other: &ParamGrads<T>) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(shape_err("accumulate", "gradient sets differ in length"));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b)?,
                (None, None) => {}
                _ => return Err(shape_err("accumulate", "gradient sets differ in layout")),
            }
        }
        Ok(())
    }
}
