use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{arg_err, NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn next_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

/// Index of an entry within one [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Optimized by gradient descent.
    Trainable,
    /// Persistent state that is not trained (running statistics).
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T: Scalar> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<T>,
}

/// Named, insertion-ordered registry of a network's tensors.
///
/// Names are unique and registration order is stable, which is what
/// checkpoints and optimizers key on.
#[derive(Debug, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    uid: u64,
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            uid: next_uid(),
            entries: self.entries.clone(),
            index: self.index.clone(),
        }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            uid: next_uid(),
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Process-unique identity of this store, used by tapes to cache leaves.
    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor<T>,
        kind: ParamKind,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(arg_err("register", format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id.0);
        self.entries.push(ParamEntry { name, kind, tensor });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(self.get(self.id(name)?))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let id = self.id(name)?;
        Ok(self.get_mut(id))
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.all_finite())
    }

    /// Same names and layout, values converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            uid: next_uid(),
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    kind: e.kind,
                    tensor: e.tensor.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Overwrite values from another store with the identical layout.
    pub fn copy_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(arg_err("copy_from", "stores have different layouts"));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.name != src.name || dst.tensor.shape() != src.tensor.shape() {
                return Err(arg_err(
                    "copy_from",
                    format!("entry `{}` does not match `{}`", dst.name, src.name),
                ));
            }
            dst.tensor = src.tensor.clone();
        }
        Ok(())
    }

    /// Bitwise equality of names, kinds, shapes and values.
    pub fn bitwise_eq(&self, other: &ParamStore<T>) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name
                    && a.kind == b.kind
                    && a.tensor.shape() == b.tensor.shape()
                    && a
                        .tensor
                        .data()
                        .iter()
                        .zip(b.tensor.data())
                        .all(|(x, y)| x.to_f64().map(f64::to_bits) == y.to_f64().map(f64::to_bits))
            })
    }
}
