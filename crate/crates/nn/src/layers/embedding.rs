use crate::error::{NnError, Result};
use crate::init::{Init, INIT_STD};
use crate::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

use super::Ctx;

/// Learned per-class vectors, stored as a `[num_classes, dim]` table.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub num_classes: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &Init,
        name: &str,
        num_classes: usize,
        dim: usize,
    ) -> Result<Self> {
        let tname = format!("{name}.table");
        let table = store.register(
            &tname,
            init.normal(&tname, vec![num_classes, dim], INIT_STD),
            ParamKind::Trainable,
        )?;
        Ok(Self {
            table,
            num_classes,
            dim,
        })
    }

    pub fn check(&self, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(NnError::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }

    /// Row `label` of the table.
    pub fn row<T: Scalar>(&self, store: &ParamStore<T>, label: usize) -> Result<Tensor<T>> {
        self.check(label)?;
        let t = store.get(self.table);
        Tensor::new(
            vec![self.dim],
            t.data()[label * self.dim..(label + 1) * self.dim].to_vec(),
        )
    }

    /// `[labels.len(), dim]` on the tape; differentiable into the table.
    pub fn lookup<T: Scalar>(&self, cx: &mut Ctx<'_, T>, labels: &[usize]) -> Result<Var> {
        for &l in labels {
            self.check(l)?;
        }
        let table = cx.param(self.table);
        cx.tape.gather_rows(table, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_table_gives_unit_vectors() {
        let mut store = ParamStore::<f32>::new();
        let emb = Embedding::new(&mut store, &Init::new(1), "e", 3, 3).unwrap();
        let eye: Vec<f32> = (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        *store.get_mut(emb.table) = Tensor::new(vec![3, 3], eye).unwrap();
        assert_eq!(emb.row(&store, 1).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn out_of_range_label() {
        let mut store = ParamStore::<f32>::new();
        let emb = Embedding::new(&mut store, &Init::new(1), "e", 2, 4).unwrap();
        assert_eq!(
            emb.row(&store, 2).unwrap_err(),
            NnError::LabelOutOfRange {
                label: 2,
                num_classes: 2
            }
        );
    }

    #[test]
    fn seeded_rows_differ() {
        let mut store = ParamStore::<f32>::new();
        let emb = Embedding::new(&mut store, &Init::new(7), "e", 2, 32).unwrap();
        let (a, b) = (emb.row(&store, 0).unwrap(), emb.row(&store, 1).unwrap());
        assert!(a.data().iter().zip(b.data()).any(|(x, y)| x != y));
    }
}
