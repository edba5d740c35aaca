//! Named parameter storage shared across training steps.
//!
//! Parameters live outside any tape; a [`Binder`] injects them as leaves
//! into the tape of the current step and copies gradients back out after
//! `backward`.

use std::collections::BTreeMap;

use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;
use crate::{Result, Scalar, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub usize);

pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub trainable: bool,
}

/// Registration-ordered parameter table with unique names.
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), index: BTreeMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Invalid {
                op: "register",
                msg: format!("duplicate parameter name {name}"),
            });
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id.0);
        self.params.push(Param { name, value, grad: None, trainable: true });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) {
        debug_assert_eq!(value.shape(), self.params[id.0].value.shape());
        self.params[id.0].value = value;
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params[id.0].grad.as_ref()
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    /// Ids in registration order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Toggle trainability for every parameter whose name starts with
    /// `prefix`; returns how many matched.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.trainable = trainable;
                n += 1;
            }
        }
        n
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}

/// Per-step memoized parameter-to-leaf binding.
pub struct Binder {
    bound: Vec<Option<Var>>,
}

impl Binder {
    pub fn new<T: Scalar>(store: &ParamStore<T>) -> Self {
        Self { bound: vec![None; store.len()] }
    }

    /// Leaf var for a parameter; repeated calls return the same node.
    pub fn var<T: Scalar>(
        &mut self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        id: ParamId,
    ) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let p = store.get(id);
        let v = tape.leaf(p.value.clone(), p.trainable);
        self.bound[id.0] = Some(v);
        v
    }

    /// Copy gradients from a finished backward pass into the store.
    /// With `accumulate`, adds onto existing gradients.
    pub fn collect_grads<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        grads: &Gradients<T>,
        accumulate: bool,
    ) -> Result<()> {
        for (slot, var) in self.bound.iter().enumerate() {
            let Some(var) = var else { continue };
            let Some(g) = grads.get(*var) else { continue };
            let id = ParamId(slot);
            let new = match (accumulate, store.grad(id)) {
                (true, Some(old)) => old.zip_map(g, |a, b| a + b, "grad_accum")?,
                _ => g.clone(),
            };
            store.params[slot].grad = Some(new);
        }
        Ok(())
    }
}
