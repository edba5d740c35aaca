//! Reverse-mode autodiff tape.
//!
//! Operations append nodes in evaluation order (parents always precede
//! consumers), and `backward` walks the record once in reverse, so every
//! node is visited exactly once.

use crate::tensor::Tensor;
use crate::{Result, Scalar, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: u32,
}

/// Computes gradients w.r.t. each parent given (grad_out, parent values,
/// output value, per-parent needs mask). Entries may be `None` where the
/// mask is false or no gradient exists.
pub(crate) type BackwardFn<T> = Box<
    dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>, &[bool]) -> Result<Vec<Option<Tensor<T>>>>
        + Send,
>;

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub parents: Vec<u32>,
    pub grad_fn: Option<BackwardFn<T>>,
    pub needs_grad: bool,
}

pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.id as usize).and_then(|g| g.as_ref())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf holding `value`; gradients are tracked when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_node(value, Vec::new(), None, requires_grad)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar_const(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.id as usize].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.id as usize].needs_grad
    }

    pub(crate) fn push_node(
        &mut self,
        value: Tensor<T>,
        parents: Vec<u32>,
        grad_fn: Option<BackwardFn<T>>,
        needs_grad: bool,
    ) -> Var {
        let id = u32::try_from(self.nodes.len()).expect("tape overflow");
        self.nodes.push(Node { value, parents, grad_fn, needs_grad });
        Var { id }
    }

    /// Record an op: `needs_grad` is inherited from the parents, and the
    /// backward closure is only kept when some parent wants gradients.
    pub(crate) fn push_op(
        &mut self,
        value: Tensor<T>,
        parents: &[Var],
        grad_fn: BackwardFn<T>,
    ) -> Var {
        let needs = parents.iter().any(|p| self.needs_grad(*p));
        let ids: Vec<u32> = parents.iter().map(|p| p.id).collect();
        self.push_node(value, ids, needs.then_some(grad_fn), needs)
    }

    /// Reverse sweep from a scalar loss. Returns gradients for every node
    /// that required them (leaves included).
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_val = self.value(loss);
        if loss_val.numel() != 1 {
            return Err(TensorError::LossNotScalar { got: loss_val.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.id as usize] = Some(Tensor::full(loss_val.shape(), T::one()));

        for id in (0..=loss.id as usize).rev() {
            let node = &self.nodes[id];
            if node.grad_fn.is_none() || grads[id].is_none() {
                continue;
            }
            let grad_out = grads[id].clone().unwrap();
            let parent_vals: Vec<&Tensor<T>> =
                node.parents.iter().map(|&p| &self.nodes[p as usize].value).collect();
            let needs: Vec<bool> =
                node.parents.iter().map(|&p| self.nodes[p as usize].needs_grad).collect();
            let parent_grads =
                (node.grad_fn.as_ref().unwrap())(&grad_out, &parent_vals, &node.value, &needs)?;
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, g) in node.parents.iter().zip(parent_grads) {
                let p = *p as usize;
                if !self.nodes[p].needs_grad {
                    continue;
                }
                if let Some(g) = g {
                    debug_assert_eq!(
                        g.shape(),
                        self.nodes[p].value.shape(),
                        "gradient shape mismatch for node {p}"
                    );
                    grads[p] = Some(match grads[p].take() {
                        Some(acc) => acc.zip_map(&g, |a, b| a + b, "grad_accum")?,
                        None => g,
                    });
                }
            }
            // Intermediate gradients are not needed once consumed.
            if !self.nodes[id].parents.is_empty() {
                grads[id] = None;
            }
        }
        Ok(Gradients { grads })
    }
}
