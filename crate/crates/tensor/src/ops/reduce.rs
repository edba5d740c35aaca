use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Result, Scalar, TensorError};

impl<T: Scalar> Tape<T> {
    /// Sum of all elements -> scalar.
    pub fn sum_all(&mut self, v: Var) -> Var {
        let out = Tensor::scalar(self.value(v).sum());
        self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                let gv = g.item();
                Ok(vec![Some(Tensor::full(parents[0].shape(), gv))])
            }),
        )
    }

    /// Mean of all elements -> scalar.
    pub fn mean_all(&mut self, v: Var) -> Var {
        let n = self.value(v).numel();
        let inv = T::of_f64(1.0 / n as f64);
        let out = Tensor::scalar(self.value(v).sum() * inv);
        self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                let gv = g.item() * inv;
                Ok(vec![Some(Tensor::full(parents[0].shape(), gv))])
            }),
        )
    }

    pub fn sum_axis(&mut self, v: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let rank = self.value(v).rank();
        if axis >= rank {
            return Err(TensorError::InvalidAxis { op: "sum_axis", axis, rank });
        }
        let mut out = self.value(v).sum_axis(axis)?;
        if keepdim {
            let mut s = self.value(v).shape().to_vec();
            s[axis] = 1;
            out = out.reshape(s)?;
        }
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                let ishape = parents[0].shape();
                let mut keep = ishape.to_vec();
                keep[axis] = 1;
                let g = g.reshape(keep)?;
                Ok(vec![Some(g.broadcast_to(ishape)?)])
            }),
        ))
    }

    pub fn mean_axis(&mut self, v: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let rank = self.value(v).rank();
        if axis >= rank {
            return Err(TensorError::InvalidAxis { op: "mean_axis", axis, rank });
        }
        let n = self.value(v).shape()[axis];
        let s = self.sum_axis(v, axis, keepdim)?;
        Ok(self.scale(s, T::of_f64(1.0 / n as f64)))
    }
}
