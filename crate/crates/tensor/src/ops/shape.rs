use crate::tape::{Tape, Var};
use crate::tensor::{numel_of, strides_of, Tensor};
use crate::{Result, Scalar, TensorError};

impl<T: Scalar> Tape<T> {
    pub fn reshape(&mut self, v: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(v).reshape(shape)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                Ok(vec![Some(g.reshape(parents[0].shape().to_vec())?)])
            }),
        ))
    }

    pub fn permute(&mut self, v: Var, perm: &[usize]) -> Result<Var> {
        let out = self.value(v).permute(perm)?;
        let mut inverse = vec![0usize; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, _, _, _| Ok(vec![Some(g.permute(&inverse)?)])),
        ))
    }

    pub fn transpose_last(&mut self, v: Var) -> Result<Var> {
        let r = self.value(v).rank();
        let mut perm: Vec<usize> = (0..r).collect();
        if r < 2 {
            return Err(TensorError::BadShape {
                op: "transpose_last",
                expected: "rank >= 2".into(),
                got: self.value(v).shape().to_vec(),
            });
        }
        perm.swap(r - 2, r - 1);
        self.permute(v, &perm)
    }

    pub fn broadcast(&mut self, v: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(v).broadcast_to(shape)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                Ok(vec![Some(g.reduce_to_shape(parents[0].shape())?)])
            }),
        ))
    }

    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Invalid { op: "concat", msg: "no inputs".into() });
        }
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidAxis { op: "concat", axis, rank: first.len() });
        }
        let mut extents = Vec::with_capacity(parts.len());
        let mut total = 0usize;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            extents.push(s[axis]);
            total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![T::zero(); numel_of(&out_shape)];
        let mut offset = 0usize;
        for (&p, &ext) in parts.iter().zip(&extents) {
            let src = self.value(p).data();
            for o in 0..outer {
                let dst_base = (o * total + offset) * inner;
                let src_base = o * ext * inner;
                data[dst_base..dst_base + ext * inner]
                    .copy_from_slice(&src[src_base..src_base + ext * inner]);
            }
            offset += ext;
        }
        let out = Tensor::from_vec(out_shape, data)?;
        let ext2 = extents.clone();
        Ok(self.push_op(
            out,
            parts,
            Box::new(move |g, parents, _, needs| {
                let mut grads = Vec::with_capacity(parents.len());
                let mut offset = 0usize;
                for (i, &ext) in ext2.iter().enumerate() {
                    if needs[i] {
                        grads.push(Some(slice_kernel(g, axis, offset, ext)?));
                    } else {
                        grads.push(None);
                    }
                    offset += ext;
                }
                Ok(grads)
            }),
        ))
    }

    pub fn slice(&mut self, v: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let in_shape = self.value(v).shape().to_vec();
        if axis >= in_shape.len() {
            return Err(TensorError::InvalidAxis { op: "slice", axis, rank: in_shape.len() });
        }
        if start + len > in_shape[axis] {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice",
                index: start + len,
                extent: in_shape[axis],
            });
        }
        let out = slice_kernel(self.value(v), axis, start, len)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                // Embed the slice gradient into a zero tensor of the input shape.
                let ishape = parents[0].shape();
                let outer: usize = ishape[..axis].iter().product();
                let inner: usize = ishape[axis + 1..].iter().product();
                let n = ishape[axis];
                let mut data = vec![T::zero(); numel_of(ishape)];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    let src = o * len * inner;
                    data[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[src..src + len * inner]);
                }
                Ok(vec![Some(Tensor::from_vec(ishape.to_vec(), data)?)])
            }),
        ))
    }

    /// Insert a size-1 axis.
    pub fn unsqueeze(&mut self, v: Var, axis: usize) -> Result<Var> {
        let mut shape = self.value(v).shape().to_vec();
        shape.insert(axis.min(shape.len()), 1);
        self.reshape(v, shape)
    }

    /// Stack same-shape tensors along a new leading `axis`.
    pub fn stack(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        let unsq: Vec<Var> = parts
            .iter()
            .map(|&p| self.unsqueeze(p, axis))
            .collect::<Result<_>>()?;
        self.concat(axis, &unsq)
    }
}

pub(crate) fn slice_kernel<T: Scalar>(
    x: &Tensor<T>,
    axis: usize,
    start: usize,
    len: usize,
) -> Result<Tensor<T>> {
    let shape = x.shape();
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let mut data = vec![T::zero(); outer * len * inner];
    for o in 0..outer {
        let src = (o * n + start) * inner;
        let dst = o * len * inner;
        data[dst..dst + len * inner].copy_from_slice(&x.data()[src..src + len * inner]);
    }
    let _ = strides_of(shape);
    Tensor::from_vec(out_shape, data)
}
