use crate::tape::{Tape, Var};
use crate::tensor::{numel_of, Tensor};
use crate::{Result, Scalar, TensorError};

fn gather_kernel<T: Scalar>(
    x: &Tensor<T>,
    axis: usize,
    indices: &[usize],
) -> Result<Tensor<T>> {
    let shape = x.shape();
    let n = shape[axis];
    for &i in indices {
        if i >= n {
            return Err(TensorError::IndexOutOfBounds { op: "index_select", index: i, extent: n });
        }
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = indices.len();
    let mut data = vec![T::zero(); outer * indices.len() * inner];
    for o in 0..outer {
        for (j, &i) in indices.iter().enumerate() {
            let src = (o * n + i) * inner;
            let dst = (o * indices.len() + j) * inner;
            data[dst..dst + inner].copy_from_slice(&x.data()[src..src + inner]);
        }
    }
    Tensor::from_vec(out_shape, data)
}

impl<T: Scalar> Tape<T> {
    /// Gather along `axis` by explicit indices (repeats allowed); the
    /// gradient scatter-adds back.
    pub fn index_select(&mut self, v: Var, axis: usize, indices: Vec<usize>) -> Result<Var> {
        let x = self.value(v);
        if axis >= x.rank() {
            return Err(TensorError::InvalidAxis { op: "index_select", axis, rank: x.rank() });
        }
        let out = gather_kernel(x, axis, &indices)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                let ishape = parents[0].shape();
                let n = ishape[axis];
                let outer: usize = ishape[..axis].iter().product();
                let inner: usize = ishape[axis + 1..].iter().product();
                let mut dx = vec![T::zero(); numel_of(ishape)];
                for o in 0..outer {
                    for (j, &i) in indices.iter().enumerate() {
                        let dst = (o * n + i) * inner;
                        let src = (o * indices.len() + j) * inner;
                        for k in 0..inner {
                            dx[dst + k] = dx[dst + k] + g.data()[src + k];
                        }
                    }
                }
                Ok(vec![Some(Tensor::from_vec(ishape.to_vec(), dx)?)])
            }),
        ))
    }

    /// `out = base` with `src` rows added at `indices` along `axis`
    /// (duplicate indices accumulate). Differentiable in both operands.
    pub fn index_add(
        &mut self,
        base: Var,
        axis: usize,
        indices: Vec<usize>,
        src: Var,
    ) -> Result<Var> {
        let b = self.value(base);
        let s = self.value(src);
        if axis >= b.rank() {
            return Err(TensorError::InvalidAxis { op: "index_add", axis, rank: b.rank() });
        }
        let mut expect = b.shape().to_vec();
        expect[axis] = indices.len();
        if s.shape() != expect.as_slice() {
            return Err(TensorError::ShapeMismatch {
                op: "index_add",
                lhs: expect,
                rhs: s.shape().to_vec(),
            });
        }
        let n = b.shape()[axis];
        for &i in &indices {
            if i >= n {
                return Err(TensorError::IndexOutOfBounds { op: "index_add", index: i, extent: n });
            }
        }
        let outer: usize = b.shape()[..axis].iter().product();
        let inner: usize = b.shape()[axis + 1..].iter().product();
        let mut data = b.data().to_vec();
        for o in 0..outer {
            for (j, &i) in indices.iter().enumerate() {
                let dst = (o * n + i) * inner;
                let sb = (o * indices.len() + j) * inner;
                for k in 0..inner {
                    data[dst + k] = data[dst + k] + s.data()[sb + k];
                }
            }
        }
        let out = Tensor::from_vec(b.shape().to_vec(), data)?;
        Ok(self.push_op(
            out,
            &[base, src],
            Box::new(move |g, _, _, needs| {
                let gb = needs[0].then(|| g.clone());
                let gs = if needs[1] { Some(gather_kernel(g, axis, &indices)?) } else { None };
                Ok(vec![gb, gs])
            }),
        ))
    }
}
