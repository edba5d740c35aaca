//! Immutable dense row-major tensors and their raw compute kernels.
//!
//! Everything here is pure forward arithmetic; the tape in [`crate::tape`]
//! wraps these kernels with gradient rules.

use std::sync::Arc;

use rayon::prelude::*;

use crate::{Result, Scalar, TensorError};

/// Dense n-dimensional array. Cloning is cheap (shared buffer); all
/// operations produce new tensors, so a buffer is never mutated after
/// construction.
#[derive(Clone, Debug)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if numel_of(&shape) != data.len() {
            return Err(TensorError::BadShape {
                op: "from_vec",
                expected: format!("{} elements", numel_of(&shape)),
                got: vec![data.len()],
            });
        }
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: Arc::new(vec![T::zero(); numel_of(shape)]) }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self { shape: shape.to_vec(), data: Arc::new(vec![v; numel_of(shape)]) }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![], data: Arc::new(vec![v]) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// The single element of a rank-0 or one-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn at(&self, idx: &[usize]) -> T {
        debug_assert_eq!(idx.len(), self.rank());
        let st = strides_of(&self.shape);
        let off: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
        self.data[off]
    }

    /// Same buffer, new shape (element counts must agree).
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        if numel_of(&shape) != self.numel() {
            return Err(TensorError::BadShape {
                op: "reshape",
                expected: format!("{} elements (shape {:?})", self.numel(), self.shape),
                got: shape,
            });
        }
        Ok(Self { shape, data: Arc::clone(&self.data) })
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        let data: Vec<T> = self.data.iter().map(|&x| f(x)).collect();
        Self { shape: self.shape.clone(), data: Arc::new(data) }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T, op: &'static str) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let data: Vec<T> =
            self.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data: Arc::new(data) })
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    /// Frobenius / L2 norm over all elements.
    pub fn norm2(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
    }

    pub fn transpose2(&self) -> Result<Self> {
        let r = self.rank();
        if r < 2 {
            return Err(TensorError::BadShape {
                op: "transpose2",
                expected: "rank >= 2".into(),
                got: self.shape.clone(),
            });
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(&perm)
    }

    /// Materialized axis permutation.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        if perm.len() != r || {
            let mut seen = vec![false; r];
            perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true))
        } {
            return Err(TensorError::Invalid {
                op: "permute",
                msg: format!("invalid permutation {perm:?} for rank {r}"),
            });
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_st = strides_of(&self.shape);
        let dst_st = strides_of(&new_shape);
        let mut out = vec![T::zero(); self.numel()];
        // Walk destination linearly, compute matching source offset.
        let mut idx = vec![0usize; r];
        for (dst_off, slot) in out.iter_mut().enumerate() {
            let mut rem = dst_off;
            let mut src_off = 0usize;
            for d in 0..r {
                idx[d] = rem / dst_st[d];
                rem %= dst_st[d];
                src_off += idx[d] * src_st[perm[d]];
            }
            *slot = self.data[src_off];
        }
        Ok(Self { shape: new_shape, data: Arc::new(out) })
    }

    /// Broadcast this tensor to `shape` (numpy alignment rules).
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let out_n = numel_of(shape);
        let mut out = vec![T::zero(); out_n];
        let pad = shape.len() - self.rank();
        let src_st = strides_of(&self.shape);
        let dst_st = strides_of(shape);
        for (dst_off, slot) in out.iter_mut().enumerate() {
            let mut rem = dst_off;
            let mut src_off = 0usize;
            for d in 0..shape.len() {
                let i = rem / dst_st[d];
                rem %= dst_st[d];
                if d >= pad {
                    let sd = d - pad;
                    if self.shape[sd] != 1 {
                        if self.shape[sd] != shape[d] {
                            return Err(TensorError::ShapeMismatch {
                                op: "broadcast_to",
                                lhs: self.shape.clone(),
                                rhs: shape.to_vec(),
                            });
                        }
                        src_off += i * src_st[sd];
                    }
                }
            }
            *slot = self.data[src_off];
        }
        Tensor::from_vec(shape.to_vec(), out)
    }

    /// Sum-reduce `self` down to `shape` (inverse of broadcasting), used by
    /// gradient rules of broadcasted binary ops.
    pub fn reduce_to_shape(&self, shape: &[usize]) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let pad = self.rank() - shape.len();
        let dst_st = strides_of(shape);
        let src_st = strides_of(&self.shape);
        let mut out = vec![T::zero(); numel_of(shape)];
        for (src_off, &v) in self.data.iter().enumerate() {
            let mut rem = src_off;
            let mut dst_off = 0usize;
            for d in 0..self.rank() {
                let i = rem / src_st[d];
                rem %= src_st[d];
                if d >= pad && shape[d - pad] != 1 {
                    dst_off += i * dst_st[d - pad];
                }
            }
            out[dst_off] = out[dst_off] + v;
        }
        Tensor::from_vec(shape.to_vec(), out)
    }
}

pub(crate) fn broadcast_shapes(a: &[usize], b: &[usize], op: &'static str) -> Result<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0usize; r];
    for d in 0..r {
        let da = if d + a.len() >= r { a[d + a.len() - r] } else { 1 };
        let db = if d + b.len() >= r { b[d + b.len() - r] } else { 1 };
        out[d] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() });
        };
    }
    Ok(out)
}

impl<T: Scalar> Tensor<T> {
    /// Elementwise binary op with numpy-style broadcasting.
    pub fn binary_broadcast(
        &self,
        other: &Self,
        f: impl Fn(T, T) -> T + Sync,
        op: &'static str,
    ) -> Result<Self> {
        if self.shape == other.shape {
            let data: Vec<T> =
                self.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect();
            return Tensor::from_vec(self.shape.clone(), data);
        }
        let shape = broadcast_shapes(&self.shape, &other.shape, op)?;
        let a = self.broadcast_to(&shape)?;
        let b = other.broadcast_to(&shape)?;
        let data: Vec<T> = a.data.iter().zip(b.data.iter()).map(|(&a, &b)| f(a, b)).collect();
        Tensor::from_vec(shape, data)
    }

    /// Decompose shape around `axis` into (outer, extent, inner) for
    /// axis-wise kernels.
    pub(crate) fn axis_split(&self, axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis { op, axis, rank: self.rank() });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        Ok((outer, n, inner))
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        let (outer, n, inner) = self.axis_split(axis, "sum_axis")?;
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    out[obase + i] = out[obase + i] + self.data[base + i];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Tensor::from_vec(shape, out)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Self> {
        let n = self.shape[axis.min(self.rank().saturating_sub(1))];
        Ok(self.sum_axis(axis)?.scale(T::one() / T::of_f64(n as f64)))
    }

    pub fn max_axis(&self, axis: usize) -> Result<Self> {
        let (outer, n, inner) = self.axis_split(axis, "max_axis")?;
        let mut out = vec![T::neg_infinity(); outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    if self.data[base + i] > out[obase + i] {
                        out[obase + i] = self.data[base + i];
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Tensor::from_vec(shape, out)
    }

    /// Batched matrix product with broadcasting over leading dimensions:
    /// `(..., m, k) x (..., k, n) -> (..., m, n)`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() < 2 || other.rank() < 2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, ka) = (self.shape[self.rank() - 2], self.shape[self.rank() - 1]);
        let (kb, n) = (other.shape[other.rank() - 2], other.shape[other.rank() - 1]);
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let batch = broadcast_shapes(
            &self.shape[..self.rank() - 2],
            &other.shape[..other.rank() - 2],
            "matmul",
        )?;
        let nb = numel_of(&batch);

        // Materialize broadcast operands as (nb, m, k) and (nb, k, n).
        let mut ls = batch.clone();
        ls.extend_from_slice(&[m, ka]);
        let mut rs = batch.clone();
        rs.extend_from_slice(&[kb, n]);
        let a = self.broadcast_to(&ls)?;
        let b = other.broadcast_to(&rs)?;

        let mut out = vec![T::zero(); nb * m * n];
        let work = nb * m * n * ka;
        let kernel = |row: usize, c_row: &mut [T]| {
            let bi = row / m;
            let i = row % m;
            let a_row = &a.data[(bi * m + i) * ka..(bi * m + i + 1) * ka];
            let b_mat = &b.data[bi * ka * n..(bi + 1) * ka * n];
            for (kk, &av) in a_row.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let b_row = &b_mat[kk * n..(kk + 1) * n];
                for (c, &bv) in c_row.iter_mut().zip(b_row) {
                    *c = *c + av * bv;
                }
            }
        };
        if work > 1 << 17 {
            out.par_chunks_mut(n).enumerate().for_each(|(row, c_row)| kernel(row, c_row));
        } else {
            for (row, c_row) in out.chunks_mut(n).enumerate() {
                kernel(row, c_row);
            }
        }
        let mut shape = batch;
        shape.extend_from_slice(&[m, n]);
        Tensor::from_vec(shape, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn matmul_identity() {
        let a = T64::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = T64::from_vec(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_expanded() {
        let a = T64::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = T64::from_vec(vec![2, 1], vec![5.0, 6.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let a = T64::zeros(&[2, 3]);
        let b = T64::zeros(&[4, 2]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn matmul_batched_broadcast() {
        // (2, 2, 3) x (3, 2): rhs broadcast over the batch dim.
        let a = T64::from_vec(vec![2, 2, 3], (0..12).map(|x| x as f64).collect()).unwrap();
        let b = T64::from_vec(vec![3, 2], (0..6).map(|x| x as f64).collect()).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        // first row: [0,1,2] x [[0,1],[2,3],[4,5]] = [10, 13]
        assert_eq!(c.data()[0], 10.0);
        assert_eq!(c.data()[1], 13.0);
    }

    #[test]
    fn permute_roundtrip() {
        let a = T64::from_vec(vec![2, 3, 4], (0..24).map(|x| x as f64).collect()).unwrap();
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.at(&[1, 0, 2]), a.at(&[0, 2, 1]));
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.data(), a.data());
    }

    #[test]
    fn broadcast_and_reduce_are_adjoint_on_shapes() {
        let a = T64::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = a.broadcast_to(&[2, 3]).unwrap();
        assert_eq!(b.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let r = b.reduce_to_shape(&[3]).unwrap();
        assert_eq!(r.data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn sum_and_max_axis() {
        let a = T64::from_vec(vec![2, 3], vec![1.0, 5.0, 2.0, 4.0, 0.0, 3.0]).unwrap();
        assert_eq!(a.sum_axis(0).unwrap().data(), &[5.0, 5.0, 5.0]);
        assert_eq!(a.sum_axis(1).unwrap().data(), &[8.0, 7.0]);
        assert_eq!(a.max_axis(1).unwrap().data(), &[5.0, 4.0]);
    }
}
