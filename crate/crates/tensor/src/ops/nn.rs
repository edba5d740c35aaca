use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Result, Scalar, TensorError};

fn axis_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, n, inner)
}

impl<T: Scalar> Tape<T> {
    /// Numerically stable softmax along `axis` (max-subtracted).
    pub fn softmax(&mut self, v: Var, axis: usize) -> Result<Var> {
        let x = self.value(v);
        if axis >= x.rank() {
            return Err(TensorError::InvalidAxis { op: "softmax", axis, rank: x.rank() });
        }
        let shape = x.shape().to_vec();
        let (outer, n, inner) = axis_dims(&shape, axis);
        let mut out = vec![T::zero(); x.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let mut m = T::neg_infinity();
                for k in 0..n {
                    m = m.max(x.data()[idx(k)]);
                }
                let mut z = T::zero();
                for k in 0..n {
                    let e = (x.data()[idx(k)] - m).exp();
                    out[idx(k)] = e;
                    z = z + e;
                }
                for k in 0..n {
                    out[idx(k)] = out[idx(k)] / z;
                }
            }
        }
        let out = Tensor::from_vec(shape, out)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, _, y, _| {
                // dx = y * (g - sum(g * y, axis))
                let (outer, n, inner) = axis_dims(y.shape(), axis);
                let mut dx = vec![T::zero(); y.numel()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |k: usize| (o * n + k) * inner + i;
                        let mut dot = T::zero();
                        for k in 0..n {
                            dot = dot + g.data()[idx(k)] * y.data()[idx(k)];
                        }
                        for k in 0..n {
                            dx[idx(k)] = y.data()[idx(k)] * (g.data()[idx(k)] - dot);
                        }
                    }
                }
                Ok(vec![Some(Tensor::from_vec(y.shape().to_vec(), dx)?)])
            }),
        ))
    }

    pub fn log_softmax(&mut self, v: Var, axis: usize) -> Result<Var> {
        let x = self.value(v);
        if axis >= x.rank() {
            return Err(TensorError::InvalidAxis { op: "log_softmax", axis, rank: x.rank() });
        }
        let shape = x.shape().to_vec();
        let (outer, n, inner) = axis_dims(&shape, axis);
        let mut out = vec![T::zero(); x.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * n + k) * inner + i;
                let mut m = T::neg_infinity();
                for k in 0..n {
                    m = m.max(x.data()[idx(k)]);
                }
                let mut z = T::zero();
                for k in 0..n {
                    z = z + (x.data()[idx(k)] - m).exp();
                }
                let lz = z.ln() + m;
                for k in 0..n {
                    out[idx(k)] = x.data()[idx(k)] - lz;
                }
            }
        }
        let out = Tensor::from_vec(shape, out)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, _, y, _| {
                // dx = g - exp(y) * sum(g, axis)
                let (outer, n, inner) = axis_dims(y.shape(), axis);
                let mut dx = vec![T::zero(); y.numel()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |k: usize| (o * n + k) * inner + i;
                        let mut gs = T::zero();
                        for k in 0..n {
                            gs = gs + g.data()[idx(k)];
                        }
                        for k in 0..n {
                            dx[idx(k)] = g.data()[idx(k)] - y.data()[idx(k)].exp() * gs;
                        }
                    }
                }
                Ok(vec![Some(Tensor::from_vec(y.shape().to_vec(), dx)?)])
            }),
        ))
    }

    /// Zero-mean unit-variance normalization over the last axis (no affine
    /// part). Constant rows map to zero via the epsilon guard.
    pub fn layer_norm(&mut self, v: Var, eps: f64) -> Result<Var> {
        let x = self.value(v);
        if x.rank() == 0 {
            return Err(TensorError::BadShape {
                op: "layer_norm",
                expected: "rank >= 1".into(),
                got: x.shape().to_vec(),
            });
        }
        let n = *x.shape().last().unwrap();
        let rows = x.numel() / n;
        let inv_n = T::of_f64(1.0 / n as f64);
        let epst = T::of_f64(eps);
        let mut out = vec![T::zero(); x.numel()];
        for r in 0..rows {
            let row = &x.data()[r * n..(r + 1) * n];
            let mean = row.iter().fold(T::zero(), |a, &b| a + b) * inv_n;
            let var = row.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) * inv_n;
            let inv_s = T::one() / (var + epst).sqrt();
            for (o, &xv) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = (xv - mean) * inv_s;
            }
        }
        let out = Tensor::from_vec(x.shape().to_vec(), out)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, y, _| {
                let x = parents[0];
                let n = *x.shape().last().unwrap();
                let rows = x.numel() / n;
                let inv_n = T::of_f64(1.0 / n as f64);
                let epst = T::of_f64(eps);
                let mut dx = vec![T::zero(); x.numel()];
                for r in 0..rows {
                    let xr = &x.data()[r * n..(r + 1) * n];
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let mean = xr.iter().fold(T::zero(), |a, &b| a + b) * inv_n;
                    let var =
                        xr.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) * inv_n;
                    let inv_s = T::one() / (var + epst).sqrt();
                    let g_mean = gr.iter().fold(T::zero(), |a, &b| a + b) * inv_n;
                    let gy_mean = gr
                        .iter()
                        .zip(yr)
                        .fold(T::zero(), |a, (&g, &y)| a + g * y)
                        * inv_n;
                    for k in 0..n {
                        dx[r * n + k] = inv_s * (gr[k] - g_mean - yr[k] * gy_mean);
                    }
                }
                Ok(vec![Some(Tensor::from_vec(x.shape().to_vec(), dx)?)])
            }),
        ))
    }

    /// Root-mean-square normalization over the last axis (no affine part).
    pub fn rms_norm(&mut self, v: Var, eps: f64) -> Result<Var> {
        let x = self.value(v);
        let n = *x.shape().last().ok_or(TensorError::BadShape {
            op: "rms_norm",
            expected: "rank >= 1".into(),
            got: vec![],
        })?;
        let rows = x.numel() / n;
        let inv_n = T::of_f64(1.0 / n as f64);
        let epst = T::of_f64(eps);
        let mut out = vec![T::zero(); x.numel()];
        for r in 0..rows {
            let row = &x.data()[r * n..(r + 1) * n];
            let ms = row.iter().fold(T::zero(), |a, &b| a + b * b) * inv_n;
            let inv_r = T::one() / (ms + epst).sqrt();
            for (o, &xv) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = xv * inv_r;
            }
        }
        let out = Tensor::from_vec(x.shape().to_vec(), out)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                let x = parents[0];
                let n = *x.shape().last().unwrap();
                let rows = x.numel() / n;
                let inv_n = T::of_f64(1.0 / n as f64);
                let epst = T::of_f64(eps);
                let mut dx = vec![T::zero(); x.numel()];
                for r in 0..rows {
                    let xr = &x.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let ms = xr.iter().fold(T::zero(), |a, &b| a + b * b) * inv_n;
                    let root = (ms + epst).sqrt();
                    let gx = xr.iter().zip(gr).fold(T::zero(), |a, (&x, &g)| a + x * g);
                    let c = gx * inv_n / (root * root * root);
                    for k in 0..n {
                        dx[r * n + k] = gr[k] / root - xr[k] * c;
                    }
                }
                Ok(vec![Some(Tensor::from_vec(x.shape().to_vec(), dx)?)])
            }),
        ))
    }

    /// Rotary positional encoding over shape `(..., T, d)`: consecutive
    /// pairs of the last axis rotate by `t * base^(-2i/d)`.
    pub fn rope(&mut self, v: Var, base: f64) -> Result<Var> {
        let x = self.value(v);
        if x.rank() < 2 || x.shape().last().unwrap() % 2 != 0 {
            return Err(TensorError::BadShape {
                op: "rope",
                expected: "(..., T, d) with even d".into(),
                got: x.shape().to_vec(),
            });
        }
        let d = *x.shape().last().unwrap();
        let t_len = x.shape()[x.rank() - 2];
        let rows = x.numel() / (t_len * d);
        let half = d / 2;
        // Precompute cos/sin per (t, i).
        let mut cs = vec![(T::zero(), T::zero()); t_len * half];
        for t in 0..t_len {
            for i in 0..half {
                let theta = t as f64 * base.powf(-2.0 * i as f64 / d as f64);
                cs[t * half + i] = (T::of_f64(theta.cos()), T::of_f64(theta.sin()));
            }
        }
        let rotate = move |src: &[T], cs: &[(T, T)], sign: T| -> Vec<T> {
            let mut out = vec![T::zero(); src.len()];
            for r in 0..rows {
                for t in 0..t_len {
                    let b = (r * t_len + t) * d;
                    for i in 0..half {
                        let (c, s) = cs[t * half + i];
                        let s = s * sign;
                        let (x0, x1) = (src[b + 2 * i], src[b + 2 * i + 1]);
                        out[b + 2 * i] = x0 * c - x1 * s;
                        out[b + 2 * i + 1] = x0 * s + x1 * c;
                    }
                }
            }
            out
        };
        let out = Tensor::from_vec(x.shape().to_vec(), rotate(x.data(), &cs, T::one()))?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                // Adjoint of a rotation is the inverse rotation.
                let dx = rotate(g.data(), &cs, -T::one());
                Ok(vec![Some(Tensor::from_vec(parents[0].shape().to_vec(), dx)?)])
            }),
        ))
    }
}
