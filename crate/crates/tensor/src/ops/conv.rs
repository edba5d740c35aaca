use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Result, Scalar, TensorError};

impl<T: Scalar> Tape<T> {
    /// im2col for 1-D convolution: `(N, C, L) -> (N, C*k, L_out)` with
    /// zero padding; the gradient folds (scatter-adds) back.
    pub fn unfold1d(
        &mut self,
        v: Var,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = self.value(v);
        if x.rank() != 3 {
            return Err(TensorError::BadShape {
                op: "unfold1d",
                expected: "(N, C, L)".into(),
                got: x.shape().to_vec(),
            });
        }
        let (nb, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if l + 2 * padding < kernel || stride == 0 {
            return Err(TensorError::Invalid {
                op: "unfold1d",
                msg: format!("kernel {kernel} stride {stride} padding {padding} on length {l}"),
            });
        }
        let l_out = (l + 2 * padding - kernel) / stride + 1;
        let mut data = vec![T::zero(); nb * c * kernel * l_out];
        for n in 0..nb {
            for ch in 0..c {
                let src = &x.data()[(n * c + ch) * l..(n * c + ch + 1) * l];
                for ki in 0..kernel {
                    let row = ((n * c + ch) * kernel + ki) * l_out;
                    for j in 0..l_out {
                        let pos = j * stride + ki;
                        if pos >= padding && pos - padding < l {
                            data[row + j] = src[pos - padding];
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(vec![nb, c * kernel, l_out], data)?;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                let ishape = parents[0].shape();
                let (nb, c, l) = (ishape[0], ishape[1], ishape[2]);
                let mut dx = vec![T::zero(); nb * c * l];
                for n in 0..nb {
                    for ch in 0..c {
                        let dst = (n * c + ch) * l;
                        for ki in 0..kernel {
                            let row = ((n * c + ch) * kernel + ki) * l_out;
                            for j in 0..l_out {
                                let pos = j * stride + ki;
                                if pos >= padding && pos - padding < l {
                                    dx[dst + pos - padding] =
                                        dx[dst + pos - padding] + g.data()[row + j];
                                }
                            }
                        }
                    }
                }
                Ok(vec![Some(Tensor::from_vec(ishape.to_vec(), dx)?)])
            }),
        ))
    }

    /// 1-D convolution as unfold + matmul: `x (N, C_in, L)`,
    /// `w (C_out, C_in * k)`, `bias (C_out)` -> `(N, C_out, L_out)`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Var,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let cols = self.unfold1d(x, kernel, stride, padding)?;
        let y = self.matmul(w, cols)?; // (C_out, C_in*k) x (N, C_in*k, L_out)
        let c_out = self.value(w).shape()[0];
        let b = self.reshape(bias, vec![c_out, 1])?;
        self.add(y, b)
    }
}
