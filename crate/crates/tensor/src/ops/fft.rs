use crate::fft::{rfft_adjoint, rfft_power_with_parts};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Result, Scalar};

impl<T: Scalar> Tape<T> {
    /// One-sided power spectrum |X_k|^2 along the last axis (power-of-two
    /// length). Differentiable back to the time domain.
    pub fn rfft_power(&mut self, v: Var) -> Result<Var> {
        let x = self.value(v);
        let n = *x.shape().last().unwrap_or(&0);
        let (out, re, im) = rfft_power_with_parts(x)?;
        let k_bins = n / 2 + 1;
        Ok(self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, _, _| {
                let rows = g.numel() / k_bins;
                let two = T::of_f64(2.0);
                let mut dx = Vec::with_capacity(rows * n);
                for r in 0..rows {
                    let gr = &g.data()[r * k_bins..(r + 1) * k_bins];
                    let rr = &re[r * k_bins..(r + 1) * k_bins];
                    let ii = &im[r * k_bins..(r + 1) * k_bins];
                    // d|X_k|^2 = 2 re_k d(re_k) + 2 im_k d(im_k)
                    let g_re: Vec<T> = gr.iter().zip(rr).map(|(&g, &re)| two * g * re).collect();
                    let g_im: Vec<T> = gr.iter().zip(ii).map(|(&g, &im)| two * g * im).collect();
                    dx.extend(rfft_adjoint(&g_re, &g_im, n));
                }
                Ok(vec![Some(Tensor::from_vec(parents[0].shape().to_vec(), dx)?)])
            }),
        ))
    }
}
