//! Radix-2 FFT for real signals with power-of-two length.

use crate::{Result, Scalar, Tensor, TensorError};

fn check_pow2(n: usize, op: &'static str) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(TensorError::Invalid {
            op,
            msg: format!("last-axis length {n} is not a power of two"),
        });
    }
    Ok(())
}

/// In-place iterative Cooley-Tukey forward FFT (power-of-two length).
pub fn fft_inplace<T: Scalar>(re: &mut [T], im: &mut [T]) {
    fft_complex(re, im);
}

/// In-place inverse FFT including the 1/n scaling.
pub fn ifft_inplace<T: Scalar>(re: &mut [T], im: &mut [T]) {
    // Conjugation trick: ifft(x) = conj(fft(conj(x))) / n.
    for v in im.iter_mut() {
        *v = -*v;
    }
    fft_complex(re, im);
    let inv = T::one() / T::of_f64(re.len() as f64);
    for (r, i) in re.iter_mut().zip(im.iter_mut()) {
        *r = *r * inv;
        *i = -*i * inv;
    }
}

fn fft_complex<T: Scalar>(re: &mut [T], im: &mut [T]) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -std::f64::consts::TAU / len as f64;
        let (wr, wi) = (T::of_f64(ang.cos()), T::of_f64(ang.sin()));
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (T::one(), T::zero());
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let nr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = nr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// One-sided DFT of a real signal: returns (re, im), each of length n/2 + 1.
pub fn rfft_split<T: Scalar>(x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let n = x.len();
    check_pow2(n, "rfft")?;
    let mut re = x.to_vec();
    let mut im = vec![T::zero(); n];
    fft_complex(&mut re, &mut im);
    re.truncate(n / 2 + 1);
    im.truncate(n / 2 + 1);
    Ok((re, im))
}

/// Gradient of a one-sided spectrum functional back to the time domain.
///
/// Given d(loss)/d(re_k) and d(loss)/d(im_k) for k = 0..n/2, returns
/// d(loss)/d(x_n) via the adjoint of the real DFT.
pub fn rfft_adjoint<T: Scalar>(g_re: &[T], g_im: &[T], n: usize) -> Vec<T> {
    let k_bins = n / 2 + 1;
    debug_assert_eq!(g_re.len(), k_bins);
    let mut out = vec![T::zero(); n];
    for (t, slot) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for k in 0..k_bins {
            let theta = std::f64::consts::TAU * (k * t % n) as f64 / n as f64;
            let (c, s) = (T::of_f64(theta.cos()), T::of_f64(theta.sin()));
            // re_k = sum x_t cos(theta), im_k = -sum x_t sin(theta)
            acc = acc + g_re[k] * c - g_im[k] * s;
        }
        *slot = acc;
    }
    out
}

/// One-sided spectrum magnitudes along the last axis.
pub fn rfft_magnitude<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.is_empty() {
        return Err(TensorError::BadShape {
            op: "rfft_magnitude",
            expected: "rank >= 1".into(),
            got: shape.to_vec(),
        });
    }
    let n = shape[shape.len() - 1];
    check_pow2(n, "rfft_magnitude")?;
    let k_bins = n / 2 + 1;
    let rows = x.numel() / n;
    let mut out = Vec::with_capacity(rows * k_bins);
    for r in 0..rows {
        let (re, im) = rfft_split(&x.data()[r * n..(r + 1) * n])?;
        for k in 0..k_bins {
            out.push((re[k] * re[k] + im[k] * im[k]).sqrt());
        }
    }
    let mut os = shape.to_vec();
    *os.last_mut().unwrap() = k_bins;
    Tensor::from_vec(os, out)
}

/// One-sided power spectrum (|X_k|^2) along the last axis, with the raw
/// (re, im) parts returned for gradient use.
pub fn rfft_power_with_parts<T: Scalar>(
    x: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let shape = x.shape();
    let n = shape[shape.len() - 1];
    check_pow2(n, "rfft_power")?;
    let k_bins = n / 2 + 1;
    let rows = x.numel() / n;
    let mut out = Vec::with_capacity(rows * k_bins);
    let mut res = Vec::with_capacity(rows * k_bins);
    let mut ims = Vec::with_capacity(rows * k_bins);
    for r in 0..rows {
        let (re, im) = rfft_split(&x.data()[r * n..(r + 1) * n])?;
        for k in 0..k_bins {
            out.push(re[k] * re[k] + im[k] * im[k]);
            res.push(re[k]);
            ims.push(im[k]);
        }
    }
    let mut os = shape.to_vec();
    *os.last_mut().unwrap() = k_bins;
    Ok((Tensor::from_vec(os, out)?, res, ims))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n^2) direct DFT oracle.
    fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let k_bins = n / 2 + 1;
        let mut re = vec![0.0; k_bins];
        let mut im = vec![0.0; k_bins];
        for k in 0..k_bins {
            for (t, &v) in x.iter().enumerate() {
                let theta = std::f64::consts::TAU * (k * t) as f64 / n as f64;
                re[k] += v * theta.cos();
                im[k] -= v * theta.sin();
            }
        }
        (re, im)
    }

    #[test]
    fn zeros_in_zeros_out() {
        let x = Tensor::<f64>::zeros(&[1, 16]);
        let m = rfft_magnitude(&x).unwrap();
        assert_eq!(m.shape(), &[1, 9]);
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_cosine_hits_single_bin() {
        let n = 256;
        let x: Vec<f64> = (0..n)
            .map(|t| (std::f64::consts::TAU * 4.0 * t as f64 / n as f64).cos())
            .collect();
        let m = rfft_magnitude(&Tensor::from_vec(vec![n], x).unwrap()).unwrap();
        let d = m.data();
        let peak = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 4);
        for (k, &v) in d.iter().enumerate() {
            if k != 4 {
                assert!(v < 1e-9 * d[4], "bin {k} leaked: {v}");
            }
        }
    }

    #[test]
    fn matches_naive_dft_oracle() {
        let mut rng = crate::RngStream::new(99);
        let n = 128;
        let x: Vec<f64> = (0..n).map(|_| rng.normal_f64()).collect();
        let (re, im) = rfft_split(&x).unwrap();
        let (ore, oim) = naive_dft(&x);
        for k in 0..n / 2 + 1 {
            assert!((re[k] - ore[k]).abs() < 1e-9, "re bin {k}");
            assert!((im[k] - oim[k]).abs() < 1e-9, "im bin {k}");
        }
    }

    #[test]
    fn parseval_consistency() {
        let mut rng = crate::RngStream::new(7);
        let n = 64;
        let x: Vec<f64> = (0..n).map(|_| rng.normal_f64()).collect();
        let time_energy: f64 = x.iter().map(|v| v * v).sum::<f64>() * n as f64;
        let (re, im) = rfft_split(&x).unwrap();
        // Reassemble the full two-sided spectrum energy from the one-sided half.
        let mut freq_energy = re[0] * re[0] + im[0] * im[0];
        freq_energy += re[n / 2] * re[n / 2] + im[n / 2] * im[n / 2];
        for k in 1..n / 2 {
            freq_energy += 2.0 * (re[k] * re[k] + im[k] * im[k]);
        }
        assert!(
            (time_energy - freq_energy).abs() < 1e-9 * time_energy.abs().max(1.0),
            "{time_energy} vs {freq_energy}"
        );
    }

    #[test]
    fn non_power_of_two_rejected() {
        let x = Tensor::<f64>::zeros(&[12]);
        assert!(rfft_magnitude(&x).is_err());
    }
}
