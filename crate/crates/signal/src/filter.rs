//! Linear-phase windowed-sinc band-pass filtering.

use stratum_tensor::fft::{fft_inplace, ifft_inplace};

use crate::{Result, SignalError};

/// Hamming-windowed sinc band-pass kernel. The tap count is sized so the
/// lower transition fits inside [0.5*low, low]; the upper transition is
/// capped so attenuation is reached by 1.2*high even when 1.5*high lies
/// beyond Nyquist.
pub fn design_bandpass(fs: f64, low: f64, high: f64) -> Result<Vec<f64>> {
    if !(low > 0.0 && low < high && high < fs / 2.0) {
        return Err(SignalError::BadBand { low, high, fs });
    }
    let trans_lo = 0.5 * low;
    let trans_hi = (0.2 * high).min(fs / 2.0 - high);
    let trans = trans_lo.min(trans_hi);
    // Hamming main-lobe rule: normalized transition width ~ 3.3 / taps.
    let mut taps = (3.3 * fs / trans).ceil() as usize;
    if taps % 2 == 0 {
        taps += 1;
    }
    let fc_lo = low - trans_lo / 2.0;
    let fc_hi = high + trans_hi / 2.0;
    let m = (taps - 1) as f64 / 2.0;
    let sinc = |x: f64| {
        if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        }
    };
    let mut h = Vec::with_capacity(taps);
    for n in 0..taps {
        let t = n as f64 - m;
        // Difference of two low-pass kernels.
        let band = 2.0 * fc_hi / fs * sinc(2.0 * fc_hi * t / fs)
            - 2.0 * fc_lo / fs * sinc(2.0 * fc_lo * t / fs);
        let w = 0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (taps - 1) as f64).cos();
        h.push(band * w);
    }
    // Force an exact spectral zero at DC.
    let mean = h.iter().sum::<f64>() / taps as f64;
    for v in h.iter_mut() {
        *v -= mean;
    }
    // Unit gain at the geometric band center.
    let f0 = (low * high).sqrt();
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (n, &v) in h.iter().enumerate() {
        let th = std::f64::consts::TAU * f0 * n as f64 / fs;
        re += v * th.cos();
        im -= v * th.sin();
    }
    let gain = (re * re + im * im).sqrt();
    for v in h.iter_mut() {
        *v /= gain;
    }
    Ok(h)
}

/// Zero-phase-aligned FIR application: convolves with the linear-phase
/// kernel and trims the (taps-1)/2 group delay, returning a signal of the
/// input's length.
pub fn fir_bandpass(signal: &[f64], fs: f64, low: f64, high: f64) -> Result<Vec<f64>> {
    let h = design_bandpass(fs, low, high)?;
    Ok(apply_fir(signal, &h))
}

/// Convolve and trim group delay. FFT convolution above a size cutoff,
/// direct form below (choice is a pure function of sizes).
pub fn apply_fir(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let l = signal.len();
    let k = kernel.len();
    let delay = (k - 1) / 2;
    let full = if l * k > 1 << 18 { conv_fft(signal, kernel) } else { conv_direct(signal, kernel) };
    full[delay..delay + l].to_vec()
}

fn conv_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() + h.len() - 1;
    let mut out = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

fn conv_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() + h.len() - 1;
    let size = n.next_power_of_two();
    let mut xr = vec![0.0f64; size];
    let mut xi = vec![0.0f64; size];
    let mut hr = vec![0.0f64; size];
    let mut hi = vec![0.0f64; size];
    xr[..x.len()].copy_from_slice(x);
    hr[..h.len()].copy_from_slice(h);
    fft_inplace(&mut xr, &mut xi);
    fft_inplace(&mut hr, &mut hi);
    for i in 0..size {
        let (a, b) = (xr[i], xi[i]);
        let (c, d) = (hr[i], hi[i]);
        xr[i] = a * c - b * d;
        xi[i] = a * d + b * c;
    }
    ifft_inplace(&mut xr, &mut xi);
    xr.truncate(n);
    xr
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 256.0;

    fn tone(freq: f64, secs: f64) -> Vec<f64> {
        let n = (secs * FS) as usize;
        (0..n).map(|t| (std::f64::consts::TAU * freq * t as f64 / FS).sin()).collect()
    }

    /// Steady-state amplitude of a filtered tone, avoiding filter edges.
    fn steady_amp(y: &[f64], margin: usize) -> f64 {
        y[margin..y.len() - margin].iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    #[test]
    fn dc_is_rejected() {
        let x = vec![1.0; 4096];
        let y = fir_bandpass(&x, FS, 1.0, 100.0).unwrap();
        // Interior samples (away from filter edges) must be essentially zero.
        let mid = &y[2000..2100];
        assert!(mid.iter().all(|v| v.abs() < 1e-3), "max {:?}", mid.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
    }

    #[test]
    fn passband_tone_preserved() {
        let x = tone(10.0, 60.0);
        let y = fir_bandpass(&x, FS, 1.0, 100.0).unwrap();
        let amp = steady_amp(&y, 4000);
        assert!((amp - 1.0).abs() < 0.05, "amp {amp}");
    }

    #[test]
    fn stopband_tone_attenuated_40db() {
        let x = tone(120.0, 60.0);
        let y = fir_bandpass(&x, FS, 1.0, 100.0).unwrap();
        let amp = steady_amp(&y, 4000);
        assert!(amp < 0.01, "amp {amp} (needs >= 40 dB attenuation)");
    }

    #[test]
    fn low_stopband_edge_attenuated() {
        let x = tone(0.5, 120.0);
        let y = fir_bandpass(&x, FS, 1.0, 100.0).unwrap();
        let amp = steady_amp(&y, 8000);
        assert!(amp < 0.01, "amp {amp}");
    }

    #[test]
    fn linearity_sum_of_tones() {
        let a = tone(10.0, 8.0);
        let b = tone(25.0, 8.0);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let fa = fir_bandpass(&a, FS, 1.0, 100.0).unwrap();
        let fb = fir_bandpass(&b, FS, 1.0, 100.0).unwrap();
        let fsum = fir_bandpass(&sum, FS, 1.0, 100.0).unwrap();
        for i in 0..fa.len() {
            assert!((fa[i] + fb[i] - fsum[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_band_edges_rejected() {
        assert!(fir_bandpass(&[0.0; 16], FS, 0.0, 50.0).is_err());
        assert!(fir_bandpass(&[0.0; 16], FS, 40.0, 30.0).is_err());
        assert!(fir_bandpass(&[0.0; 16], FS, 1.0, 130.0).is_err());
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let mut rng = stratum_tensor::RngStream::new(3);
        let x: Vec<f64> = (0..700).map(|_| rng.normal_f64()).collect();
        let h: Vec<f64> = (0..41).map(|_| rng.normal_f64()).collect();
        let a = conv_direct(&x, &h);
        let b = conv_fft(&x, &h);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}
