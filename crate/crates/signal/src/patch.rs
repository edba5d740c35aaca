//! Segmentation of continuous multi-channel streams into 1-second patches.

use stratum_tensor::Tensor64;

use crate::{Result, SignalError};

/// A patched batch: `signal` has shape (B, T, C, P) with P = sample_rate
/// (1-second patches), plus per-sample task metadata.
#[derive(Clone, Debug)]
pub struct EegBatch {
    pub signal: Tensor64,
    pub paradigm_id: Vec<usize>,
    pub dataset_id: Vec<usize>,
    pub label: Vec<usize>,
    pub sample_rate: f64,
}

impl EegBatch {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.signal.shape();
        (s[0], s[1], s[2], s[3])
    }
}

/// Cut a (C, L) stream into non-overlapping 1-second patches:
/// returns shape (1, T, C, P) with the trailing remainder dropped.
pub fn patch(stream: &[Vec<f64>], sample_rate: f64) -> Result<Tensor64> {
    let p = sample_rate as usize;
    let c = stream.len();
    let l = stream.first().map(|ch| ch.len()).unwrap_or(0);
    if l < p {
        return Err(SignalError::StreamTooShort { got: l, patch: p });
    }
    let t = l / p;
    let mut data = Vec::with_capacity(t * c * p);
    for ti in 0..t {
        for ch in stream {
            debug_assert_eq!(ch.len(), l, "ragged channel lengths");
            data.extend_from_slice(&ch[ti * p..(ti + 1) * p]);
        }
    }
    Ok(Tensor64::from_vec(vec![1, t, c, p], data)?)
}

/// Inverse of [`patch`] onto the retained prefix: concatenates patches
/// back into per-channel streams.
pub fn unpatch(batch: &Tensor64) -> Vec<Vec<f64>> {
    let s = batch.shape();
    let (t, c, p) = (s[1], s[2], s[3]);
    let mut out = vec![Vec::with_capacity(t * p); c];
    for ti in 0..t {
        for ci in 0..c {
            for pi in 0..p {
                out[ci].push(batch.at(&[0, ti, ci, pi]));
            }
        }
    }
    out
}
