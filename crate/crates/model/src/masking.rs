//! Mask sampling and application for the masked reconstruction
//! objectives.

use stratum_tensor::{RngStream, Tensor64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    /// Whole 1-second patches masked across all channels.
    TemporalPatches,
    /// Whole channels masked across all patches.
    Channels,
}

/// Exactly round(0.5 * n) masked positions per sample (half away from
/// zero), chosen without replacement.
fn mask_count(n: usize) -> usize {
    (0.5 * n as f64).round() as usize
}

#[derive(Clone, Debug)]
pub struct MaskPlan {
    pub kind: MaskKind,
    /// Masked patch indices (TemporalPatches) or channel indices
    /// (Channels), per sample.
    pub per_sample: Vec<Vec<usize>>,
    pub t: usize,
    pub c: usize,
}

impl MaskPlan {
    pub fn sample(kind: MaskKind, b: usize, t: usize, c: usize, rng: &mut RngStream) -> Self {
        let n = match kind {
            MaskKind::TemporalPatches => t,
            MaskKind::Channels => c,
        };
        let k = mask_count(n);
        let per_sample = (0..b)
            .map(|bi| {
                let mut s = rng.substream(bi as u64);
                let mut idx = s.choose_k(n, k);
                idx.sort_unstable();
                idx
            })
            .collect();
        Self { kind, per_sample, t, c }
    }

    pub fn is_cell_masked(&self, sample: usize, t: usize, c: usize) -> bool {
        match self.kind {
            MaskKind::TemporalPatches => self.per_sample[sample].contains(&t),
            MaskKind::Channels => self.per_sample[sample].contains(&c),
        }
    }

    /// Number of masked (sample, patch, channel) cells.
    pub fn n_cells(&self) -> usize {
        let b = self.per_sample.len();
        (0..b)
            .map(|bi| match self.kind {
                MaskKind::TemporalPatches => self.per_sample[bi].len() * self.c,
                MaskKind::Channels => self.per_sample[bi].len() * self.t,
            })
            .sum()
    }

    /// (B, T, C, 1) with 1 at masked cells.
    pub fn cell_mask(&self) -> Tensor64 {
        let b = self.per_sample.len();
        let mut data = vec![0.0f64; b * self.t * self.c];
        for bi in 0..b {
            for t in 0..self.t {
                for c in 0..self.c {
                    if self.is_cell_masked(bi, t, c) {
                        data[(bi * self.t + t) * self.c + c] = 1.0;
                    }
                }
            }
        }
        Tensor64::from_vec(vec![b, self.t, self.c, 1], data).expect("cell mask")
    }

    /// (B, T, C, 1) with 0 at masked cells (multiplies the raw signal).
    pub fn keep_mask(&self) -> Tensor64 {
        self.cell_mask().map(|v| 1.0 - v)
    }
}
