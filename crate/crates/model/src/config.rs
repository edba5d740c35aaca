//! Model sizing and hyperparameters.

use serde::{Deserialize, Serialize};

use crate::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    S,
    M,
    B,
    L,
    Xl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

/// Per-layer shared/specialized expert counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedSplit {
    pub e_sh: usize,
    pub e_sp: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_m: usize,
    pub n_heads: usize,
    pub tokenizer_blocks: usize,
    pub group_blocks: usize,
    pub temporal_blocks: usize,
    pub decoder_blocks: usize,
    pub n_experts: usize,
    pub expert_dim: usize,
    pub top_k: usize,
    /// Samples per 1-second patch (power of two).
    pub patch_len: usize,
    pub conv_channels: usize,
    pub conv_kernels: [usize; 3],
    pub conv_stride: usize,
    /// Micro-frames per patch (F) and samples per frame (S = P / F).
    pub frames: usize,
    pub frame_embed: usize,
    pub corr_dim: usize,
    pub max_lag: usize,
    pub b_static: f64,
    pub norm_eps: f64,
    /// Dynamic groups kept by the selector at fine-tuning.
    pub gumbel_k: usize,
    pub selector_hidden: usize,
    pub dropout: f64,
    pub droppath: f64,
    pub head_hidden: usize,
}

impl ModelConfig {
    pub fn variant(v: Variant) -> Self {
        let (d_m, n_heads, tok, group, temp, dec) = match v {
            Variant::S => (192, 4, 1, 3, 3, 1),
            Variant::M => (256, 4, 2, 3, 3, 2),
            Variant::B => (384, 8, 2, 4, 4, 2),
            Variant::L => (512, 8, 2, 6, 6, 3),
            Variant::Xl => (640, 8, 2, 8, 8, 4),
        };
        ModelConfig {
            d_m,
            n_heads,
            tokenizer_blocks: tok,
            group_blocks: group,
            temporal_blocks: temp,
            decoder_blocks: dec,
            n_experts: 9,
            expert_dim: 256,
            top_k: 2,
            patch_len: 256,
            conv_channels: 16,
            conv_kernels: [7, 15, 31],
            conv_stride: 4,
            frames: 8,
            frame_embed: 16,
            corr_dim: 8,
            max_lag: 2,
            b_static: 4.0,
            norm_eps: 1e-6,
            gumbel_k: 12,
            selector_hidden: 32,
            dropout: 0.1,
            droppath: 0.1,
            head_hidden: 128,
        }
    }

    /// Miniature configuration for fast tests and finite-difference sweeps.
    pub fn tiny(patch_len: usize) -> Self {
        ModelConfig {
            d_m: 32,
            n_heads: 2,
            tokenizer_blocks: 1,
            group_blocks: 1,
            temporal_blocks: 1,
            decoder_blocks: 1,
            n_experts: 3,
            expert_dim: 16,
            top_k: 2,
            patch_len,
            conv_channels: 4,
            conv_kernels: [3, 5, 7],
            conv_stride: 2,
            frames: 4,
            frame_embed: 8,
            corr_dim: 4,
            max_lag: 2,
            b_static: 4.0,
            norm_eps: 1e-6,
            gumbel_k: 4,
            selector_hidden: 8,
            dropout: 0.0,
            droppath: 0.0,
            head_hidden: 16,
        }
    }

    pub fn frame_samples(&self) -> usize {
        self.patch_len / self.frames
    }

    /// Number of dynamic frame-pair candidates |G| = sum_(l=0..max_lag)(F - l).
    pub fn n_dynamic_candidates(&self) -> usize {
        (0..=self.max_lag).map(|l| self.frames.saturating_sub(l)).sum()
    }

    /// Lag-limited ordered frame pairs (i, j) with 0 <= i - j <= max_lag.
    pub fn frame_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for lag in 0..=self.max_lag {
            for j in 0..self.frames.saturating_sub(lag) {
                pairs.push((j + lag, j));
            }
        }
        pairs
    }

    /// Stack order of the MoE layers: tokenizer blocks, interleaved
    /// group/temporal encoder layers, decoder blocks.
    pub fn total_moe_layers(&self) -> usize {
        self.tokenizer_blocks + self.group_blocks + self.temporal_blocks + self.decoder_blocks
    }

    pub fn encoder_layers(&self) -> usize {
        self.group_blocks + self.temporal_blocks
    }

    pub fn validate(&self) -> Result<()> {
        if !self.patch_len.is_power_of_two() {
            return Err(ModelError::BadConfig(format!(
                "patch_len {} must be a power of two",
                self.patch_len
            )));
        }
        if self.d_m % 2 != 0 {
            return Err(ModelError::BadConfig("d_m must be even".into()));
        }
        if self.d_m % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_m {} not divisible by n_heads {}",
                self.d_m, self.n_heads
            )));
        }
        if (self.d_m / self.n_heads) % 2 != 0 {
            return Err(ModelError::BadConfig(
                "head dim must be even for rotary encoding".into(),
            ));
        }
        if self.frames == 0 || self.patch_len % self.frames != 0 {
            return Err(ModelError::BadConfig(format!(
                "frames {} must divide patch_len {}",
                self.frames, self.patch_len
            )));
        }
        if self.max_lag >= self.frames {
            return Err(ModelError::BadConfig("max_lag must be < frames".into()));
        }
        if self.group_blocks != self.temporal_blocks {
            return Err(ModelError::BadConfig(
                "interleaving requires equal group and temporal block counts".into(),
            ));
        }
        if self.gumbel_k == 0 || self.gumbel_k > self.n_dynamic_candidates() {
            return Err(ModelError::BadConfig(format!(
                "gumbel_k {} out of range for {} dynamic candidates",
                self.gumbel_k,
                self.n_dynamic_candidates()
            )));
        }
        if self.top_k == 0 || self.top_k > self.n_experts {
            return Err(ModelError::BadConfig(format!(
                "top_k {} out of range for {} experts",
                self.top_k, self.n_experts
            )));
        }
        Ok(())
    }
}
