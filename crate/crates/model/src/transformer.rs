//! Interleaved temporal/group encoder layers with depth-stratified MoE
//! feed-forward blocks.

use serde::{Deserialize, Serialize};
use stratum_tensor::{RngStream, Var};

use crate::attention::{droppath, mh_self_attention, AttnOpts, AttnParams, Fwd};
use crate::moe::{ffn_dropout, LayerStats, MoeLayer};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    TokenizerCross,
    Temporal,
    Group,
    Decoder,
}

/// Self-describing layer entry stored in checkpoint headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    pub e_total: usize,
    pub e_sh: usize,
    pub e_sp: usize,
    pub top_k: usize,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.e_sh + self.e_sp != self.e_total {
            return Err(crate::ModelError::BadConfig(format!(
                "layer {}: {} shared + {} specialized != {} total",
                self.index, self.e_sh, self.e_sp, self.e_total
            )));
        }
        if self.top_k == 0 || self.top_k > self.e_total || self.top_k > self.e_sp.max(1) {
            return Err(crate::ModelError::BadConfig(format!(
                "layer {}: top_k {} out of range",
                self.index, self.top_k
            )));
        }
        Ok(())
    }
}

pub struct EncoderLayer {
    pub kind: LayerKind,
    pub attn: AttnParams,
    pub moe: MoeLayer,
    /// Stochastic-depth rate for this layer (linear in stack depth).
    pub droppath_rate: f64,
}

pub struct LayerFwdOpts<'r> {
    pub causal: bool,
    pub dropout: f64,
    pub train: bool,
    pub rng: &'r mut RngStream,
}

/// One interleaved encoder layer on `h (B, T, G, D)`: pre-norm attention
/// along T or G, then the pre-norm MoE FFN, both with residuals.
pub fn encoder_layer_fwd(
    f: &mut Fwd,
    layer: &EncoderLayer,
    h: Var,
    opts: &mut LayerFwdOpts,
) -> Result<(Var, LayerStats)> {
    let shape = f.tape.shape(h).to_vec();
    let (b, t, g, d) = (shape[0], shape[1], shape[2], shape[3]);
    let eps = 1e-6;

    // Attention sub-layer.
    let normed = f.tape.layer_norm(h, eps)?;
    let attn_out = match layer.kind {
        LayerKind::Temporal => {
            let x = f.tape.permute(normed, &[0, 2, 1, 3])?; // (B, G, T, D)
            let x = f.tape.reshape(x, vec![b * g, t, d])?;
            let mut aopts = AttnOpts {
                rope: true,
                causal: opts.causal,
                dropout: opts.dropout,
                train: opts.train,
                rng: opts.rng,
            };
            let y = mh_self_attention(f, &layer.attn, x, &mut aopts)?;
            let y = f.tape.reshape(y, vec![b, g, t, d])?;
            f.tape.permute(y, &[0, 2, 1, 3])?
        }
        LayerKind::Group => {
            let x = f.tape.reshape(normed, vec![b * t, g, d])?;
            let mut aopts = AttnOpts {
                rope: false,
                causal: false,
                dropout: opts.dropout,
                train: opts.train,
                rng: opts.rng,
            };
            let y = mh_self_attention(f, &layer.attn, x, &mut aopts)?;
            f.tape.reshape(y, vec![b, t, g, d])?
        }
        other => {
            return Err(crate::ModelError::Invalid(format!(
                "encoder_layer_fwd on {other:?} layer"
            )))
        }
    };
    let attn_out = droppath(f, attn_out, layer.droppath_rate, opts.train, opts.rng)?;
    let tilde = f.tape.add(h, attn_out)?;

    // MoE FFN sub-layer.
    let z = f.tape.layer_norm(tilde, eps)?;
    let z = f.tape.reshape(z, vec![b * t * g, d])?;
    let (ffn, stats) = layer.moe.dse_ffn(f, z)?;
    let ffn = ffn_dropout(f, ffn, opts.dropout, opts.train, opts.rng);
    let ffn = f.tape.reshape(ffn, vec![b, t, g, d])?;
    let ffn = droppath(f, ffn, layer.droppath_rate, opts.train, opts.rng)?;
    let out = f.tape.add(tilde, ffn)?;
    Ok((out, stats))
}

/// Interleaved layer kinds for the encoder: group-wise first, alternating.
pub fn interleaved_kinds(group_blocks: usize, temporal_blocks: usize) -> Vec<LayerKind> {
    let mut kinds = Vec::new();
    let mut g = 0;
    let mut t = 0;
    while g < group_blocks || t < temporal_blocks {
        if g < group_blocks {
            kinds.push(LayerKind::Group);
            g += 1;
        }
        if t < temporal_blocks {
            kinds.push(LayerKind::Temporal);
            t += 1;
        }
    }
    kinds
}
