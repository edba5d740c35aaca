//! Stage-specific output modules: the channel-query reconstructor
//! (pretraining) and the dual-stream classification head (fine-tuning).

use stratum_tensor::{ParamStore64, RngStream, Var};

use crate::attention::{mh_cross_attention, AttnOpts, AttnParams, Fwd, Linear, Mlp};
use crate::config::{ModelConfig, SharedSplit};
use crate::moe::{ffn_dropout, LayerStats, MoeLayer};
use crate::Result;

pub struct DecoderBlock {
    pub attn: AttnParams,
    pub moe: MoeLayer,
    pub droppath_rate: f64,
}

/// Decoder stack: learnable channel queries (the channel embedding rows)
/// cross-attend to group tokens patch by patch, then project to the
/// waveform + spectrum target width.
pub struct Reconstructor {
    pub blocks: Vec<DecoderBlock>,
    pub out_proj: Linear,
    pub out_dim: usize,
}

impl Reconstructor {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        cfg: &ModelConfig,
        splits: &[SharedSplit],
        layer_offset: usize,
        total_layers: usize,
    ) -> Result<Self> {
        let mut blocks = Vec::new();
        for (i, split) in splits.iter().enumerate() {
            let li = layer_offset + i;
            let name = format!("decoder.block{i}");
            blocks.push(DecoderBlock {
                attn: AttnParams::build(store, rng, &format!("{name}.attn"), cfg.d_m, cfg.n_heads)?,
                moe: MoeLayer::build(
                    store,
                    rng,
                    &format!("{name}.moe"),
                    li,
                    cfg.d_m,
                    cfg.expert_dim,
                    *split,
                    cfg.top_k.min(split.e_sp),
                )?,
                droppath_rate: if total_layers > 1 {
                    cfg.droppath * li as f64 / (total_layers - 1) as f64
                } else {
                    0.0
                },
            });
        }
        let out_dim = cfg.patch_len + cfg.patch_len / 2 + 1;
        let out_proj = Linear::build(store, rng, "decoder.out_proj", cfg.d_m, out_dim, true)?;
        Ok(Self { blocks, out_proj, out_dim })
    }

    /// `h_enc (B, T, G, D)` and channel-query rows `(C, D)` ->
    /// reconstruction `(B, T, C, P + P/2 + 1)`.
    pub fn fwd(
        &self,
        f: &mut Fwd,
        h_enc: Var,
        e_rows: Var,
        dropout: f64,
        train: bool,
        rng: &mut RngStream,
        probe: Option<&mut Vec<stratum_tensor::Tensor64>>,
    ) -> Result<(Var, Vec<LayerStats>)> {
        let shape = f.tape.shape(h_enc).to_vec();
        let (b, t, g, d) = (shape[0], shape[1], shape[2], shape[3]);
        let c = f.tape.shape(e_rows)[0];
        let kv = f.tape.reshape(h_enc, vec![b * t, g, d])?;
        let mut q = f.tape.broadcast(e_rows, &[b * t, c, d])?;
        let mut all_stats = Vec::new();
        let mut caches: Vec<stratum_tensor::Tensor64> = Vec::new();
        let eps = 1e-6;
        for block in &self.blocks {
            let normed = f.tape.layer_norm(q, eps)?;
            let mut aopts = AttnOpts { rope: false, causal: false, dropout, train, rng };
            let att = mh_cross_attention(f, &block.attn, normed, kv, None, &mut aopts)?;
            let att4 = f.tape.reshape(att, vec![b, t * c, d])?;
            let att4 = crate::attention::droppath(f, att4, block.droppath_rate, train, rng)?;
            let att = f.tape.reshape(att4, vec![b * t, c, d])?;
            let tilde = f.tape.add(q, att)?;
            let z = f.tape.layer_norm(tilde, eps)?;
            let z = f.tape.reshape(z, vec![b * t * c, d])?;
            let (ffn, stats) = block.moe.dse_ffn(f, z)?;
            let ffn = ffn_dropout(f, ffn, dropout, train, rng);
            let ffn4 = f.tape.reshape(ffn, vec![b, t * c, d])?;
            let ffn4 = crate::attention::droppath(f, ffn4, block.droppath_rate, train, rng)?;
            let ffn = f.tape.reshape(ffn4, vec![b * t, c, d])?;
            q = f.tape.add(tilde, ffn)?;
            all_stats.push(stats);
            caches.push(f.tape.value(q).reshape(vec![b, t, c, d])?);
        }
        if let Some(probe) = probe {
            probe.extend(caches);
        }
        let out = self.out_proj.fwd(f, q)?; // (B*T, C, out)
        let out = f.tape.reshape(out, vec![b, t, c, self.out_dim])?;
        Ok((out, all_stats))
    }
}

/// Dual-stream classification head: one branch pools over groups and
/// keeps temporal structure, the other pools over patches and keeps group
/// structure; both are fused for the task logits.
pub struct DualStreamHead {
    pub t_mlp: Mlp,
    pub g_mlp: Mlp,
    pub fuse: Linear,
    pub out: Linear,
    pub t_len: usize,
    pub n_groups: usize,
    pub n_classes: usize,
}

impl DualStreamHead {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        name: &str,
        d_m: usize,
        hidden: usize,
        t_len: usize,
        n_groups: usize,
        n_classes: usize,
    ) -> Result<Self> {
        Ok(Self {
            t_mlp: Mlp::build(store, rng, &format!("{name}.t_mlp"), t_len * d_m, hidden, d_m)?,
            g_mlp: Mlp::build(store, rng, &format!("{name}.g_mlp"), n_groups * d_m, hidden, d_m)?,
            fuse: Linear::build(store, rng, &format!("{name}.fuse"), 2 * d_m, hidden, true)?,
            out: Linear::build(store, rng, &format!("{name}.out"), hidden, n_classes, true)?,
            t_len,
            n_groups,
            n_classes,
        })
    }

    /// Parameter count of this head.
    pub fn param_count(&self, d_m: usize, hidden: usize) -> usize {
        let mlp = |inp: usize| inp * hidden + hidden + hidden * d_m + d_m;
        mlp(self.t_len * d_m)
            + mlp(self.n_groups * d_m)
            + 2 * d_m * hidden
            + hidden
            + hidden * self.n_classes
            + self.n_classes
    }

    /// A flattened-MLP reference head of the same hidden width:
    /// Linear(T*G*D -> hidden) -> Linear(hidden -> classes).
    pub fn flattened_reference_count(
        t_len: usize,
        n_groups: usize,
        d_m: usize,
        hidden: usize,
        n_classes: usize,
    ) -> usize {
        t_len * n_groups * d_m * hidden + hidden + hidden * n_classes + n_classes
    }

    /// `h_enc (B, T, G, D)` -> logits `(B, n_classes)`.
    pub fn fwd(&self, f: &mut Fwd, h_enc: Var) -> Result<Var> {
        let shape = f.tape.shape(h_enc).to_vec();
        let (b, t, g, d) = (shape[0], shape[1], shape[2], shape[3]);
        if t != self.t_len || g != self.n_groups {
            return Err(crate::ModelError::BadBatch {
                got: shape,
                expected: format!("(B, {}, {}, {})", self.t_len, self.n_groups, d),
            });
        }
        // Temporal branch: average groups, flatten patches.
        let tb = f.tape.mean_axis(h_enc, 2, false)?; // (B, T, D)
        let tb = f.tape.reshape(tb, vec![b, t * d])?;
        let tb = self.t_mlp.fwd(f, tb)?; // (B, D)
        // Group branch: average patches, flatten groups.
        let gb = f.tape.mean_axis(h_enc, 1, false)?; // (B, G, D)
        let gb = f.tape.reshape(gb, vec![b, g * d])?;
        let gb = self.g_mlp.fwd(f, gb)?; // (B, D)
        let cat = f.tape.concat(1, &[tb, gb])?; // (B, 2D)
        let cat = f.tape.layer_norm(cat, 1e-6)?;
        let fused = self.fuse.fwd(f, cat)?;
        let fused = f.tape.gelu(fused);
        self.out.fwd(f, fused)
    }
}
