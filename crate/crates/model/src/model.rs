//! The assembled model: prior-guided tokenizer, interleaved MoE encoder,
//! and stage-specific heads, all registered in one parameter store.

use std::collections::BTreeMap;

use stratum_signal::{GroupTable, Montage};
use stratum_tensor::{ParamId, ParamStore64, RngStream, Tensor64, Var};

use crate::attention::{droppath, mh_cross_attention, AttnOpts, AttnParams, Fwd};
use crate::config::{ModelConfig, SharedSplit, Stage};
use crate::features::{embed_features, psd_db, FeatureParams};
use crate::heads::{DualStreamHead, Reconstructor};
use crate::losses::{combine_pretrain, loss_aux, loss_gpt, loss_mae};
use crate::masking::{MaskKind, MaskPlan};
use crate::moe::{ffn_dropout, LayerStats, MoeLayer};
use crate::prior::{dyn_bias, DynamicPrior, StaticPrior};
use crate::selector::{gumbel_select, Selector};
use crate::transformer::{
    encoder_layer_fwd, interleaved_kinds, EncoderLayer, LayerFwdOpts, LayerKind, LayerSpec,
};
use crate::{ModelError, Result};

pub struct TokenizerBlock {
    pub attn: AttnParams,
    pub moe: MoeLayer,
    pub droppath_rate: f64,
}

pub struct Model {
    pub cfg: ModelConfig,
    pub montage: Montage,
    pub table: GroupTable,
    pub features: FeatureParams,
    pub static_prior: StaticPrior,
    pub dynamic_prior: DynamicPrior,
    pub selector: Selector,
    pub mask_token: ParamId,
    pub tokenizer_blocks: Vec<TokenizerBlock>,
    pub encoder: Vec<EncoderLayer>,
    pub reconstructor: Reconstructor,
    pub heads: BTreeMap<usize, DualStreamHead>,
    pub layer_specs: Vec<LayerSpec>,
}

impl Model {
    /// Uniform dense splits (one routed expert per layer): the pilot
    /// configuration.
    pub fn dense_splits(cfg: &ModelConfig) -> Vec<SharedSplit> {
        vec![SharedSplit { e_sh: 0, e_sp: 1 }; cfg.total_moe_layers()]
    }

    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        cfg: ModelConfig,
        table: GroupTable,
        montage: Montage,
        splits: &[SharedSplit],
    ) -> Result<Self> {
        cfg.validate()?;
        let total = cfg.total_moe_layers();
        if splits.len() != total {
            return Err(ModelError::BadConfig(format!(
                "{} expert splits for {} MoE layers",
                splits.len(),
                total
            )));
        }
        let mut rng = rng.substream(0xB111D);
        let features = FeatureParams::build(store, &mut rng, &cfg, &table, &montage)?;
        let static_prior = StaticPrior::build(store, &mut rng, &cfg, &table, &montage)?;
        let dynamic_prior = DynamicPrior::build(store, &mut rng, &cfg)?;
        let selector = Selector::build(store, &mut rng, cfg.d_m, cfg.selector_hidden)?;
        let mask_token = store.register(
            "tokenizer.mask_token",
            Tensor64::from_vec(vec![cfg.d_m], rng.fill_normal(cfg.d_m, 0.02))?,
        )?;

        let dp_rate = |li: usize| {
            if total > 1 {
                cfg.droppath * li as f64 / (total - 1) as f64
            } else {
                0.0
            }
        };
        let mut layer_specs = Vec::new();
        let mut li = 0usize;

        let mut tokenizer_blocks = Vec::new();
        for i in 0..cfg.tokenizer_blocks {
            let split = splits[li];
            let name = format!("tokenizer.block{i}");
            tokenizer_blocks.push(TokenizerBlock {
                attn: AttnParams::build(store, &mut rng, &format!("{name}.attn"), cfg.d_m, cfg.n_heads)?,
                moe: MoeLayer::build(
                    store,
                    &mut rng,
                    &format!("{name}.moe"),
                    li,
                    cfg.d_m,
                    cfg.expert_dim,
                    split,
                    cfg.top_k.min(split.e_sp),
                )?,
                droppath_rate: dp_rate(li),
            });
            layer_specs.push(LayerSpec {
                index: li,
                kind: LayerKind::TokenizerCross,
                e_total: split.e_sh + split.e_sp,
                e_sh: split.e_sh,
                e_sp: split.e_sp,
                top_k: cfg.top_k.min(split.e_sp),
            });
            li += 1;
        }

        let mut encoder = Vec::new();
        for (i, kind) in interleaved_kinds(cfg.group_blocks, cfg.temporal_blocks)
            .into_iter()
            .enumerate()
        {
            let split = splits[li];
            let prefix = match kind {
                LayerKind::Group => "encoder.group",
                LayerKind::Temporal => "encoder.temporal",
                _ => unreachable!(),
            };
            let name = format!("{prefix}{i}");
            encoder.push(EncoderLayer {
                kind,
                attn: AttnParams::build(store, &mut rng, &format!("{name}.attn"), cfg.d_m, cfg.n_heads)?,
                moe: MoeLayer::build(
                    store,
                    &mut rng,
                    &format!("{name}.moe"),
                    li,
                    cfg.d_m,
                    cfg.expert_dim,
                    split,
                    cfg.top_k.min(split.e_sp),
                )?,
                droppath_rate: dp_rate(li),
            });
            layer_specs.push(LayerSpec {
                index: li,
                kind,
                e_total: split.e_sh + split.e_sp,
                e_sh: split.e_sh,
                e_sp: split.e_sp,
                top_k: cfg.top_k.min(split.e_sp),
            });
            li += 1;
        }

        let reconstructor =
            Reconstructor::build(store, &mut rng, &cfg, &splits[li..], li, total)?;
        for (i, split) in splits[li..].iter().enumerate() {
            layer_specs.push(LayerSpec {
                index: li + i,
                kind: LayerKind::Decoder,
                e_total: split.e_sh + split.e_sp,
                e_sh: split.e_sh,
                e_sp: split.e_sp,
                top_k: cfg.top_k.min(split.e_sp),
            });
        }
        for spec in &layer_specs {
            spec.validate()?;
        }

        Ok(Self {
            cfg,
            montage,
            table,
            features,
            static_prior,
            dynamic_prior,
            selector,
            mask_token,
            tokenizer_blocks,
            encoder,
            reconstructor,
            heads: BTreeMap::new(),
            layer_specs,
        })
    }

    /// Register a task head (fine-tuning); `n_groups` must match the
    /// fine-tuning group count 16 + gumbel_k.
    pub fn add_head(
        &mut self,
        store: &mut ParamStore64,
        rng: &mut RngStream,
        dataset_id: usize,
        t_len: usize,
        n_classes: usize,
    ) -> Result<()> {
        let n_groups = self.static_prior.n_groups + self.cfg.gumbel_k;
        let mut rng = rng.substream(0xEAD0 + dataset_id as u64);
        let head = DualStreamHead::build(
            store,
            &mut rng,
            &format!("head.{dataset_id}"),
            self.cfg.d_m,
            self.cfg.head_hidden,
            t_len,
            n_groups,
            n_classes,
        )?;
        self.heads.insert(dataset_id, head);
        Ok(())
    }

    /// Fine-tuning group count (static + selected dynamic).
    pub fn finetune_groups(&self) -> usize {
        self.static_prior.n_groups + self.cfg.gumbel_k
    }

    pub fn pretrain_groups(&self) -> usize {
        self.static_prior.n_groups + self.cfg.n_dynamic_candidates()
    }
}

pub struct EncodeOpts<'a> {
    pub stage: Stage,
    pub causal: bool,
    pub train: bool,
    pub probe: bool,
    pub gumbel_tau: f64,
    pub gumbel_noise: bool,
    pub masks: Option<&'a MaskPlan>,
    /// Fixed dynamic-group selection (per b*T row), bypassing the selector.
    pub frozen_selection: Option<&'a [Vec<usize>]>,
    /// Replace the assembled (B, T, G, C) attention bias with this node
    /// (attribution probes differentiate w.r.t. it).
    pub bias_override: Option<Var>,
}

impl<'a> EncodeOpts<'a> {
    pub fn inference(stage: Stage) -> Self {
        Self {
            stage,
            causal: false,
            train: false,
            probe: false,
            gumbel_tau: 0.1,
            gumbel_noise: false,
            masks: None,
            frozen_selection: None,
            bias_override: None,
        }
    }
}

pub struct EncodeOut {
    /// (B, T, G, D) encoder output.
    pub h_enc: Var,
    pub stats: Vec<LayerStats>,
    /// Per-stack-layer detached activations (probe mode only).
    pub activations: Vec<Tensor64>,
    /// Selected dynamic candidate ids per (b * T + t) row (fine-tuning).
    pub selection: Option<Vec<Vec<usize>>>,
    /// Assembled attention bias actually used: (B, T, G, C).
    pub full_bias: Var,
    /// Channel-embedding rows (C, D).
    pub e_rows: Var,
    pub n_groups: usize,
}

impl Model {
    pub fn encode(
        &self,
        f: &mut Fwd,
        raw: Var,
        opts: &EncodeOpts,
        rng: &mut RngStream,
    ) -> Result<EncodeOut> {
        let shape = f.tape.shape(raw).to_vec();
        if shape.len() != 4 {
            return Err(ModelError::BadBatch { got: shape, expected: "(B, T, C, P)".into() });
        }
        let (b, t, c) = (shape[0], shape[1], shape[2]);
        let n_static = self.static_prior.n_groups;

        // Masked cells are removed from the raw signal before any feature
        // or bias computation, so no path can leak their content.
        let masked_raw = match opts.masks {
            Some(plan) => {
                let keep = f.tape.constant(plan.keep_mask());
                f.tape.mul(raw, keep)?
            }
            None => raw,
        };

        let mut drop_rng = rng.substream(1);
        let feat = embed_features(f, &self.features, masked_raw, &self.cfg, opts.train, &mut drop_rng)?;
        let e_rows = feat.e_rows;
        let mut x = feat.x;
        if let Some(plan) = opts.masks {
            let cell = f.tape.constant(plan.cell_mask());
            let keep = f.tape.constant(plan.keep_mask());
            let mt = f.p(self.mask_token);
            let replacement = f.tape.add(mt, e_rows)?; // (C, D)
            let kept = f.tape.mul(x, keep)?;
            let injected = f.tape.mul(replacement, cell)?;
            x = f.tape.add(kept, injected)?;
        }

        let m_tilde = dyn_bias(f, &self.dynamic_prior, masked_raw, &self.cfg)?;

        // Dynamic queries/biases per stage.
        let q_table = f.p(self.dynamic_prior.q_d);
        let n_cand = self.cfg.n_dynamic_candidates();
        let (q_dyn, m_dyn, selection, k_act) = match opts.stage {
            Stage::Pretrain => {
                let q = f.tape.broadcast(q_table, &[b, t, n_cand, self.cfg.d_m])?;
                (q, m_tilde, None, n_cand)
            }
            Stage::Finetune => {
                let k = self.cfg.gumbel_k;
                if let Some(frozen) = opts.frozen_selection {
                    let rows = b * t;
                    if frozen.len() != rows {
                        return Err(ModelError::Invalid(format!(
                            "frozen selection has {} rows for {rows}",
                            frozen.len()
                        )));
                    }
                    let flat: Vec<usize> = frozen
                        .iter()
                        .enumerate()
                        .flat_map(|(r, ch)| ch.iter().map(move |&g| r * n_cand + g))
                        .collect();
                    let m_rows = f.tape.reshape(m_tilde, vec![rows * n_cand, c])?;
                    let m_sel = f.tape.index_select(m_rows, 0, flat)?;
                    let m_sel = f.tape.reshape(m_sel, vec![b, t, k, c])?;
                    let g_only: Vec<usize> =
                        frozen.iter().flat_map(|ch| ch.iter().copied()).collect();
                    let q_sel = f.tape.index_select(q_table, 0, g_only)?;
                    let q_sel = f.tape.reshape(q_sel, vec![b, t, k, self.cfg.d_m])?;
                    (q_sel, m_sel, Some(frozen.to_vec()), k)
                } else {
                    let mut gumbel_rng = rng.substream(2);
                    let noise = opts.gumbel_noise.then_some(&mut gumbel_rng);
                    let sel = gumbel_select(
                        f,
                        &self.selector,
                        m_tilde,
                        q_table,
                        opts.gumbel_tau,
                        k,
                        noise,
                    )?;
                    (sel.q_d, sel.m_d, Some(sel.indices), k)
                }
            }
        };
        let n_groups = n_static + k_act;

        // Assemble queries and biases: statics first, dynamics after.
        let q_s = f.p(self.static_prior.q_s);
        let q_s = f.tape.broadcast(q_s, &[b, t, n_static, self.cfg.d_m])?;
        let queries = f.tape.concat(2, &[q_s, q_dyn])?;
        debug_assert_eq!(f.tape.shape(queries)[2], n_groups);

        let static_bias = self.static_prior.bias(f)?; // (|P|, C)
        let static_bias = f.tape.broadcast(static_bias, &[b, t, n_static, c])?;
        let assembled = f.tape.concat(2, &[static_bias, m_dyn])?;
        let full_bias = match opts.bias_override {
            Some(override_var) => override_var,
            None => assembled,
        };

        // Tokenizer cross-attention blocks.
        let kv = f.tape.reshape(x, vec![b * t, c, self.cfg.d_m])?;
        let mut h = f.tape.reshape(queries, vec![b * t, n_groups, self.cfg.d_m])?;
        let bias3 = f.tape.reshape(full_bias, vec![b * t, n_groups, c])?;
        let bias4 = f.tape.reshape(bias3, vec![b * t, 1, n_groups, c])?;

        let mut activations = Vec::new();
        let mut stats = Vec::new();
        let eps = self.cfg.norm_eps;
        let mut tok_rng = rng.substream(3);
        for block in &self.tokenizer_blocks {
            let normed = f.tape.layer_norm(h, eps)?;
            let mut aopts = AttnOpts {
                rope: false,
                causal: false,
                dropout: self.cfg.dropout,
                train: opts.train,
                rng: &mut tok_rng,
            };
            let att = mh_cross_attention(f, &block.attn, normed, kv, Some(bias4), &mut aopts)?;
            let att4 = f.tape.reshape(att, vec![b, t, n_groups, self.cfg.d_m])?;
            let att4 = droppath(f, att4, block.droppath_rate, opts.train, &mut tok_rng)?;
            let att = f.tape.reshape(att4, vec![b * t, n_groups, self.cfg.d_m])?;
            let tilde = f.tape.add(h, att)?;
            let z = f.tape.layer_norm(tilde, eps)?;
            let z = f.tape.reshape(z, vec![b * t * n_groups, self.cfg.d_m])?;
            let (ffn, st) = block.moe.dse_ffn(f, z)?;
            let ffn = ffn_dropout(f, ffn, self.cfg.dropout, opts.train, &mut tok_rng);
            let ffn4 = f.tape.reshape(ffn, vec![b, t, n_groups, self.cfg.d_m])?;
            let ffn4 = droppath(f, ffn4, block.droppath_rate, opts.train, &mut tok_rng)?;
            let ffn = f.tape.reshape(ffn4, vec![b * t, n_groups, self.cfg.d_m])?;
            h = f.tape.add(tilde, ffn)?;
            stats.push(st);
            if opts.probe {
                activations.push(f.tape.value(h).reshape(vec![
                    b,
                    t,
                    n_groups,
                    self.cfg.d_m,
                ])?);
            }
        }

        // Interleaved encoder.
        let mut h4 = f.tape.reshape(h, vec![b, t, n_groups, self.cfg.d_m])?;
        let mut enc_rng = rng.substream(4);
        for layer in &self.encoder {
            let mut lopts = LayerFwdOpts {
                causal: opts.causal,
                dropout: self.cfg.dropout,
                train: opts.train,
                rng: &mut enc_rng,
            };
            let (next, st) = encoder_layer_fwd(f, layer, h4, &mut lopts)?;
            h4 = next;
            stats.push(st);
            if opts.probe {
                activations.push(f.tape.value(h4).clone());
            }
        }

        Ok(EncodeOut {
            h_enc: h4,
            stats,
            activations,
            selection,
            full_bias,
            e_rows,
            n_groups,
        })
    }

    /// Reconstruction head over an encoded batch.
    pub fn reconstruct(
        &self,
        f: &mut Fwd,
        enc: &EncodeOut,
        train: bool,
        rng: &mut RngStream,
        probe: Option<&mut Vec<Tensor64>>,
    ) -> Result<(Var, Vec<LayerStats>)> {
        let mut dec_rng = rng.substream(5);
        self.reconstructor.fwd(
            f,
            enc.h_enc,
            enc.e_rows,
            self.cfg.dropout,
            train,
            &mut dec_rng,
            probe,
        )
    }

    /// Task logits from an encoded batch.
    pub fn classify(&self, f: &mut Fwd, dataset_id: usize, h_enc: Var) -> Result<Var> {
        let head = self.heads.get(&dataset_id).ok_or_else(|| {
            ModelError::Invalid(format!("no head registered for dataset {dataset_id}"))
        })?;
        head.fwd(f, h_enc)
    }
}

/// The two fresh mask plans drawn for one pretraining step.
pub struct PretrainPlans {
    pub tp: MaskPlan,
    pub ch: MaskPlan,
}

impl PretrainPlans {
    pub fn sample(b: usize, t: usize, c: usize, rng: &mut RngStream) -> Self {
        let mut r1 = rng.substream(11);
        let mut r2 = rng.substream(12);
        Self {
            tp: MaskPlan::sample(MaskKind::TemporalPatches, b, t, c, &mut r1),
            ch: MaskPlan::sample(MaskKind::Channels, b, t, c, &mut r2),
        }
    }
}

pub struct PretrainOut {
    pub total: Var,
    pub mae_tp: f64,
    pub mae_ch: f64,
    pub gpt: f64,
    pub aux: f64,
    /// The component losses as tape nodes (for per-objective probes).
    pub mae_tp_var: Var,
    pub mae_ch_var: Var,
    pub gpt_var: Var,
    /// Routing stats from all three passes.
    pub stats: Vec<LayerStats>,
}

impl Model {
    /// The three self-supervised objectives plus the balance term:
    /// masked-patch and masked-channel passes, and a causal
    /// next-patch pass, sharing one constant reconstruction target.
    pub fn pretrain_loss(
        &self,
        f: &mut Fwd,
        raw: Var,
        plans: &PretrainPlans,
        beta: f64,
        train: bool,
        rng: &mut RngStream,
    ) -> Result<PretrainOut> {
        let shape = f.tape.shape(raw).to_vec();
        let (b, t, c, p) = (shape[0], shape[1], shape[2], shape[3]);

        // Constant target: raw waveform concat PSD-dB, from the unmasked
        // signal, detached from the input.
        let raw_vals = f.tape.value(raw).clone();
        let raw_const = f.tape.constant(raw_vals);
        let flat = f.tape.reshape(raw_const, vec![b * t * c, p])?;
        let spec = psd_db(f.tape, flat, p as f64)?;
        let spec = f.tape.reshape(spec, vec![b, t, c, p / 2 + 1])?;
        let xref = f.tape.concat(3, &[raw_const, spec])?;

        let mut all_stats = Vec::new();

        // Masked temporal-patch pass.
        let mut rng_tp = rng.substream(21);
        let opts = EncodeOpts {
            stage: Stage::Pretrain,
            causal: false,
            train,
            probe: false,
            gumbel_tau: 1.0,
            gumbel_noise: false,
            masks: Some(&plans.tp),
            frozen_selection: None,
            bias_override: None,
        };
        let enc = self.encode(f, raw, &opts, &mut rng_tp)?;
        let (xhat, dstats) = self.reconstruct(f, &enc, train, &mut rng_tp, None)?;
        let l_tp = loss_mae(f, xhat, xref, &plans.tp)?;
        all_stats.extend(enc.stats);
        all_stats.extend(dstats);

        // Masked channel pass.
        let mut rng_ch = rng.substream(22);
        let opts = EncodeOpts {
            stage: Stage::Pretrain,
            causal: false,
            train,
            probe: false,
            gumbel_tau: 1.0,
            gumbel_noise: false,
            masks: Some(&plans.ch),
            frozen_selection: None,
            bias_override: None,
        };
        let enc = self.encode(f, raw, &opts, &mut rng_ch)?;
        let (xhat, dstats) = self.reconstruct(f, &enc, train, &mut rng_ch, None)?;
        let l_ch = loss_mae(f, xhat, xref, &plans.ch)?;
        all_stats.extend(enc.stats);
        all_stats.extend(dstats);

        // Causal next-patch pass (unmasked input).
        let mut rng_gpt = rng.substream(23);
        let opts = EncodeOpts {
            stage: Stage::Pretrain,
            causal: true,
            train,
            probe: false,
            gumbel_tau: 1.0,
            gumbel_noise: false,
            masks: None,
            frozen_selection: None,
            bias_override: None,
        };
        let enc = self.encode(f, raw, &opts, &mut rng_gpt)?;
        let (xhat, dstats) = self.reconstruct(f, &enc, train, &mut rng_gpt, None)?;
        let l_gpt = loss_gpt(f, xhat, xref)?;
        all_stats.extend(enc.stats);
        all_stats.extend(dstats);

        let aux = loss_aux(f, &all_stats)?;
        let total = combine_pretrain(f, l_tp, l_ch, l_gpt, aux, beta)?;
        Ok(PretrainOut {
            total,
            mae_tp: f.tape.value(l_tp).item(),
            mae_ch: f.tape.value(l_ch).item(),
            gpt: f.tape.value(l_gpt).item(),
            aux: f.tape.value(aux).item(),
            mae_tp_var: l_tp,
            mae_ch_var: l_ch,
            gpt_var: l_gpt,
            stats: all_stats,
        })
    }
}
