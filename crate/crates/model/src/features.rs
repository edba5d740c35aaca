//! Temporal-spectral channel features and positional channel embedding.

use stratum_signal::{GroupTable, Montage};
use stratum_tensor::{ParamId, ParamStore64, RngStream, Tape64, Tensor64, Var};

use crate::attention::{Fwd, Linear};
use crate::config::ModelConfig;
use crate::{ModelError, Result};

pub struct ConvBranch {
    pub kernel: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

pub struct FeatureParams {
    pub branches: Vec<ConvBranch>,
    pub w_emb: Linear,
    pub psd_proj: Linear,
    /// Channel positional table over the full electrode superset.
    pub e_c: ParamId,
    /// Montage channel -> superset row.
    pub montage_rows: Vec<usize>,
    conv_flat: usize,
}

/// Output length of one conv branch after both stride-`s` stages.
fn conv_out_len(p: usize, k: usize, s: usize) -> usize {
    let pad = k / 2;
    let l1 = (p + 2 * pad - k) / s + 1;
    (l1 + 2 * pad - k) / s + 1
}

impl FeatureParams {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        cfg: &ModelConfig,
        table: &GroupTable,
        montage: &Montage,
    ) -> Result<Self> {
        let ch = cfg.conv_channels;
        let mut branches = Vec::new();
        for (i, &k) in cfg.conv_kernels.iter().enumerate() {
            let std1 = 1.0 / (k as f64).sqrt();
            let std2 = 1.0 / ((ch * k) as f64).sqrt();
            branches.push(ConvBranch {
                kernel: k,
                w1: store.register(
                    format!("tokenizer.feat.conv{i}.w1"),
                    Tensor64::from_vec(vec![ch, k], rng.fill_normal(ch * k, std1))?,
                )?,
                b1: store.register(format!("tokenizer.feat.conv{i}.b1"), Tensor64::zeros(&[ch]))?,
                w2: store.register(
                    format!("tokenizer.feat.conv{i}.w2"),
                    Tensor64::from_vec(vec![ch, ch * k], rng.fill_normal(ch * ch * k, std2))?,
                )?,
                b2: store.register(format!("tokenizer.feat.conv{i}.b2"), Tensor64::zeros(&[ch]))?,
            });
        }
        let l2 = conv_out_len(cfg.patch_len, cfg.conv_kernels[0], cfg.conv_stride);
        for &k in &cfg.conv_kernels {
            if conv_out_len(cfg.patch_len, k, cfg.conv_stride) != l2 {
                return Err(ModelError::BadConfig(format!(
                    "conv kernels {:?} disagree on output length at P={}",
                    cfg.conv_kernels, cfg.patch_len
                )));
            }
        }
        let conv_flat = cfg.conv_kernels.len() * ch * l2;
        let half = cfg.d_m / 2;
        let w_emb = Linear::build(store, rng, "tokenizer.feat.w_emb", conv_flat, half, true)?;
        let d_s = cfg.patch_len / 2 + 1;
        let psd_proj = Linear::build(store, rng, "tokenizer.feat.psd_proj", d_s, half, true)?;
        let n_sup = table.superset().len();
        let e_c = store.register(
            "tokenizer.feat.e_c",
            Tensor64::from_vec(vec![n_sup, cfg.d_m], rng.fill_normal(n_sup * cfg.d_m, 0.02))?,
        )?;
        let montage_rows = montage.superset_rows(table)?;
        Ok(Self { branches, w_emb, psd_proj, e_c, montage_rows, conv_flat })
    }

    /// Gathered channel-embedding rows for this montage: (C, D).
    pub fn e_c_rows(&self, f: &mut Fwd) -> Result<Var> {
        let table = f.p(self.e_c);
        Ok(f.tape.index_select(table, 0, self.montage_rows.clone())?)
    }
}

/// Hanning-windowed one-sided PSD in dB along the last axis, floored at
/// 1e-12 before the log. The same routine produces both the spectral
/// feature input and the reconstruction target.
pub fn psd_db(tape: &mut Tape64, x: Var, sample_rate: f64) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let p = *shape.last().unwrap();
    let hann: Vec<f64> = (0..p)
        .map(|n| 0.5 * (1.0 - (std::f64::consts::TAU * n as f64 / p as f64).cos()))
        .collect();
    let wsum: f64 = hann.iter().map(|w| w * w).sum();
    let hann_t = tape.constant(Tensor64::from_vec(vec![p], hann)?);
    let xw = tape.mul(x, hann_t)?;
    let pow = tape.rfft_power(xw)?;
    // One-sided periodogram scaling (interior bins doubled).
    let k_bins = p / 2 + 1;
    let base = 1.0 / (sample_rate * wsum);
    let mut scale = vec![2.0 * base; k_bins];
    scale[0] = base;
    scale[k_bins - 1] = base;
    let scale_t = tape.constant(Tensor64::from_vec(vec![k_bins], scale)?);
    let psd = tape.mul(pow, scale_t)?;
    let floored = tape.clamp_min(psd, 1e-12);
    let ln = tape.ln(floored);
    Ok(tape.scale(ln, 10.0 / std::f64::consts::LN_10))
}

pub struct FeatureOut {
    /// (B, T, C, D): concat(ZN(x_t), ZN(x_s)) + E_c rows.
    pub x: Var,
    /// (C, D) gathered channel embedding rows.
    pub e_rows: Var,
}

/// Temporal-spectral embedding of a raw (B, T, C, P) batch.
pub fn embed_features(
    f: &mut Fwd,
    fp: &FeatureParams,
    raw: Var,
    cfg: &ModelConfig,
    train: bool,
    rng: &mut RngStream,
) -> Result<FeatureOut> {
    let shape = f.tape.shape(raw).to_vec();
    if shape.len() != 4 || shape[3] != cfg.patch_len || shape[2] != fp.montage_rows.len() {
        return Err(ModelError::BadBatch {
            got: shape,
            expected: format!("(B, T, {}, {})", fp.montage_rows.len(), cfg.patch_len),
        });
    }
    let (b, t, c, p) = (shape[0], shape[1], shape[2], shape[3]);
    let n = b * t * c;
    let rows = f.tape.reshape(raw, vec![n, 1, p])?;

    // Multi-scale temporal branches.
    let mut branch_outs = Vec::new();
    for br in &fp.branches {
        let (w1, b1, w2, b2) = (f.p(br.w1), f.p(br.b1), f.p(br.w2), f.p(br.b2));
        let pad = br.kernel / 2;
        let y = f.tape.conv1d(rows, w1, b1, br.kernel, cfg.conv_stride, pad)?;
        let y = f.tape.gelu(y);
        let y = f.tape.conv1d(y, w2, b2, br.kernel, cfg.conv_stride, pad)?;
        let y = f.tape.gelu(y);
        branch_outs.push(y);
    }
    let cat = f.tape.concat(1, &branch_outs)?;
    let flat = f.tape.reshape(cat, vec![n, fp.conv_flat])?;
    let proj = fp.w_emb.fwd(f, flat)?;
    let act = f.tape.gelu(proj);
    let x_t = f.tape.rms_norm(act, cfg.norm_eps)?;
    let x_t = f.tape.layer_norm(x_t, cfg.norm_eps)?;

    // Spectral branch.
    let flat_sig = f.tape.reshape(raw, vec![n, p])?;
    let db = psd_db(f.tape, flat_sig, p as f64)?;
    let x_s = fp.psd_proj.fwd(f, db)?;
    let x_s = f.tape.layer_norm(x_s, cfg.norm_eps)?;

    let mut x = f.tape.concat(1, &[x_t, x_s])?;
    if train && cfg.dropout > 0.0 {
        x = f.tape.dropout(x, cfg.dropout, true, rng);
    }
    let x = f.tape.reshape(x, vec![b, t, c, cfg.d_m])?;
    let e_rows = fp.e_c_rows(f)?;
    let x = f.tape.add(x, e_rows)?;
    Ok(FeatureOut { x, e_rows })
}
