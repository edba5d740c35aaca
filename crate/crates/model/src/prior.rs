//! Static region/network priors and dynamic micro-frame priors for the
//! group cross-attention.

use stratum_signal::{GroupTable, Montage};
use stratum_tensor::{ParamId, ParamStore64, RngStream, Tensor64, Var};

use crate::attention::{Fwd, Mlp};
use crate::config::ModelConfig;
use crate::{ModelError, Result};

/// Static group queries plus the fixed bias matrix and its learnable
/// relaxation.
pub struct StaticPrior {
    pub q_s: ParamId,
    pub delta_pri: ParamId,
    /// Fixed (|P|, C) matrix: 0 for in-group entries, -b_static outside.
    pub m_s: Tensor64,
    pub group_names: Vec<String>,
    pub n_groups: usize,
}

impl StaticPrior {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        cfg: &ModelConfig,
        table: &GroupTable,
        montage: &Montage,
    ) -> Result<Self> {
        let membership = table.membership(montage);
        let n_groups = membership.len();
        let c = montage.len();
        let mut m = vec![-cfg.b_static; n_groups * c];
        for (g, members) in membership.iter().enumerate() {
            for &ch in members {
                m[g * c + ch] = 0.0;
            }
        }
        let m_s = Tensor64::from_vec(vec![n_groups, c], m)?;
        let q_s = store.register(
            "tokenizer.static.q_s",
            Tensor64::from_vec(
                vec![n_groups, cfg.d_m],
                rng.fill_normal(n_groups * cfg.d_m, 1.0 / (cfg.d_m as f64).sqrt()),
            )?,
        )?;
        let delta_pri =
            store.register("tokenizer.static.delta_pri", Tensor64::zeros(&[n_groups, c]))?;
        Ok(Self {
            q_s,
            delta_pri,
            m_s,
            group_names: table.groups().iter().map(|g| g.name.clone()).collect(),
            n_groups,
        })
    }

    /// `M_s + Delta_pri` as a tape node: (|P|, C).
    pub fn bias(&self, f: &mut Fwd) -> Result<Var> {
        let m = f.tape.constant(self.m_s.clone());
        let d = f.p(self.delta_pri);
        Ok(f.tape.add(m, d)?)
    }

    /// Structure-preservation summary of the trained prior.
    pub fn preservation_report(&self, store: &ParamStore64) -> PriorPreservation {
        let delta = store.value(self.delta_pri);
        let m = &self.m_s;
        let rel_update = delta.norm2() / m.norm2().max(1e-300);
        let (mut in_sum, mut in_n, mut out_sum, mut out_n) = (0.0, 0usize, 0.0, 0usize);
        for (i, (&ms, &dl)) in m.data().iter().zip(delta.data().iter()).enumerate() {
            let _ = i;
            let v = ms + dl;
            if ms == 0.0 {
                in_sum += v;
                in_n += 1;
            } else {
                out_sum += v;
                out_n += 1;
            }
        }
        let in_group_mean = in_sum / in_n.max(1) as f64;
        let out_group_mean = out_sum / out_n.max(1) as f64;
        PriorPreservation {
            rel_update,
            in_group_mean,
            out_group_mean,
            gap: in_group_mean - out_group_mean,
        }
    }
}

/// `||Delta_pri|| / ||M_s||` and the in-group minus out-group bias gap of
/// the effective prior.
#[derive(Clone, Copy, Debug)]
pub struct PriorPreservation {
    pub rel_update: f64,
    pub in_group_mean: f64,
    pub out_group_mean: f64,
    pub gap: f64,
}

/// Micro-frame correlation module: frame projector, Q/K maps, node
/// encoder, and the dynamic candidate queries.
pub struct DynamicPrior {
    pub phi_w: ParamId,
    pub phi_b: ParamId,
    pub phi_kernel: usize,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub node_mlp: Mlp,
    pub q_d: ParamId,
    pub pairs: Vec<(usize, usize)>,
}

impl DynamicPrior {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let h = cfg.frame_embed;
        let d = cfg.corr_dim;
        let phi_kernel = 5.min(cfg.frame_samples());
        let phi_w = store.register(
            "tokenizer.dyn.phi_w",
            Tensor64::from_vec(
                vec![h, phi_kernel],
                rng.fill_normal(h * phi_kernel, 1.0 / (phi_kernel as f64).sqrt()),
            )?,
        )?;
        let phi_b = store.register("tokenizer.dyn.phi_b", Tensor64::zeros(&[h]))?;
        let std = 1.0 / (h as f64).sqrt();
        let w_q = store.register(
            "tokenizer.dyn.w_q",
            Tensor64::from_vec(vec![h, d], rng.fill_normal(h * d, std))?,
        )?;
        let w_k = store.register(
            "tokenizer.dyn.w_k",
            Tensor64::from_vec(vec![h, d], rng.fill_normal(h * d, std))?,
        )?;
        let node_mlp = Mlp::build(store, rng, "tokenizer.dyn.node", 5, 16, 1)?;
        let n_cand = cfg.n_dynamic_candidates();
        let q_d = store.register(
            "tokenizer.dyn.q_d",
            Tensor64::from_vec(
                vec![n_cand, cfg.d_m],
                rng.fill_normal(n_cand * cfg.d_m, 1.0 / (cfg.d_m as f64).sqrt()),
            )?,
        )?;
        Ok(Self { phi_w, phi_b, phi_kernel, w_q, w_k, node_mlp, q_d, pairs: cfg.frame_pairs() })
    }
}

/// Row summary of an affinity matrix: mean, std, and the top-3
/// off-diagonal neighbor affinities (repeating the weakest when fewer
/// than 3 neighbors exist). Indices are data-dependent and detached;
/// values keep gradients.
fn row_summary(f: &mut Fwd, a: Var, c: usize, eps: f64) -> Result<Var> {
    let rows = f.tape.shape(a)[0] * c; // a is (R, C, C)
    let r3 = f.tape.reshape(a, vec![rows, c])?;
    let mean = f.tape.mean_axis(r3, 1, true)?; // (rows, 1)
    let centered = f.tape.sub(r3, mean)?;
    let sq = f.tape.square(centered);
    let var = f.tape.mean_axis(sq, 1, true)?;
    let var = f.tape.add_scalar(var, eps);
    let std = f.tape.sqrt(var); // (rows, 1)

    // Top-3 off-diagonal entries per row, by value, index-detached.
    let vals = f.tape.value(r3).clone();
    let mut flat_idx = Vec::with_capacity(rows * 3);
    for r in 0..rows {
        let diag = r % c;
        let row = &vals.data()[r * c..(r + 1) * c];
        let mut order: Vec<usize> = (0..c).filter(|&j| j != diag).collect();
        order.sort_by(|&x, &y| row[y].partial_cmp(&row[x]).unwrap().then(x.cmp(&y)));
        for s in 0..3 {
            let j = order[s.min(order.len() - 1)];
            flat_idx.push(r * c + j);
        }
    }
    let flat = f.tape.reshape(r3, vec![rows * c])?;
    let picked = f.tape.index_select(flat, 0, flat_idx)?;
    let top3 = f.tape.reshape(picked, vec![rows, 3])?;
    Ok(f.tape.concat(1, &[mean, std, top3])?)
}

/// Lag-limited micro-frame channel-affinity bias.
///
/// Returns the candidate bias tensor (B, T, |G|, C) where row g encodes
/// each channel's affinity pattern in frame pair g = (i, j).
pub fn dyn_bias(
    f: &mut Fwd,
    dp: &DynamicPrior,
    raw: Var,
    cfg: &ModelConfig,
) -> Result<Var> {
    let shape = f.tape.shape(raw).to_vec();
    let (b, t, c, p) = (shape[0], shape[1], shape[2], shape[3]);
    let fr = cfg.frames;
    let s = cfg.frame_samples();
    if fr * s != p {
        return Err(ModelError::BadConfig(format!("frames {fr} x {s} != patch {p}")));
    }
    // (B,T,C,P) -> (B,T,C,F,S) -> (B,T,F,C,S) -> (BTFC, 1, S)
    let x = f.tape.reshape(raw, vec![b, t, c, fr, s])?;
    let x = f.tape.permute(x, &[0, 1, 3, 2, 4])?;
    let n = b * t * fr * c;
    let x = f.tape.reshape(x, vec![n, 1, s])?;
    // Frame embedding: small conv, GELU, time average.
    let (w, bias) = (f.p(dp.phi_w), f.p(dp.phi_b));
    let pad = dp.phi_kernel / 2;
    let y = f.tape.conv1d(x, w, bias, dp.phi_kernel, 2.min(s), pad)?;
    let y = f.tape.gelu(y);
    let e = f.tape.mean_axis(y, 2, false)?; // (N, H)
    let e = f.tape.reshape(e, vec![b * t, fr, c, cfg.frame_embed])?;
    let wq = f.p(dp.w_q);
    let wk = f.p(dp.w_k);
    let q = f.tape.matmul(e, wq)?; // (BT, F, C, d)
    let k = f.tape.matmul(e, wk)?;

    let scale = 1.0 / (cfg.corr_dim as f64).sqrt();
    let mut per_pair = Vec::with_capacity(dp.pairs.len());
    for &(i, j) in &dp.pairs {
        let qi = f.tape.index_select(q, 1, vec![i])?; // (BT, 1, C, d)
        let qi = f.tape.reshape(qi, vec![b * t, c, cfg.corr_dim])?;
        let kj = f.tape.index_select(k, 1, vec![j])?;
        let kj = f.tape.reshape(kj, vec![b * t, c, cfg.corr_dim])?;
        let kjt = f.tape.transpose_last(kj)?;
        let a = f.tape.matmul(qi, kjt)?; // (BT, C, C)
        let a = f.tape.scale(a, scale);
        let feats = row_summary(f, a, c, 1e-12)?; // (BT*C, 5)
        let enc = dp.node_mlp.fwd(f, feats)?; // (BT*C, 1)
        let bg = f.tape.reshape(enc, vec![b * t, 1, c])?;
        per_pair.push(bg);
    }
    let cat = f.tape.concat(1, &per_pair)?; // (BT, |G|, C)
    Ok(f.tape.reshape(cat, vec![b, t, dp.pairs.len(), c])?)
}
