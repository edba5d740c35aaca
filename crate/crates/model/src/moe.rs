//! Depth-stratified mixture-of-experts feed-forward blocks.
//!
//! Per layer: `e_sh` always-on shared experts (mean-combined) plus `e_sp`
//! routed specialized experts with top-k selection. Selection uses the
//! router logits plus a non-gradient balance bias; mixing weights come
//! from the unbiased logits of the selected set only.

use stratum_tensor::{ParamId, ParamStore64, RngStream, Tensor64, Var};

use crate::attention::{Fwd, Linear};
use crate::config::SharedSplit;
use crate::{ModelError, Result};

pub struct Expert {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct MoeLayer {
    /// Position in the MoE stack (tokenizer -> encoder -> decoder order).
    pub layer_index: usize,
    pub e_sh: usize,
    pub e_sp: usize,
    pub top_k: usize,
    /// Shared experts first, then specialized.
    pub experts: Vec<Expert>,
    pub router_w: ParamId,
    /// Non-gradient selection bias, updated by load balancing.
    pub router_bias: ParamId,
}

/// Per-layer routing statistics from one forward pass.
pub struct LayerStats {
    pub layer_index: usize,
    /// Dispatch fraction per specialized expert (sums to 1).
    pub dispatch_fraction: Vec<f64>,
    /// Raw dispatch counts per specialized expert.
    pub dispatch_counts: Vec<f64>,
    /// Mean routing probability per specialized expert, on the tape.
    pub mean_prob: Var,
    pub tokens: usize,
}

impl MoeLayer {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        name: &str,
        layer_index: usize,
        d_m: usize,
        expert_dim: usize,
        split: SharedSplit,
        top_k: usize,
    ) -> Result<Self> {
        let e_total = split.e_sh + split.e_sp;
        if e_total == 0 {
            return Err(ModelError::BadConfig(format!("{name}: no experts")));
        }
        if split.e_sp == 0 || top_k > split.e_sp {
            return Err(ModelError::BadConfig(format!(
                "{name}: top_k {top_k} exceeds specialized pool {}",
                split.e_sp
            )));
        }
        let mut experts = Vec::with_capacity(e_total);
        for e in 0..e_total {
            experts.push(Expert {
                fc1: Linear::build(store, rng, &format!("{name}.expert{e}.fc1"), d_m, expert_dim, true)?,
                fc2: Linear::build(store, rng, &format!("{name}.expert{e}.fc2"), expert_dim, d_m, true)?,
            });
        }
        let std = 1.0 / (d_m as f64).sqrt();
        let router_w = store.register(
            format!("{name}.router.w"),
            Tensor64::from_vec(vec![d_m, split.e_sp], rng.fill_normal(d_m * split.e_sp, std))?,
        )?;
        let router_bias =
            store.register(format!("{name}.router.bias"), Tensor64::zeros(&[split.e_sp]))?;
        // Balance-updated, never gradient-updated.
        store.set_trainable_prefix(&format!("{name}.router.bias"), false);
        Ok(Self {
            layer_index,
            e_sh: split.e_sh,
            e_sp: split.e_sp,
            top_k,
            experts,
            router_w,
            router_bias,
        })
    }

    fn expert_fwd(&self, f: &mut Fwd, e: usize, x: Var) -> Result<Var> {
        let h = self.experts[e].fc1.fwd(f, x)?;
        let h = f.tape.gelu(h);
        self.experts[e].fc2.fwd(f, h)
    }

    /// Token-wise MoE on `z (N, D)`. Every token is routed to exactly
    /// `top_k` specialized experts; shared experts run on every token and
    /// are mean-combined.
    pub fn dse_ffn(&self, f: &mut Fwd, z: Var) -> Result<(Var, LayerStats)> {
        let n = f.tape.shape(z)[0];
        let d = f.tape.shape(z)[1];
        let k = self.top_k;

        // Router logits (unbiased, on tape) and biased selection (off tape).
        let rw = f.p(self.router_w);
        let logits = f.tape.matmul(z, rw)?; // (N, e_sp)
        let probs = f.tape.softmax(logits, 1)?;
        let mean_prob = f.tape.mean_axis(probs, 0, false)?; // (e_sp)

        let bias = f.store.value(self.router_bias).data().to_vec();
        let logit_vals = f.tape.value(logits).clone();
        let mut selected: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut counts = vec![0.0f64; self.e_sp];
        for r in 0..n {
            let row = &logit_vals.data()[r * self.e_sp..(r + 1) * self.e_sp];
            let mut order: Vec<usize> = (0..self.e_sp).collect();
            order.sort_by(|&a, &b| {
                let va = row[a] + bias[a];
                let vb = row[b] + bias[b];
                vb.partial_cmp(&va).unwrap().then(a.cmp(&b))
            });
            let mut chosen = order[..k].to_vec();
            chosen.sort_unstable();
            for &e in &chosen {
                counts[e] += 1.0;
            }
            selected.push(chosen);
        }

        // Mixing weights: softmax over the unbiased logits of the selected set.
        let flat_sel: Vec<usize> = selected
            .iter()
            .enumerate()
            .flat_map(|(r, ch)| ch.iter().map(move |&e| r * self.e_sp + e))
            .collect();
        let logits_flat = f.tape.reshape(logits, vec![n * self.e_sp, 1])?;
        let sel_logits = f.tape.index_select(logits_flat, 0, flat_sel)?;
        let sel_logits = f.tape.reshape(sel_logits, vec![n, k])?;
        let mix = f.tape.softmax(sel_logits, 1)?; // (N, k)
        let mix_flat = f.tape.reshape(mix, vec![n * k, 1])?;

        // Routed path: run each specialized expert on its token subset.
        let mut acc = f.tape.constant(Tensor64::zeros(&[n, d]));
        for e in 0..self.e_sp {
            let mut rows = Vec::new();
            let mut wslots = Vec::new();
            for (r, ch) in selected.iter().enumerate() {
                if let Some(slot) = ch.iter().position(|&x| x == e) {
                    rows.push(r);
                    wslots.push(r * k + slot);
                }
            }
            if rows.is_empty() {
                continue;
            }
            let zr = f.tape.index_select(z, 0, rows.clone())?;
            let out = self.expert_fwd(f, self.e_sh + e, zr)?;
            let w = f.tape.index_select(mix_flat, 0, wslots)?; // (n_e, 1)
            let weighted = f.tape.mul(out, w)?;
            acc = f.tape.index_add(acc, 0, rows, weighted)?;
        }

        // Shared path: mean over always-on shared experts.
        if self.e_sh > 0 {
            let mut shared_sum: Option<Var> = None;
            for e in 0..self.e_sh {
                let out = self.expert_fwd(f, e, z)?;
                shared_sum = Some(match shared_sum {
                    Some(s) => f.tape.add(s, out)?,
                    None => out,
                });
            }
            let shared = f.tape.scale(shared_sum.unwrap(), 1.0 / self.e_sh as f64);
            acc = f.tape.add(acc, shared)?;
        }

        let total = (n * k) as f64;
        let stats = LayerStats {
            layer_index: self.layer_index,
            dispatch_fraction: counts.iter().map(|c| c / total).collect(),
            dispatch_counts: counts,
            mean_prob,
            tokens: n,
        };
        Ok((acc, stats))
    }
}

/// Balance update: overloaded experts lose selection bias, underloaded
/// gain it. `fractions` are this batch's dispatch fractions.
pub fn update_router_bias(
    store: &mut ParamStore64,
    layer: &MoeLayer,
    fractions: &[f64],
    rate: f64,
) -> Result<()> {
    let cur = store.value(layer.router_bias).data().to_vec();
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let sign = |x: f64| if x == 0.0 { 0.0 } else { x.signum() };
    let next: Vec<f64> = cur
        .iter()
        .zip(fractions)
        .map(|(b, f)| b + rate * sign(mean - f))
        .collect();
    store.set_value(layer.router_bias, Tensor64::from_vec(vec![cur.len()], next)?);
    Ok(())
}

/// Deterministic dropout hook kept here so MoE layers and attention share
/// the same configuration surface.
pub fn ffn_dropout(
    f: &mut Fwd,
    x: Var,
    rate: f64,
    train: bool,
    rng: &mut RngStream,
) -> Var {
    if train && rate > 0.0 {
        f.tape.dropout(x, rate, true, rng)
    } else {
        x
    }
}
