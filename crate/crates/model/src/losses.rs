//! Training objectives: masked reconstruction, next-patch prediction,
//! routing balance, and weighted cross-entropy.

use stratum_tensor::{Tensor64, Var};

use crate::attention::Fwd;
use crate::masking::MaskPlan;
use crate::moe::LayerStats;
use crate::{ModelError, Result};

/// L2 norm of the residual at every (b, t, c) cell: (B, T, C).
fn per_cell_l2(f: &mut Fwd, xhat: Var, xref: Var) -> Result<Var> {
    let diff = f.tape.sub(xhat, xref)?;
    let sq = f.tape.square(diff);
    let sumsq = f.tape.sum_axis(sq, 3, false)?;
    // Tiny floor keeps the sqrt gradient finite at exact-zero residuals.
    let sumsq = f.tape.clamp_min(sumsq, 1e-24);
    Ok(f.tape.sqrt(sumsq))
}

/// Mean L2 reconstruction error over the masked cells.
pub fn loss_mae(f: &mut Fwd, xhat: Var, xref: Var, plan: &MaskPlan) -> Result<Var> {
    let norms = per_cell_l2(f, xhat, xref)?;
    let mask = plan.cell_mask();
    let b = mask.shape()[0];
    let mask3 = mask.reshape(vec![b, plan.t, plan.c])?;
    let n_cells = plan.n_cells().max(1);
    let w = f.tape.constant(mask3);
    let picked = f.tape.mul(norms, w)?;
    let total = f.tape.sum_all(picked);
    Ok(f.tape.scale(total, 1.0 / n_cells as f64))
}

/// Next-patch prediction error: the decoder output at patch t is the
/// prediction for patch t+1 under causal context, compared over
/// t+1 in [1, T-1], averaged over samples and channels.
pub fn loss_gpt(f: &mut Fwd, xhat: Var, xref: Var) -> Result<Var> {
    let t = f.tape.shape(xhat)[1];
    if t < 2 {
        return Err(ModelError::Invalid("next-patch loss needs T >= 2".into()));
    }
    let pred = f.tape.slice(xhat, 1, 0, t - 1)?;
    let target = f.tape.slice(xref, 1, 1, t - 1)?;
    let norms = per_cell_l2(f, pred, target)?;
    Ok(f.tape.mean_all(norms))
}

/// Sequence-wise balance loss `N * sum_i f_i P_i`, averaged over layers.
pub fn loss_aux(f: &mut Fwd, stats: &[LayerStats]) -> Result<Var> {
    if stats.is_empty() {
        return Ok(f.tape.scalar_const(0.0));
    }
    let mut acc: Option<Var> = None;
    for s in stats {
        let n_e = s.dispatch_fraction.len();
        let fr = f.tape.constant(Tensor64::from_vec(
            vec![n_e],
            s.dispatch_fraction.clone(),
        )?);
        let prod = f.tape.mul(fr, s.mean_prob)?;
        let term = f.tape.sum_all(prod);
        let term = f.tape.scale(term, n_e as f64);
        acc = Some(match acc {
            Some(a) => f.tape.add(a, term)?,
            None => term,
        });
    }
    Ok(f.tape.scale(acc.unwrap(), 1.0 / stats.len() as f64))
}

/// Inverse-frequency class weights (mean-normalized to 1).
pub fn class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (n_classes as f64 * c as f64) })
        .collect();
    raw
}

/// Weighted cross-entropy over logits `(B, C)`.
pub fn loss_wce(f: &mut Fwd, logits: Var, labels: &[usize], weights: &[f64]) -> Result<Var> {
    let shape = f.tape.shape(logits).to_vec();
    let (b, c) = (shape[0], shape[1]);
    if labels.len() != b {
        return Err(ModelError::Invalid(format!("{} labels for batch {b}", labels.len())));
    }
    let logp = f.tape.log_softmax(logits, 1)?;
    let mut w = vec![0.0f64; b * c];
    for (i, &l) in labels.iter().enumerate() {
        w[i * c + l] = weights[l];
    }
    let w = f.tape.constant(Tensor64::from_vec(vec![b, c], w)?);
    let picked = f.tape.mul(logp, w)?;
    let sum = f.tape.sum_all(picked);
    Ok(f.tape.scale(sum, -1.0 / b as f64))
}

/// Pretraining composite: (MAE-TP + MAE-CH + GPT) / 3 + beta * Aux.
pub fn combine_pretrain(
    f: &mut Fwd,
    mae_tp: Var,
    mae_ch: Var,
    gpt: Var,
    aux: Var,
    beta: f64,
) -> Result<Var> {
    let s = f.tape.add(mae_tp, mae_ch)?;
    let s = f.tape.add(s, gpt)?;
    let s = f.tape.scale(s, 1.0 / 3.0);
    let a = f.tape.scale(aux, beta);
    Ok(f.tape.add(s, a)?)
}
