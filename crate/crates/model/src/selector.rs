//! Straight-through Gumbel top-k selection over dynamic group candidates.

use stratum_tensor::{ParamStore64, RngStream, Tensor64, Var};

use crate::attention::{Fwd, Mlp};
use crate::{ModelError, Result};

pub struct Selector {
    pub score_mlp: Mlp,
}

impl Selector {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        d_m: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(Self { score_mlp: Mlp::build(store, rng, "tokenizer.selector", d_m, hidden, 1)? })
    }
}

pub struct Selection {
    /// (B, T, k, C) gathered dynamic biases (straight-through scaled).
    pub m_d: Var,
    /// (B, T, k, D) gathered dynamic queries (straight-through scaled).
    pub q_d: Var,
    /// Selected candidate indices, ascending, per (b * T + t) row.
    pub indices: Vec<Vec<usize>>,
    /// Soft selection probabilities (B*T, |G|), on the tape.
    pub pi: Var,
}

/// Select `k` dynamic groups per (sample, patch).
///
/// Scores are the channel-mean of the candidate biases plus an MLP score
/// of the candidate queries; selection is hard top-k over Gumbel-noised
/// scores (noise off when `rng` is `None`), and the gathered rows carry a
/// `1 + pi - sg(pi)` factor so scores receive gradient.
pub fn gumbel_select(
    f: &mut Fwd,
    sel: &Selector,
    m_tilde: Var,
    q_tilde: Var,
    tau: f64,
    k: usize,
    mut rng: Option<&mut RngStream>,
) -> Result<Selection> {
    let shape = f.tape.shape(m_tilde).to_vec();
    let (b, t, n_g, c) = (shape[0], shape[1], shape[2], shape[3]);
    let d_m = f.tape.shape(q_tilde)[1];
    if k == 0 || k > n_g {
        return Err(ModelError::Invalid(format!("k = {k} out of range for {n_g} candidates")));
    }
    if tau <= 0.0 {
        return Err(ModelError::Invalid(format!("gumbel temperature {tau} must be > 0")));
    }
    let rows = b * t;

    // Lambda = Mean_C(M~_d) + MLP(Q~_d)
    let lam_m = f.tape.mean_axis(m_tilde, 3, false)?; // (B, T, |G|)
    let lam_m = f.tape.reshape(lam_m, vec![rows, n_g])?;
    let q_score = sel.score_mlp.fwd(f, q_tilde)?; // (|G|, 1)
    let q_score = f.tape.reshape(q_score, vec![n_g])?;
    let lambda = f.tape.add(lam_m, q_score)?; // (rows, |G|)

    // Gumbel noise enters both the soft probabilities and the hard top-k.
    let noise: Vec<f64> = match rng.as_deref_mut() {
        Some(r) => (0..rows * n_g).map(|_| r.gumbel_f64()).collect(),
        None => vec![0.0; rows * n_g],
    };
    let noise_t = f.tape.constant(Tensor64::from_vec(vec![rows, n_g], noise.clone())?);
    let noised = f.tape.add(lambda, noise_t)?;
    let scaled = f.tape.scale(noised, 1.0 / tau);
    let pi = f.tape.softmax(scaled, 1)?;

    // Hard top-k per row (ascending index order for stable slot layout).
    let noised_vals = f.tape.value(noised).clone();
    let mut indices = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &noised_vals.data()[r * n_g..(r + 1) * n_g];
        let mut order: Vec<usize> = (0..n_g).collect();
        order.sort_by(|&x, &y| row[y].partial_cmp(&row[x]).unwrap().then(x.cmp(&y)));
        let mut chosen: Vec<usize> = order[..k].to_vec();
        chosen.sort_unstable();
        indices.push(chosen);
    }

    // Straight-through factor per selected slot: 1 + pi - sg(pi).
    let pi_flat = f.tape.reshape(pi, vec![rows * n_g, 1])?;
    let flat_sel: Vec<usize> = indices
        .iter()
        .enumerate()
        .flat_map(|(r, ch)| ch.iter().map(move |&g| r * n_g + g))
        .collect();
    let pi_sel = f.tape.index_select(pi_flat, 0, flat_sel.clone())?; // (rows*k, 1)
    let pi_sg = f.tape.detach(pi_sel);
    let st = f.tape.sub(pi_sel, pi_sg)?;
    let st = f.tape.add_scalar(st, 1.0); // (rows*k, 1)

    // Gather biases: (B,T,|G|,C) -> rows*(|G|) x C -> pick -> ST scale.
    let m_rows = f.tape.reshape(m_tilde, vec![rows * n_g, c])?;
    let m_sel = f.tape.index_select(m_rows, 0, flat_sel.clone())?;
    let m_sel = f.tape.mul(m_sel, st)?;
    let m_d = f.tape.reshape(m_sel, vec![b, t, k, c])?;

    // Gather queries per (row, slot): candidate table indexed by group id.
    let g_only: Vec<usize> = indices.iter().flat_map(|ch| ch.iter().copied()).collect();
    let q_sel = f.tape.index_select(q_tilde, 0, g_only)?; // (rows*k, D)
    let q_sel = f.tape.mul(q_sel, st)?;
    let q_d = f.tape.reshape(q_sel, vec![b, t, k, d_m])?;

    Ok(Selection { m_d, q_d, indices, pi })
}
