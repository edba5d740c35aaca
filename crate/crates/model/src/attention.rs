//! Shared building blocks: linear layers, MLPs, multi-head attention
//! (self and cross), and stochastic depth.

use stratum_tensor::{Binder, ParamId, ParamStore64, RngStream, Tape64, Tensor64, Var};

use crate::Result;

/// Forward-pass context: the step's tape plus the parameter store/binder.
pub struct Fwd<'a> {
    pub tape: &'a mut Tape64,
    pub binder: &'a mut Binder,
    pub store: &'a ParamStore64,
}

impl<'a> Fwd<'a> {
    pub fn p(&mut self, id: ParamId) -> Var {
        self.binder.var(self.tape, self.store, id)
    }
}

fn normal_init(rng: &mut RngStream, shape: &[usize], std: f64) -> Tensor64 {
    let n: usize = shape.iter().product();
    Tensor64::from_vec(shape.to_vec(), rng.fill_normal(n, std)).expect("init shape")
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Result<Self> {
        let std = 1.0 / (in_dim as f64).sqrt();
        let w = store.register(format!("{name}.w"), normal_init(rng, &[in_dim, out_dim], std))?;
        let b = if bias {
            Some(store.register(format!("{name}.b"), Tensor64::zeros(&[out_dim]))?)
        } else {
            None
        };
        Ok(Self { w, b })
    }

    /// `x (..., in) -> (..., out)`.
    pub fn fwd(&self, f: &mut Fwd, x: Var) -> Result<Var> {
        let w = f.p(self.w);
        let y = f.tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = f.p(b);
                Ok(f.tape.add(y, b)?)
            }
            None => Ok(y),
        }
    }
}

/// Two-layer GELU MLP.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::build(store, rng, &format!("{name}.fc1"), in_dim, hidden, true)?,
            fc2: Linear::build(store, rng, &format!("{name}.fc2"), hidden, out_dim, true)?,
        })
    }

    pub fn fwd(&self, f: &mut Fwd, x: Var) -> Result<Var> {
        let h = self.fc1.fwd(f, x)?;
        let h = f.tape.gelu(h);
        self.fc2.fwd(f, h)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttnParams {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub n_heads: usize,
}

impl AttnParams {
    pub fn build(
        store: &mut ParamStore64,
        rng: &mut RngStream,
        name: &str,
        d_m: usize,
        n_heads: usize,
    ) -> Result<Self> {
        Ok(Self {
            wq: Linear::build(store, rng, &format!("{name}.wq"), d_m, d_m, false)?,
            wk: Linear::build(store, rng, &format!("{name}.wk"), d_m, d_m, false)?,
            wv: Linear::build(store, rng, &format!("{name}.wv"), d_m, d_m, false)?,
            wo: Linear::build(store, rng, &format!("{name}.wo"), d_m, d_m, false)?,
            n_heads,
        })
    }
}

pub struct AttnOpts<'r> {
    pub rope: bool,
    pub causal: bool,
    pub dropout: f64,
    pub train: bool,
    pub rng: &'r mut RngStream,
}

/// Split heads: (R, S, D) -> (R, H, S, dh).
fn split_heads(f: &mut Fwd, x: Var, n_heads: usize) -> Result<Var> {
    let s = f.tape.shape(x).to_vec();
    let (r, l, d) = (s[0], s[1], s[2]);
    let dh = d / n_heads;
    let x = f.tape.reshape(x, vec![r, l, n_heads, dh])?;
    Ok(f.tape.permute(x, &[0, 2, 1, 3])?)
}

/// Merge heads back: (R, H, S, dh) -> (R, S, D).
fn merge_heads(f: &mut Fwd, x: Var) -> Result<Var> {
    let s = f.tape.shape(x).to_vec();
    let (r, h, l, dh) = (s[0], s[1], s[2], s[3]);
    let x = f.tape.permute(x, &[0, 2, 1, 3])?;
    Ok(f.tape.reshape(x, vec![r, l, h * dh])?)
}

fn causal_bias(s: usize) -> Tensor64 {
    let mut m = vec![0.0f64; s * s];
    for i in 0..s {
        for j in (i + 1)..s {
            m[i * s + j] = -1e9;
        }
    }
    Tensor64::from_vec(vec![s, s], m).expect("causal mask")
}

/// Multi-head self-attention over `x (R, S, D)`, optionally with rotary
/// positions along S and a causal mask.
pub fn mh_self_attention(
    f: &mut Fwd,
    params: &AttnParams,
    x: Var,
    opts: &mut AttnOpts,
) -> Result<Var> {
    let s_len = f.tape.shape(x)[1];
    let d = f.tape.shape(x)[2];
    let dh = d / params.n_heads;
    let q = params.wq.fwd(f, x)?;
    let k = params.wk.fwd(f, x)?;
    let v = params.wv.fwd(f, x)?;
    let mut q = split_heads(f, q, params.n_heads)?;
    let mut k = split_heads(f, k, params.n_heads)?;
    let v = split_heads(f, v, params.n_heads)?;
    if opts.rope {
        q = f.tape.rope(q, 10_000.0)?;
        k = f.tape.rope(k, 10_000.0)?;
    }
    let kt = f.tape.transpose_last(k)?;
    let mut logits = f.tape.matmul(q, kt)?;
    logits = f.tape.scale(logits, 1.0 / (dh as f64).sqrt());
    if opts.causal {
        let mask = f.tape.constant(causal_bias(s_len));
        logits = f.tape.add(logits, mask)?;
    }
    let rank = f.tape.shape(logits).len();
    let mut w = f.tape.softmax(logits, rank - 1)?;
    if opts.train && opts.dropout > 0.0 {
        w = f.tape.dropout(w, opts.dropout, true, opts.rng);
    }
    let ctx = f.tape.matmul(w, v)?;
    let merged = merge_heads(f, ctx)?;
    params.wo.fwd(f, merged)
}

/// Multi-head cross-attention: queries `(R, G, D)` attend to keys/values
/// `(R, C, D)`; `bias` (broadcastable to `(R, heads, G, C)`) is added to
/// the logits before softmax.
pub fn mh_cross_attention(
    f: &mut Fwd,
    params: &AttnParams,
    queries: Var,
    kv: Var,
    bias: Option<Var>,
    opts: &mut AttnOpts,
) -> Result<Var> {
    Ok(mh_cross_attention_with_weights(f, params, queries, kv, bias, opts)?.0)
}

/// Cross-attention that also returns the post-softmax weights
/// `(R, heads, G, C)`.
pub fn mh_cross_attention_with_weights(
    f: &mut Fwd,
    params: &AttnParams,
    queries: Var,
    kv: Var,
    bias: Option<Var>,
    opts: &mut AttnOpts,
) -> Result<(Var, Var)> {
    let d = f.tape.shape(queries)[2];
    let dh = d / params.n_heads;
    let q = params.wq.fwd(f, queries)?;
    let k = params.wk.fwd(f, kv)?;
    let v = params.wv.fwd(f, kv)?;
    let q = split_heads(f, q, params.n_heads)?;
    let k = split_heads(f, k, params.n_heads)?;
    let v = split_heads(f, v, params.n_heads)?;
    let kt = f.tape.transpose_last(k)?;
    let mut logits = f.tape.matmul(q, kt)?;
    logits = f.tape.scale(logits, 1.0 / (dh as f64).sqrt());
    if let Some(b) = bias {
        logits = f.tape.add(logits, b)?;
    }
    let rank = f.tape.shape(logits).len();
    let weights = f.tape.softmax(logits, rank - 1)?;
    let mut w = weights;
    if opts.train && opts.dropout > 0.0 {
        w = f.tape.dropout(w, opts.dropout, true, opts.rng);
    }
    let ctx = f.tape.matmul(w, v)?;
    let merged = merge_heads(f, ctx)?;
    Ok((params.wo.fwd(f, merged)?, weights))
}

/// Stochastic depth on a residual branch shaped (B, ...): whole samples
/// drop with probability `rate` during training.
pub fn droppath(
    f: &mut Fwd,
    branch: Var,
    rate: f64,
    train: bool,
    rng: &mut RngStream,
) -> Result<Var> {
    if !train || rate <= 0.0 {
        return Ok(branch);
    }
    let shape = f.tape.shape(branch).to_vec();
    let b = shape[0];
    let keep = 1.0 - rate;
    let mut mask_shape = vec![1usize; shape.len()];
    mask_shape[0] = b;
    let mask: Vec<f64> =
        (0..b).map(|_| if rng.uniform_f64() < keep { 1.0 / keep } else { 0.0 }).collect();
    let mask = f.tape.constant(Tensor64::from_vec(mask_shape, mask).expect("droppath mask"));
    Ok(f.tape.mul(branch, mask)?)
}
