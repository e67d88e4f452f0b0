//! Forward and backward passes of a pre-norm decoder-only transformer.
//!
//! Activations are row-major `[rows x features]` with `rows = batch * seq`.
//! Each layer computes
//!
//! ```text
//! h = x + Attn(LN1(x))
//! x' = h + W_out GELU(W_in LN2(h))
//! ```
//!
//! and the logits are `LN_f(x) W_emb_out` (or `LN_f(x) E_inᵀ` when tied).

use super::float::Scalar;
use super::params::{slot, ModelParams, ParameterMask};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a1: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    att: Vec<T>,
    ln2: LnCache<T>,
    a2: Vec<T>,
    pre_act: Vec<T>,
    act: Vec<T>,
}

struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    final_ln: LnCache<T>,
    final_out: Vec<T>,
}

/// Logits for every input position, `[rows x vocab]`.
#[derive(Debug, Clone)]
pub struct Logits<T = f32> {
    pub rows: usize,
    pub vocab: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Logits<T> {
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.vocab..(r + 1) * self.vocab]
    }

    /// `log softmax(row r)[target]`, evaluated in f64.
    pub fn log_prob(&self, r: usize, target: usize) -> f64 {
        let row = self.row(r);
        let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
        let lse = mx + row.iter().map(|&x| (x.as_f64() - mx).exp()).sum::<f64>().ln();
        row[target].as_f64() - lse
    }
}

/// Gradients aligned with [`ModelParams::tensors`]. Tensors outside the mask
/// stay zero.
#[derive(Debug, Clone)]
pub struct Gradients<T = f32> {
    pub grads: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|&x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-sequence result of [`log_prob`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLogProb {
    /// Sum of `log p(token_i | prefix)` over positions 2..n, in nats.
    pub total: f64,
    /// One entry per predicted token (length n - 1).
    pub per_token: Vec<f64>,
}

fn check_tokens<T: Scalar>(params: &ModelParams<T>, tokens: &[u16], batch: usize) -> Result<usize> {
    if batch == 0 || tokens.is_empty() || tokens.len() % batch != 0 {
        return Err(Error::input(format!(
            "{} tokens do not form a batch of {batch} rows",
            tokens.len()
        )));
    }
    let seq = tokens.len() / batch;
    if seq > params.config.max_seq_len {
        return Err(Error::input(format!(
            "sequence length {seq} exceeds max_seq_len {}",
            params.config.max_seq_len
        )));
    }
    if let Some(p) = tokens.iter().position(|&t| t as usize >= params.config.vocab_size) {
        return Err(Error::input(format!(
            "token id {} at flat position {p} is outside vocabulary of {}",
            tokens[p], params.config.vocab_size
        )));
    }
    Ok(seq)
}

fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], d: usize) -> (Vec<T>, LnCache<T>) {
    let n = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    let inv_d = T::from_f64(1.0 / d as f64);
    let eps = T::from_f64(LN_EPS);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = (var + eps).sqrt().recip();
        rstd[r] = rs;
        for c in 0..d {
            let h = (row[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = h * gain[c] + bias[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Adds the input gradient into `dx`; accumulates gain/bias gradients when requested.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LnCache<T>,
    gain: &[T],
    d: usize,
    dx: &mut [T],
    mut dgain: Option<&mut [T]>,
    mut dbias: Option<&mut [T]>,
) {
    let n = dy.len() / d;
    let inv_d = T::from_f64(1.0 / d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..n {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for c in 0..d {
            dxhat[c] = dyr[c] * gain[c];
            mean_dxhat = mean_dxhat + dxhat[c];
            mean_dxhat_xhat = mean_dxhat_xhat + dxhat[c] * xh[c];
        }
        mean_dxhat = mean_dxhat * inv_d;
        mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
        let rs = cache.rstd[r];
        for c in 0..d {
            dx[r * d + c] = dx[r * d + c] + rs * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
        if let Some(dg) = dgain.as_deref_mut() {
            for c in 0..d {
                dg[c] = dg[c] + dyr[c] * xh[c];
            }
        }
        if let Some(db) = dbias.as_deref_mut() {
            for c in 0..d {
                db[c] = db[c] + dyr[c];
            }
        }
    }
}

/// `x [n x din] · w [din x dout] + bias`.
fn linear<T: Scalar>(x: &[T], w: &[T], bias: &[T], din: usize, dout: usize) -> Vec<T> {
    let n = x.len() / din;
    let mut y = Vec::with_capacity(n * dout);
    for _ in 0..n {
        y.extend_from_slice(bias);
    }
    T::gemm(n, din, dout, T::one(), x, false, w, false, T::one(), &mut y);
    y
}

/// Returns `dx = dy · wᵀ`; accumulates `dw += xᵀ dy` and `db += Σ dy` when requested.
fn linear_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    din: usize,
    dout: usize,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) -> Vec<T> {
    let n = x.len() / din;
    if let Some(dw) = dw {
        T::gemm(din, n, dout, T::one(), x, true, dy, false, T::one(), dw);
    }
    if let Some(db) = db {
        for r in 0..n {
            for c in 0..dout {
                db[c] = db[c] + dy[r * dout + c];
            }
        }
    }
    let mut dx = vec![T::zero(); n * din];
    T::gemm(n, dout, din, T::one(), dy, false, w, true, T::zero(), &mut dx);
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `tanh` through a single `exp`; saturates cleanly for large `|x|`.
#[inline]
fn fast_tanh<T: Scalar>(x: T) -> T {
    let two = T::from_f64(2.0);
    let limit = T::from_f64(20.0);
    let x = x.max(-limit).min(limit);
    T::one() - two / ((two * x).exp_fast() + T::one())
}

#[inline]
fn gelu<T: Scalar>(u: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    half * u * (T::one() + fast_tanh(c * (u + a * u * u * u)))
}

#[inline]
fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let th = fast_tanh(c * (u + a * u * u * u));
    half * (T::one() + th) + half * u * (T::one() - th * th) * c * (T::one() + three * a * u * u)
}

#[derive(Clone, Copy)]
struct Dims {
    batch: usize,
    seq: usize,
    d: usize,
    heads: usize,
    hd: usize,
}

impl Dims {
    /// Offset of the query block of head `h` in sequence `b` within the qkv
    /// matrix; keys follow at `+d`, values at `+2d`.
    fn q_offset(&self, b: usize, h: usize) -> usize {
        b * self.seq * 3 * self.d + h * self.hd
    }

    fn out_offset(&self, b: usize, h: usize) -> usize {
        b * self.seq * self.d + h * self.hd
    }
}

/// Causal multi-head attention over a `[rows x 3d]` qkv matrix. Returns the
/// `[rows x d]` head outputs and the `[batch x heads x seq x seq]` attention
/// probabilities (zero above the diagonal).
fn attention<T: Scalar>(qkv: &[T], dims: &Dims) -> (Vec<T>, Vec<T>) {
    let Dims { batch, seq, d, heads, hd } = *dims;
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let qkv_rs = (3 * d, 1);
    let mut probs = vec![T::zero(); batch * heads * seq * seq];
    let mut out = vec![T::zero(); batch * seq * d];
    for b in 0..batch {
        for h in 0..heads {
            let q0 = dims.q_offset(b, h);
            let p = &mut probs[(b * heads + h) * seq * seq..][..seq * seq];
            // scores = scale * Q Kᵀ
            T::gemm_strided(
                seq,
                hd,
                seq,
                scale,
                &qkv[q0..],
                qkv_rs,
                &qkv[q0 + d..],
                (1, 3 * d),
                T::zero(),
                p,
                (seq, 1),
            );
            for i in 0..seq {
                let row = &mut p[i * seq..(i + 1) * seq];
                let mx = row[..=i].iter().fold(T::neg_infinity(), |m, &x| m.max(x));
                let mut total = T::zero();
                for x in &mut row[..=i] {
                    *x = (*x - mx).exp_fast();
                    total = total + *x;
                }
                let inv = total.recip();
                for x in &mut row[..=i] {
                    *x = *x * inv;
                }
                row[i + 1..].fill(T::zero());
            }
            // out = P V
            T::gemm_strided(
                seq,
                seq,
                hd,
                T::one(),
                p,
                (seq, 1),
                &qkv[q0 + 2 * d..],
                qkv_rs,
                T::zero(),
                &mut out[dims.out_offset(b, h)..],
                (d, 1),
            );
        }
    }
    (out, probs)
}

fn attention_backward<T: Scalar>(qkv: &[T], probs: &[T], datt: &[T], dims: &Dims) -> Vec<T> {
    let Dims { batch, seq, d, heads, hd } = *dims;
    let scale = T::from_f64(1.0 / (hd as f64).sqrt());
    let qkv_rs = (3 * d, 1);
    let mut dqkv = vec![T::zero(); batch * seq * 3 * d];
    let mut ds = vec![T::zero(); seq * seq];
    for b in 0..batch {
        for h in 0..heads {
            let q0 = dims.q_offset(b, h);
            let o0 = dims.out_offset(b, h);
            let p = &probs[(b * heads + h) * seq * seq..][..seq * seq];
            // dP = dO Vᵀ
            T::gemm_strided(
                seq,
                hd,
                seq,
                T::one(),
                &datt[o0..],
                (d, 1),
                &qkv[q0 + 2 * d..],
                (1, 3 * d),
                T::zero(),
                &mut ds,
                (seq, 1),
            );
            // dV = Pᵀ dO
            T::gemm_strided(
                seq,
                seq,
                hd,
                T::one(),
                p,
                (1, seq),
                &datt[o0..],
                (d, 1),
                T::zero(),
                &mut dqkv[q0 + 2 * d..],
                qkv_rs,
            );
            // dS = P ∘ (dP - rowsum(P ∘ dP)), pre-multiplied by the score scale
            for i in 0..seq {
                let pr = &p[i * seq..(i + 1) * seq];
                let dr = &mut ds[i * seq..(i + 1) * seq];
                let dot = pr[..=i].iter().zip(&dr[..=i]).fold(T::zero(), |acc, (&a, &g)| acc + a * g);
                for (g, &a) in dr[..=i].iter_mut().zip(&pr[..=i]) {
                    *g = a * (*g - dot) * scale;
                }
                dr[i + 1..].fill(T::zero());
            }
            // dQ = dS K
            T::gemm_strided(
                seq,
                seq,
                hd,
                T::one(),
                &ds,
                (seq, 1),
                &qkv[q0 + d..],
                qkv_rs,
                T::zero(),
                &mut dqkv[q0..],
                qkv_rs,
            );
            // dK = dSᵀ Q
            T::gemm_strided(
                seq,
                seq,
                hd,
                T::one(),
                &ds,
                (1, seq),
                &qkv[q0..],
                qkv_rs,
                T::zero(),
                &mut dqkv[q0 + d..],
                qkv_rs,
            );
        }
    }
    dqkv
}

fn run_forward<T: Scalar>(
    params: &ModelParams<T>,
    tokens: &[u16],
    batch: usize,
    keep_cache: bool,
) -> Result<(Logits<T>, Option<ForwardCache<T>>)> {
    let seq = check_tokens(params, tokens, batch)?;
    let cfg = &params.config;
    let lay = params.layout();
    let d = cfg.d_model;
    let dims = Dims {
        batch,
        seq,
        d,
        heads: cfg.n_heads,
        hd: cfg.head_dim(),
    };
    let t = |i: usize| params.tensors[i].data.as_slice();

    let emb = t(lay.input_embedding());
    let pos = t(lay.positional_embedding());
    let mut x = vec![T::zero(); batch * seq * d];
    for (r, &tok) in tokens.iter().enumerate() {
        let p = r % seq;
        let e = &emb[tok as usize * d..][..d];
        let pe = &pos[p * d..][..d];
        for c in 0..d {
            x[r * d + c] = e[c] + pe[c];
        }
    }

    let mut layers = Vec::new();
    for l in 0..cfg.n_layers {
        let w = |s: usize| t(lay.layer(l, s));
        let (a1, ln1) = layer_norm(&x, w(slot::LN1_G), w(slot::LN1_B), d);
        let qkv = linear(&a1, w(slot::QKV_W), w(slot::QKV_B), d, 3 * d);
        let (att, probs) = attention(&qkv, &dims);
        let proj = linear(&att, w(slot::OUT_W), w(slot::OUT_B), d, d);
        let x_mid: Vec<T> = x.iter().zip(&proj).map(|(&a, &b)| a + b).collect();
        let (a2, ln2) = layer_norm(&x_mid, w(slot::LN2_G), w(slot::LN2_B), d);
        let pre_act = linear(&a2, w(slot::FF_IN_W), w(slot::FF_IN_B), d, cfg.d_ff);
        let act: Vec<T> = pre_act.iter().map(|&u| gelu(u)).collect();
        let ff = linear(&act, w(slot::FF_OUT_W), w(slot::FF_OUT_B), cfg.d_ff, d);
        let x_out: Vec<T> = x_mid.iter().zip(&ff).map(|(&a, &b)| a + b).collect();
        if keep_cache {
            layers.push(LayerCache {
                ln1,
                a1,
                qkv,
                probs,
                att,
                ln2,
                a2,
                pre_act,
                act,
            });
        }
        x = x_out;
    }

    let (f, final_ln) = layer_norm(&x, t(lay.final_gain()), t(lay.final_bias()), d);
    let rows = batch * seq;
    let vocab = cfg.vocab_size;
    let mut logits = vec![T::zero(); rows * vocab];
    match lay.output_embedding() {
        Some(o) => T::gemm(rows, d, vocab, T::one(), &f, false, t(o), false, T::zero(), &mut logits),
        None => T::gemm(rows, d, vocab, T::one(), &f, false, emb, true, T::zero(), &mut logits),
    }
    let cache = keep_cache.then_some(ForwardCache {
        layers,
        final_ln,
        final_out: f,
    });
    Ok((Logits { rows, vocab, data: logits }, cache))
}

/// Logits for a `[batch x seq]` token matrix (flattened row-major), with
/// causal masking.
pub fn forward<T: Scalar>(params: &ModelParams<T>, tokens: &[u16], batch: usize) -> Result<Logits<T>> {
    Ok(run_forward(params, tokens, batch, false)?.0)
}

/// Mean of `-log softmax(logits)[target]` over all rows, in nats.
pub fn loss<T: Scalar>(logits: &Logits<T>, targets: &[u16]) -> Result<f64> {
    if targets.len() != logits.rows {
        return Err(Error::input(format!(
            "{} targets for {} logit rows",
            targets.len(),
            logits.rows
        )));
    }
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t as usize >= logits.vocab {
            return Err(Error::input(format!("target {t} outside vocabulary")));
        }
        total -= logits.log_prob(r, t as usize);
    }
    Ok(total / targets.len() as f64)
}

/// `-log p(target)` for every row.
pub fn token_nll<T: Scalar>(params: &ModelParams<T>, inputs: &[u16], targets: &[u16], batch: usize) -> Result<Vec<f64>> {
    let logits = forward(params, inputs, batch)?;
    if targets.len() != logits.rows {
        return Err(Error::input("targets and inputs differ in length"));
    }
    targets
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            if t as usize >= logits.vocab {
                Err(Error::input(format!("target {t} outside vocabulary")))
            } else {
                Ok(-logits.log_prob(r, t as usize))
            }
        })
        .collect()
}

/// Mean next-token loss and its gradient for a `[batch x seq]` input matrix
/// with aligned targets. Weight gradients are only computed for tensors the
/// mask marks trainable (all tensors when `mask` is `None`).
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    inputs: &[u16],
    targets: &[u16],
    batch: usize,
    mask: Option<&ParameterMask>,
) -> Result<(f64, Gradients<T>)> {
    let (logits, cache) = run_forward(params, inputs, batch, true)?;
    let cache = cache.expect("cache requested");
    if targets.len() != logits.rows {
        return Err(Error::input("targets and inputs differ in length"));
    }
    let cfg = &params.config;
    let lay = params.layout();
    let d = cfg.d_model;
    let seq = inputs.len() / batch;
    let rows = logits.rows;
    let vocab = logits.vocab;
    let dims = Dims {
        batch,
        seq,
        d,
        heads: cfg.n_heads,
        hd: cfg.head_dim(),
    };
    let need = |i: usize| mask.is_none_or(|m| m.is_trainable(i));
    let t = |i: usize| params.tensors[i].data.as_slice();

    // softmax cross-entropy
    let mut dlogits = logits.data;
    let inv_rows = 1.0 / rows as f64;
    let mut total = 0.0;
    for (r, &tgt) in targets.iter().enumerate() {
        if tgt as usize >= vocab {
            return Err(Error::input(format!("target {tgt} outside vocabulary")));
        }
        let row = &mut dlogits[r * vocab..(r + 1) * vocab];
        let mx = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let target_logit = row[tgt as usize].as_f64();
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp_fast();
            sum += v.as_f64();
        }
        total += mx.as_f64() + sum.ln() - target_logit;
        let norm = T::from_f64(inv_rows / sum);
        for v in row.iter_mut() {
            *v = *v * norm;
        }
        row[tgt as usize] = row[tgt as usize] - T::from_f64(inv_rows);
    }
    let loss = total * inv_rows;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }

    let mut grads: Vec<Vec<T>> = params.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect();

    let emb_idx = lay.input_embedding();
    let mut df = vec![T::zero(); rows * d];
    match lay.output_embedding() {
        Some(o) => {
            if need(o) {
                T::gemm(d, rows, vocab, T::one(), &cache.final_out, true, &dlogits, false, T::one(), &mut grads[o]);
            }
            T::gemm(rows, vocab, d, T::one(), &dlogits, false, t(o), true, T::zero(), &mut df);
        }
        None => {
            if need(emb_idx) {
                T::gemm(vocab, rows, d, T::one(), &dlogits, true, &cache.final_out, false, T::one(), &mut grads[emb_idx]);
            }
            T::gemm(rows, vocab, d, T::one(), &dlogits, false, t(emb_idx), false, T::zero(), &mut df);
        }
    }
    drop(dlogits);

    let mut dx = vec![T::zero(); rows * d];
    {
        let (g_idx, b_idx) = (lay.final_gain(), lay.final_bias());
        let (lo, hi) = grads.split_at_mut(b_idx);
        layer_norm_backward(
            &df,
            &cache.final_ln,
            t(g_idx),
            d,
            &mut dx,
            need(g_idx).then_some(lo[g_idx].as_mut_slice()),
            need(b_idx).then_some(hi[0].as_mut_slice()),
        );
    }

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let idx = |s: usize| lay.layer(l, s);
        let w = |s: usize| t(idx(s));

        // feed-forward
        let d_act = {
            let (dw, db) = pair_mut(&mut grads, idx(slot::FF_OUT_W), idx(slot::FF_OUT_B));
            linear_backward(
                &lc.act,
                w(slot::FF_OUT_W),
                &dx,
                cfg.d_ff,
                d,
                need(idx(slot::FF_OUT_W)).then_some(dw),
                need(idx(slot::FF_OUT_B)).then_some(db),
            )
        };
        let d_pre: Vec<T> = d_act.iter().zip(&lc.pre_act).map(|(&g, &u)| g * gelu_grad(u)).collect();
        let da2 = {
            let (dw, db) = pair_mut(&mut grads, idx(slot::FF_IN_W), idx(slot::FF_IN_B));
            linear_backward(
                &lc.a2,
                w(slot::FF_IN_W),
                &d_pre,
                d,
                cfg.d_ff,
                need(idx(slot::FF_IN_W)).then_some(dw),
                need(idx(slot::FF_IN_B)).then_some(db),
            )
        };
        // dx currently holds the gradient w.r.t. x_mid from the residual path
        {
            let (dg, db) = pair_mut(&mut grads, idx(slot::LN2_G), idx(slot::LN2_B));
            layer_norm_backward(
                &da2,
                &lc.ln2,
                w(slot::LN2_G),
                d,
                &mut dx,
                need(idx(slot::LN2_G)).then_some(dg),
                need(idx(slot::LN2_B)).then_some(db),
            );
        }

        // attention
        let datt = {
            let (dw, db) = pair_mut(&mut grads, idx(slot::OUT_W), idx(slot::OUT_B));
            linear_backward(
                &lc.att,
                w(slot::OUT_W),
                &dx,
                d,
                d,
                need(idx(slot::OUT_W)).then_some(dw),
                need(idx(slot::OUT_B)).then_some(db),
            )
        };
        let dqkv = attention_backward(&lc.qkv, &lc.probs, &datt, &dims);
        let da1 = {
            let (dw, db) = pair_mut(&mut grads, idx(slot::QKV_W), idx(slot::QKV_B));
            linear_backward(
                &lc.a1,
                w(slot::QKV_W),
                &dqkv,
                d,
                3 * d,
                need(idx(slot::QKV_W)).then_some(dw),
                need(idx(slot::QKV_B)).then_some(db),
            )
        };
        {
            let (dg, db) = pair_mut(&mut grads, idx(slot::LN1_G), idx(slot::LN1_B));
            layer_norm_backward(
                &da1,
                &lc.ln1,
                w(slot::LN1_G),
                d,
                &mut dx,
                need(idx(slot::LN1_G)).then_some(dg),
                need(idx(slot::LN1_B)).then_some(db),
            );
        }
    }

    if need(emb_idx) {
        let g = &mut grads[emb_idx];
        for (r, &tok) in inputs.iter().enumerate() {
            let dst = &mut g[tok as usize * d..][..d];
            for (a, &b) in dst.iter_mut().zip(&dx[r * d..(r + 1) * d]) {
                *a = *a + b;
            }
        }
    }
    let pos_idx = lay.positional_embedding();
    if need(pos_idx) {
        let g = &mut grads[pos_idx];
        for r in 0..rows {
            let p = r % seq;
            let dst = &mut g[p * d..][..d];
            for (a, &b) in dst.iter_mut().zip(&dx[r * d..(r + 1) * d]) {
                *a = *a + b;
            }
        }
    }

    Ok((loss, Gradients { grads }))
}

fn pair_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (lo[a].as_mut_slice(), hi[0].as_mut_slice())
}

/// Log-probability of `seq` under the model: the sum over positions 2..n of
/// `log p(token_i | prefix)`.
pub fn log_prob<T: Scalar>(params: &ModelParams<T>, seq: &[u16]) -> Result<SequenceLogProb> {
    if seq.len() < 2 {
        return Err(Error::input("log_prob needs at least two tokens"));
    }
    if let Some(&t) = seq.iter().find(|&&t| t as usize >= params.config.vocab_size) {
        return Err(Error::input(format!("token id {t} is outside vocabulary")));
    }
    let inputs = &seq[..seq.len() - 1];
    let logits = forward(params, inputs, 1)?;
    let per_token: Vec<f64> = seq[1..]
        .iter()
        .enumerate()
        .map(|(r, &t)| logits.log_prob(r, t as usize))
        .collect();
    Ok(SequenceLogProb {
        total: per_token.iter().sum(),
        per_token,
    })
}
