//! Forward and backward passes for the toy transformer encoder.
//!
//! Post-layer-norm blocks: `x -> LN1(x + Attn(x)) -> LN2(. + FFN(.))`.
//! The CLS position of the final layer is the sentence representation.
//! Attention is masked per key: `[PAD]` positions are never attended to,
//! which keeps the CLS output (and all gradients) independent of padding.

use ndarray::{s, Array1, Array2, Axis};

use super::{EncoderParams, LayerParams, CLS_ID, PAD_ID};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-12;

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) struct LayerCache {
    x_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    pub(crate) attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln1: LnCache,
    x_mid: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ln2: LnCache,
}

/// Intermediates saved by [`encode_forward`] for the exact backward pass.
pub struct ForwardCache {
    pub(crate) ids: Vec<usize>,
    pub(crate) layers: Vec<LayerCache>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let (l, d) = x.dim();
    let mut xhat = Array2::zeros((l, d));
    let mut inv_std = Array1::zeros(l);
    let mut y = Array2::zeros((l, d));
    for i in 0..l {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for c in 0..d {
            let xh = (row[c] - mean) * is;
            xhat[[i, c]] = xh;
            y[[i, c]] = g[c] * xh + b[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    g: &Array1<f64>,
    cache: &LnCache,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let (l, d) = dy.dim();
    let mut dx = Array2::zeros((l, d));
    let mut dg = Array1::zeros(d);
    let mut db = Array1::zeros(d);
    for i in 0..l {
        let mut m1 = 0.0; // mean of dxhat
        let mut m2 = 0.0; // mean of dxhat * xhat
        for c in 0..d {
            let dxh = dy[[i, c]] * g[c];
            m1 += dxh;
            m2 += dxh * cache.xhat[[i, c]];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let is = cache.inv_std[i];
        for c in 0..d {
            let dxh = dy[[i, c]] * g[c];
            dx[[i, c]] = is * (dxh - m1 - cache.xhat[[i, c]] * m2);
            dg[c] += dy[[i, c]] * cache.xhat[[i, c]];
            db[c] += dy[[i, c]];
        }
    }
    (dx, dg, db)
}

fn layer_forward(
    heads: usize,
    lp: &LayerParams,
    x: &Array2<f64>,
    mask: &[bool],
) -> (Array2<f64>, LayerCache) {
    let l = x.nrows();
    let d = x.ncols();
    let q = x.dot(&lp.w_q.t()) + &lp.b_q;
    let k = x.dot(&lp.w_k.t()) + &lp.b_k;
    let v = x.dot(&lp.w_v.t()) + &lp.b_v;
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let mut ctx = Array2::zeros((l, d));
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut probs = Array2::zeros((l, l));
        for i in 0..l {
            let mut max = f64::NEG_INFINITY;
            for j in 0..l {
                if mask[j] {
                    let s: f64 = (0..dk).map(|c| qh[[i, c]] * kh[[j, c]]).sum::<f64>() * scale;
                    probs[[i, j]] = s;
                    max = max.max(s);
                }
            }
            let mut z = 0.0;
            for j in 0..l {
                if mask[j] {
                    let e = (probs[[i, j]] - max).exp();
                    probs[[i, j]] = e;
                    z += e;
                }
            }
            for j in 0..l {
                if mask[j] {
                    probs[[i, j]] /= z;
                }
            }
        }
        // Explicit accumulation, skipping masked keys: the result is
        // bit-identical whether or not padding rows are present.
        let mut ctx_h = ctx.slice_mut(cols);
        for i in 0..l {
            for j in 0..l {
                if mask[j] {
                    let p = probs[[i, j]];
                    for c in 0..dk {
                        ctx_h[[i, c]] += p * vh[[j, c]];
                    }
                }
            }
        }
        attn.push(probs);
    }

    let attn_out = ctx.dot(&lp.w_o.t()) + &lp.b_o;
    let u1 = x + &attn_out;
    let (x_mid, ln1) = layer_norm(&u1, &lp.ln1_g, &lp.ln1_b);
    let ff_pre = x_mid.dot(&lp.w_ff1.t()) + &lp.b_ff1;
    let ff_act = ff_pre.mapv(|v| v.max(0.0));
    let ff_out = ff_act.dot(&lp.w_ff2.t()) + &lp.b_ff2;
    let u2 = &x_mid + &ff_out;
    let (x_out, ln2) = layer_norm(&u2, &lp.ln2_g, &lp.ln2_b);

    (
        x_out,
        LayerCache {
            x_in: x.clone(),
            q,
            k,
            v,
            attn,
            ctx,
            ln1,
            x_mid,
            ff_pre,
            ff_act,
            ln2,
        },
    )
}

/// Run the encoder over `token_ids` (already `[CLS]`-prefixed). Returns the
/// final-layer hidden state at the CLS position plus the cache needed by
/// [`encode_backward`].
pub fn encode_forward(
    params: &EncoderParams,
    token_ids: &[usize],
) -> Result<(Array1<f64>, ForwardCache)> {
    let cfg = &params.config;
    if token_ids.is_empty() {
        return Err(Error::Shape("empty token id list".into()));
    }
    if token_ids[0] != CLS_ID {
        return Err(Error::Shape("input must begin with [CLS]".into()));
    }
    if token_ids.len() > cfg.max_len {
        return Err(Error::Shape(format!(
            "input length {} exceeds max_len {}",
            token_ids.len(),
            cfg.max_len
        )));
    }
    if let Some(&bad) = token_ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::Data(format!(
            "token id {bad} out of range for vocab size {}",
            cfg.vocab_size
        )));
    }
    let mask: Vec<bool> = token_ids.iter().map(|&id| id != PAD_ID).collect();

    let l = token_ids.len();
    let mut x = Array2::zeros((l, cfg.d));
    for (i, &id) in token_ids.iter().enumerate() {
        for c in 0..cfg.d {
            x[[i, c]] = params.tok_emb[[id, c]] + params.pos_emb[[i, c]];
        }
    }
    let mut layers = Vec::with_capacity(cfg.layers);
    for lp in &params.layers {
        let (x_out, cache) = layer_forward(cfg.heads, lp, &x, &mask);
        layers.push(cache);
        x = x_out;
    }
    let h = x.row(0).to_owned();
    Ok((
        h,
        ForwardCache {
            ids: token_ids.to_vec(),
            layers,
        },
    ))
}

fn layer_backward(
    heads: usize,
    lp: &LayerParams,
    cache: &LayerCache,
    dy: &Array2<f64>,
    g: &mut LayerParams,
) -> Array2<f64> {
    let l = cache.x_in.nrows();
    let d = cache.x_in.ncols();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let (du2, dg2, db2) = layer_norm_backward(dy, &lp.ln2_g, &cache.ln2);
    g.ln2_g += &dg2;
    g.ln2_b += &db2;

    // u2 = x_mid + ff_out
    let dff_out = &du2;
    g.w_ff2 += &dff_out.t().dot(&cache.ff_act);
    g.b_ff2 += &dff_out.sum_axis(Axis(0));
    let dff_act = dff_out.dot(&lp.w_ff2);
    let relu_gate = cache.ff_pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let dff_pre = &dff_act * &relu_gate;
    g.w_ff1 += &dff_pre.t().dot(&cache.x_mid);
    g.b_ff1 += &dff_pre.sum_axis(Axis(0));
    let mut dx_mid = du2.clone();
    dx_mid += &dff_pre.dot(&lp.w_ff1);

    let (du1, dg1, db1) = layer_norm_backward(&dx_mid, &lp.ln1_g, &cache.ln1);
    g.ln1_g += &dg1;
    g.ln1_b += &db1;

    // u1 = x_in + attn_out
    let dattn_out = &du1;
    g.w_o += &dattn_out.t().dot(&cache.ctx);
    g.b_o += &dattn_out.sum_axis(Axis(0));
    let dctx = dattn_out.dot(&lp.w_o);

    let mut dq = Array2::zeros((l, d));
    let mut dkm = Array2::zeros((l, d));
    let mut dv = Array2::zeros((l, d));
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let qh = cache.q.slice(cols);
        let kh = cache.k.slice(cols);
        let a = &cache.attn[h];
        let dctx_h = dctx.slice(cols);

        // ctx_h = A . V_h
        let da = dctx_h.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));

        // Row softmax backward; masked columns carry zero probability and
        // therefore zero gradient.
        let mut ds = Array2::zeros((l, l));
        for i in 0..l {
            let dot: f64 = (0..l).map(|j| da[[i, j]] * a[[i, j]]).sum();
            for j in 0..l {
                ds[[i, j]] = a[[i, j]] * (da[[i, j]] - dot) * scale;
            }
        }
        dq.slice_mut(cols).assign(&ds.dot(&kh));
        dkm.slice_mut(cols).assign(&ds.t().dot(&qh));
    }

    g.w_q += &dq.t().dot(&cache.x_in);
    g.b_q += &dq.sum_axis(Axis(0));
    g.w_k += &dkm.t().dot(&cache.x_in);
    g.b_k += &dkm.sum_axis(Axis(0));
    g.w_v += &dv.t().dot(&cache.x_in);
    g.b_v += &dv.sum_axis(Axis(0));

    let mut dx = du1.clone();
    dx += &dq.dot(&lp.w_q);
    dx += &dkm.dot(&lp.w_k);
    dx += &dv.dot(&lp.w_v);
    dx
}

/// Accumulate exact gradients of a scalar loss with upstream derivative
/// `d_h` (at the CLS output) into `grads`.
pub fn encode_backward_into(
    params: &EncoderParams,
    cache: &ForwardCache,
    d_h: &Array1<f64>,
    grads: &mut EncoderParams,
) -> Result<()> {
    let cfg = &params.config;
    if d_h.len() != cfg.d {
        return Err(Error::Shape(format!(
            "d_h has length {}, expected {}",
            d_h.len(),
            cfg.d
        )));
    }
    if cache.layers.len() != params.layers.len() {
        return Err(Error::Shape("cache does not match parameter stack depth".into()));
    }
    if grads.config != params.config {
        return Err(Error::Shape("gradient container config differs from params".into()));
    }
    let l = cache.ids.len();
    let mut dy = Array2::zeros((l, cfg.d));
    dy.row_mut(0).assign(d_h);
    for (i, lp) in params.layers.iter().enumerate().rev() {
        dy = layer_backward(cfg.heads, lp, &cache.layers[i], &dy, &mut grads.layers[i]);
    }
    for (i, &id) in cache.ids.iter().enumerate() {
        let row = dy.row(i);
        let mut t = grads.tok_emb.row_mut(id);
        t += &row;
        let mut p = grads.pos_emb.row_mut(i);
        p += &row;
    }
    Ok(())
}

/// Fresh gradient container for one backward pass.
pub fn encode_backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    d_h: &Array1<f64>,
) -> Result<EncoderParams> {
    let mut grads = EncoderParams::zeros(&params.config)?;
    encode_backward_into(params, cache, d_h, &mut grads)?;
    Ok(grads)
}

/// Class logits for a pooled representation: `classifier . h` (no bias).
pub fn classify_forward(params: &EncoderParams, h: &Array1<f64>) -> Result<Array1<f64>> {
    if h.len() != params.config.d {
        return Err(Error::Shape(format!(
            "h has length {}, expected {}",
            h.len(),
            params.config.d
        )));
    }
    Ok(params.classifier.dot(h))
}
