use rand::Rng;

use super::init::{init_gaussian, init_xavier};
use crate::autograd::{Axis, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Reserved token id for padding.
pub const PAD_ID: u32 = 0;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub dim: usize,
    pub table: ParamId,
}

impl EmbeddingTable {
    /// Gaussian rows; the pad row is zero.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut t = init_gaussian(&[vocab_size, dim], rng)?;
        t.data_mut()[..dim].iter_mut().for_each(|v| *v = 0.0);
        let table = store.add(name, t)?;
        Ok(EmbeddingTable { vocab_size, dim, table })
    }
}

/// `tokens.len() x dim` lookup. Pad ids yield zero rows.
pub fn embed(g: &mut Graph<'_>, emb: &EmbeddingTable, tokens: &[u32]) -> Result<Var> {
    let t = g.param(emb.table);
    g.embed(t, tokens)
}

/// Bank of text convolution filters grouped by window width.
#[derive(Debug, Clone)]
pub struct ConvBank {
    pub input_dim: usize,
    /// `(width, weight[(width * d) x filters], bias[1 x filters])`
    pub groups: Vec<(usize, ParamId, ParamId)>,
    pub filters_per_width: usize,
}

impl ConvBank {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        widths: &[usize],
        filters_per_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.is_empty() || filters_per_width == 0 || widths.contains(&0) {
            return Err(Error::Config(
                "conv bank needs positive widths and filter counts".into(),
            ));
        }
        let mut groups = Vec::with_capacity(widths.len());
        for &w in widths {
            let weight = store.add(
                format!("{prefix}.w{w}"),
                init_xavier(&[w * input_dim, filters_per_width], rng)?,
            )?;
            let bias = store.add(format!("{prefix}.b{w}"), Tensor::zeros(&[1, filters_per_width]))?;
            groups.push((w, weight, bias));
        }
        Ok(ConvBank {
            input_dim,
            groups,
            filters_per_width,
        })
    }

    /// Total filter count `k`.
    pub fn output_dim(&self) -> usize {
        self.groups.len() * self.filters_per_width
    }
}

/// Max-over-time responses of every filter, concatenated: `1 x k`.
pub fn conv_encode(g: &mut Graph<'_>, bank: &ConvBank, seq: Var) -> Result<Var> {
    let mut pooled = Vec::with_capacity(bank.groups.len());
    for &(width, weight, bias) in &bank.groups {
        let (w, b) = (g.param(weight), g.param(bias));
        let resp = g.conv1d(seq, w, width)?;
        let resp = g.add_row(resp, b)?;
        pooled.push(g.max_over_time(resp)?);
    }
    g.concat_cols(&pooled)
}

/// Additive attention conditioned on a headline vector.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub dim: usize,
    pub attn_dim: usize,
    pub w_body: ParamId,
    pub w_head: ParamId,
    pub v: ParamId,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        attn_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_body = store.add(format!("{prefix}.w_body"), init_xavier(&[dim, attn_dim], rng)?)?;
        let w_head = store.add(format!("{prefix}.w_head"), init_xavier(&[dim, attn_dim], rng)?)?;
        let v = store.add(format!("{prefix}.v"), init_xavier(&[attn_dim, 1], rng)?)?;
        Ok(AttentionParams {
            dim,
            attn_dim,
            w_body,
            w_head,
            v,
        })
    }
}

/// Batched attention pooling.
///
/// `body[p]` is the `B x d` state of paragraph `p`, `head` is `B x d`, and
/// `mask[b][p]` marks real paragraphs. Returns the pooled `B x d` body vector
/// and the `B x P` weights (zero at masked positions).
pub fn attend_batch(
    g: &mut Graph<'_>,
    params: &AttentionParams,
    body: &[Var],
    head: Var,
    mask: &[Vec<bool>],
) -> Result<(Var, Var)> {
    if body.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (wb, wh, v) = (g.param(params.w_body), g.param(params.w_head), g.param(params.v));
    let head_proj = g.matmul(head, wh)?;
    let mut logits = Vec::with_capacity(body.len());
    for &u in body {
        let bp = g.matmul(u, wb)?;
        let s = g.add(bp, head_proj)?;
        let s = g.tanh(s);
        logits.push(g.matmul(s, v)?);
    }
    let logits = g.concat_cols(&logits)?;
    let weights = g.masked_softmax_rows(logits, mask)?;
    let p = body.len();
    let mut pooled = None;
    for (i, &u) in body.iter().enumerate() {
        let mut onehot = vec![0.0; p];
        onehot[i] = 1.0;
        let sel = g.constant(Tensor::matrix(p, 1, onehot)?);
        let a = g.matmul(weights, sel)?;
        let term = g.scale_rows(u, a)?;
        pooled = Some(match pooled {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok((pooled.expect("nonempty"), weights))
}

/// Single-article attention over `u_b[p x d]` given `u_h[1 x d]`.
pub fn attend(g: &mut Graph<'_>, params: &AttentionParams, u_b: Var, u_h: Var, mask: &[bool]) -> Result<(Var, Var)> {
    let p = g.value(u_b).rows();
    if p != mask.len() || p == 0 {
        return Err(Error::dim("attend", g.value(u_b).shape(), &[mask.len()]));
    }
    let rows = (0..p).map(|i| g.slice_rows(u_b, i, 1)).collect::<Result<Vec<_>>>()?;
    attend_batch(g, params, &rows, u_h, &[mask.to_vec()])
}

/// `sigmoid(a^T M c + b)` per row.
#[derive(Debug, Clone)]
pub struct BilinearScorer {
    pub dim: usize,
    pub m: ParamId,
    pub b: ParamId,
}

impl BilinearScorer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut R) -> Result<Self> {
        let m = store.add(format!("{prefix}.m"), init_xavier(&[dim, dim], rng)?)?;
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[1, 1]))?;
        Ok(BilinearScorer { dim, m, b })
    }
}

/// Probabilities `B x 1` for row pairs of `a` and `c` (both `B x d`).
pub fn bilinear_score(g: &mut Graph<'_>, scorer: &BilinearScorer, a: Var, c: Var) -> Result<Var> {
    let (m, b) = (g.param(scorer.m), g.param(scorer.b));
    let am = g.matmul(a, m)?;
    let prod = g.mul(am, c)?;
    let logit = g.sum_axis(prod, Axis::Cols)?;
    let logit = g.add_row(logit, b)?;
    Ok(g.sigmoid(logit))
}

/// Inverted dropout. With `rng == None` (inference) or `rate == 0` the input
/// is returned untouched.
pub fn dropout<R: Rng + ?Sized>(g: &mut Graph<'_>, x: Var, rate: f64, rng: Option<&mut R>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    if rate >= 1.0 {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = g.value(x).shape().to_vec();
    let n = g.value(x).len();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?);
    g.mul(x, m)
}
