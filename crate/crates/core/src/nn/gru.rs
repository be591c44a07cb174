use rand::Rng;

use super::init::{init_orthogonal, init_xavier};
use crate::autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Single-layer GRU cell in row-vector convention (`x[B x in] * W[in x hid]`).
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// h~ = tanh(x Wh + (r * h) Uh + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Debug, Clone)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

/// Output of a batched recurrent pass.
#[derive(Debug, Clone)]
pub struct GruOutput {
    /// One `B x hid` state per time step, in input order.
    pub states: Vec<Var>,
    /// State after the last unmasked step of each row.
    pub last: Var,
}

impl GruCell {
    /// Input weights are Xavier, recurrent weights orthogonal, biases zero.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = |s: &mut ParamStore, n: &str| -> Result<ParamId> {
            s.add(format!("{prefix}.{n}"), init_xavier(&[input_dim, hidden_dim], rng)?)
        };
        let wz = w(store, "wz")?;
        let wr = w(store, "wr")?;
        let wh = w(store, "wh")?;
        let mut u = |s: &mut ParamStore, n: &str| -> Result<ParamId> {
            s.add(
                format!("{prefix}.{n}"),
                init_orthogonal(&[hidden_dim, hidden_dim], rng)?,
            )
        };
        let uz = u(store, "uz")?;
        let ur = u(store, "ur")?;
        let uh = u(store, "uh")?;
        let b = |s: &mut ParamStore, n: &str| s.add(format!("{prefix}.{n}"), Tensor::zeros(&[1, hidden_dim]));
        let bz = b(store, "bz")?;
        let br = b(store, "br")?;
        let bh = b(store, "bh")?;
        Ok(GruCell {
            input_dim,
            hidden_dim,
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wh,
            uh,
            bh,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 9] {
        [
            self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wh, self.uh, self.bh,
        ]
    }

    fn gate(&self, g: &mut Graph<'_>, x: Var, h: Var, w: ParamId, u: ParamId, b: ParamId) -> Result<Var> {
        let (w, u, b) = (g.param(w), g.param(u), g.param(b));
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        g.add_row(s, b)
    }
}

/// One GRU update for a batch of rows.
pub fn gru_step(g: &mut Graph<'_>, cell: &GruCell, x: Var, h: Var) -> Result<Var> {
    let (xr, xc) = g.value(x).dims2().unwrap_or((0, 0));
    let (hr, hc) = g.value(h).dims2().unwrap_or((0, 0));
    if xc != cell.input_dim || hc != cell.hidden_dim || xr != hr {
        return Err(Error::dim("gru_step", &[xr, xc], &[hr, hc]));
    }
    let z = cell.gate(g, x, h, cell.wz, cell.uz, cell.bz)?;
    let z = g.sigmoid(z);
    let r = cell.gate(g, x, h, cell.wr, cell.ur, cell.br)?;
    let r = g.sigmoid(r);
    let rh = g.mul(r, h)?;
    let cand = cell.gate(g, x, rh, cell.wh, cell.uh, cell.bh)?;
    let cand = g.tanh(cand);
    let diff = g.sub(cand, h)?;
    let step = g.mul(z, diff)?;
    g.add(h, step)
}

/// Runs `cell` over per-step inputs `inputs[t]` (`B x in`). Where
/// `mask[t][b]` is false the previous state of row `b` is copied forward
/// unchanged. With `reverse` the steps are consumed from last to first, and
/// `states` is still indexed by input position.
pub fn gru_batch(
    g: &mut Graph<'_>,
    cell: &GruCell,
    inputs: &[Var],
    mask: &[Vec<bool>],
    reverse: bool,
) -> Result<GruOutput> {
    let first = *inputs.first().ok_or(Error::EmptySequence)?;
    if mask.len() != inputs.len() {
        return Err(Error::dim("gru_batch", &[inputs.len()], &[mask.len()]));
    }
    let batch = g.value(first).rows();
    if mask.iter().any(|m| m.len() != batch) {
        return Err(Error::dim("gru_batch", &[batch], &[mask[0].len()]));
    }
    for b in 0..batch {
        if !mask.iter().any(|m| m[b]) {
            return Err(Error::EmptySequence);
        }
    }
    let mut h = g.constant(Tensor::zeros(&[batch, cell.hidden_dim]));
    let mut states = vec![h; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        if mask[t].iter().any(|&k| k) {
            let next = gru_step(g, cell, inputs[t], h)?;
            h = g.select_rows(&mask[t], next, h)?;
        }
        states[t] = h;
    }
    Ok(GruOutput { states, last: h })
}

/// Single-sequence GRU over `xs[t x in]`. Returns all states `t x hid` and
/// the state at the final unmasked position (`1 x hid`).
pub fn gru_sequence(g: &mut Graph<'_>, cell: &GruCell, xs: Var, mask: &[bool]) -> Result<(Var, Var)> {
    let steps = split_rows(g, xs, mask.len())?;
    let m: Vec<Vec<bool>> = mask.iter().map(|&k| vec![k]).collect();
    let out = gru_batch(g, cell, &steps, &m, false)?;
    let states = g.concat_rows(&out.states)?;
    Ok((states, out.last))
}

/// Bidirectional pass returning per-position `[fwd | bwd]` rows, `t x 2hid`.
pub fn bigru_sequence(g: &mut Graph<'_>, fwd: &GruCell, bwd: &GruCell, xs: Var, mask: &[bool]) -> Result<Var> {
    let steps = split_rows(g, xs, mask.len())?;
    let m: Vec<Vec<bool>> = mask.iter().map(|&k| vec![k]).collect();
    let out = bigru_batch(g, fwd, bwd, &steps, &m)?;
    g.concat_rows(&out.states)
}

/// Batched bidirectional pass. `states[t]` is `B x 2hid`; `last` joins the
/// forward final state with the backward final state (position 0).
pub fn bigru_batch(
    g: &mut Graph<'_>,
    fwd: &GruCell,
    bwd: &GruCell,
    inputs: &[Var],
    mask: &[Vec<bool>],
) -> Result<GruOutput> {
    let f = gru_batch(g, fwd, inputs, mask, false)?;
    let b = gru_batch(g, bwd, inputs, mask, true)?;
    let states = f
        .states
        .iter()
        .zip(&b.states)
        .map(|(&x, &y)| g.concat_cols(&[x, y]))
        .collect::<Result<Vec<_>>>()?;
    let last = g.concat_cols(&[f.last, b.last])?;
    Ok(GruOutput { states, last })
}

fn split_rows(g: &mut Graph<'_>, xs: Var, expected: usize) -> Result<Vec<Var>> {
    let t = g.value(xs).rows();
    if t == 0 || t != expected {
        return Err(Error::dim("gru_sequence", g.value(xs).shape(), &[expected]));
    }
    (0..t).map(|i| g.slice_rows(xs, i, 1)).collect()
}
