//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation of one forward pass in creation order,
//! which is already a topological order. [`Graph::backward`] walks the tape in
//! reverse exactly once and returns the gradients of every trainable
//! parameter that was touched. Parameters are read in place from the
//! borrowed [`ParamStore`]; nothing is copied for them.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

/// Probability clamp used by the binary cross-entropy node.
pub const PROB_CLAMP: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Reduce over rows (one result per column).
    Rows,
    /// Reduce over columns (one result per row).
    Cols,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    /// Softmax over index groups; each group is one normalized slice.
    Softmax {
        x: Var,
        groups: Vec<Vec<usize>>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    SumAxis(Var, Axis),
    MeanAxis(Var, Axis),
    MaxOverTime {
        x: Var,
        argmax: Vec<usize>,
    },
    Conv1d {
        seq: Var,
        weight: Var,
        width: usize,
    },
    Embed {
        table: Var,
        ids: Vec<u32>,
    },
    GatherRows {
        x: Var,
        idx: Vec<Option<usize>>,
    },
    SelectRows {
        mask: Vec<bool>,
        on: Var,
        off: Var,
    },
    ScaleRows(Var, Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    BceMean {
        p: Var,
        labels: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, keyed by parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    entries: Vec<(ParamId, Vec<f64>)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.entries.iter().find(|(p, _)| *p == id).map(|(_, g)| g.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.entries.iter().map(|(p, g)| (*p, g.as_slice()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Vec<f64>)> {
        self.entries.iter_mut().map(|(p, g)| (*p, g))
    }

    /// Adds these gradients into the store's accumulated `grad` buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.entries {
            let p = store.get_mut(*id);
            for (acc, v) in p.grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.value(v).dims2().unwrap_or((0, 0))
    }

    fn matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .ok_or_else(|| Error::dim(op, self.value(v).shape(), &[]))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Node reading a parameter in place. Repeated calls return the same node,
    /// so every use of a parameter shares one gradient buffer.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let trainable = self.store.get(id).trainable;
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix("matmul", a)?;
        let (k2, n) = self.matrix("matmul", b)?;
        if k != k2 {
            return Err(Error::dim("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(op, self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a) || self.rg(b);
        self.push(t, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// `x[m x n] + row[1 x n]`, broadcasting the row over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (m, n) = self.matrix("add_row", x)?;
        let (r, c) = self.matrix("add_row", row)?;
        if r != 1 || c != n {
            return Err(Error::dim("add_row", self.value(x).shape(), self.value(row).shape()));
        }
        let b = self.value(row).data();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|xr| xr.iter().zip(b).map(|(u, v)| u + v))
            .collect();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::AddRow(x, row), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, factor), rg)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(t, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    /// Softmax of a 2-D tensor. `Axis::Cols` normalizes each row,
    /// `Axis::Rows` normalizes each column.
    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let (m, n) = self.matrix("softmax", x)?;
        let groups: Vec<Vec<usize>> = match axis {
            Axis::Cols => (0..m).map(|r| (0..n).map(|c| r * n + c).collect()).collect(),
            Axis::Rows => (0..n).map(|c| (0..m).map(|r| r * n + c).collect()).collect(),
        };
        self.softmax_groups(x, groups)
    }

    /// Row-wise softmax where `mask[r][c] == false` excludes position `(r, c)`;
    /// excluded positions get weight exactly zero.
    pub fn masked_softmax_rows(&mut self, x: Var, mask: &[Vec<bool>]) -> Result<Var> {
        let (m, n) = self.matrix("masked_softmax", x)?;
        if mask.len() != m || mask.iter().any(|r| r.len() != n) {
            return Err(Error::dim("masked_softmax", &[m, n], &[mask.len()]));
        }
        let groups: Vec<Vec<usize>> = mask
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &keep)| keep)
                    .map(|(c, _)| r * n + c)
                    .collect()
            })
            .collect();
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::EmptySequence);
        }
        self.softmax_groups(x, groups)
    }

    fn softmax_groups(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::EmptyAxis { op: "softmax" });
        }
        let t = self.value(x);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for g in &groups {
            let max = g.iter().map(|&i| src[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &i in g {
                let e = (src[i] - max).exp();
                out[i] = e;
                total += e;
            }
            for &i in g {
                out[i] /= total;
            }
        }
        let t = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softmax { x, groups }, rg))
    }

    /// Concatenates 2-D tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyAxis { op: "concat_cols" })?;
        let (m, _) = self.matrix("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix("concat_cols", p)?;
            if r != m {
                return Err(Error::dim(
                    "concat_cols",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks 2-D tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyAxis { op: "concat_rows" })?;
        let (_, n) = self.matrix("concat_rows", first)?;
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let (r, c) = self.matrix("concat_rows", p)?;
            if c != n {
                return Err(Error::dim(
                    "concat_rows",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
            data.extend_from_slice(self.value(p).data());
            m += r;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Sum of every element; a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn sum_axis(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let t = self.reduce_axis("sum_axis", x, axis)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::SumAxis(x, axis), rg))
    }

    pub fn mean_axis(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let (m, n) = self.matrix("mean_axis", x)?;
        let count = match axis {
            Axis::Rows => m,
            Axis::Cols => n,
        } as f64;
        let mut t = self.reduce_axis("mean_axis", x, axis)?;
        t.data_mut().iter_mut().for_each(|v| *v /= count);
        let rg = self.rg(x);
        Ok(self.push(t, Op::MeanAxis(x, axis), rg))
    }

    fn reduce_axis(&self, op: &'static str, x: Var, axis: Axis) -> Result<Tensor> {
        let (m, n) = self.matrix(op, x)?;
        let src = self.value(x).data();
        match axis {
            Axis::Rows => {
                let mut out = vec![0.0; n];
                for row in src.chunks(n) {
                    for (o, v) in out.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                Tensor::matrix(1, n, out)
            }
            Axis::Cols => {
                let out = src.chunks(n).map(|row| row.iter().sum()).collect();
                Tensor::matrix(m, 1, out)
            }
        }
    }

    /// Per-column maximum over time steps (rows) of `x[time x filters]`,
    /// returned as `1 x filters`. Ties resolve to the first row.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix("max_over_time", x)?;
        if m == 0 {
            return Err(Error::EmptyAxis { op: "max_over_time" });
        }
        let src = self.value(x).data();
        let mut argmax = vec![0usize; n];
        let mut best: Vec<f64> = src[..n].to_vec();
        for r in 1..m {
            for c in 0..n {
                let v = src[r * n + c];
                if v > best[c] {
                    best[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(1, n, best)?, Op::MaxOverTime { x, argmax }, rg))
    }

    /// Valid 1-D convolution over word windows.
    ///
    /// `seq` is `t x d`, `weight` is `(width * d) x filters` where row
    /// `j * d + e` holds the weight for window offset `j` and feature `e`.
    /// When `t < width` the sequence is right-padded with zero rows to `width`.
    /// Output is `(max(t, width) - width + 1) x filters`.
    pub fn conv1d(&mut self, seq: Var, weight: Var, width: usize) -> Result<Var> {
        let (t, d) = self.matrix("conv1d", seq)?;
        let (wd, nf) = self.matrix("conv1d", weight)?;
        if width == 0 || wd != width * d {
            return Err(Error::dim(
                "conv1d",
                self.value(seq).shape(),
                self.value(weight).shape(),
            ));
        }
        let padded_t = t.max(width);
        let mut padded = self.value(seq).data().to_vec();
        padded.resize(padded_t * d, 0.0);
        let steps = padded_t - width + 1;
        let w = self.value(weight).data();
        let mut out = vec![0.0; steps * nf];
        for i in 0..steps {
            let window = &padded[i * d..i * d + wd];
            matmul_acc(window, w, &mut out[i * nf..(i + 1) * nf], 1, wd, nf);
        }
        let rg = self.rg(seq) || self.rg(weight);
        Ok(self.push(Tensor::matrix(steps, nf, out)?, Op::Conv1d { seq, weight, width }, rg))
    }

    /// Row lookup `table[ids[i]]`. Id 0 is the pad id: its output row is zero
    /// and it never receives gradient.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (vocab, dim) = self.matrix("embed", table)?;
        if ids.is_empty() {
            return Err(Error::EmptyInput("embed of an empty id sequence".into()));
        }
        let src = self.value(table).data();
        let mut out = vec![0.0; ids.len() * dim];
        for (pos, &id) in ids.iter().enumerate() {
            let id_us = id as usize;
            if id_us >= vocab {
                return Err(Error::Vocabulary {
                    id,
                    position: pos,
                    vocab_size: vocab,
                });
            }
            if id != 0 {
                out[pos * dim..(pos + 1) * dim].copy_from_slice(&src[id_us * dim..(id_us + 1) * dim]);
            }
        }
        let rg = self.rg(table);
        let op = Op::Embed {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push(Tensor::matrix(ids.len(), dim, out)?, op, rg))
    }

    /// Picks rows of `x` by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, x: Var, idx: &[Option<usize>]) -> Result<Var> {
        let (m, n) = self.matrix("gather_rows", x)?;
        if idx.is_empty() {
            return Err(Error::EmptyAxis { op: "gather_rows" });
        }
        let src = self.value(x);
        let mut out = vec![0.0; idx.len() * n];
        for (r, i) in idx.iter().enumerate() {
            if let Some(i) = *i {
                if i >= m {
                    return Err(Error::dim("gather_rows", &[m, n], &[i]));
                }
                out[r * n..(r + 1) * n].copy_from_slice(src.row_slice(i));
            }
        }
        let rg = self.rg(x);
        let op = Op::GatherRows { x, idx: idx.to_vec() };
        Ok(self.push(Tensor::matrix(idx.len(), n, out)?, op, rg))
    }

    /// Row `r` comes from `on` where `mask[r]` holds, else from `off`.
    /// Rows are copied bit for bit.
    pub fn select_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var> {
        self.same_shape("select_rows", on, off)?;
        let (m, n) = self.matrix("select_rows", on)?;
        if mask.len() != m {
            return Err(Error::dim("select_rows", &[m, n], &[mask.len()]));
        }
        if mask.iter().all(|&k| k) {
            return Ok(on);
        }
        if mask.iter().all(|&k| !k) {
            return Ok(off);
        }
        let mut out = Vec::with_capacity(m * n);
        for (r, &keep) in mask.iter().enumerate() {
            let src = if keep { on } else { off };
            out.extend_from_slice(self.value(src).row_slice(r));
        }
        let rg = self.rg(on) || self.rg(off);
        let op = Op::SelectRows {
            mask: mask.to_vec(),
            on,
            off,
        };
        Ok(self.push(Tensor::matrix(m, n, out)?, op, rg))
    }

    /// `x[m x n]` with row `r` multiplied by `s[r]`, where `s` is `m x 1`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (m, n) = self.matrix("scale_rows", x)?;
        if self.dims(s) != (m, 1) {
            return Err(Error::dim("scale_rows", self.value(x).shape(), self.value(s).shape()));
        }
        let sv = self.value(s).data();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .chunks(n)
            .zip(sv)
            .flat_map(|(row, &f)| row.iter().map(move |v| v * f))
            .collect();
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::ScaleRows(x, s), rg))
    }

    /// Rows `start..start + len` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix("slice_rows", x)?;
        if len == 0 || start + len > m {
            return Err(Error::dim("slice_rows", &[m, n], &[start, len]));
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(len, n, data)?, Op::SliceRows { x, start }, rg))
    }

    /// Mean binary cross-entropy of probabilities `p` (any shape, one value
    /// per instance) against 0/1 labels. Probabilities are clamped to
    /// `[PROB_CLAMP, 1 - PROB_CLAMP]`; clamped entries pass no gradient.
    pub fn bce_mean(&mut self, p: Var, labels: &[f64]) -> Result<Var> {
        let probs = self.value(p).data();
        if probs.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} predictions but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Contract("loss over zero instances".into()));
        }
        let total: f64 = probs
            .iter()
            .zip(labels)
            .map(|(&q, &y)| {
                let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
            })
            .sum();
        let loss = total / labels.len() as f64;
        let rg = self.rg(p);
        let op = Op::BceMean {
            p,
            labels: labels.to_vec(),
        };
        Ok(self.push(Tensor::scalar(loss), op, rg))
    }

    /// Reverse pass from a one-element `loss`. Each node is visited once, in
    /// reverse creation order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Param(id) = self.nodes[i].op {
                out.entries.push((id, g));
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        out.entries.sort_by_key(|(id, _)| *id);
        Ok(out)
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.nodes[i].value.as_ref().expect("op nodes own values");
        match &self.nodes[i].op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let (_, n) = self.dims(*b);
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_bt_acc(g, self.value(*b).data(), ga, m, k, n);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_at_acc(self.value(*a).data(), g, gb, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(grads, v) {
                        add_into(gv, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(o, v)| *o -= v);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, gv), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gv * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, gv), x) in gb.iter_mut().zip(g).zip(av) {
                        *o += gv * x;
                    }
                }
            }
            Op::AddRow(x, row) => {
                if let Some(gx) = self.acc(grads, *x) {
                    add_into(gx, g);
                }
                let n = self.dims(*row).1;
                if let Some(gr) = self.acc(grads, *row) {
                    for chunk in g.chunks(n) {
                        add_into(gr, chunk);
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(o, v)| *o += v * f);
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, gv), y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *o += gv * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, gv), y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *o += gv * (1.0 - y * y);
                    }
                }
            }
            Op::Softmax { x, groups } => {
                let y = out.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for grp in groups {
                        let dot: f64 = grp.iter().map(|&j| y[j] * g[j]).sum();
                        for &j in grp {
                            gx[j] += y[j] * (g[j] - dot);
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = out.dims2().expect("2-D");
                let mut offset = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    if let Some(gp) = self.acc(grads, p) {
                        for r in 0..m {
                            add_into(&mut gp[r * w..(r + 1) * w], &g[r * n + offset..r * n + offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(gp) = self.acc(grads, p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::SumAxis(x, axis) | Op::MeanAxis(x, axis) => {
                let (m, n) = self.dims(*x);
                let div = match (&self.nodes[i].op, axis) {
                    (Op::MeanAxis(..), Axis::Rows) => m as f64,
                    (Op::MeanAxis(..), Axis::Cols) => n as f64,
                    _ => 1.0,
                };
                if let Some(gx) = self.acc(grads, *x) {
                    for r in 0..m {
                        for c in 0..n {
                            let up = match axis {
                                Axis::Rows => g[c],
                                Axis::Cols => g[r],
                            };
                            gx[r * n + c] += up / div;
                        }
                    }
                }
            }
            Op::MaxOverTime { x, argmax } => {
                let n = argmax.len();
                if let Some(gx) = self.acc(grads, *x) {
                    for (c, &r) in argmax.iter().enumerate() {
                        gx[r * n + c] += g[c];
                    }
                }
            }
            Op::Conv1d { seq, weight, width } => {
                let (t, d) = self.dims(*seq);
                let (wd, nf) = self.dims(*weight);
                let padded_t = t.max(*width);
                let steps = padded_t - width + 1;
                if self.nodes[weight.0].requires_grad {
                    let mut padded = self.value(*seq).data().to_vec();
                    padded.resize(padded_t * d, 0.0);
                    let gw = self.acc(grads, *weight).expect("requires grad");
                    for s in 0..steps {
                        let window = &padded[s * d..s * d + wd];
                        matmul_at_acc(window, &g[s * nf..(s + 1) * nf], gw, 1, wd, nf);
                    }
                }
                if self.nodes[seq.0].requires_grad {
                    let w = self.value(*weight).data();
                    let mut gpad = vec![0.0; padded_t * d];
                    for s in 0..steps {
                        matmul_bt_acc(&g[s * nf..(s + 1) * nf], w, &mut gpad[s * d..s * d + wd], 1, wd, nf);
                    }
                    let gs = self.acc(grads, *seq).expect("requires grad");
                    add_into(gs, &gpad[..t * d]);
                }
            }
            Op::Embed { table, ids } => {
                let dim = self.dims(*table).1;
                if let Some(gt) = self.acc(grads, *table) {
                    for (pos, &id) in ids.iter().enumerate() {
                        if id == 0 {
                            continue;
                        }
                        let id = id as usize;
                        add_into(&mut gt[id * dim..(id + 1) * dim], &g[pos * dim..(pos + 1) * dim]);
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                let n = self.dims(*x).1;
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, src) in idx.iter().enumerate() {
                        if let Some(s) = *src {
                            add_into(&mut gx[s * n..(s + 1) * n], &g[r * n..(r + 1) * n]);
                        }
                    }
                }
            }
            Op::SelectRows { mask, on, off } => {
                let n = self.dims(*on).1;
                for (v, want) in [(*on, true), (*off, false)] {
                    if let Some(gv) = self.acc(grads, v) {
                        for (r, &keep) in mask.iter().enumerate() {
                            if keep == want {
                                add_into(&mut gv[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                            }
                        }
                    }
                }
            }
            Op::ScaleRows(x, s) => {
                let n = self.dims(*x).1;
                let (xv, sv) = (self.value(*x).data(), self.value(*s).data());
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &f) in sv.iter().enumerate() {
                        for c in 0..n {
                            gx[r * n + c] += g[r * n + c] * f;
                        }
                    }
                }
                if let Some(gs) = self.acc(grads, *s) {
                    for (r, o) in gs.iter_mut().enumerate() {
                        *o += (0..n).map(|c| g[r * n + c] * xv[r * n + c]).sum::<f64>();
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let n = self.dims(*x).1;
                if let Some(gx) = self.acc(grads, *x) {
                    add_into(&mut gx[start * n..start * n + g.len()], g);
                }
            }
            Op::BceMean { p, labels } => {
                let probs = self.value(*p).data();
                let scale = g[0] / labels.len() as f64;
                if let Some(gp) = self.acc(grads, *p) {
                    for ((o, &q), &y) in gp.iter_mut().zip(probs).zip(labels) {
                        if q > PROB_CLAMP && q < 1.0 - PROB_CLAMP {
                            *o += scale * (-y / q + (1.0 - y) / (1.0 - q));
                        }
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
