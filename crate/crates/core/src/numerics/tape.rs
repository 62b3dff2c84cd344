//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward pass. Node ids are assigned in creation order, so
//! the node list is always a valid topological order and `backward` simply
//! walks it from the loss down to the first node.

use std::rc::Rc;

use super::tensor::{gemm, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Reshape(Var),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax(Var),
    GatherRows { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConvMaxPool { seq: Var, filters: Var, bias: Var, width: usize, seq_len: usize, argmax: Vec<usize> },
    Dropout { x: Var, mask: Vec<f64> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<f64>, count: usize },
}

#[derive(Debug)]
struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation so it can be differentiated.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        self.push_node(Rc::new(t), Op::Leaf, rg)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_node(Rc::new(t), Op::Leaf, false)
    }

    /// Adds a shared parameter tensor without copying it.
    pub fn param(&mut self, t: &Rc<Tensor>) -> Var {
        self.push_node(Rc::clone(t), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Tensor::new(self.shape(v), g.clone()).ok()
    }

    fn push_node(&mut self, value: Rc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &str, shape: &[usize], data: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: op_name.to_string() });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let t = Tensor::new(shape, data)?;
        Ok(self.push_node(Rc::new(t), op, rg))
    }

    fn matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::dim(op, s, &[])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix("matmul", a)?;
        let (k2, n) = self.matrix("matmul", b)?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let out = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", &[m, n], out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix("transpose", a)?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push("transpose", &[c, r], out, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push("add", &shape, out, Op::Add(a, b), &[a, b])
    }

    /// `a[..., n] + bias[n]`, broadcast over leading axes.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let n = self.value(a).last_dim();
        if self.shape(bias) != [n] {
            return Err(Error::dim("add_bias", self.shape(a), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let out: Vec<f64> = self.value(a).data().iter().enumerate().map(|(i, x)| x + b[i % n]).collect();
        let shape = self.shape(a).to_vec();
        self.push("add_bias", &shape, out, Op::AddBias(a, bias), &[a, bias])
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.push("mul", &shape, out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push("scale", &shape, out, Op::Scale(a, c), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", &[1], vec![s], Op::Sum(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(a).numel() {
            return Err(Error::dim("reshape", self.shape(a), shape));
        }
        let data = self.value(a).data().to_vec();
        self.push("reshape", shape, data, Op::Reshape(a), &[a])
    }

    /// Exact GELU, `x·Φ(x)` with the erf-based normal CDF.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out: Vec<f64> = self.value(a).data().iter().map(|&x| x * normal_cdf(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push("gelu", &shape, out, Op::Gelu(a), &[a])
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gain` and `bias`. `eps` is added to the variance inside the root.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if d < 2 || self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::dim("layer_norm", self.shape(x), self.shape(gain)));
        }
        let xv = self.value(x);
        let rows = xv.rows();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; xv.numel()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xv.numel()];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let shape = xv.shape().to_vec();
        let op = Op::LayerNorm { x, gain, bias, xhat, rstd };
        self.push("layer_norm", &shape, out, op, &[x, gain, bias])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.masked_softmax(a, None)
    }

    /// Softmax over the last axis where columns with `keep[j] == false` are
    /// treated as `-inf` before normalization and receive exactly zero weight.
    pub fn masked_softmax(&mut self, a: Var, keep: Option<&[bool]>) -> Result<Var> {
        let av = self.value(a);
        let n = av.last_dim();
        if let Some(k) = keep {
            if k.len() != n {
                return Err(Error::dim("masked_softmax", av.shape(), &[k.len()]));
            }
            if !k.iter().any(|&b| b) {
                return Err(Error::EmptyLoss);
            }
        }
        let allowed = |j: usize| keep.is_none_or(|k| k[j]);
        let mut out = vec![0.0; av.numel()];
        for r in 0..av.rows() {
            let row = av.row(r);
            let max = (0..n).filter(|&j| allowed(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[r * n..(r + 1) * n];
            let mut sum = 0.0;
            for j in 0..n {
                if allowed(j) {
                    o[j] = (row[j] - max).exp();
                    sum += o[j];
                }
            }
            for v in o.iter_mut() {
                *v /= sum;
            }
        }
        let shape = av.shape().to_vec();
        self.push("softmax", &shape, out, Op::Softmax(a), &[a])
    }

    /// Row lookup `table[ids[i], :]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.matrix("gather_rows", table)?;
        if ids.is_empty() {
            return Err(Error::dim("gather_rows", &[v, d], &[0]));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Vocab { id, size: v });
            }
            out.extend_from_slice(&t[id * d..(id + 1) * d]);
        }
        self.push("gather_rows", &[ids.len(), d], out, Op::GatherRows { table, ids: ids.to_vec() }, &[table])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.matrix("concat_cols", parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix("concat_cols", p)?;
            if r != rows {
                return Err(Error::dim("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push("concat_cols", &[rows, total], out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.matrix("concat_rows", parts[0])?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.matrix("concat_rows", p)?;
            if c != cols {
                return Err(Error::dim("concat_rows", self.shape(parts[0]), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        self.push("concat_rows", &[rows, cols], out, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.matrix("slice_cols", x)?;
        if start >= end || end > cols {
            return Err(Error::dim("slice_cols", &[rows, cols], &[start, end]));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&xv.row(r)[start..end]);
        }
        self.push("slice_cols", &[rows, end - start], out, Op::SliceCols { x, start }, &[x])
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.matrix("slice_rows", x)?;
        if start >= end || end > rows {
            return Err(Error::dim("slice_rows", &[rows, cols], &[start, end]));
        }
        let out = self.value(x).data()[start * cols..end * cols].to_vec();
        self.push("slice_rows", &[end - start, cols], out, Op::SliceRows { x, start }, &[x])
    }

    /// Width-`width` unpadded convolution over each of the `n` sequences
    /// stacked in `seq[n·seq_len × E]`, followed by a max over window
    /// positions. `filters` is `[F × width·E]` with the window flattened
    /// symbol-major. Returns `[n × F]`; ties go to the earliest window.
    pub fn conv1d_maxpool(&mut self, seq: Var, filters: Var, bias: Var, width: usize, seq_len: usize) -> Result<Var> {
        let (total, e) = self.matrix("conv1d_maxpool", seq)?;
        let (f, fw) = self.matrix("conv1d_maxpool", filters)?;
        if fw != width * e || self.shape(bias) != [f] || seq_len == 0 || total % seq_len != 0 {
            return Err(Error::dim("conv1d_maxpool", self.shape(seq), self.shape(filters)));
        }
        if seq_len < width {
            return Err(Error::SequenceTooShort { len: seq_len, width });
        }
        let n = total / seq_len;
        let windows = seq_len - width + 1;
        let s = self.value(seq).data();
        let w = self.value(filters).data();
        let b = self.value(bias).data();
        let mut out = vec![0.0; n * f];
        let mut argmax = vec![0; n * f];
        for i in 0..n {
            for fi in 0..f {
                let frow = &w[fi * fw..(fi + 1) * fw];
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0;
                for win in 0..windows {
                    let start = (i * seq_len + win) * e;
                    let x = &s[start..start + fw];
                    let mut r = b[fi];
                    for (a, c) in frow.iter().zip(x) {
                        r += a * c;
                    }
                    if r > best {
                        best = r;
                        best_at = win;
                    }
                }
                out[i * f + fi] = best;
                argmax[i * f + fi] = best_at;
            }
        }
        let op = Op::ConvMaxPool { seq, filters, bias, width, seq_len, argmax };
        self.push("conv1d_maxpool", &[n, f], out, op, &[seq, filters, bias])
    }

    /// Multiplies by a fixed mask (already scaled by the keep probability).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(x).numel() {
            return Err(Error::dim("dropout", self.shape(x), &[mask.len()]));
        }
        let out: Vec<f64> = self.value(x).data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let shape = self.shape(x).to_vec();
        self.push("dropout", &shape, out, Op::Dropout { x, mask }, &[x])
    }

    /// Mean negative log-softmax of `logits[T×V]` at rows whose label is
    /// not `ignore_id`.
    pub fn cross_entropy_masked(&mut self, logits: Var, labels: &[i64], ignore_id: i64) -> Result<Var> {
        let (t, v) = self.matrix("cross_entropy_masked", logits)?;
        if labels.len() != t {
            return Err(Error::dim("cross_entropy_masked", &[t, v], &[labels.len()]));
        }
        let mut targets = Vec::with_capacity(t);
        for &l in labels {
            if l == ignore_id {
                targets.push(None);
            } else if l < 0 || l as usize >= v {
                return Err(Error::Vocab { id: l.max(0) as usize, size: v });
            } else {
                targets.push(Some(l as usize));
            }
        }
        let count = targets.iter().flatten().count();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; t * v];
        let mut total = 0.0;
        for (r, target) in targets.iter().enumerate() {
            let Some(target) = *target else { continue };
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + sum.ln();
            total += lse - row[target];
            for j in 0..v {
                probs[r * v + j] = (row[j] - lse).exp();
            }
        }
        let loss = total / count as f64;
        let op = Op::CrossEntropy { logits, targets, probs, count };
        self.push("cross_entropy_masked", &[1], vec![loss], op, &[logits])
    }

    /// Runs reverse accumulation from the scalar `loss`. Each node at or
    /// below `loss` is visited exactly once, in reverse creation order.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::dim("backward", self.shape(loss), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        // Accumulates into the gradient slot of `v`, allocating on first touch.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(slot);
        };
        let val = |v: Var| -> &Tensor { &nodes[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                acc(*a, &mut |ga| gemm_nt_acc(g, val(*b).data(), m, n, k, ga));
                acc(*b, &mut |gb| gemm_tn_acc(val(*a).data(), g, m, k, n, gb));
            }
            Op::Transpose(a) => {
                let (r, c) = (val(*a).shape()[0], val(*a).shape()[1]);
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |gv| add_into(gv, g));
                }
            }
            Op::AddBias(a, bias) => {
                acc(*a, &mut |ga| add_into(ga, g));
                let n = val(*bias).numel();
                acc(*bias, &mut |gb| {
                    for (i, x) in g.iter().enumerate() {
                        gb[i % n] += x;
                    }
                });
            }
            Op::Mul(a, b) => {
                acc(*a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(val(*b).data()) {
                        *o += x * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(g).zip(val(*a).data()) {
                        *o += x * y;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| {
                for (o, x) in ga.iter_mut().zip(g) {
                    *o += x * c;
                }
            }),
            Op::Sum(a) => acc(*a, &mut |ga| {
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }),
            Op::Reshape(a) => acc(*a, &mut |ga| add_into(ga, g)),
            Op::Gelu(a) => acc(*a, &mut |ga| {
                for ((o, x), &gi) in ga.iter_mut().zip(val(*a).data()).zip(g) {
                    *o += gi * (normal_cdf(*x) + x * normal_pdf(*x));
                }
            }),
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let d = val(*gain).numel();
                let gn = val(*gain).data();
                acc(*x, &mut |gx| {
                    for (r, rs) in rstd.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            let dh = gr[j] * gn[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            let dh = gr[j] * gn[j];
                            gx[r * d + j] += rs * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                });
                acc(*gain, &mut |gg| {
                    for (i, (x, h)) in g.iter().zip(xhat).enumerate() {
                        gg[i % d] += x * h;
                    }
                });
                acc(*bias, &mut |gb| {
                    for (i, x) in g.iter().enumerate() {
                        gb[i % d] += x;
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let n = node.value.last_dim();
                acc(*a, &mut |ga| {
                    for r in 0..y.len() / n {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            ga[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::GatherRows { table, ids } => {
                let d = val(*table).shape()[1];
                acc(*table, &mut |gt| {
                    for (i, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[i * d..(i + 1) * d]);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.last_dim();
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).shape()[1];
                    acc(p, &mut |gp| {
                        for r in 0..rows {
                            add_into(&mut gp[r * c..(r + 1) * c], &g[r * total + offset..r * total + offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).numel();
                    acc(p, &mut |gp| add_into(gp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::SliceCols { x, start } => {
                let cols = val(*x).shape()[1];
                let w = node.value.last_dim();
                acc(*x, &mut |gx| {
                    for r in 0..node.value.rows() {
                        add_into(&mut gx[r * cols + start..r * cols + start + w], &g[r * w..(r + 1) * w]);
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let cols = val(*x).shape()[1];
                let off = start * cols;
                acc(*x, &mut |gx| add_into(&mut gx[off..off + g.len()], g));
            }
            Op::ConvMaxPool { seq, filters, bias, width, seq_len, argmax } => {
                let e = val(*seq).shape()[1];
                let f = val(*filters).shape()[0];
                let fw = width * e;
                let s = val(*seq).data();
                let w = val(*filters).data();
                acc(*filters, &mut |gw| {
                    for (k, &win) in argmax.iter().enumerate() {
                        let (i, fi) = (k / f, k % f);
                        let start = (i * seq_len + win) * e;
                        for (o, x) in gw[fi * fw..(fi + 1) * fw].iter_mut().zip(&s[start..start + fw]) {
                            *o += g[k] * x;
                        }
                    }
                });
                acc(*seq, &mut |gs| {
                    for (k, &win) in argmax.iter().enumerate() {
                        let (i, fi) = (k / f, k % f);
                        let start = (i * seq_len + win) * e;
                        for (o, x) in gs[start..start + fw].iter_mut().zip(&w[fi * fw..(fi + 1) * fw]) {
                            *o += g[k] * x;
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for (k, x) in g.iter().enumerate() {
                        gb[k % f] += x;
                    }
                });
            }
            Op::Dropout { x, mask } => acc(*x, &mut |gx| {
                for ((o, a), m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += a * m;
                }
            }),
            Op::CrossEntropy { logits, targets, probs, count } => {
                let v = val(*logits).shape()[1];
                let scale = g[0] / *count as f64;
                acc(*logits, &mut |gl| {
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        for j in 0..v {
                            gl[r * v + j] += scale * probs[r * v + j];
                        }
                        gl[r * v + t] -= scale;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
