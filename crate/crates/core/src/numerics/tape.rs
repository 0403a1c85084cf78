//! Dynamic reverse-mode tape.
//!
//! Every op appends a node holding its forward value; `backward` walks the
//! nodes in reverse and accumulates vector-Jacobian products. Nodes whose
//! inputs never require a gradient are skipped entirely, which is how frozen
//! components avoid backward cost.

use std::collections::HashMap;

use super::store::ParameterStore;
use super::tensor::kernels;
use super::Tensor;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    CausalSoftmax(Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Transpose(Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<f64>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
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

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        value.requires_grad = requires_grad;
        value.grad = None;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    /// Records a leaf. Its `requires_grad` flag decides whether it receives a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad;
        self.push(t, Op::Leaf, rg)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Binds a named parameter, reusing the node if it is already on the tape.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        if let Some(v) = self.params.get(name) {
            return Ok(*v);
        }
        let t = store.get(name)?;
        let v = self.push(t.clone(), Op::Leaf, t.requires_grad);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::shape(op, s, &[]));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul_bt")?;
        let (n, k2) = self.dims2(b, "matmul_bt")?;
        if k != k2 {
            return Err(Error::shape("matmul_bt", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_bt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulBt(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b), rg))
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, n) = self.dims2(x, "add_row")?;
        if self.value(row).numel() != n {
            return Err(Error::shape("add_row", self.shape(x), self.shape(row)));
        }
        let b = self.value(row).data();
        let mut out = self.value(x).data().to_vec();
        for r in out.chunks_mut(n) {
            for (o, bv) in r.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddRow(x, row), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|v| v * s).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(x);
        self.push(
            Tensor::new(shape, out).expect("shape preserved"),
            Op::Scale(x, s),
            rg,
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| gelu(v)).collect();
        let shape = t.shape().to_vec();
        let rg = self.rg(x);
        self.push(
            Tensor::new(shape, out).expect("shape preserved"),
            Op::Gelu(x),
            rg,
        )
    }

    /// Layer normalization over the last dimension of an `m×n` matrix.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "layer_norm")?;
        if self.value(gain).numel() != n || self.value(bias).numel() != n {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let xd = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &xd[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let y = super::tensor::softmax(self.value(x), axis)?;
        let rg = self.rg(x);
        Ok(self.push(y, Op::Softmax { x, axis }, rg))
    }

    /// Row softmax of a square score matrix where row `i` only sees columns `≤ i`.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "causal_softmax")?;
        if m != n {
            return Err(Error::shape("causal_softmax", self.shape(x), &[m, m]));
        }
        let mut out = vec![0.0; m * n];
        let xd = self.value(x).data();
        for i in 0..m {
            let row = &mut out[i * n..i * n + i + 1];
            row.copy_from_slice(&xd[i * n..i * n + i + 1]);
            kernels::softmax_slice(row);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::CausalSoftmax(x), rg))
    }

    /// Embedding lookup: row `ids[r]` of `table` becomes row `r` of the output.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, n) = self.dims2(table, "gather_rows")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for table with {rows} rows"
            )));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            out.extend_from_slice(&t[i * n..(i + 1) * n]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::new(vec![ids.len(), n], out)?,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let (_, n) = self.dims2(first, "concat_rows")?;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_rows")?;
            if c != n {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(vec![rows, n], out)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims2(x, "slice_cols")?;
        if start + len > n {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&xd[r * n + start..r * n + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(vec![m, len], out)?,
            Op::SliceCols { x, start },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let (m, _) = self.dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != m {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).transpose()?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Transpose(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean negative log-likelihood of `targets` over the positions selected by `mask`.
    pub fn cross_entropy_masked(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let (t, v) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != t || mask.len() != t {
            return Err(Error::shape(
                "cross_entropy",
                self.shape(logits),
                &[targets.len(), mask.len()],
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        let ld = self.value(logits).data();
        let mut probs = vec![0.0; t * v];
        let mut total = 0.0;
        for r in 0..t {
            if !mask[r] {
                continue;
            }
            let target = targets[r];
            if target >= v {
                return Err(Error::InvalidArgument(format!(
                    "target {target} outside vocabulary of {v}"
                )));
            }
            let row = &ld[r * v..(r + 1) * v];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[target];
            for (p, x) in probs[r * v..(r + 1) * v].iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// Propagates gradients from a scalar `loss` to every reachable node that
    /// requires one. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NotScalar(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.value.requires_grad {
                continue;
            }
            self.propagate(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if let (true, Some(g)) = (node.value.requires_grad, g) {
                node.value.accumulate_grad(&g);
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let needs = |v: Var| nodes[v.0].value.requires_grad;
        // Returns the gradient buffer of `v`, allocating zeros on first touch.
        fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()])
        }

        match &nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                if needs(*a) {
                    kernels::matmul_bt(dy, val(*b).data(), slot(grads, nodes, *a), m, n, k);
                }
                if needs(*b) {
                    kernels::matmul_at(val(*a).data(), dy, slot(grads, nodes, *b), m, k, n);
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[0];
                if needs(*a) {
                    kernels::matmul(dy, val(*b).data(), slot(grads, nodes, *a), m, n, k);
                }
                if needs(*b) {
                    kernels::matmul_at(dy, val(*a).data(), slot(grads, nodes, *b), m, n, k);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if needs(v) {
                        axpy(slot(grads, nodes, v), dy, 1.0);
                    }
                }
            }
            Op::AddRow(x, row) => {
                if needs(*x) {
                    axpy(slot(grads, nodes, *x), dy, 1.0);
                }
                if needs(*row) {
                    let g = slot(grads, nodes, *row);
                    let n = g.len();
                    for r in dy.chunks(n) {
                        axpy(g, r, 1.0);
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let g = slot(grads, nodes, *a);
                    for ((g, d), o) in g.iter_mut().zip(dy).zip(val(*b).data()) {
                        *g += d * o;
                    }
                }
                if needs(*b) {
                    let g = slot(grads, nodes, *b);
                    for ((g, d), o) in g.iter_mut().zip(dy).zip(val(*a).data()) {
                        *g += d * o;
                    }
                }
            }
            Op::Scale(x, s) => axpy(slot(grads, nodes, *x), dy, *s),
            Op::Gelu(x) => {
                let g = slot(grads, nodes, *x);
                for ((g, d), &v) in g.iter_mut().zip(dy).zip(val(*x).data()) {
                    *g += d * gelu_grad(v);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = val(*gain).numel();
                let gd = val(*gain).data();
                if needs(*gain) {
                    let g = slot(grads, nodes, *gain);
                    for (dr, hr) in dy.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            g[j] += dr[j] * hr[j];
                        }
                    }
                }
                if needs(*bias) {
                    let g = slot(grads, nodes, *bias);
                    for dr in dy.chunks(n) {
                        axpy(g, dr, 1.0);
                    }
                }
                if needs(*x) {
                    let g = slot(grads, nodes, *x);
                    let mut dxh = vec![0.0; n];
                    for (r, (dr, hr)) in dy.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        for j in 0..n {
                            dxh[j] = dr[j] * gd[j];
                        }
                        let mean_d = dxh.iter().sum::<f64>() / n as f64;
                        let mean_dh =
                            dxh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        let out = &mut g[r * n..(r + 1) * n];
                        for j in 0..n {
                            out[j] += rstd[r] * (dxh[j] - mean_d - hr[j] * mean_dh);
                        }
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let y = nodes[idx].value.data();
                let (outer, len, inner) = kernels::axis_split(nodes[idx].value.shape(), *axis);
                let g = slot(grads, nodes, *x);
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let dot: f64 = (0..len).map(|j| dy[at(j)] * y[at(j)]).sum();
                        for j in 0..len {
                            g[at(j)] += y[at(j)] * (dy[at(j)] - dot);
                        }
                    }
                }
            }
            Op::CausalSoftmax(x) => {
                let y = nodes[idx].value.data();
                let n = nodes[idx].value.shape()[1];
                let g = slot(grads, nodes, *x);
                for i in 0..n {
                    let (yr, dr) = (&y[i * n..i * n + i + 1], &dy[i * n..i * n + i + 1]);
                    let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for j in 0..=i {
                        g[i * n + j] += yr[j] * (dr[j] - dot);
                    }
                }
            }
            Op::GatherRows { table, ids } => {
                let n = val(*table).shape()[1];
                let g = slot(grads, nodes, *table);
                for (r, &id) in ids.iter().enumerate() {
                    axpy(&mut g[id * n..(id + 1) * n], &dy[r * n..(r + 1) * n], 1.0);
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = val(p).numel();
                    if needs(p) {
                        axpy(slot(grads, nodes, p), &dy[off..off + len], 1.0);
                    }
                    off += len;
                }
            }
            Op::SliceCols { x, start } => {
                let n = val(*x).shape()[1];
                let w = nodes[idx].value.shape()[1];
                let g = slot(grads, nodes, *x);
                for (r, dr) in dy.chunks(w).enumerate() {
                    axpy(&mut g[r * n + start..r * n + start + w], dr, 1.0);
                }
            }
            Op::ConcatCols(parts) => {
                let n = nodes[idx].value.shape()[1];
                let mut off = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    if needs(p) {
                        let g = slot(grads, nodes, p);
                        for (r, dr) in dy.chunks(n).enumerate() {
                            axpy(&mut g[r * w..(r + 1) * w], &dr[off..off + w], 1.0);
                        }
                    }
                    off += w;
                }
            }
            Op::Transpose(x) => {
                let (m, n) = (val(*x).shape()[0], val(*x).shape()[1]);
                let g = slot(grads, nodes, *x);
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] += dy[j * m + i];
                    }
                }
            }
            Op::Sum(x) => {
                let g = slot(grads, nodes, *x);
                for v in g.iter_mut() {
                    *v += dy[0];
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let v = val(*logits).shape()[1];
                let scale = dy[0] / *count as f64;
                let g = slot(grads, nodes, *logits);
                for (r, &m) in mask.iter().enumerate() {
                    if !m {
                        continue;
                    }
                    let row = &mut g[r * v..(r + 1) * v];
                    axpy(row, &probs[r * v..(r + 1) * v], scale);
                    row[targets[r]] -= scale;
                }
            }
        }
    }

    /// Adds the gradients of every bound, trainable parameter into `store`.
    pub fn write_param_grads(&self, store: &mut ParameterStore) -> Result<()> {
        for (name, v) in &self.params {
            if let Some(g) = self.grad(*v) {
                if store.is_trainable(name) {
                    store.get_mut(name)?.accumulate_grad(g);
                }
            }
        }
        Ok(())
    }
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: &[usize], data: Vec<f64>) -> Var {
        let mut t = Tensor::new(shape.to_vec(), data).unwrap();
        t.requires_grad = true;
        tape.leaf(t)
    }

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn sum_of_squares_gives_2x() {
        let mut tape = Tape::new();
        let data = vec![1.0, -2.0, 3.0, 0.5];
        let x = leaf(&mut tape, &[4], data.clone());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        let expect: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        assert_eq!(tape.grad(x).unwrap(), expect.as_slice());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1.0, 2.0]);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn frozen_leaves_get_no_grad() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1.0, 2.0]);
        let c = tape.constant(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        let p = tape.mul(x, c).unwrap();
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let mut tape = Tape::new();
        let logits = leaf(&mut tape, &[2, 4], vec![0.0; 8]);
        let l = tape
            .cross_entropy_masked(logits, &[3, 1], &[true, true])
            .unwrap();
        assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_target_is_zero() {
        let mut tape = Tape::new();
        let logits = leaf(&mut tape, &[1, 3], vec![0.0, 800.0, 0.0]);
        let l = tape.cross_entropy_masked(logits, &[1], &[true]).unwrap();
        assert!(tape.value(l).item().abs() < 1e-300);
    }

    #[test]
    fn cross_entropy_mask_ignores_targets() {
        let logits = vec![0.3, -1.0, 2.0, 0.1, 0.5, 0.9];
        let eval = |targets: &[usize]| {
            let mut tape = Tape::new();
            let l = leaf(&mut tape, &[2, 3], logits.clone());
            let loss = tape.cross_entropy_masked(l, targets, &[true, false]).unwrap();
            tape.value(loss).item()
        };
        assert_eq!(eval(&[2, 0]), eval(&[2, 1]));
    }

    #[test]
    fn cross_entropy_empty_mask_errors() {
        let mut tape = Tape::new();
        let l = leaf(&mut tape, &[1, 3], vec![0.0; 3]);
        assert!(matches!(
            tape.cross_entropy_masked(l, &[0], &[false]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn causal_softmax_zeroes_future() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3, 3], vec![1.0; 9]);
        let y = tape.causal_softmax(x).unwrap();
        let d = tape.value(y).data();
        assert_eq!(&d[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&d[3..6], &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn matmul_shape_error() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2, 3], vec![0.0; 6]);
        let b = leaf(&mut tape, &[2, 3], vec![0.0; 6]);
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    }
}
