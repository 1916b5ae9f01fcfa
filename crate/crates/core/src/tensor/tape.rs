use rand::Rng;

use super::{matmul_a_bt_into, matmul_at_b_into, Tensor};
use crate::error::{Error, Result};
use crate::seed;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    RowMean(Var),
    RowSum(Var),
    Sum(Var),
    ScaleRows(Var, Var),
    ScaleCols(Var, Var),
    Softmax(Var),
    LogSoftmax(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Dropout(Var, Vec<f64>),
    Bce(Var, Vec<f64>),
    Nll(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of primitive ops for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`]; `None` if `v`
    /// does not require gradients or was not reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn map(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        self.push(name, out, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        self.push("sub", out, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, Op::Scale(a, c), |v| v * c)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        self.push("mul", out, Op::Mul(a, b))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let rows = self.shape(first).0;
        if let Some(bad) = parts.iter().find(|v| self.shape(**v).0 != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows vs {rows}", self.shape(*bad).0),
            ));
        }
        let cols: usize = parts.iter().map(|v| self.shape(*v).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for v in parts {
                data.extend_from_slice(self.value(*v).row_slice(r));
            }
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("stack_rows", "no inputs"));
        };
        let cols = self.shape(first).1;
        if let Some(bad) = parts.iter().find(|v| self.shape(**v).1 != cols) {
            return Err(Error::shape(
                "stack_rows",
                format!("{} cols vs {cols}", self.shape(*bad).1),
            ));
        }
        let mut data = Vec::new();
        for v in parts {
            data.extend_from_slice(self.value(*v).data());
        }
        let rows = parts.iter().map(|v| self.shape(*v).0).sum();
        let out = Tensor::from_vec(rows, cols, data)?;
        self.push("stack_rows", out, Op::StackRows(parts.to_vec()))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{} of {}", start + len, x.rows()),
            ));
        }
        let data = x.data()[start * x.cols()..(start + len) * x.cols()].to_vec();
        let out = Tensor::from_vec(len, x.cols(), data)?;
        self.push("slice_rows", out, Op::SliceRows(a, start))
    }

    /// Rows picked by `idx`, repeats allowed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {}", x.rows())));
        }
        let mut data = Vec::with_capacity(idx.len() * x.cols());
        for &i in idx {
            data.extend_from_slice(x.row_slice(i));
        }
        let out = Tensor::from_vec(idx.len(), x.cols(), data)?;
        self.push("gather_rows", out, Op::GatherRows(a, idx.to_vec()))
    }

    pub fn select_row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.gather_rows(a, &[r])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.push("transpose", out, Op::Transpose(a))
    }

    /// `n × m → n × 1` mean of each row.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(Error::shape("row_mean", "zero columns"));
        }
        let m = x.cols() as f64;
        let data = (0..x.rows()).map(|r| x.row_slice(r).iter().sum::<f64>() / m).collect();
        let out = Tensor::from_vec(x.rows(), 1, data)?;
        self.push("row_mean", out, Op::RowMean(a))
    }

    /// `n × m → n × 1` sum of each row.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| x.row_slice(r).iter().sum()).collect();
        let out = Tensor::from_vec(x.rows(), 1, data)?;
        self.push("row_sum", out, Op::RowSum(a))
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    /// `out[r, c] = x[r, c] * v[r]`; `v` is `n × 1`.
    pub fn scale_rows(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xs, vs) = (self.shape(x), self.shape(v));
        if vs != (xs.0, 1) {
            return Err(Error::shape("scale_rows", format!("{xs:?} by {vs:?}")));
        }
        let (xv, vv) = (self.value(x), self.value(v));
        let mut data = xv.data().to_vec();
        for (r, row) in data.chunks_mut(xs.1.max(1)).enumerate().take(xs.0) {
            let s = vv.data()[r];
            row.iter_mut().for_each(|e| *e *= s);
        }
        let out = Tensor::from_vec(xs.0, xs.1, data)?;
        self.push("scale_rows", out, Op::ScaleRows(x, v))
    }

    /// `out[r, c] = x[r, c] * v[c]`; `v` is `m × 1`.
    pub fn scale_cols(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xs, vs) = (self.shape(x), self.shape(v));
        if vs != (xs.1, 1) {
            return Err(Error::shape("scale_cols", format!("{xs:?} by {vs:?}")));
        }
        let (xv, vv) = (self.value(x), self.value(v));
        let mut data = xv.data().to_vec();
        if xs.1 > 0 {
            for row in data.chunks_mut(xs.1) {
                row.iter_mut().zip(vv.data()).for_each(|(e, s)| *e *= s);
            }
        }
        let out = Tensor::from_vec(xs.0, xs.1, data)?;
        self.push("scale_cols", out, Op::ScaleCols(x, v))
    }

    /// Softmax of each row.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut data = x.data().to_vec();
        if x.cols() > 0 {
            for row in data.chunks_mut(x.cols()) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for e in row.iter_mut() {
                    *e = (*e - m).exp();
                    s += *e;
                }
                row.iter_mut().for_each(|e| *e /= s);
            }
        }
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        self.push("softmax", out, Op::Softmax(a))
    }

    /// Log-softmax of each row.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut data = x.data().to_vec();
        if x.cols() > 0 {
            for row in data.chunks_mut(x.cols()) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
                row.iter_mut().for_each(|e| *e -= lse);
            }
        }
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        self.push("log_softmax", out, Op::LogSoftmax(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.map("leaky_relu", a, Op::LeakyRelu(a, slope), |v| {
            if v > 0.0 {
                v
            } else {
                slope * v
            }
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    /// Inverted dropout. Identity when `train` is false or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let mut rng = seed::rng(seed);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data)?;
        self.push("dropout", out, Op::Dropout(a, mask))
    }

    /// Mean binary cross-entropy of probabilities `p` (any shape, one entry
    /// per label) against 0/1 targets.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Result<Var> {
        let x = self.value(p);
        if x.len() != labels.len() || labels.is_empty() {
            return Err(Error::shape(
                "bce",
                format!("{} probabilities, {} labels", x.len(), labels.len()),
            ));
        }
        let loss = x
            .data()
            .iter()
            .zip(labels)
            .map(|(&q, &y)| {
                let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
            })
            .sum::<f64>()
            / labels.len() as f64;
        self.push("bce", Tensor::scalar(loss), Op::Bce(p, labels.to_vec()))
    }

    /// Mean negative log-likelihood of row-wise log-probabilities.
    pub fn nll(&mut self, logp: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logp);
        if x.rows() != labels.len() || labels.is_empty() {
            return Err(Error::shape(
                "nll",
                format!("{} rows, {} labels", x.rows(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= x.cols()) {
            return Err(Error::shape("nll", format!("class {bad} of {}", x.cols())));
        }
        let loss = -labels.iter().enumerate().map(|(i, &y)| x.get(i, y)).sum::<f64>() / labels.len() as f64;
        self.push("nll", Tensor::scalar(loss), Op::Nll(logp, labels.to_vec()))
    }

    /// Reverse sweep from the `1 × 1` value `loss`, replacing any previously
    /// stored gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward", format!("loss shape {:?}", self.shape(loss))));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let (r, c) = node.value.shape();
        Some(self.grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)).data_mut())
    }

    fn propagate(&mut self, i: usize, g: &Tensor) {
        // Temporarily move the op out so inputs can be borrowed mutably.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let gd = g.data();
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let bv = self.value(*b).data().to_vec();
                if let Some(ga) = self.slot(*a) {
                    matmul_a_bt_into(gd, &bv, ga, m, n, k);
                }
                let av = self.value(*a).data().to_vec();
                if let Some(gb) = self.slot(*b) {
                    matmul_at_b_into(&av, gd, gb, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for (v, s) in [(*a, 1.0), (*b, 1.0)] {
                    if let Some(gv) = self.slot(v) {
                        gv.iter_mut().zip(gd).for_each(|(x, y)| *x += s * y);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, s) in [(*a, 1.0), (*b, -1.0)] {
                    if let Some(gv) = self.slot(v) {
                        gv.iter_mut().zip(gd).for_each(|(x, y)| *x += s * y);
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.slot(*a) {
                    ga.iter_mut().zip(gd).for_each(|(x, y)| *x += c * y);
                }
            }
            Op::Mul(a, b) => {
                let bv = self.value(*b).data().to_vec();
                if let Some(ga) = self.slot(*a) {
                    for ((x, y), z) in ga.iter_mut().zip(gd).zip(&bv) {
                        *x += y * z;
                    }
                }
                let av = self.value(*a).data().to_vec();
                if let Some(gb) = self.slot(*b) {
                    for ((x, y), z) in gb.iter_mut().zip(gd).zip(&av) {
                        *x += y * z;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for v in parts {
                    let (rows, cols) = self.shape(*v);
                    if let Some(gv) = self.slot(*v) {
                        for r in 0..rows {
                            let src = &gd[r * total + offset..r * total + offset + cols];
                            gv[r * cols..(r + 1) * cols]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                    offset += cols;
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for v in parts {
                    let len = self.value(*v).len();
                    if let Some(gv) = self.slot(*v) {
                        gv.iter_mut().zip(&gd[offset..offset + len]).for_each(|(x, y)| *x += y);
                    }
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                let cols = self.shape(*a).1;
                if let Some(ga) = self.slot(*a) {
                    ga[start * cols..start * cols + gd.len()]
                        .iter_mut()
                        .zip(gd)
                        .for_each(|(x, y)| *x += y);
                }
            }
            Op::GatherRows(a, idx) => {
                let cols = self.shape(*a).1;
                if let Some(ga) = self.slot(*a) {
                    for (j, &r) in idx.iter().enumerate() {
                        ga[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(&gd[j * cols..(j + 1) * cols])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                if let Some(ga) = self.slot(*a) {
                    ga.iter_mut().zip(gt.data()).for_each(|(x, y)| *x += y);
                }
            }
            Op::RowMean(a) | Op::RowSum(a) => {
                let cols = self.shape(*a).1;
                let s = if matches!(op, Op::RowMean(_)) {
                    1.0 / cols as f64
                } else {
                    1.0
                };
                if let Some(ga) = self.slot(*a) {
                    for (r, row) in ga.chunks_mut(cols.max(1)).enumerate() {
                        row.iter_mut().for_each(|x| *x += s * gd[r]);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(*a) {
                    ga.iter_mut().for_each(|x| *x += gd[0]);
                }
            }
            Op::ScaleRows(x, v) => {
                let cols = self.shape(*x).1.max(1);
                let vv = self.value(*v).data().to_vec();
                if let Some(gx) = self.slot(*x) {
                    for (r, row) in gx.chunks_mut(cols).enumerate() {
                        row.iter_mut()
                            .zip(&gd[r * cols..(r + 1) * cols])
                            .for_each(|(a, b)| *a += b * vv[r]);
                    }
                }
                let xv = self.value(*x).data().to_vec();
                if let Some(gv) = self.slot(*v) {
                    for (r, e) in gv.iter_mut().enumerate() {
                        *e += gd[r * cols..(r + 1) * cols]
                            .iter()
                            .zip(&xv[r * cols..(r + 1) * cols])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                }
            }
            Op::ScaleCols(x, v) => {
                let cols = self.shape(*x).1.max(1);
                let vv = self.value(*v).data().to_vec();
                if let Some(gx) = self.slot(*x) {
                    for (row, grow) in gx.chunks_mut(cols).zip(gd.chunks(cols)) {
                        for ((a, b), s) in row.iter_mut().zip(grow).zip(&vv) {
                            *a += b * s;
                        }
                    }
                }
                let xv = self.value(*x).data().to_vec();
                if let Some(gv) = self.slot(*v) {
                    for (grow, xrow) in gd.chunks(cols).zip(xv.chunks(cols)) {
                        for ((e, a), b) in gv.iter_mut().zip(grow).zip(xrow) {
                            *e += a * b;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let cols = self.shape(*a).1.max(1);
                let y = self.nodes[i].value.data().to_vec();
                if let Some(ga) = self.slot(*a) {
                    for ((row, yrow), grow) in ga.chunks_mut(cols).zip(y.chunks(cols)).zip(gd.chunks(cols)) {
                        let dot: f64 = yrow.iter().zip(grow).map(|(p, q)| p * q).sum();
                        for ((e, p), q) in row.iter_mut().zip(yrow).zip(grow) {
                            *e += p * (q - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let cols = self.shape(*a).1.max(1);
                let y = self.nodes[i].value.data().to_vec();
                if let Some(ga) = self.slot(*a) {
                    for ((row, yrow), grow) in ga.chunks_mut(cols).zip(y.chunks(cols)).zip(gd.chunks(cols)) {
                        let total: f64 = grow.iter().sum();
                        for ((e, ly), q) in row.iter_mut().zip(yrow).zip(grow) {
                            *e += q - ly.exp() * total;
                        }
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                let xv = self.value(*a).data().to_vec();
                if let Some(ga) = self.slot(*a) {
                    for ((e, q), x) in ga.iter_mut().zip(gd).zip(&xv) {
                        *e += if *x > 0.0 { *q } else { slope * q };
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.data().to_vec();
                if let Some(ga) = self.slot(*a) {
                    for ((e, q), s) in ga.iter_mut().zip(gd).zip(&y) {
                        *e += q * s * (1.0 - s);
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ga) = self.slot(*a) {
                    for ((e, q), m) in ga.iter_mut().zip(gd).zip(mask) {
                        *e += q * m;
                    }
                }
            }
            Op::Bce(p, labels) => {
                let pv = self.value(*p).data().to_vec();
                let scale = gd[0] / labels.len() as f64;
                if let Some(gp) = self.slot(*p) {
                    for ((e, q), y) in gp.iter_mut().zip(&pv).zip(labels) {
                        let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                        *e += scale * (-(y / q) + (1.0 - y) / (1.0 - q));
                    }
                }
            }
            Op::Nll(lp, labels) => {
                let cols = self.shape(*lp).1;
                let scale = gd[0] / labels.len() as f64;
                if let Some(gl) = self.slot(*lp) {
                    for (r, &y) in labels.iter().enumerate() {
                        gl[r * cols + y] -= scale;
                    }
                }
            }
        }
        self.nodes[i].op = op;
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::ScaleRows(a, b)
        | Op::ScaleCols(a, b) => vec![*a, *b],
        Op::ConcatCols(v) | Op::StackRows(v) => v.clone(),
        Op::Scale(a, _)
        | Op::SliceRows(a, _)
        | Op::GatherRows(a, _)
        | Op::Transpose(a)
        | Op::RowMean(a)
        | Op::RowSum(a)
        | Op::Sum(a)
        | Op::Softmax(a)
        | Op::LogSoftmax(a)
        | Op::LeakyRelu(a, _)
        | Op::Sigmoid(a)
        | Op::Dropout(a, _)
        | Op::Bce(a, _)
        | Op::Nll(a, _) => vec![*a],
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = seed::rng(seed);
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
    }

    fn positive(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = seed::rng(seed);
        Tensor::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(0.05..0.95)).collect(),
        )
        .unwrap()
    }

    /// Weighted sum with fixed random coefficients, so every output entry
    /// gets a distinct upstream gradient.
    fn probe(t: &mut Tape, v: Var, seed: u64) -> Result<Var> {
        let (r, c) = t.shape(v);
        let w = t.constant(random(r, c, seed ^ 0xabc));
        let prod = t.mul(v, w)?;
        t.sum(prod)
    }

    const TOL: f64 = 1e-6;

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(0.0));
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.value(y).item(), 0.5);
        t.backward(y).unwrap();
        assert!((t.grad(x).unwrap().item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_constant_is_uniform() {
        let mut t = Tape::new();
        let x = t.param(Tensor::filled(1, 5, 3.7));
        let y = t.softmax(x).unwrap();
        assert!(t.value(y).data().iter().all(|p| (p - 0.2).abs() < 1e-15));
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        assert!(t.grad(x).unwrap().data().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn matmul_matches_finite_differences() {
        let err = grad_check(&[random(3, 4, 1), random(4, 2, 2)], |t, p| {
            let y = t.matmul(p[0], p[1])?;
            probe(t, y, 3)
        })
        .unwrap();
        assert!(err < TOL, "{err}");
    }

    #[test]
    fn elementwise_primitives_match_finite_differences() {
        type Op = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
        let cases: Vec<(&str, Op)> = vec![
            ("add", Box::new(|t: &mut Tape, p: &[Var]| t.add(p[0], p[1]))),
            ("sub", Box::new(|t: &mut Tape, p: &[Var]| t.sub(p[0], p[1]))),
            ("mul", Box::new(|t: &mut Tape, p: &[Var]| t.mul(p[0], p[1]))),
            ("scale", Box::new(|t: &mut Tape, p: &[Var]| t.scale(p[0], -2.5))),
            (
                "leaky_relu",
                Box::new(|t: &mut Tape, p: &[Var]| t.leaky_relu(p[0], 0.2)),
            ),
            ("sigmoid", Box::new(|t: &mut Tape, p: &[Var]| t.sigmoid(p[0]))),
            ("softmax", Box::new(|t: &mut Tape, p: &[Var]| t.softmax(p[0]))),
            ("log_softmax", Box::new(|t: &mut Tape, p: &[Var]| t.log_softmax(p[0]))),
            ("transpose", Box::new(|t: &mut Tape, p: &[Var]| t.transpose(p[0]))),
            ("row_mean", Box::new(|t: &mut Tape, p: &[Var]| t.row_mean(p[0]))),
            ("row_sum", Box::new(|t: &mut Tape, p: &[Var]| t.row_sum(p[0]))),
            (
                "concat_cols",
                Box::new(|t: &mut Tape, p: &[Var]| t.concat_cols(&[p[0], p[1], p[0]])),
            ),
            (
                "stack_rows",
                Box::new(|t: &mut Tape, p: &[Var]| t.stack_rows(&[p[1], p[0]])),
            ),
            ("select_row", Box::new(|t: &mut Tape, p: &[Var]| t.select_row(p[0], 2))),
            (
                "gather_rows",
                Box::new(|t: &mut Tape, p: &[Var]| t.gather_rows(p[0], &[1, 1, 0, 2])),
            ),
            (
                "slice_rows",
                Box::new(|t: &mut Tape, p: &[Var]| t.slice_rows(p[1], 1, 2)),
            ),
            (
                "dropout",
                Box::new(|t: &mut Tape, p: &[Var]| t.dropout(p[0], 0.4, true, 9)),
            ),
        ];
        for (seed, (name, f)) in cases.into_iter().enumerate() {
            let seed = seed as u64 * 10;
            // Nudge away from the leaky_relu kink.
            let mut a = random(3, 4, seed + 1);
            a.data_mut()
                .iter_mut()
                .filter(|x| x.abs() < 1e-3)
                .for_each(|x| *x = 0.1);
            let b = random(3, 4, seed + 2);
            let err = grad_check(&[a, b], |t, p| {
                let y = f(t, p)?;
                probe(t, y, seed + 3)
            })
            .unwrap();
            assert!(err < TOL, "{name}: {err}");
        }
    }

    #[test]
    fn scaling_primitives_match_finite_differences() {
        let err = grad_check(&[random(3, 4, 1), random(3, 1, 2), random(4, 1, 3)], |t, p| {
            let a = t.scale_rows(p[0], p[1])?;
            let b = t.scale_cols(a, p[2])?;
            probe(t, b, 4)
        })
        .unwrap();
        assert!(err < TOL, "{err}");
    }

    #[test]
    fn losses_match_finite_differences() {
        let labels = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let err = grad_check(&[positive(2, 3, 5)], |t, p| t.bce(p[0], &labels)).unwrap();
        assert!(err < TOL, "bce {err}");
        let err = grad_check(&[random(4, 3, 6)], |t, p| {
            let lp = t.log_softmax(p[0])?;
            t.nll(lp, &[0, 2, 1, 2])
        })
        .unwrap();
        assert!(err < TOL, "nll {err}");
    }

    #[test]
    fn loss_values() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::filled(1, 4, 0.5));
        let l = t.bce(p, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((t.value(l).item() - 2f64.ln()).abs() < 1e-12);

        let p = t.constant(Tensor::row(&[1.0, 0.0, 1.0]));
        let l = t.bce(p, &[1.0, 0.0, 1.0]).unwrap();
        assert!(t.value(l).item() <= 1e-11);

        let z = t.constant(Tensor::zeros(3, 5));
        let lp = t.log_softmax(z).unwrap();
        let l = t.nll(lp, &[0, 4, 2]).unwrap();
        assert!((t.value(l).item() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut t = Tape::new();
        let x = t.param(random(4, 5, 1));
        assert_eq!(t.dropout(x, 0.5, false, 3).unwrap(), x);
        assert_eq!(t.dropout(x, 0.0, true, 3).unwrap(), x);
        assert!(t.dropout(x, 1.0, true, 3).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::filled(200, 200, 1.0));
        let y = t.dropout(x, 0.5, true, 17).unwrap();
        let mean = t.value(y).data().iter().sum::<f64>() / 40000.0;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!(t.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn reuse_accumulates() {
        let mut t = Tape::new();
        let x = t.param(Tensor::row(&[1.0, 2.0]));
        let y = t.add(x, x).unwrap();
        let z = t.mul(y, x).unwrap();
        let s = t.sum(z).unwrap();
        t.backward(s).unwrap();
        // s = 2 Σ x², ds/dx = 4x
        assert_eq!(t.grad(x).unwrap().data(), &[4.0, 8.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::row(&[1.0, 2.0]));
        let x = t.param(Tensor::row(&[3.0, 4.0]));
        let y = t.mul(c, x).unwrap();
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        assert!(t.grad(c).is_none());
        assert_eq!(t.grad(x).unwrap().data(), &[1.0, 2.0]);
        assert!(!t.requires_grad(c) && t.requires_grad(y));
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let mut t = Tape::new();
        let a = t.param(Tensor::zeros(2, 3));
        let b = t.param(Tensor::zeros(2, 2));
        assert!(matches!(t.add(a, b), Err(Error::Shape { .. })));
        assert!(matches!(t.matmul(a, b), Err(Error::Shape { .. })));
        assert!(t.gather_rows(a, &[2]).is_err());
        let big = t.param(Tensor::filled(1, 1, 1e300));
        assert!(matches!(t.mul(big, big), Err(Error::NonFinite("mul"))));
        let s = t.sum(a).unwrap();
        assert!(t.backward(a).is_err());
        assert!(t.backward(s).is_ok());
    }

    #[test]
    fn clear_resets() {
        let mut t = Tape::new();
        t.param(Tensor::zeros(1, 1));
        t.clear();
        assert!(t.is_empty());
    }
}
