//! Reverse-mode automatic differentiation over 2-D f64 tensors.
//!
//! A [`Tape`] is built fresh for every forward pass. Leaves created with
//! [`Tape::param`] receive gradients from [`Tape::backward`]; constants do not.

mod check;
mod tensor;

use std::sync::Arc;

pub use check::{grad_check, GradCheckReport};
pub use tensor::Tensor;
pub(crate) use tensor::gemm;

use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Arc<[usize]>, usize),
    LeakyRelu(Var, f64),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    L2Rows(Var),
    Aggregate {
        alpha: Var,
        h: Var,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros if nothing downstream depended on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite output from {name}")));
        }
        let needs_grad = self.inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MulCol(a, b) => {
                vec![*a, *b]
            }
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.clone(),
            Op::Aggregate { alpha, h, .. } => vec![*alpha, *h],
            Op::Scale(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::SegmentSoftmax(a, _, _)
            | Op::LeakyRelu(a, _)
            | Op::Exp(a)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::L2Rows(a) => vec![*a],
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(shape_err("matmul", x, y));
        }
        let (m, k, n) = (x.rows(), x.cols(), y.cols());
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, x.data(), false, y.data(), false, 0.0, out.data_mut());
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(name, x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::from_vec(x.rows(), x.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |p, q| p + q)?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |p, q| p - q)?;
        self.push(out, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |p, q| p * q)?;
        self.push(out, Op::Mul(a, b), "mul")
    }

    /// Scales each row of `a` (n×d) by the matching entry of the column `b` (n×1).
    pub fn mul_col(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if y.cols() != 1 || x.rows() != y.rows() {
            return Err(shape_err("mul_col", x, y));
        }
        let out = Tensor::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c) * y.get(r, 0));
        self.push(out, Op::MulCol(a, b), "mul_col")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s), "scale")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Invalid("concat_cols of nothing".into()));
        };
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Invalid("concat_rows of nothing".into()));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(shape_err("concat_rows", self.value(first), self.value(p)));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(data.len() / cols.max(1), cols, data)?;
        self.push(out, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// `out[k] = a[idx[k]]`.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: x.shape(),
                rhs: (bad, 0),
            });
        }
        let mut out = Tensor::zeros(idx.len(), x.cols());
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(x.row(i));
        }
        self.push(out, Op::GatherRows(a, idx), "gather_rows")
    }

    /// `out[idx[k]] += a[k]` into `n` zero rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Arc<[usize]>, n: usize) -> Result<Var> {
        let x = self.value(a);
        if idx.len() != x.rows() || idx.iter().any(|&i| i >= n) {
            return Err(Error::Shape {
                op: "scatter_add_rows",
                lhs: x.shape(),
                rhs: (idx.len(), n),
            });
        }
        let mut out = Tensor::zeros(n, x.cols());
        for (k, &i) in idx.iter().enumerate() {
            for (o, v) in out.row_mut(i).iter_mut().zip(x.row(k)) {
                *o += v;
            }
        }
        self.push(out, Op::ScatterAddRows(a, idx), "scatter_add_rows")
    }

    /// Softmax over groups of rows sharing a segment id, independently per column.
    /// Segment ids need not be sorted.
    pub fn segment_softmax(&mut self, a: Var, seg: Arc<[usize]>, n_seg: usize) -> Result<Var> {
        let x = self.value(a);
        if seg.len() != x.rows() || seg.iter().any(|&s| s >= n_seg) {
            return Err(Error::Shape {
                op: "segment_softmax",
                lhs: x.shape(),
                rhs: (seg.len(), n_seg),
            });
        }
        let cols = x.cols();
        let mut max = vec![f64::NEG_INFINITY; n_seg * cols];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let m = &mut max[s * cols + c];
                *m = m.max(x.get(r, c));
            }
        }
        let mut out = Tensor::zeros(x.rows(), cols);
        let mut denom = vec![0.0; n_seg * cols];
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let e = (x.get(r, c) - max[s * cols + c]).exp();
                out.set(r, c, e);
                denom[s * cols + c] += e;
            }
        }
        for (r, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let v = out.get(r, c) / denom[s * cols + c];
                out.set(r, c, v);
            }
        }
        self.push(out, Op::SegmentSoftmax(a, seg, n_seg), "segment_softmax")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(a, slope), "leaky_relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a), "exp")
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::sqrt);
        self.push(out, Op::Sqrt(a), "sqrt")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v * v);
        self.push(out, Op::Square(a), "square")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(out, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Invalid("mean of an empty tensor".into()));
        }
        let out = Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64);
        self.push(out, Op::Mean(a), "mean")
    }

    /// Euclidean norm of each row, as an n×1 column.
    pub fn l2_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let out = Tensor::column((0..x.rows()).map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect());
        self.push(out, Op::L2Rows(a), "l2_rows")
    }

    /// Attention-weighted message sum: `out[dst[e]] += alpha[e] * h[src[e]]`,
    /// with `out` having as many rows as `h`. Equivalent to
    /// `scatter_add_rows(mul_col(gather_rows(h, src), alpha), dst)` without
    /// materializing the per-edge messages.
    pub fn aggregate(&mut self, alpha: Var, h: Var, src: Arc<[usize]>, dst: Arc<[usize]>) -> Result<Var> {
        let (w, x) = (self.value(alpha), self.value(h));
        let n = x.rows();
        if w.cols() != 1 || w.rows() != src.len() || src.len() != dst.len() || src.iter().chain(dst.iter()).any(|&i| i >= n) {
            return Err(shape_err("aggregate", w, x));
        }
        let mut out = Tensor::zeros(n, x.cols());
        for e in 0..src.len() {
            let a = w.get(e, 0);
            let (s, d) = (src[e], dst[e]);
            let hs = x.row(s);
            for (o, v) in out.row_mut(d).iter_mut().zip(hs) {
                *o += a * v;
            }
        }
        self.push(out, Op::Aggregate { alpha, h, src, dst }, "aggregate")
    }

    /// Reverse sweep from a 1×1 output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward (output must be scalar)",
                lhs: out.shape(),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(e) => e.add_assign(&t),
            slot => *slot = Some(t),
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), w.cols());
                if needs(*a) {
                    let mut ga = Tensor::zeros(m, k);
                    gemm(m, n, k, g.data(), false, w.data(), true, 0.0, ga.data_mut());
                    acc(*a, ga);
                }
                if needs(*b) {
                    let mut gb = Tensor::zeros(k, n);
                    gemm(k, m, n, x.data(), true, g.data(), false, 0.0, gb.data_mut());
                    acc(*b, gb);
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone());
                }
                if needs(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone());
                }
                if needs(*b) {
                    acc(*b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    let d = g.data().iter().zip(w.data()).map(|(p, q)| p * q).collect();
                    acc(*a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
                }
                if needs(*b) {
                    let d = g.data().iter().zip(x.data()).map(|(p, q)| p * q).collect();
                    acc(*b, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
                }
            }
            Op::MulCol(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    acc(*a, Tensor::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * w.get(r, 0)));
                }
                if needs(*b) {
                    let col = (0..g.rows())
                        .map(|r| g.row(r).iter().zip(x.row(r)).map(|(p, q)| p * q).sum())
                        .collect();
                    acc(*b, Tensor::column(col));
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|v| v * s)),
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if needs(p) {
                        acc(p, Tensor::from_fn(g.rows(), w, |r, c| g.get(r, off + c)));
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if needs(p) {
                        acc(p, Tensor::from_fn(h, g.cols(), |r, c| g.get(off + r, c)));
                    }
                    off += h;
                }
            }
            Op::GatherRows(a, idx) => {
                let mut ga = Tensor::zeros(self.value(*a).rows(), g.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                acc(*a, ga);
            }
            Op::ScatterAddRows(a, idx) => {
                let mut ga = Tensor::zeros(idx.len(), g.cols());
                for (k, &i) in idx.iter().enumerate() {
                    ga.row_mut(k).copy_from_slice(g.row(i));
                }
                acc(*a, ga);
            }
            Op::SegmentSoftmax(a, seg, n_seg) => {
                let cols = y.cols();
                let mut dot = vec![0.0; n_seg * cols];
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        dot[s * cols + c] += g.get(r, c) * y.get(r, c);
                    }
                }
                let ga = Tensor::from_fn(y.rows(), cols, |r, c| {
                    y.get(r, c) * (g.get(r, c) - dot[seg[r] * cols + c])
                });
                acc(*a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&p, &q)| if q > 0.0 { p } else { slope * p })
                    .collect();
                acc(*a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::Exp(a) => {
                let d = g.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
                acc(*a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::Sqrt(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&p, &q)| if q > 0.0 { p / (2.0 * q) } else { 0.0 })
                    .collect();
                acc(*a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::Square(a) => {
                let x = self.value(*a);
                let d = g.data().iter().zip(x.data()).map(|(p, q)| 2.0 * p * q).collect();
                acc(*a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, Tensor::from_vec(r, c, vec![g.item(); r * c]).unwrap());
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let v = g.item() / (r * c) as f64;
                acc(*a, Tensor::from_vec(r, c, vec![v; r * c]).unwrap());
            }
            Op::L2Rows(a) => {
                let x = self.value(*a);
                let ga = Tensor::from_fn(x.rows(), x.cols(), |r, c| {
                    let n = y.get(r, 0);
                    if n > 0.0 {
                        g.get(r, 0) * x.get(r, c) / n
                    } else {
                        0.0
                    }
                });
                acc(*a, ga);
            }
            Op::Aggregate { alpha, h, src, dst } => {
                let (w, x) = (self.value(*alpha), self.value(*h));
                if needs(*alpha) {
                    let col = src
                        .iter()
                        .zip(dst.iter())
                        .map(|(&s, &d)| g.row(d).iter().zip(x.row(s)).map(|(p, q)| p * q).sum())
                        .collect();
                    acc(*alpha, Tensor::column(col));
                }
                if needs(*h) {
                    let mut gh = Tensor::zeros(x.rows(), x.cols());
                    for e in 0..src.len() {
                        let a = w.get(e, 0);
                        let gd = g.row(dst[e]);
                        for (o, v) in gh.row_mut(src[e]).iter_mut().zip(gd) {
                            *o += a * v;
                        }
                    }
                    acc(*h, gh);
                }
            }
        }
    }
}
