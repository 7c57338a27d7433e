//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Tape`] records every operation of a forward pass. Parameter leaves
//! borrow their values from a [`ParameterSet`]; [`Tape::backward`] replays the
//! record in reverse and returns gradients keyed by [`ParamId`]. Parameters in
//! frozen groups are treated as constants.
//!
//! Shape mismatches inside the tape are programming errors and panic; public
//! model entry points validate shapes before recording.

use super::params::{Gradients, ParamGroup, ParamId, ParameterSet};
use super::tensor::{dot, matmul_into, sigmoid, softmax_in_place, Tensor};

const LN_EPS: f64 = 1e-5;
const BCE_CLAMP: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        rstd: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Cosine(Var, Var),
    SoftmaxXent {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    Bce {
        p: Var,
        targets: Vec<f64>,
    },
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParameterSet,
    frozen: Vec<ParamGroup>,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParameterSet) -> Self {
        Self {
            params,
            frozen: Vec::new(),
            nodes: Vec::with_capacity(256),
        }
    }

    /// A tape on which parameters of the given groups never receive gradients.
    pub fn with_frozen(params: &'p ParameterSet, frozen: &[ParamGroup]) -> Self {
        let mut t = Self::new(params);
        t.frozen = frozen.to_vec();
        t
    }

    pub fn params(&self) -> &'p ParameterSet {
        self.params
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
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(
            value.is_finite() || matches!(op, Op::Leaf),
            "non-finite value from {op:?}"
        );
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    // ---- leaves -------------------------------------------------------

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let trainable = !self.frozen.contains(&self.params.get(id).group);
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    // ---- linear algebra -----------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.rows(), "matmul {:?} @ {:?}", av.shape(), bv.shape());
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        matmul_into(av, bv, &mut out);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a @ b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_nt(self.value(b)).expect("matmul_nt shape");
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMulNT(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(&[a]);
        self.push(out, Op::Transpose(a), ng)
    }

    // ---- elementwise --------------------------------------------------

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data).unwrap()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x + y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x - y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x * y);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// `a[m x n] + b[1 x n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(
            bv.rows() == 1 && bv.cols() == av.cols(),
            "add_row {:?} + {:?}",
            av.shape(),
            bv.shape()
        );
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        let ng = self.ng(&[a, b]);
        self.push(out, Op::AddRow(a, b), ng)
    }

    /// `a[m x n] * w[m x 1]`, scaling each row of `a`.
    pub fn mul_col(&mut self, a: Var, w: Var) -> Var {
        let (av, wv) = (self.value(a), self.value(w));
        assert!(
            wv.cols() == 1 && wv.rows() == av.rows(),
            "mul_col {:?} * {:?}",
            av.shape(),
            wv.shape()
        );
        let mut out = av.clone();
        for r in 0..out.rows() {
            let s = wv.data()[r];
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        let ng = self.ng(&[a, w]);
        self.push(out, Op::MulCol(a, w), ng)
    }

    /// `scale * a + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        let ng = self.ng(&[a]);
        self.push(out, Op::Affine(a, scale), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(&[a]);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(&[a]);
        self.push(out, Op::Tanh(a), ng)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        let ng = self.ng(&[a]);
        self.push(out, Op::Gelu(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(&[a]);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let ng = self.ng(&[a]);
        self.push(out, Op::Exp(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let ng = self.ng(&[a]);
        self.push(out, Op::Log(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    /// Row-wise layer normalization with gain `gamma[1 x n]` and bias `beta[1 x n]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let n = xv.cols();
        assert!(g.shape() == [1, n] && b.shape() == [1, n], "layer_norm parameter shape");
        let mut xhat = Tensor::zeros(xv.rows(), n);
        let mut out = Tensor::zeros(xv.rows(), n);
        let mut rstd = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(rs);
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data()[c] + b.data()[c]);
            }
        }
        let ng = self.ng(&[x, gamma, beta]);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        )
    }

    // ---- structural ---------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
            }
            off += pv.cols();
        }
        let ng = self.ng(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let out = Tensor::from_vec(rows, cols, data).unwrap();
        let ng = self.ng(parts);
        self.push(out, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(av.rows(), len);
        for r in 0..av.rows() {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..start + len]);
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.rows(), "slice_rows out of range");
        let c = av.cols();
        let out = Tensor::from_vec(len, c, av.data()[start * c..(start + len) * c].to_vec()).unwrap();
        let ng = self.ng(&[a]);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let mut out = Tensor::zeros(idx.len(), av.cols());
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(av.row(i));
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::GatherRows(a, idx.to_vec()), ng)
    }

    /// `out[idx[k]] += a[k]` into a zero tensor with `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), idx.len(), "scatter_add_rows index length");
        let mut out = Tensor::zeros(rows, av.cols());
        for (k, &i) in idx.iter().enumerate() {
            for (o, x) in out.row_mut(i).iter_mut().zip(av.row(k)) {
                *o += x;
            }
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::ScatterAddRows(a, idx.to_vec()), ng)
    }

    // ---- reductions and losses ---------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(&[a]);
        self.push(out, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::scalar(av.sum() / av.len() as f64);
        let ng = self.ng(&[a]);
        self.push(out, Op::Mean(a), ng)
    }

    /// `[m x n] -> [m x 1]` row sums.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::col_vector((0..av.rows()).map(|r| av.row(r).iter().sum()).collect());
        let ng = self.ng(&[a]);
        self.push(out, Op::SumCols(a), ng)
    }

    /// Cosine similarity of two `1 x n` vectors.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "cosine shape mismatch");
        let (c, _, _) = cosine_parts(av.data(), bv.data());
        let ng = self.ng(&[a, b]);
        self.push(Tensor::scalar(c), Op::Cosine(a, b), ng)
    }

    /// `-log softmax(logits)[target]` over all elements of `logits`.
    pub fn softmax_xent(&mut self, logits: Var, target: usize) -> Var {
        let mut probs = self.value(logits).data().to_vec();
        assert!(target < probs.len(), "softmax_xent target out of range");
        softmax_in_place(&mut probs);
        let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
        let ng = self.ng(&[logits]);
        self.push(Tensor::scalar(loss), Op::SoftmaxXent { logits, target, probs }, ng)
    }

    /// Mean binary cross-entropy between probabilities `p` and `targets`.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.len(), targets.len(), "bce target length");
        let n = targets.len() as f64;
        let loss = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let ng = self.ng(&[p]);
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            ng,
        )
    }

    // ---- backward -----------------------------------------------------

    /// Back-propagates from the scalar `loss` and collects parameter gradients.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward requires a scalar loss");
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let y = node.value.as_ref();
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    if self.needs_grad(*a) {
                        let da = g.matmul_nt(self.value(*b)).unwrap();
                        acc(&mut grads, *a, da);
                    }
                    if self.needs_grad(*b) {
                        let db = self.value(*a).matmul_tn(&g).unwrap();
                        acc(&mut grads, *b, db);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if self.needs_grad(*a) {
                        let da = g.matmul(self.value(*b)).unwrap();
                        acc(&mut grads, *a, da);
                    }
                    if self.needs_grad(*b) {
                        let db = g.matmul_tn(self.value(*a)).unwrap();
                        acc(&mut grads, *b, db);
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    if self.needs_grad(*b) {
                        acc(&mut grads, *b, g.clone());
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if self.needs_grad(*b) {
                        acc(&mut grads, *b, g.map(|v| -v));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if self.needs_grad(*a) {
                        let da = hadamard(&g, self.value(*b));
                        acc(&mut grads, *a, da);
                    }
                    if self.needs_grad(*b) {
                        let db = hadamard(&g, self.value(*a));
                        acc(&mut grads, *b, db);
                    }
                }
                Op::AddRow(a, b) => {
                    if self.needs_grad(*b) {
                        let mut db = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *d += x;
                            }
                        }
                        acc(&mut grads, *b, db);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::MulCol(a, w) => {
                    let wv = self.value(*w);
                    if self.needs_grad(*w) {
                        let av = self.value(*a);
                        let dw = Tensor::col_vector((0..g.rows()).map(|r| dot(g.row(r), av.row(r))).collect());
                        acc(&mut grads, *w, dw);
                    }
                    if self.needs_grad(*a) {
                        let mut da = g;
                        for r in 0..da.rows() {
                            let s = wv.data()[r];
                            da.row_mut(r).iter_mut().for_each(|v| *v *= s);
                        }
                        acc(&mut grads, *a, da);
                    }
                }
                Op::Affine(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, g.map(|v| v * s));
                }
                Op::Sigmoid(a) => {
                    let da = zip_map(&g, y.unwrap(), |d, y| d * y * (1.0 - y));
                    acc(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let da = zip_map(&g, y.unwrap(), |d, y| d * (1.0 - y * y));
                    acc(&mut grads, *a, da);
                }
                Op::Gelu(a) => {
                    let da = zip_map(&g, self.value(*a), |d, x| {
                        let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        d * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    });
                    acc(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let da = zip_map(&g, self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 });
                    acc(&mut grads, *a, da);
                }
                Op::Exp(a) => {
                    let da = zip_map(&g, y.unwrap(), |d, y| d * y);
                    acc(&mut grads, *a, da);
                }
                Op::Log(a) => {
                    let da = zip_map(&g, self.value(*a), |d, x| d / x);
                    acc(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let yv = y.unwrap();
                    let mut da = g;
                    for r in 0..da.rows() {
                        let yr = yv.row(r);
                        let s = dot(da.row(r), yr);
                        for (d, &p) in da.row_mut(r).iter_mut().zip(yr) {
                            *d = p * (*d - s);
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let n = g.cols();
                    if self.needs_grad(*gamma) || self.needs_grad(*beta) {
                        let mut dg = Tensor::zeros(1, n);
                        let mut db = Tensor::zeros(1, n);
                        for r in 0..g.rows() {
                            for c in 0..n {
                                dg.data_mut()[c] += g.get(r, c) * xhat.get(r, c);
                                db.data_mut()[c] += g.get(r, c);
                            }
                        }
                        if self.needs_grad(*gamma) {
                            acc(&mut grads, *gamma, dg);
                        }
                        if self.needs_grad(*beta) {
                            acc(&mut grads, *beta, db);
                        }
                    }
                    if self.needs_grad(*x) {
                        let gv = self.value(*gamma);
                        let mut dx = Tensor::zeros(g.rows(), n);
                        for r in 0..g.rows() {
                            let mut mean_d = 0.0;
                            let mut mean_dx = 0.0;
                            for c in 0..n {
                                let dh = g.get(r, c) * gv.data()[c];
                                mean_d += dh;
                                mean_dx += dh * xhat.get(r, c);
                            }
                            mean_d /= n as f64;
                            mean_dx /= n as f64;
                            for c in 0..n {
                                let dh = g.get(r, c) * gv.data()[c];
                                dx.set(r, c, rstd[r] * (dh - mean_d - xhat.get(r, c) * mean_dx));
                            }
                        }
                        acc(&mut grads, *x, dx);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        if self.needs_grad(p) {
                            let mut dp = Tensor::zeros(g.rows(), c);
                            for r in 0..g.rows() {
                                dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                            }
                            acc(&mut grads, p, dp);
                        }
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let r = self.value(p).rows();
                        if self.needs_grad(p) {
                            let c = g.cols();
                            let dp = Tensor::from_vec(r, c, g.data()[off * c..(off + r) * c].to_vec()).unwrap();
                            acc(&mut grads, p, dp);
                        }
                        off += r;
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        da.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::SliceRows(a, start) => {
                    let av = self.value(*a);
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let c = av.cols();
                    da.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    acc(&mut grads, *a, da);
                }
                Op::GatherRows(a, idx) => {
                    let av = self.value(*a);
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for (d, x) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                            *d += x;
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::ScatterAddRows(a, idx) => {
                    let mut da = Tensor::zeros(idx.len(), g.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        da.row_mut(k).copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, Tensor::filled(av.rows(), av.cols(), g.item()));
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    let v = g.item() / av.len() as f64;
                    acc(&mut grads, *a, Tensor::filled(av.rows(), av.cols(), v));
                }
                Op::SumCols(a) => {
                    let av = self.value(*a);
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let v = g.data()[r];
                        da.row_mut(r).iter_mut().for_each(|d| *d = v);
                    }
                    acc(&mut grads, *a, da);
                }
                Op::Cosine(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (c, na, nb) = cosine_parts(av.data(), bv.data());
                    let d = g.item();
                    if self.needs_grad(*a) {
                        let da = zip_map(bv, av, |bi, ai| d * (bi / (na * nb) - c * ai / (na * na)));
                        acc(&mut grads, *a, da);
                    }
                    if self.needs_grad(*b) {
                        let db = zip_map(av, bv, |ai, bi| d * (ai / (na * nb) - c * bi / (nb * nb)));
                        acc(&mut grads, *b, db);
                    }
                }
                Op::SoftmaxXent { logits, target, probs } => {
                    let lv = self.value(*logits);
                    let d = g.item();
                    let mut dl = probs.clone();
                    dl[*target] -= 1.0;
                    dl.iter_mut().for_each(|v| *v *= d);
                    acc(&mut grads, *logits, Tensor::from_vec(lv.rows(), lv.cols(), dl).unwrap());
                }
                Op::Bce { p, targets } => {
                    let pv = self.value(*p);
                    let d = g.item() / targets.len() as f64;
                    let dp: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&p, &y)| {
                            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                            d * (-y / p + (1.0 - y) / (1.0 - p))
                        })
                        .collect();
                    acc(&mut grads, *p, Tensor::from_vec(pv.rows(), pv.cols(), dp).unwrap());
                }
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).unwrap()
}

fn cosine_parts(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let na = dot(a, a).sqrt().max(1e-12);
    let nb = dot(b, b).sqrt().max(1e-12);
    (dot(a, b) / (na * nb), na, nb)
}
