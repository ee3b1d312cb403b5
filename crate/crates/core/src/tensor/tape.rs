//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its forward value and enough
//! provenance to run the chain rule. Node indices are a topological order,
//! so `backward` walks the tape once from the loss down to index 0.
//!
//! Gradients of leaves accumulate across `backward` calls until
//! [`Tape::zero_grad`] is called, mirroring the usual framework contract.

use serde::{Deserialize, Serialize};

use super::{gemm, MatRef, RngStream, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether stochastic layers (dropout, Gumbel noise) are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    SoftmaxRows(Var),
    SegmentSoftmax {
        x: Var,
        ids: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    SegmentSum {
        x: Var,
        ids: Vec<usize>,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    BceWithLogits {
        logits: Var,
        labels: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `max(x,0) - x*y + ln(1 + exp(-|x|))`.
pub(crate) fn bce_with_logits_term(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

fn accumulate(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(g) => g.add_assign(&t),
        None => *slot = Some(t),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::Dimension {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push("add", value, Op::Add(a, b), rg)
    }

    /// `a (m×n) + b (1×n)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sb != [1, sa[1]] {
            return Err(TensorError::Dimension {
                op: "add_row",
                lhs: sa,
                rhs: sb,
            });
        }
        let mut value = self.value(a).clone();
        let row = self.value(b).data().to_vec();
        for r in 0..sa[0] {
            for (x, y) in value.row_mut(r).iter_mut().zip(&row) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("add_row", value, Op::AddRow(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::from_vec(va.rows(), va.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", value, Op::Mul(a, b), rg)
    }

    /// `a (m×n) ⊙ b (1×n)` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sb != [1, sa[1]] {
            return Err(TensorError::Dimension {
                op: "mul_row",
                lhs: sa,
                rhs: sb,
            });
        }
        let mut value = self.value(a).clone();
        let row = self.value(b).data().to_vec();
        for r in 0..sa[0] {
            for (x, y) in value.row_mut(r).iter_mut().zip(&row) {
                *x *= y;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("mul_row", value, Op::MulRow(a, b), rg)
    }

    /// `a (m×n) ⊙ b (m×1)` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sb != [sa[0], 1] {
            return Err(TensorError::Dimension {
                op: "mul_col",
                lhs: sa,
                rhs: sb,
            });
        }
        let mut value = self.value(a).clone();
        let col = self.value(b).data().to_vec();
        for (r, s) in col.iter().enumerate() {
            value.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("mul_col", value, Op::MulCol(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, TensorError> {
        let value = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push("scale", value, Op::Scale(a, c), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = self.value(a).map(stable_sigmoid);
        let rg = self.rg(a);
        self.push("sigmoid", value, Op::Sigmoid(a), rg)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(TensorError::Contract("softmax over an empty row".into()));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(a);
        self.push("softmax_rows", value, Op::SoftmaxRows(a), rg)
    }

    /// Softmax of a column vector within groups given by `ids`
    /// (entries sharing an id are normalized together).
    pub fn segment_softmax(
        &mut self,
        a: Var,
        ids: &[usize],
        num_segments: usize,
    ) -> Result<Var, TensorError> {
        let x = self.value(a);
        if x.cols() != 1 || x.rows() != ids.len() {
            return Err(TensorError::Dimension {
                op: "segment_softmax",
                lhs: x.shape(),
                rhs: [ids.len(), 1],
            });
        }
        check_ids("segment_softmax", ids, num_segments)?;
        let mut max = vec![f64::NEG_INFINITY; num_segments];
        for (v, &s) in x.data().iter().zip(ids) {
            max[s] = max[s].max(*v);
        }
        let mut data: Vec<f64> = x
            .data()
            .iter()
            .zip(ids)
            .map(|(v, &s)| (v - max[s]).exp())
            .collect();
        let mut total = vec![0.0; num_segments];
        for (e, &s) in data.iter().zip(ids) {
            total[s] += e;
        }
        for (e, &s) in data.iter_mut().zip(ids) {
            *e /= total[s];
        }
        let value = Tensor::column_vector(data);
        let rg = self.rg(a);
        self.push(
            "segment_softmax",
            value,
            Op::SegmentSoftmax {
                x: a,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// Per-row layer normalization with biased variance, then
    /// `xhat ⊙ gamma + beta`. `gamma` and `beta` are `1 × n`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let [m, n] = xv.shape();
        for p in [gamma, beta] {
            if self.value(p).shape() != [1, n] {
                return Err(TensorError::Dimension {
                    op: "layer_norm",
                    lhs: [m, n],
                    rhs: self.value(p).shape(),
                });
            }
        }
        if n == 0 {
            return Err(TensorError::Contract("layer_norm over an empty row".into()));
        }
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(m);
        for r in 0..m {
            let row = xhat.row_mut(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut value = xhat.clone();
        for r in 0..m {
            for ((v, gg), bb) in value.row_mut(r).iter_mut().zip(g).zip(b) {
                *v = *v * gg + bb;
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Row `s` of the output is the sum of input rows whose id is `s`,
    /// accumulated in increasing row order. Empty segments give zero rows.
    pub fn segment_sum(
        &mut self,
        x: Var,
        ids: &[usize],
        num_segments: usize,
    ) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.rows() != ids.len() {
            return Err(TensorError::Dimension {
                op: "segment_sum",
                lhs: xv.shape(),
                rhs: [ids.len(), 1],
            });
        }
        check_ids("segment_sum", ids, num_segments)?;
        let mut value = Tensor::zeros(num_segments, xv.cols());
        for (r, &s) in ids.iter().enumerate() {
            let src = xv.row(r);
            for (o, v) in value.row_mut(s).iter_mut().zip(src) {
                *o += v;
            }
        }
        let rg = self.rg(x);
        self.push(
            "segment_sum",
            value,
            Op::SegmentSum {
                x,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// Output row `e` is input row `idx[e]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let xv = self.value(x);
        check_ids("gather_rows", idx, xv.rows())?;
        let mut data = Vec::with_capacity(idx.len() * xv.cols());
        for &i in idx {
            data.extend_from_slice(xv.row(i));
        }
        let value = Tensor::from_vec(idx.len(), xv.cols(), data)?;
        let rg = self.rg(x);
        self.push(
            "gather_rows",
            value,
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
            rg,
        )
    }

    /// `m × n → m × 1` row sums.
    pub fn row_sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect();
        let value = Tensor::column_vector(data);
        let rg = self.rg(x);
        self.push("row_sum", value, Op::RowSum(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push("sum", value, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(TensorError::Contract("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(xv.sum() / xv.len() as f64);
        let rg = self.rg(x);
        self.push("mean", value, Op::Mean(x), rg)
    }

    /// Inverted dropout: eval mode and `rate == 0` return `x` unchanged;
    /// train mode zeroes each element with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`.
    pub fn dropout(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut RngStream,
        mode: Mode,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let [m, n] = self.value(x).shape();
        let keep = 1.0 / (1.0 - rate);
        let data = (0..m * n)
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        let mask = self.constant(Tensor::from_vec(m, n, data)?);
        self.mul(x, mask)
    }

    /// Mean binary cross-entropy on logits in the overflow-free form
    /// `max(x,0) - x*y + ln(1 + exp(-|x|))`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        if lv.len() != labels.len() || labels.is_empty() {
            return Err(TensorError::Dimension {
                op: "bce_with_logits",
                lhs: lv.shape(),
                rhs: [labels.len(), 1],
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(TensorError::Contract(format!("label {bad} is not 0 or 1")));
        }
        let total: f64 = lv
            .data()
            .iter()
            .zip(labels)
            .map(|(&x, &y)| bce_with_logits_term(x, y))
            .sum();
        let value = Tensor::scalar(total / labels.len() as f64);
        let rg = self.rg(logits);
        self.push(
            "bce_with_logits",
            value,
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
            },
            rg,
        )
    }

    /// Run the chain rule from a scalar `loss`, adding into the gradient of
    /// every tracked leaf.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.value(loss).shape() != [1, 1] {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut leaf_grads = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let wants = |v: Var| nodes[v.0].requires_grad;
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => leaf_grads.push((i, g)),
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        let mut da = Tensor::zeros(val(*a).rows(), val(*a).cols());
                        gemm(
                            MatRef::plain(&g),
                            MatRef::transposed(val(*b)),
                            da.data_mut(),
                            false,
                        );
                        accumulate(&mut grads[a.0], da);
                    }
                    if wants(*b) {
                        let mut db = Tensor::zeros(val(*b).rows(), val(*b).cols());
                        gemm(
                            MatRef::transposed(val(*a)),
                            MatRef::plain(&g),
                            db.data_mut(),
                            false,
                        );
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if wants(*b) {
                        accumulate(&mut grads[b.0], g);
                    }
                }
                Op::AddRow(a, b) => {
                    if wants(*b) {
                        accumulate(&mut grads[b.0], column_sums(&g));
                    }
                    if wants(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        accumulate(&mut grads[a.0], hadamard(&g, val(*b)));
                    }
                    if wants(*b) {
                        accumulate(&mut grads[b.0], hadamard(&g, val(*a)));
                    }
                }
                Op::MulRow(a, b) => {
                    let row = val(*b).data();
                    if wants(*a) {
                        let mut da = g.clone();
                        for r in 0..da.rows() {
                            da.row_mut(r).iter_mut().zip(row).for_each(|(x, y)| *x *= y);
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                    if wants(*b) {
                        accumulate(&mut grads[b.0], column_sums(&hadamard(&g, val(*a))));
                    }
                }
                Op::MulCol(a, b) => {
                    let col = val(*b).data();
                    if wants(*a) {
                        let mut da = g.clone();
                        for (r, s) in col.iter().enumerate() {
                            da.row_mut(r).iter_mut().for_each(|x| *x *= s);
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                    if wants(*b) {
                        let av = val(*a);
                        let data = (0..g.rows())
                            .map(|r| g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum())
                            .collect();
                        accumulate(&mut grads[b.0], Tensor::column_vector(data));
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads[a.0], g.map(|x| x * c));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(gg, yy)| gg * yy * (1.0 - yy))
                        .collect();
                    accumulate(&mut grads[a.0], Tensor::from_vec(y.rows(), y.cols(), data)?);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut da = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = p * (q - dot);
                        }
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::SegmentSoftmax { x, ids } => {
                    let y = node.value.data();
                    let num = ids.iter().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; num];
                    for ((p, q), &s) in y.iter().zip(g.data()).zip(ids) {
                        dot[s] += p * q;
                    }
                    let data = y
                        .iter()
                        .zip(g.data())
                        .zip(ids)
                        .map(|((p, q), &s)| p * (q - dot[s]))
                        .collect();
                    accumulate(&mut grads[x.0], Tensor::column_vector(data));
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    if wants(*beta) {
                        accumulate(&mut grads[beta.0], column_sums(&g));
                    }
                    if wants(*gamma) {
                        accumulate(&mut grads[gamma.0], column_sums(&hadamard(&g, xhat)));
                    }
                    if wants(*x) {
                        let gm = val(*gamma).data();
                        let n = xhat.cols() as f64;
                        let mut dx = Tensor::zeros(xhat.rows(), xhat.cols());
                        for (r, &is) in inv_std.iter().enumerate() {
                            let dxhat: Vec<f64> =
                                g.row(r).iter().zip(gm).map(|(a, b)| a * b).collect();
                            let s1: f64 = dxhat.iter().sum();
                            let s2: f64 = dxhat.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                            for ((o, d), h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r))
                            {
                                *o = is / n * (n * d - s1 - h * s2);
                            }
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::SegmentSum { x, ids } => {
                    let cols = g.cols();
                    let mut dx = Tensor::zeros(ids.len(), cols);
                    for (r, &s) in ids.iter().enumerate() {
                        dx.row_mut(r).copy_from_slice(g.row(s));
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Gather { x, idx } => {
                    let xv = val(*x);
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    for (e, &i) in idx.iter().enumerate() {
                        for (o, v) in dx.row_mut(i).iter_mut().zip(g.row(e)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::RowSum(x) => {
                    let xv = val(*x);
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        let s = g.data()[r];
                        dx.row_mut(r).iter_mut().for_each(|o| *o = s);
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Sum(x) => {
                    let xv = val(*x);
                    accumulate(
                        &mut grads[x.0],
                        Tensor::filled(xv.rows(), xv.cols(), g.item()),
                    );
                }
                Op::Mean(x) => {
                    let xv = val(*x);
                    let s = g.item() / xv.len() as f64;
                    accumulate(&mut grads[x.0], Tensor::filled(xv.rows(), xv.cols(), s));
                }
                Op::BceWithLogits { logits, labels } => {
                    let lv = val(*logits);
                    let n = labels.len() as f64;
                    let s = g.item();
                    let data = lv
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&x, &y)| s * (stable_sigmoid(x) - y) / n)
                        .collect();
                    accumulate(
                        &mut grads[logits.0],
                        Tensor::from_vec(lv.rows(), lv.cols(), data)?,
                    );
                }
            }
        }

        for (i, g) in leaf_grads {
            accumulate(&mut self.nodes[i].grad, g);
        }
        Ok(())
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

fn check_ids(op: &'static str, ids: &[usize], bound: usize) -> Result<(), TensorError> {
    match ids.iter().find(|&&i| i >= bound) {
        Some(&index) => Err(TensorError::Index { op, index, bound }),
        None => Ok(()),
    }
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut out = vec![0.0; t.cols()];
    for r in 0..t.rows() {
        out.iter_mut().zip(t.row(r)).for_each(|(o, v)| *o += v);
    }
    Tensor::row_vector(out)
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("shapes checked on the forward pass")
}
