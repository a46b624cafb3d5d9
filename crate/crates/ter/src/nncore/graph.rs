//! Reverse-mode automatic differentiation on a tape.
//!
//! A `Graph` records every forward operation as a node; `backward` walks the
//! tape in reverse creation order (a valid topological order, since ops can
//! only reference earlier nodes) and accumulates gradients. Parameters live
//! outside the graph in a [`ParamStore`]; each one gets at most one leaf node
//! per graph so that repeated uses accumulate into a single gradient.
//!
//! The op set is exactly what a stacked bidirectional LSTM with per-channel
//! softmax heads needs — nothing speculative.

use std::collections::HashMap;

use super::adam::ParamStore;
use super::rng::Rng;
use super::tensor::Tensor;

pub type NodeId = usize;

/// Floor applied inside `log` so a zero probability cannot produce an
/// infinite loss.
pub const LOG_FLOOR: f64 = 1e-12;

enum Op {
    /// Constant input; no gradient flows out.
    Leaf,
    /// Leaf backed by a parameter store entry (by index).
    Param(usize),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast-add a 1xK bias row to every row of an NxK matrix.
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    /// Row-wise softmax.
    SoftmaxRows(NodeId),
    /// Inverted dropout; the mask already carries the 1/(1-rate) scale.
    Dropout(NodeId, Tensor),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    /// Stack 1xK rows into an NxK matrix.
    StackRows(Vec<NodeId>),
    /// Gather rows of a table by index; `usize::MAX` yields a zero row and
    /// receives no gradient (used to splice frozen vectors past a trainable
    /// table).
    Lookup(NodeId, Vec<usize>),
    /// Weighted negative log-likelihood over row-wise class probabilities:
    /// `sum_i w[i] * -log(max(p[i, t[i]], LOG_FLOOR))`, a 1x1 result.
    PickNll { probs: NodeId, targets: Vec<usize>, weights: Vec<f64> },
    /// Deliberately wrong tanh backward, used only to prove the gradient
    /// checker can catch a broken derivative.
    #[cfg(test)]
    TanhBadGrad(NodeId),
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

/// Tape of forward operations, ready to be differentiated.
pub struct Graph {
    nodes: Vec<Node>,
    /// store index -> node, so each parameter appears once per graph.
    param_nodes: HashMap<usize, NodeId>,
    train: bool,
}

impl Graph {
    /// `train` controls whether dropout draws masks or passes through.
    pub fn new(train: bool) -> Self {
        Graph { nodes: Vec::new(), param_nodes: HashMap::new(), train }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node { value, grad, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Gradient of the loss w.r.t. node `id`; valid after `backward`.
    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].grad
    }

    /// Constant input node.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Node for a named parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        let idx = store.index_of(name).unwrap_or_else(|| panic!("unknown parameter {name:?}"));
        if let Some(&id) = self.param_nodes.get(&idx) {
            return id;
        }
        let id = self.push(store.entry(idx).value.clone(), Op::Param(idx));
        self.param_nodes.insert(idx, id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.add(&self.nodes[b].value);
        self.push(v, Op::Add(a, b))
    }

    /// `a` is NxK, `bias` is 1xK; adds the bias to every row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[bias].value);
        assert_eq!(bv.rows(), 1, "bias must be a single row");
        assert_eq!(av.cols(), bv.cols(), "bias width mismatch");
        let mut out = av.clone();
        let k = out.cols();
        for r in 0..out.rows() {
            for c in 0..k {
                *out.at_mut(r, c) += bv.at(0, c);
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.mul(&self.nodes[b].value);
        self.push(v, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let mut v = self.nodes[a].value.clone();
        for x in v.data_mut() {
            *x = x.tanh();
        }
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut v = self.nodes[a].value.clone();
        for x in v.data_mut() {
            *x = 1.0 / (1.0 + (-*x).exp());
        }
        self.push(v, Op::Sigmoid(a))
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a].value;
        let (n, k) = (av.rows(), av.cols());
        let mut out = Tensor::zeros(&[n, k]);
        for r in 0..n {
            let row = av.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..k {
                let e = (row[c] - max).exp();
                *out.at_mut(r, c) = e;
                sum += e;
            }
            for c in 0..k {
                *out.at_mut(r, c) /= sum;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by 1/(1-rate), so the
    /// expected activation is unchanged and evaluation needs no rescaling.
    /// In eval mode (or rate 0) this is the identity.
    pub fn dropout(&mut self, a: NodeId, rate: f64, rng: &mut Rng) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0,1)");
        if !self.train || rate == 0.0 {
            return a;
        }
        let av = &self.nodes[a].value;
        let keep = 1.0 / (1.0 - rate);
        let mask_data: Vec<f64> =
            (0..av.len()).map(|_| if rng.chance(rate) { 0.0 } else { keep }).collect();
        let mask = Tensor::from_vec(av.shape(), mask_data);
        let v = av.mul(&mask);
        self.push(v, Op::Dropout(a, mask))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let n = self.nodes[parts[0]].value.rows();
        let total: usize = parts.iter().map(|&p| self.nodes[p].value.cols()).sum();
        let mut out = Tensor::zeros(&[n, total]);
        let mut off = 0;
        for &p in parts {
            let pv = &self.nodes[p].value;
            assert_eq!(pv.rows(), n, "concat_cols row mismatch");
            for r in 0..n {
                for c in 0..pv.cols() {
                    *out.at_mut(r, off + c) = pv.at(r, c);
                }
            }
            off += pv.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let av = &self.nodes[a].value;
        assert!(start + len <= av.cols(), "slice_cols out of range");
        let n = av.rows();
        let mut out = Tensor::zeros(&[n, len]);
        for r in 0..n {
            for c in 0..len {
                *out.at_mut(r, c) = av.at(r, start + c);
            }
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let av = &self.nodes[a].value;
        assert!(start + len <= av.rows(), "slice_rows out of range");
        let k = av.cols();
        let mut out = Tensor::zeros(&[len, k]);
        for r in 0..len {
            for c in 0..k {
                *out.at_mut(r, c) = av.at(start + r, c);
            }
        }
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty());
        let k = self.nodes[rows[0]].value.cols();
        let mut out = Tensor::zeros(&[rows.len(), k]);
        for (r, &id) in rows.iter().enumerate() {
            let rv = &self.nodes[id].value;
            assert_eq!(rv.rows(), 1, "stack_rows input must be a single row");
            assert_eq!(rv.cols(), k, "stack_rows width mismatch");
            for c in 0..k {
                *out.at_mut(r, c) = rv.at(0, c);
            }
        }
        self.push(out, Op::StackRows(rows.to_vec()))
    }

    /// Gather `ids.len()` rows from `table`. An id of `usize::MAX` produces
    /// a zero row that is skipped during the backward pass.
    pub fn lookup(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let tv = &self.nodes[table].value;
        let (n, d) = (tv.rows(), tv.cols());
        let mut out = Tensor::zeros(&[ids.len(), d]);
        for (r, &id) in ids.iter().enumerate() {
            if id == usize::MAX {
                continue;
            }
            assert!(id < n, "lookup id {id} out of range for table with {n} rows");
            for c in 0..d {
                *out.at_mut(r, c) = tv.at(id, c);
            }
        }
        self.push(out, Op::Lookup(table, ids.to_vec()))
    }

    /// Weighted negative log-likelihood: `probs` is NxK of row-wise class
    /// probabilities, `targets[i]` the gold class of row i, `weights[i]` its
    /// multiplier. Returns a 1x1 loss node.
    pub fn pick_nll(&mut self, probs: NodeId, targets: &[usize], weights: &[f64]) -> NodeId {
        let pv = &self.nodes[probs].value;
        assert_eq!(targets.len(), pv.rows(), "one target per row");
        assert_eq!(weights.len(), pv.rows(), "one weight per row");
        let mut loss = 0.0;
        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            assert!(t < pv.cols(), "target class {t} out of range");
            loss -= w * pv.at(i, t).max(LOG_FLOOR).ln();
        }
        self.push(
            Tensor::scalar(loss),
            Op::PickNll { probs, targets: targets.to_vec(), weights: weights.to_vec() },
        )
    }

    /// tanh forward with an intentionally broken backward; test-only.
    #[cfg(test)]
    pub(crate) fn tanh_bad_grad(&mut self, a: NodeId) -> NodeId {
        let mut v = self.nodes[a].value.clone();
        for x in v.data_mut() {
            *x = x.tanh();
        }
        self.push(v, Op::TanhBadGrad(a))
    }

    /// Backpropagate from a 1x1 loss node. Gradients of parameter nodes are
    /// accumulated into `store` (existing gradients are kept, enabling
    /// multi-document accumulation before an optimizer step).
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) {
        assert_eq!(self.nodes[loss].value.len(), 1, "backward needs a scalar loss");
        for n in &mut self.nodes {
            for g in n.grad.data_mut() {
                *g = 0.0;
            }
        }
        self.nodes[loss].grad = Tensor::scalar(1.0);

        for id in (0..=loss).rev() {
            // Take the node's gradient out so we can mutate earlier nodes.
            let g = std::mem::replace(&mut self.nodes[id].grad, Tensor::zeros(&[0]));
            if g.data().iter().all(|&x| x == 0.0) {
                self.nodes[id].grad = g;
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf | Op::Param(_) => {}
                &Op::MatMul(a, b) => {
                    // dA = G * B^T ; dB = A^T * G
                    let da = g.matmul(&self.nodes[b].value.transpose());
                    let db = self.nodes[a].value.transpose().matmul(&g);
                    accumulate(&mut self.nodes[a].grad, &da);
                    accumulate(&mut self.nodes[b].grad, &db);
                }
                &Op::Add(a, b) => {
                    accumulate(&mut self.nodes[a].grad, &g);
                    accumulate(&mut self.nodes[b].grad, &g);
                }
                &Op::AddRow(a, bias) => {
                    accumulate(&mut self.nodes[a].grad, &g);
                    // Bias gradient is the column-wise sum of G.
                    let k = g.cols();
                    let mut db = Tensor::zeros(&[1, k]);
                    for r in 0..g.rows() {
                        for c in 0..k {
                            *db.at_mut(0, c) += g.at(r, c);
                        }
                    }
                    accumulate(&mut self.nodes[bias].grad, &db);
                }
                &Op::Mul(a, b) => {
                    let da = g.mul(&self.nodes[b].value);
                    let db = g.mul(&self.nodes[a].value);
                    accumulate(&mut self.nodes[a].grad, &da);
                    accumulate(&mut self.nodes[b].grad, &db);
                }
                &Op::Tanh(a) => {
                    // d tanh(x) = 1 - tanh(x)^2
                    let y = &self.nodes[id].value;
                    let mut da = g.clone();
                    for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= 1.0 - yv * yv;
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                &Op::Sigmoid(a) => {
                    // d sigma(x) = sigma(x)(1 - sigma(x))
                    let y = &self.nodes[id].value;
                    let mut da = g.clone();
                    for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= yv * (1.0 - yv);
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                &Op::SoftmaxRows(a) => {
                    // dx_j = y_j * (g_j - sum_k g_k y_k), per row.
                    let y = &self.nodes[id].value;
                    let (n, k) = (y.rows(), y.cols());
                    let mut da = Tensor::zeros(&[n, k]);
                    for r in 0..n {
                        let dot: f64 =
                            (0..k).map(|c| g.at(r, c) * y.at(r, c)).sum();
                        for c in 0..k {
                            *da.at_mut(r, c) = y.at(r, c) * (g.at(r, c) - dot);
                        }
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Dropout(a, mask) => {
                    let a = *a;
                    let da = g.mul(mask);
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let w = self.nodes[p].value.cols();
                        let mut dp = Tensor::zeros(&[g.rows(), w]);
                        for r in 0..g.rows() {
                            for c in 0..w {
                                *dp.at_mut(r, c) = g.at(r, off + c);
                            }
                        }
                        accumulate(&mut self.nodes[p].grad, &dp);
                        off += w;
                    }
                }
                &Op::SliceCols(a, start) => {
                    let ga = &mut self.nodes[a].grad;
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            *ga.at_mut(r, start + c) += g.at(r, c);
                        }
                    }
                }
                &Op::SliceRows(a, start) => {
                    let ga = &mut self.nodes[a].grad;
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            *ga.at_mut(start + r, c) += g.at(r, c);
                        }
                    }
                }
                Op::StackRows(rows) => {
                    let rows = rows.clone();
                    for (r, src) in rows.into_iter().enumerate() {
                        let gr = &mut self.nodes[src].grad;
                        for c in 0..g.cols() {
                            *gr.at_mut(0, c) += g.at(r, c);
                        }
                    }
                }
                Op::Lookup(table, ids) => {
                    let (table, ids) = (*table, ids.clone());
                    let gt = &mut self.nodes[table].grad;
                    for (r, id) in ids.into_iter().enumerate() {
                        if id == usize::MAX {
                            continue;
                        }
                        for c in 0..g.cols() {
                            *gt.at_mut(id, c) += g.at(r, c);
                        }
                    }
                }
                Op::PickNll { probs, targets, weights } => {
                    let (probs, targets, weights) =
                        (*probs, targets.clone(), weights.clone());
                    let up = g.item();
                    let y = self.nodes[probs].value.clone();
                    let gp = &mut self.nodes[probs].grad;
                    for (i, (t, w)) in targets.into_iter().zip(weights).enumerate() {
                        *gp.at_mut(i, t) += up * (-w / y.at(i, t).max(LOG_FLOOR));
                    }
                }
                #[cfg(test)]
                &Op::TanhBadGrad(a) => {
                    // Wrong on purpose: uses (1 - y) instead of (1 - y^2).
                    let y = &self.nodes[id].value;
                    let mut da = g.clone();
                    for (d, &yv) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= 1.0 - yv;
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
            }
            self.nodes[id].grad = g;
        }

        // Flush parameter-node gradients into the store.
        for node in &self.nodes {
            if let Op::Param(idx) = node.op {
                store.entry_mut(idx).grad = store.entry(idx).grad.add(&node.grad);
            }
        }
    }
}

fn accumulate(dst: &mut Tensor, src: &Tensor) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}
