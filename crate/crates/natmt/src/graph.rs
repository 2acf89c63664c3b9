//! Reverse-mode autodiff over named parameter tensors.
//!
//! A [`Tape`] records the forward computation of one sentence as a flat list
//! of nodes; [`Tape::backward`] walks it in reverse and accumulates parameter
//! gradients into a [`GradStore`]. Parameters are referenced by id, never
//! copied onto the tape.

use crate::scalar::Scalar;
use crate::tensor::Matrix;

const LN_EPS: f64 = 1e-5;

/// Named parameter tensors, addressed by [`ParamId`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Matrix<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Matrix<S>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Matrix<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<S> {
        &mut self.tensors[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Matrix<S>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        (0..self.tensors.len()).map(ParamId).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    /// First parameter containing a non-finite value, if any.
    pub fn find_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .position(|t| !t.is_finite())
            .map(|i| self.names[i].as_str())
    }
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulator, shape-parallel to a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradStore<S> {
    grads: Vec<Matrix<S>>,
}

impl<S: Scalar> GradStore<S> {
    pub fn zeros_like(params: &ParamStore<S>) -> Self {
        GradStore {
            grads: params.tensors.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix<S> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<S> {
        &mut self.grads[id.0]
    }

    pub fn reset(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(S::zero()));
    }

    pub fn scale(&mut self, c: S) {
        self.grads.iter_mut().for_each(|g| g.scale_assign(c));
    }

    pub fn add_scaled(&mut self, other: &GradStore<S>, c: S) {
        for (g, o) in self.grads.iter_mut().zip(&other.grads) {
            for (a, b) in g.data_mut().iter_mut().zip(o.data()) {
                *a = *a + c * *b;
            }
        }
    }

    pub fn global_norm(&self) -> S {
        self.grads
            .iter()
            .map(|g| g.sq_norm())
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix<S>> {
        self.grads.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<S> {
    Constant,
    Gather { table: ParamId, ids: Vec<usize> },
    MatMulParam { x: NodeId, w: ParamId },
    AddBias { x: NodeId, b: ParamId },
    MatMul { a: NodeId, b: NodeId },
    MatMulBT { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    AddConst { x: NodeId },
    Scale { x: NodeId, c: S },
    Relu { x: NodeId },
    SoftmaxRows { x: NodeId },
    LogSoftmaxRows { x: NodeId },
    LayerNorm { x: NodeId, gamma: ParamId, beta: ParamId, xhat: Matrix<S>, inv_std: Vec<S> },
    SliceCols { x: NodeId, start: usize },
    ConcatCols { parts: Vec<NodeId> },
}

struct Node<S> {
    value: Matrix<S>,
    grad: Option<Matrix<S>>,
    op: Op<S>,
}

pub struct Tape<'p, S> {
    params: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Matrix<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix<S>, op: Op<S>) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix<S>) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Rows of an embedding table selected by token ids.
    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> NodeId {
        let t = self.params.get(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn matmul_param(&mut self, x: NodeId, w: ParamId) -> NodeId {
        let out = Matrix::matmul(self.value(x), self.params.get(w));
        self.push(out, Op::MatMulParam { x, w })
    }

    /// Adds a 1×D bias row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: ParamId) -> NodeId {
        let bias = self.params.get(b);
        assert_eq!(bias.rows(), 1);
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(bias.row(0)) {
                *o = *o + bv;
            }
        }
        self.push(out, Op::AddBias { x, b })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = Matrix::matmul(self.value(a), self.value(b));
        self.push(out, Op::MatMul { a, b })
    }

    /// `a · bᵀ` (attention scores).
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = Matrix::matmul_bt(self.value(a), self.value(b));
        self.push(out, Op::MatMulBT { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add { a, b })
    }

    /// Adds a constant matrix (positional encodings, attention masks).
    pub fn add_const(&mut self, x: NodeId, c: &Matrix<S>) -> NodeId {
        let mut out = self.value(x).clone();
        out.add_assign(c);
        self.push(out, Op::AddConst { x })
    }

    pub fn scale(&mut self, x: NodeId, c: S) -> NodeId {
        let mut out = self.value(x).clone();
        out.scale_assign(c);
        self.push(out, Op::Scale { x, c })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = v.max(S::zero()));
        self.push(out, Op::Relu { x })
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let mut out = v.clone();
        for r in 0..out.rows() {
            softmax_row_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows { x })
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let mut out = v.clone();
        for r in 0..out.rows() {
            log_softmax_row_in_place(out.row_mut(r));
        }
        self.push(out, Op::LogSoftmaxRows { x })
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: ParamId, beta: ParamId) -> NodeId {
        let v = self.value(x);
        let (rows, cols) = (v.rows(), v.cols());
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        let d = S::from_f64(cols as f64);
        let eps = S::from_f64(LN_EPS);
        for r in 0..rows {
            let row = v.row(r);
            let mean = row.iter().copied().sum::<S>() / d;
            let var = row
                .iter()
                .map(|&x| (x - mean) * (x - mean))
                .sum::<S>()
                / d;
            let inv = (var + eps).sqrt().recip();
            inv_std.push(inv);
            for (h, &x) in xhat.row_mut(r).iter_mut().zip(row) {
                *h = (x - mean) * inv;
            }
        }
        let g = self.params.get(gamma);
        let b = self.params.get(beta);
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let hrow = xhat.row(r);
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = g.get(0, c) * hrow[c] + b.get(0, c);
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x);
        let mut out = Matrix::zeros(v.rows(), len);
        for r in 0..v.rows() {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows);
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
            }
            off += v.cols();
        }
        self.push(out, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Seeds (accumulates) the output gradient of a node before backward.
    pub fn seed_grad(&mut self, id: NodeId, g: Matrix<S>) {
        match &mut self.nodes[id.0].grad {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse pass; parameter gradients are accumulated into `grads`.
    pub fn backward(mut self, grads: &mut GradStore<S>) {
        for i in (0..self.nodes.len()).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let g = match node.grad.take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Constant => {}
                Op::Gather { table, ids } => {
                    let gt = grads.get_mut(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        let grow = g.row(r);
                        for (o, &gv) in gt.row_mut(id).iter_mut().zip(grow) {
                            *o = *o + gv;
                        }
                    }
                }
                Op::MatMulParam { x, w } => {
                    let dx = Matrix::matmul_bt(&g, self.params.get(*w));
                    Matrix::matmul_at_acc(&before[x.0].value, &g, grads.get_mut(*w));
                    add_node_grad(before, *x, dx);
                }
                Op::AddBias { x, b } => {
                    let gb = grads.get_mut(*b);
                    for r in 0..g.rows() {
                        for (o, &gv) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o = *o + gv;
                        }
                    }
                    add_node_grad(before, *x, g);
                }
                Op::MatMul { a, b } => {
                    let da = Matrix::matmul_bt(&g, &before[b.0].value);
                    let mut db = Matrix::zeros(before[b.0].value.rows(), before[b.0].value.cols());
                    Matrix::matmul_at_acc(&before[a.0].value, &g, &mut db);
                    add_node_grad(before, *a, da);
                    add_node_grad(before, *b, db);
                }
                Op::MatMulBT { a, b } => {
                    let da = Matrix::matmul(&g, &before[b.0].value);
                    let mut db = Matrix::zeros(before[b.0].value.rows(), before[b.0].value.cols());
                    Matrix::matmul_at_acc(&g, &before[a.0].value, &mut db);
                    add_node_grad(before, *a, da);
                    add_node_grad(before, *b, db);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    add_node_grad(before, a, g.clone());
                    add_node_grad(before, b, g);
                }
                Op::AddConst { x } => add_node_grad(before, *x, g),
                Op::Scale { x, c } => {
                    let mut dx = g;
                    dx.scale_assign(*c);
                    add_node_grad(before, *x, dx);
                }
                Op::Relu { x } => {
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if v <= S::zero() {
                            *d = S::zero();
                        }
                    }
                    add_node_grad(before, *x, dx);
                }
                Op::SoftmaxRows { x } => {
                    let y = &node.value;
                    let mut dx = g;
                    for r in 0..dx.rows() {
                        let yrow = y.row(r);
                        let dot: S = dx
                            .row(r)
                            .iter()
                            .zip(yrow)
                            .map(|(&gv, &yv)| gv * yv)
                            .sum();
                        for (d, &yv) in dx.row_mut(r).iter_mut().zip(yrow) {
                            *d = yv * (*d - dot);
                        }
                    }
                    add_node_grad(before, *x, dx);
                }
                Op::LogSoftmaxRows { x } => {
                    let y = &node.value;
                    let mut dx = g;
                    for r in 0..dx.rows() {
                        let gsum: S = dx.row(r).iter().copied().sum();
                        let yrow = y.row(r);
                        for (d, &yv) in dx.row_mut(r).iter_mut().zip(yrow) {
                            *d = *d - yv.exp() * gsum;
                        }
                    }
                    add_node_grad(before, *x, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gm = self.params.get(*gamma);
                    let d = S::from_f64(g.cols() as f64);
                    {
                        let gg = grads.get_mut(*gamma);
                        for r in 0..g.rows() {
                            for c in 0..g.cols() {
                                let v = gg.get(0, c) + g.get(r, c) * xhat.get(r, c);
                                gg.set(0, c, v);
                            }
                        }
                    }
                    {
                        let gb = grads.get_mut(*beta);
                        for r in 0..g.rows() {
                            for (o, &gv) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                                *o = *o + gv;
                            }
                        }
                    }
                    let mut dx = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let hrow = xhat.row(r);
                        // dh = g ⊙ γ for this row
                        let dh: Vec<S> = g
                            .row(r)
                            .iter()
                            .enumerate()
                            .map(|(c, &gv)| gv * gm.get(0, c))
                            .collect();
                        let mean_dh = dh.iter().copied().sum::<S>() / d;
                        let mean_dh_h = dh
                            .iter()
                            .zip(hrow)
                            .map(|(&a, &b)| a * b)
                            .sum::<S>()
                            / d;
                        let inv = inv_std[r];
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = inv * (dh[c] - mean_dh - hrow[c] * mean_dh_h);
                        }
                    }
                    add_node_grad(before, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let parent_cols = before[x.0].value.cols();
                    let mut dx = Matrix::zeros(g.rows(), parent_cols);
                    for r in 0..g.rows() {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    add_node_grad(before, *x, dx);
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let w = before[p.0].value.cols();
                        let mut dp = Matrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        add_node_grad(before, p, dp);
                    }
                }
            }
        }
    }
}

fn add_node_grad<S: Scalar>(nodes: &mut [Node<S>], id: NodeId, contrib: Matrix<S>) {
    match &mut nodes[id.0].grad {
        Some(g) => g.add_assign(&contrib),
        slot @ None => *slot = Some(contrib),
    }
}

pub fn softmax_row_in_place<S: Scalar>(row: &mut [S]) {
    let max = row
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| a.max(b));
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

pub fn log_softmax_row_in_place<S: Scalar>(row: &mut [S]) {
    let max = row
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| a.max(b));
    let lse = row
        .iter()
        .map(|&v| (v - max).exp())
        .sum::<S>()
        .ln()
        + max;
    for v in row.iter_mut() {
        *v = *v - lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// A composite expression touching every op; scalar output for FD checks.
    fn toy_loss(params: &ParamStore<f64>, grads: Option<&mut GradStore<f64>>) -> f64 {
        let w = params.id_by_name("w").unwrap();
        let b = params.id_by_name("b").unwrap();
        let gamma = params.id_by_name("gamma").unwrap();
        let beta = params.id_by_name("beta").unwrap();
        let emb = params.id_by_name("emb").unwrap();

        let mut tape = Tape::new(params);
        let x = tape.gather(emb, &[0, 2, 1]);
        let pos = Matrix::from_vec(
            3,
            4,
            (0..12).map(|i| (i as f64) * 0.01).collect(),
        );
        let x = tape.add_const(x, &pos);
        let h = tape.matmul_param(x, w);
        let h = tape.add_bias(h, b);
        let h = tape.relu(h);
        let h = tape.layer_norm(h, gamma, beta);
        let left = tape.slice_cols(h, 0, 2);
        let right = tape.slice_cols(h, 2, 2);
        let scores = tape.matmul_bt(left, right);
        let attn = tape.softmax_rows(scores);
        let mixed = tape.matmul(attn, right);
        let both = tape.concat_cols(&[mixed, left]);
        let both = tape.scale(both, 0.7);
        let res = tape.add(both, h);
        let logits = tape.matmul_param(res, w);
        let logp = tape.log_softmax_rows(logits);

        let targets = [1usize, 3, 0];
        let m = targets.len() as f64;
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            loss -= tape.value(logp).get(i, t) / m;
        }
        if let Some(gs) = grads {
            let mut seed = Matrix::zeros(3, 4);
            for (i, &t) in targets.iter().enumerate() {
                seed.set(i, t, -1.0 / m);
            }
            tape.seed_grad(logp, seed);
            tape.backward(gs);
        }
        loss
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = ParamStore::new();
        let rnd = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-0.8..0.8)).collect())
        };
        params.add("emb", rnd(&mut rng, 3, 4));
        params.add("w", rnd(&mut rng, 4, 4));
        params.add("b", rnd(&mut rng, 1, 4));
        params.add("gamma", Matrix::from_vec(1, 4, vec![1.1, 0.9, 1.0, 1.05]));
        params.add("beta", Matrix::from_vec(1, 4, vec![0.0, 0.1, -0.1, 0.02]));

        let mut grads = GradStore::zeros_like(&params);
        toy_loss(&params, Some(&mut grads));

        let h = 1e-6;
        for pi in 0..params.len() {
            let id = ParamId(pi);
            for k in 0..params.get(id).data().len() {
                let orig = params.get(id).data()[k];
                params.get_mut(id).data_mut()[k] = orig + h;
                let up = toy_loss(&params, None);
                params.get_mut(id).data_mut()[k] = orig - h;
                let down = toy_loss(&params, None);
                params.get_mut(id).data_mut()[k] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.get(id).data()[k];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!(
                    ((an - fd) / denom).abs() < 1e-4,
                    "param {pi} elem {k}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![0.3f64, -2.0, 5.0, 1.0];
        softmax_row_in_place(&mut row);
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
