//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Graph`] records one forward pass. Parameters are read directly from
//! a borrowed [`ParamStore`]; `backward` returns gradients aligned with it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Constant,
    Gather { table: NodeId, ids: Vec<usize> },
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<f64>, inv_std: Vec<f64> },
    Softmax(NodeId),
    Mask(NodeId, Vec<f64>),
    ColSlice { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    CrossEntropy { logits: NodeId, targets: Vec<usize>, probs: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    dropout: f64,
    rng: Option<ChaCha8Rng>,
}

impl<'p> Graph<'p> {
    /// Graph without dropout.
    pub fn new(params: &'p ParamStore) -> Graph<'p> {
        Graph {
            params,
            nodes: Vec::new(),
            dropout: 0.0,
            rng: None,
        }
    }

    /// Graph whose [`Graph::dropout`] calls zero activations with
    /// probability `p`, drawing masks from `rng`.
    pub fn training(params: &'p ParamStore, p: f64, rng: ChaCha8Rng) -> Graph<'p> {
        Graph {
            params,
            nodes: Vec::new(),
            dropout: p,
            rng: Some(rng),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match self.nodes[id.0].op {
            Op::Param(p) => self.params.get(p),
            _ => &self.nodes[id.0].value,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.push(Tensor::zeros(0, 0), Op::Param(id))
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Constant)
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(av.rows, bv.cols);
        matmul_acc(&av.data, &bv.data, &mut out.data, av.rows, av.cols, bv.cols);
        self.push(out, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.cols, "matmul_bt shape mismatch");
        let mut out = Tensor::zeros(av.rows, bv.rows);
        matmul_bt_acc(&av.data, &bv.data, &mut out.data, av.rows, av.cols, bv.rows);
        self.push(out, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds the single-row `b` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        let bv = self.value(b);
        assert_eq!((bv.rows, bv.cols), (1, out.cols), "add_row shape mismatch");
        for r in 0..out.rows {
            for (o, x) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.scale(s);
        self.push(out, Op::Scale(a, s))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for x in &mut out.data {
            let u = GELU_C * (*x + 0.044715 * *x * *x * *x);
            *x = 0.5 * *x * (1.0 + u.tanh());
        }
        self.push(out, Op::Gelu(a))
    }

    /// Row-wise layer normalization with learned gain and bias rows.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut out = Tensor::zeros(rows, cols);
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = g[c] * h + b[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::Softmax(a))
    }

    /// Row-wise softmax where row `i` only attends to columns `0..=i`.
    pub fn causal_softmax(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            let cols = out.cols;
            let row = out.row_mut(r);
            let visible = (r + 1).min(cols);
            softmax_in_place(&mut row[..visible]);
            row[visible..].iter_mut().for_each(|x| *x = 0.0);
        }
        self.push(out, Op::Softmax(a))
    }

    /// Inverted dropout; a no-op outside training graphs.
    pub fn dropout(&mut self, a: NodeId) -> NodeId {
        let p = self.dropout;
        let rng = match self.rng.as_mut() {
            Some(rng) if p > 0.0 => rng,
            _ => return a,
        };
        let keep = 1.0 / (1.0 - p);
        let n = match self.nodes[a.0].op {
            Op::Param(id) => self.params.get(id).len(),
            _ => self.nodes[a.0].value.len(),
        };
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.mask(a, mask)
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, a: NodeId, mask: Vec<f64>) -> NodeId {
        let mut out = self.value(a).clone();
        for (o, m) in out.data.iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Mask(a, mask))
    }

    pub fn col_slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        let mut out = Tensor::zeros(xv.rows, len);
        for r in 0..xv.rows {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(out, Op::ColSlice { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + v.cols].copy_from_slice(v.row(r));
            }
            offset += v.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`; a 1x1 node.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len(), "one target per logit row");
        let mut probs = lv.clone();
        let mut nll = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            nll += log_z - row[t];
            softmax_in_place(probs.row_mut(r));
        }
        let loss = nll / targets.len() as f64;
        self.push(
            Tensor::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
        )
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    pub fn backward(&self, loss: NodeId) -> Grads {
        let mut param_grads = self.params.zero_grads();
        self.backward_into(loss, &mut param_grads);
        param_grads
    }

    /// Like [`Graph::backward`], accumulating into existing buffers.
    pub fn backward_into(&self, loss: NodeId, param_grads: &mut Grads) {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Param(p) => param_grads.accumulate(*p, &dy),
                Op::Constant => {}
                Op::Gather { table, ids } => {
                    let tv = self.value(*table);
                    let g = slot(&mut grads, *table, tv.rows, tv.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, d) in g.row_mut(id).iter_mut().zip(dy.row(r)) {
                            *o += d;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows, av.cols, bv.cols);
                    let ga = slot(&mut grads, *a, m, k);
                    // dA = dY * B^T
                    matmul_bt_acc(&dy.data, &bv.data, &mut ga.data, m, n, k);
                    let gb = slot(&mut grads, *b, k, n);
                    // dB = A^T * dY
                    matmul_at_acc(&av.data, &dy.data, &mut gb.data, m, k, n);
                }
                Op::MatMulBt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows, av.cols, bv.rows);
                    let ga = slot(&mut grads, *a, m, k);
                    // dA = dY * B
                    matmul_acc(&dy.data, &bv.data, &mut ga.data, m, n, k);
                    let gb = slot(&mut grads, *b, n, k);
                    // dB = dY^T * A
                    matmul_at_acc(&dy.data, &av.data, &mut gb.data, m, n, k);
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, dy.rows, dy.cols).add_assign(&dy);
                    slot(&mut grads, *b, dy.rows, dy.cols).add_assign(&dy);
                }
                Op::AddRow(a, b) => {
                    slot(&mut grads, *a, dy.rows, dy.cols).add_assign(&dy);
                    let gb = slot(&mut grads, *b, 1, dy.cols);
                    for r in 0..dy.rows {
                        for (o, d) in gb.data.iter_mut().zip(dy.row(r)) {
                            *o += d;
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let ga = slot(&mut grads, *a, dy.rows, dy.cols);
                    for (o, d) in ga.data.iter_mut().zip(&dy.data) {
                        *o += s * d;
                    }
                }
                Op::Gelu(a) => {
                    let x = &self.value(*a).data;
                    let ga = slot(&mut grads, *a, dy.rows, dy.cols);
                    for ((o, d), &x) in ga.data.iter_mut().zip(&dy.data).zip(x) {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        *o += d * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let (rows, cols) = (dy.rows, dy.cols);
                    let g = self.value(*gamma).data.clone();
                    {
                        let gg = slot(&mut grads, *gamma, 1, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                gg.data[c] += dy.data[r * cols + c] * xhat[r * cols + c];
                            }
                        }
                    }
                    {
                        let gb = slot(&mut grads, *beta, 1, cols);
                        for r in 0..rows {
                            for (o, d) in gb.data.iter_mut().zip(dy.row(r)) {
                                *o += d;
                            }
                        }
                    }
                    let gx = slot(&mut grads, *x, rows, cols);
                    let n = cols as f64;
                    for r in 0..rows {
                        let dxhat: Vec<f64> = (0..cols).map(|c| dy.data[r * cols + c] * g[c]).collect();
                        let h = &xhat[r * cols..(r + 1) * cols];
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dh: f64 = dxhat.iter().zip(h).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            gx.data[r * cols + c] +=
                                inv_std[r] / n * (n * dxhat[c] - sum_d - h[c] * sum_dh);
                        }
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let ga = slot(&mut grads, *a, dy.rows, dy.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let dr = dy.row(r);
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                            *o += yr[c] * (dr[c] - dot);
                        }
                    }
                }
                Op::Mask(a, mask) => {
                    let ga = slot(&mut grads, *a, dy.rows, dy.cols);
                    for ((o, d), m) in ga.data.iter_mut().zip(&dy.data).zip(mask) {
                        *o += d * m;
                    }
                }
                Op::ColSlice { x, start } => {
                    let xv = self.value(*x);
                    let gx = slot(&mut grads, *x, xv.rows, xv.cols);
                    for r in 0..dy.rows {
                        for (o, d) in gx.row_mut(r)[*start..*start + dy.cols].iter_mut().zip(dy.row(r)) {
                            *o += d;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        let gp = slot(&mut grads, p, dy.rows, pc);
                        for r in 0..dy.rows {
                            for (o, d) in gp.row_mut(r).iter_mut().zip(&dy.row(r)[offset..offset + pc]) {
                                *o += d;
                            }
                        }
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pr = self.value(p).rows;
                        let gp = slot(&mut grads, p, pr, dy.cols);
                        let start = offset * dy.cols;
                        for (o, d) in gp.data.iter_mut().zip(&dy.data[start..start + pr * dy.cols]) {
                            *o += d;
                        }
                        offset += pr;
                    }
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = dy.data[0] / targets.len() as f64;
                    let gl = slot(&mut grads, *logits, probs.rows, probs.cols);
                    for (r, &t) in targets.iter().enumerate() {
                        for (c, o) in gl.row_mut(r).iter_mut().enumerate() {
                            let p = probs.get(r, c);
                            *o += scale * (p - if c == t { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Tensor>], id: NodeId, rows: usize, cols: usize) -> &mut Tensor {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use rand::SeedableRng;

    /// Central-difference check of every coordinate of every parameter.
    fn check(store: &mut ParamStore, f: impl Fn(&mut Graph) -> NodeId) {
        let analytic = {
            let mut g = Graph::new(store);
            let loss = f(&mut g);
            g.backward(loss)
        };
        let eval = |s: &ParamStore| {
            let mut g = Graph::new(s);
            let loss = f(&mut g);
            g.value(loss).data[0]
        };
        let eps = 1e-6;
        for p in 0..store.len() {
            for i in 0..store.by_index(p).value.len() {
                let orig = store.by_index(p).value.data[i];
                store.by_index_mut(p).value.data[i] = orig + eps;
                let up = eval(store);
                store.by_index_mut(p).value.data[i] = orig - eps;
                let down = eval(store);
                store.by_index_mut(p).value.data[i] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic.0[p].data[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
                assert!(
                    rel < 1e-5 || (a - numeric).abs() < 1e-9,
                    "param {p}[{i}]: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn every_op_has_correct_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let table = store.add("table", 6, 4, Init::Uniform(1.0), &mut rng);
        let w = store.add("w", 4, 4, Init::Uniform(1.0), &mut rng);
        let b = store.add("b", 1, 4, Init::Uniform(1.0), &mut rng);
        let gamma = store.add("gamma", 1, 4, Init::Uniform(1.0), &mut rng);
        let beta = store.add("beta", 1, 4, Init::Uniform(1.0), &mut rng);
        let q = store.add("q", 1, 4, Init::Uniform(1.0), &mut rng);
        let out = store.add("out", 4, 5, Init::Uniform(1.0), &mut rng);
        check(&mut store, |g| {
            let t = g.param(table);
            let x = g.gather(t, &[1, 3, 3, 0]);
            let wn = g.param(w);
            let h = g.matmul(x, wn);
            let bn = g.param(b);
            let h = g.add_row(h, bn);
            let h = g.gelu(h);
            let (gm, bt) = (g.param(gamma), g.param(beta));
            let h = g.layer_norm(h, gm, bt);
            let left = g.col_slice(h, 0, 2);
            let right = g.col_slice(h, 2, 2);
            let scores = g.matmul_bt(left, right);
            let scores = g.scale(scores, 0.7);
            let attn = g.causal_softmax(scores);
            let mixed = g.matmul(attn, h);
            let both = g.concat_cols(&[left, right]);
            let h = g.add(mixed, both);
            let h = g.mask(h, [1.0, 0.0, 2.0, 1.0].repeat(4));
            let qn = g.param(q);
            let pool_scores = g.matmul_bt(qn, h);
            let pool = g.softmax(pool_scores);
            let pooled = g.matmul(pool, h);
            let stacked = g.concat_rows(&[pooled, h]);
            let on = g.param(out);
            let logits = g.matmul(stacked, on);
            g.cross_entropy(logits, &[0, 4, 2, 1, 3])
        });
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = store.add("x", 3, 3, Init::Uniform(1.0), &mut rng);
        let mut g = Graph::new(&store);
        let x = g.param(p);
        let y = g.causal_softmax(x);
        let v = g.value(y);
        assert_eq!(v.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(v.get(1, 2), 0.0);
        for r in 0..3 {
            assert!((v.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_only_in_training_graphs() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = store.add("x", 10, 10, Init::Ones, &mut rng);
        let mut g = Graph::new(&store);
        let x = g.param(p);
        assert_eq!(g.dropout(x), x);
        let mut g = Graph::training(&store, 0.5, ChaCha8Rng::seed_from_u64(2));
        let x = g.param(p);
        let y = g.dropout(x);
        let v = g.value(y);
        assert!(v.data.iter().all(|&a| a == 0.0 || a == 2.0));
        assert!(v.data.contains(&0.0));
    }
}
