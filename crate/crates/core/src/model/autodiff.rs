//! A small reverse-mode autodiff tape over dense `f64` matrices.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep
//! visits every consumer before its inputs. Only nodes reachable from a
//! trainable parameter carry gradients; [`Tape::stop_grad`] cuts that
//! reachability, which makes upstream gradients exactly zero.

use std::borrow::Cow;

use ndarray::{concatenate, s, Array2, Axis};

use super::crf::{self, CrfView};
use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNT(Var, Var),
    /// `aᵀ · b`
    TMatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Tanh(Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    GatherRows(Var, Vec<usize>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        smoothing: f64,
        reduction: Reduction,
        probs: Matrix,
    },
    CrfNll {
        emissions: Var,
        transitions: Var,
        start: Var,
        end: Var,
        tags: Vec<usize>,
    },
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(g) => *g += &delta,
        None => *slot = Some(delta),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Cow::Owned(value), op, needs_grad)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    /// A trainable leaf; its gradient is reported under `index`.
    pub fn param(&mut self, index: usize, value: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(value), Op::Param(index), true)
    }

    /// Same value, no gradient flow back through it.
    pub fn stop_grad(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn check_finite(&self, v: Var, name: &str) -> Result<()> {
        if self.value(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric {
                tensor: name.to_string(),
                message: "non-finite value".into(),
            })
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.derived(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        self.derived(out, Op::MatMulNT(a, b), &[a, b])
    }

    pub fn t_matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).t().dot(self.value(b));
        self.derived(out, Op::TMatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.derived(out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.value(a) + self.value(row);
        self.derived(out, Op::AddRow(a, row), &[a, row])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.derived(out, Op::Tanh(a), &[a])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a) * k;
        self.derived(out, Op::Scale(a, k), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = row_softmax(self.value(a));
        self.derived(out, Op::SoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let out =
            concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()]).expect("concat_cols row mismatch");
        self.derived(out, Op::ConcatCols(a, b), &[a, b])
    }

    /// Stacks matrices vertically. `parts` must be non-empty.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(0), &views).expect("concat_rows column mismatch");
        self.derived(out, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("mean of zero rows")
            .insert_axis(Axis(0));
        self.derived(out, Op::MeanRows(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let out = self.value(a).select(Axis(0), rows);
        self.derived(out, Op::GatherRows(a, rows.to_vec()), &[a])
    }

    /// Cross-entropy of row-wise softmax against `targets`, with the target
    /// distribution `(1 - ε)·onehot + ε/K`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], smoothing: f64, reduction: Reduction) -> Var {
        let l = self.value(logits);
        assert_eq!(l.nrows(), targets.len(), "one target per logit row");
        let k = l.ncols() as f64;
        let logp = log_softmax_rows(l);
        let mut total = 0.0;
        for (row, &t) in logp.rows().into_iter().zip(targets) {
            let uniform = row.sum() / k;
            total -= (1.0 - smoothing) * row[t] + smoothing * uniform;
        }
        if reduction == Reduction::Mean && !targets.is_empty() {
            total /= targets.len() as f64;
        }
        let probs = logp.mapv(f64::exp);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            smoothing,
            reduction,
            probs,
        };
        self.derived(Array2::from_elem((1, 1), total), op, &[logits])
    }

    /// Negative log-likelihood of `tags` under a linear-chain CRF.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, start: Var, end: Var, tags: &[usize]) -> Var {
        let view = CrfView {
            transitions: self.value(transitions),
            start: self.value(start),
            end: self.value(end),
        };
        let e = self.value(emissions);
        let nll = crf::log_partition(e, &view) - crf::path_score(e, &view, tags);
        let op = Op::CrfNll {
            emissions,
            transitions,
            start,
            end,
            tags: tags.to_vec(),
        };
        self.derived(
            Array2::from_elem((1, 1), nll),
            op,
            &[emissions, transitions, start, end],
        )
    }

    /// Reverse sweep from the scalar `loss`. Returns one gradient per
    /// parameter index (`None` where the loss does not depend on it).
    pub fn backward(&self, loss: Var, num_params: usize) -> Vec<Option<Matrix>> {
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        let mut params: Vec<Option<Matrix>> = (0..num_params).map(|_| None).collect();
        if !self.nodes[loss.0].needs_grad {
            return params;
        }
        grads[loss.0] = Some(Array2::ones(self.value(loss).dim()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let wants = |v: &Var| self.nodes[v.0].needs_grad;
            let send = |v: Var, delta: Matrix, grads: &mut Vec<Option<Matrix>>| {
                if wants(&v) {
                    accumulate(&mut grads[v.0], delta);
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(idx) => accumulate(&mut params[*idx], g),
                Op::MatMul(a, b) => {
                    if wants(a) {
                        send(*a, g.dot(&self.value(*b).t()), &mut grads);
                    }
                    if wants(b) {
                        send(*b, self.value(*a).t().dot(&g), &mut grads);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if wants(a) {
                        send(*a, g.dot(self.value(*b)), &mut grads);
                    }
                    if wants(b) {
                        send(*b, g.t().dot(self.value(*a)), &mut grads);
                    }
                }
                Op::TMatMul(a, b) => {
                    if wants(a) {
                        send(*a, self.value(*b).dot(&g.t()), &mut grads);
                    }
                    if wants(b) {
                        send(*b, self.value(*a).dot(&g), &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g, &mut grads);
                }
                Op::AddRow(a, row) => {
                    let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    send(*row, summed, &mut grads);
                    send(*a, g, &mut grads);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, &g * &y.mapv(|v| 1.0 - v * v), &mut grads);
                }
                Op::Scale(a, k) => send(*a, g * *k, &mut grads),
                Op::SoftmaxRows(a) => {
                    let y: &Matrix = &node.value;
                    let mut d = &g * y;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let dot = drow.sum();
                        drow.zip_mut_with(&yrow, |dv, &yv| *dv -= yv * dot);
                    }
                    send(*a, d, &mut grads);
                }
                Op::ConcatCols(a, b) => {
                    let split = self.value(*a).ncols();
                    send(*a, g.slice(s![.., ..split]).to_owned(), &mut grads);
                    send(*b, g.slice(s![.., split..]).to_owned(), &mut grads);
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        send(*p, g.slice(s![at..at + n, ..]).to_owned(), &mut grads);
                        at += n;
                    }
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).nrows();
                    let d = g.broadcast((n, g.ncols())).expect("row broadcast").to_owned() / n as f64;
                    send(*a, d, &mut grads);
                }
                Op::GatherRows(a, rows) => {
                    let mut d = Array2::zeros(self.value(*a).dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dst = d.row_mut(r);
                        dst += &g.row(k);
                    }
                    send(*a, d, &mut grads);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    smoothing,
                    reduction,
                    probs,
                } => {
                    let k = probs.ncols() as f64;
                    let mut d = probs - smoothing / k;
                    for (r, &t) in targets.iter().enumerate() {
                        d[[r, t]] -= 1.0 - smoothing;
                    }
                    let mut scale = g[[0, 0]];
                    if *reduction == Reduction::Mean && !targets.is_empty() {
                        scale /= targets.len() as f64;
                    }
                    send(*logits, d * scale, &mut grads);
                }
                Op::CrfNll {
                    emissions,
                    transitions,
                    start,
                    end,
                    tags,
                } => {
                    let view = CrfView {
                        transitions: self.value(*transitions),
                        start: self.value(*start),
                        end: self.value(*end),
                    };
                    let mut m = crf::marginals(self.value(*emissions), &view);
                    m.subtract_path(tags);
                    let scale = g[[0, 0]];
                    send(*emissions, m.unary * scale, &mut grads);
                    send(*transitions, m.pairwise * scale, &mut grads);
                    send(*start, m.start * scale, &mut grads);
                    send(*end, m.end * scale, &mut grads);
                }
            }
        }
        params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric_grad(value: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-5;
        let mut g = Array2::zeros(value.dim());
        for idx in ndarray::indices(value.dim()) {
            let mut p = value.clone();
            p[idx] += h;
            let up = f(&p);
            p[idx] -= 2.0 * h;
            let down = f(&p);
            g[idx] = (up - down) / (2.0 * h);
        }
        g
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) {
        let err = (a - b).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        assert!(err < tol, "max abs diff {err}\n{a}\n{b}");
    }

    #[test]
    fn composite_graph_gradients() {
        let w = array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]];
        let x = array![[1.0, 2.0], [-0.5, 0.3], [0.2, 0.2]];
        let b = array![[0.05, -0.1, 0.2]];
        let build = |w: &Matrix| -> f64 {
            let mut t = Tape::new();
            let (wv, xv, bv) = (t.param(0, w), t.constant(x.clone()), t.constant(b.clone()));
            let h = t.matmul(xv, wv);
            let h = t.add_row(h, bv);
            let h = t.tanh(h);
            let a = t.matmul_nt(h, h);
            let a = t.softmax_rows(a);
            let c = t.matmul(a, h);
            let c = t.concat_cols(c, h);
            let p = t.mean_rows(c);
            let all = t.concat_rows(&[p, c]);
            let sel = t.gather_rows(all, &[0, 2, 2]);
            let l = t.cross_entropy(sel, &[1, 4, 0], 0.1, Reduction::Mean);
            t.scalar(l)
        };
        let mut t = Tape::new();
        let (wv, xv, bv) = (t.param(0, &w), t.constant(x.clone()), t.constant(b.clone()));
        let h = t.matmul(xv, wv);
        let h = t.add_row(h, bv);
        let h = t.tanh(h);
        let a = t.matmul_nt(h, h);
        let a = t.softmax_rows(a);
        let c = t.matmul(a, h);
        let c = t.concat_cols(c, h);
        let p = t.mean_rows(c);
        let all = t.concat_rows(&[p, c]);
        let sel = t.gather_rows(all, &[0, 2, 2]);
        let l = t.cross_entropy(sel, &[1, 4, 0], 0.1, Reduction::Mean);
        assert!((t.scalar(l) - build(&w)).abs() < 1e-15);
        let g = t.backward(l, 1).pop().unwrap().unwrap();
        close(&g, &numeric_grad(&w, build), 1e-8);
    }

    #[test]
    fn t_matmul_and_scale() {
        let m = array![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        let hv = array![[0.5, -1.0], [2.0, 0.1], [0.3, 0.7]];
        let f = |h: &Matrix| -> f64 {
            let mut t = Tape::new();
            let (mv, hv) = (t.constant(m.clone()), t.param(0, h));
            let p = t.t_matmul(mv, hv);
            let p = t.scale(p, 3.0);
            let l = t.cross_entropy(p, &[0, 1], 0.0, Reduction::Sum);
            t.scalar(l)
        };
        let mut t = Tape::new();
        let (mv, hvar) = (t.constant(m.clone()), t.param(0, &hv));
        let p = t.t_matmul(mv, hvar);
        let p = t.scale(p, 3.0);
        let l = t.cross_entropy(p, &[0, 1], 0.0, Reduction::Sum);
        let g = t.backward(l, 1).pop().unwrap().unwrap();
        close(&g, &numeric_grad(&hv, f), 1e-8);
        // the unselected middle row gets no gradient
        assert!(g.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stop_grad_blocks_flow() {
        let w = array![[0.5]];
        let mut t = Tape::new();
        let wv = t.param(0, &w);
        let y = t.tanh(wv);
        let y = t.stop_grad(y);
        let l = t.cross_entropy(y, &[0], 0.0, Reduction::Sum);
        assert!(t.backward(l, 1)[0].is_none());
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_k() {
        let mut t = Tape::new();
        let l = t.constant(Array2::zeros((3, 7)));
        let ce = t.cross_entropy(l, &[0, 3, 6], 0.0, Reduction::Mean);
        assert!((t.scalar(ce) - 7f64.ln()).abs() < 1e-12);
    }
}
