//! Reverse-mode differentiation over a small, closed set of matrix ops.
//!
//! Every op evaluates eagerly when it is recorded; [`Graph::backward`] walks
//! the tape in reverse and accumulates into the gradients of the
//! [`ParamStore`] the parameter leaves were read from. Batched values are
//! `B x n` matrices (one row per sample).

use super::tensor::{ParamId, ParamStore, Tensor};

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    /// `x · wᵀ` with `x: B x n`, `w: m x n`.
    MatMulT(Var, Var),
    /// `x + b` with `b: 1 x n` broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `x ⊙ c` with `c: B x 1` broadcast over columns.
    MulCol(Var, Var),
    /// `c ⊗ r` with `c: B x 1`, `r: 1 x n`.
    Outer(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    /// Natural log with the argument clamped below at [`LOG_FLOOR`].
    Ln(Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Row-wise softmax of `x / tau`.
    Softmax(Var, f64),
    Concat(Vec<Var>),
    Col(Var, usize),
    Row(Var, usize),
    /// Row-wise `Σ_j w[:, j] · items[j]`.
    WeightedSum(Var, Vec<Var>),
    MeanRows(Var),
    SumAll(Var),
    /// Row-wise Euclidean norm; `B x n -> B x 1`.
    Norm(Var),
    /// Mean over rows of `-ln max(p[r, label_r], LOG_FLOOR)`.
    Nll(Var, Vec<usize>),
    /// Row `r` taken from the first operand when `mask[r]`, else the second.
    Select(Vec<bool>, Var, Var),
}

pub const LOG_FLOOR: f64 = 1e-12;

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_cache: Vec<Option<Var>>,
}

impl Graph {
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Reads a parameter into the graph. Repeated reads of the same id
    /// return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_cache.len() <= id.0 {
            self.param_cache.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_cache[id.0] {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.param_cache[id.0] = Some(v);
        v
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        assert_eq!(xv.cols(), wv.cols(), "matmul_t inner dims");
        let (b, n, m) = (xv.rows(), xv.cols(), wv.rows());
        let mut out = Tensor::zeros(b, m);
        for r in 0..b {
            let xr = xv.row(r);
            let or = out.row_mut(r);
            for (j, o) in or.iter_mut().enumerate() {
                let wr = wv.row(j);
                let mut acc = 0.0;
                for k in 0..n {
                    acc += xr[k] * wr[k];
                }
                *o = acc;
            }
        }
        self.push(out, Op::MatMulT(x, w))
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        assert!(bv.rows() == 1 && bv.cols() == xv.cols(), "add_row shape");
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, bb) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        self.push(out, Op::AddRow(x, b))
    }

    /// `x · wᵀ + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul_t(x, w);
        self.add_row(xw, b)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(av.same_shape(bv), "elementwise shape {:?} vs {:?}", av.shape(), bv.shape());
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        let data = av.data().iter().map(|x| f(*x)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn mul_col(&mut self, x: Var, c: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(c));
        assert!(cv.cols() == 1 && cv.rows() == xv.rows(), "mul_col shape");
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let s = cv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        self.push(out, Op::MulCol(x, c))
    }

    pub fn outer(&mut self, c: Var, r: Var) -> Var {
        let (cv, rv) = (self.value(c), self.value(r));
        assert!(cv.cols() == 1 && rv.rows() == 1, "outer shape");
        let mut out = Tensor::zeros(cv.rows(), rv.cols());
        for i in 0..cv.rows() {
            let s = cv.get(i, 0);
            for (o, x) in out.row_mut(i).iter_mut().zip(rv.data()) {
                *o = s * x;
            }
        }
        self.push(out, Op::Outer(c, r))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.map(x, super::sigmoid_scalar);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.map(x, f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.map(x, |a| a.max(LOG_FLOOR).ln());
        self.push(v, Op::Ln(x))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.map(x, |a| a * s);
        self.push(v, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let v = self.map(x, |a| a + s);
        self.push(v, Op::AddScalar(x))
    }

    pub fn softmax(&mut self, x: Var, tau: f64) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            super::softmax_into(xv.row(r), tau, out.row_mut(r));
        }
        self.push(out, Op::Softmax(x, tau))
    }

    pub fn concat(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "concat of nothing");
        let rows = self.value(items[0]).rows();
        let cols: usize = items.iter().map(|v| self.value(*v).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for v in items {
                let t = self.value(*v);
                assert_eq!(t.rows(), rows, "concat rows");
                out.row_mut(r)[off..off + t.cols()].copy_from_slice(t.row(r));
                off += t.cols();
            }
        }
        self.push(out, Op::Concat(items.to_vec()))
    }

    pub fn col(&mut self, x: Var, j: usize) -> Var {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|r| xv.get(r, j)).collect();
        self.push(Tensor::col_vector(data), Op::Col(x, j))
    }

    pub fn row(&mut self, x: Var, i: usize) -> Var {
        let v = Tensor::row_vector(self.value(x).row(i).to_vec());
        self.push(v, Op::Row(x, i))
    }

    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let wv = self.value(weights);
        assert_eq!(wv.cols(), items.len(), "weighted_sum arity");
        let first = self.value(items[0]);
        let mut out = Tensor::zeros(first.rows(), first.cols());
        for (j, it) in items.iter().enumerate() {
            let iv = self.value(*it);
            assert!(iv.same_shape(&out), "weighted_sum item shape");
            for r in 0..out.rows() {
                let w = wv.get(r, j);
                for (o, x) in out.row_mut(r).iter_mut().zip(iv.row(r)) {
                    *o += w * x;
                }
            }
        }
        self.push(out, Op::WeightedSum(weights, items.to_vec()))
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(1, xv.cols());
        let n = xv.rows() as f64;
        for r in 0..xv.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(xv.row(r)) {
                *o += v / n;
            }
        }
        self.push(out, Op::MeanRows(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = (0..xv.rows())
            .map(|r| xv.row(r).iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        self.push(Tensor::col_vector(data), Op::Norm(x))
    }

    pub fn nll(&mut self, probs: Var, labels: &[usize]) -> Var {
        let pv = self.value(probs);
        assert_eq!(pv.rows(), labels.len(), "nll batch size");
        let n = labels.len() as f64;
        let loss = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| -pv.get(r, y).max(LOG_FLOOR).ln())
            .sum::<f64>()
            / n;
        self.push(Tensor::scalar(loss), Op::Nll(probs, labels.to_vec()))
    }

    pub fn select(&mut self, mask: &[bool], a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(av.same_shape(bv) && av.rows() == mask.len(), "select shape");
        let mut out = bv.clone();
        for (r, m) in mask.iter().enumerate() {
            if *m {
                out.row_mut(r).copy_from_slice(av.row(r));
            }
        }
        self.push(out, Op::Select(mask.to_vec(), a, b))
    }

    /// Backpropagates from the scalar `loss`, adding parameter gradients
    /// into `store` (callers zero them first).
    pub fn backward(&self, loss: Var, store: &mut ParamStore) {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let lv = self.value(loss);
        grads[loss.0] = Some(Tensor::filled(lv.rows(), lv.cols(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let pg = store.grad_mut(*id);
                    for (a, b) in pg.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                Op::MatMulT(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (b, n, m) = (xv.rows(), xv.cols(), wv.rows());
                    let mut dx = Tensor::zeros(b, n);
                    let mut dw = Tensor::zeros(m, n);
                    for r in 0..b {
                        let gr = g.row(r);
                        let xr = xv.row(r);
                        for j in 0..m {
                            let gj = gr[j];
                            if gj == 0.0 {
                                continue;
                            }
                            let wr = wv.row(j);
                            let dxr = dx.row_mut(r);
                            for k in 0..n {
                                dxr[k] += gj * wr[k];
                            }
                            let dwr = dw.row_mut(j);
                            for k in 0..n {
                                dwr[k] += gj * xr[k];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                }
                Op::AddRow(x, b) => {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, scaled(&g, -1.0));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = hadamard(&g, self.value(*b));
                    let db = hadamard(&g, self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MulCol(x, c) => {
                    let (xv, cv) = (self.value(*x), self.value(*c));
                    let mut dx = g.clone();
                    let mut dc = Tensor::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let s = cv.get(r, 0);
                        dx.row_mut(r).iter_mut().for_each(|v| *v *= s);
                        dc.set(r, 0, dot(g.row(r), xv.row(r)));
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *c, dc);
                }
                Op::Outer(c, rv) => {
                    let (cv, rvv) = (self.value(*c), self.value(*rv));
                    let mut dc = Tensor::zeros(cv.rows(), 1);
                    let mut dr = Tensor::zeros(1, rvv.cols());
                    for i in 0..g.rows() {
                        let s = cv.get(i, 0);
                        dc.set(i, 0, dot(g.row(i), rvv.data()));
                        for (d, v) in dr.data_mut().iter_mut().zip(g.row(i)) {
                            *d += s * v;
                        }
                    }
                    accumulate(&mut grads, *c, dc);
                    accumulate(&mut grads, *rv, dr);
                }
                Op::Sigmoid(x) => {
                    let d = zip_map(&g, &node.value, |gv, y| gv * y * (1.0 - y));
                    accumulate(&mut grads, *x, d);
                }
                Op::Tanh(x) => {
                    let d = zip_map(&g, &node.value, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut grads, *x, d);
                }
                Op::Ln(x) => {
                    let d = zip_map(&g, self.value(*x), |gv, a| {
                        if a > LOG_FLOOR {
                            gv / a
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *x, d);
                }
                Op::Scale(x, s) => accumulate(&mut grads, *x, scaled(&g, *s)),
                Op::AddScalar(x) => accumulate(&mut grads, *x, g),
                Op::Softmax(x, tau) => {
                    let y = &node.value;
                    let mut dx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let s = dot(yr, gr);
                        for (k, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = yr[k] * (gr[k] - s) / tau;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat(items) => {
                    let mut off = 0;
                    for v in items {
                        let c = self.value(*v).cols();
                        let mut d = Tensor::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        off += c;
                        accumulate(&mut grads, *v, d);
                    }
                }
                Op::Col(x, j) => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        d.set(r, *j, g.get(r, 0));
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::Row(x, i) => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.rows(), xv.cols());
                    d.row_mut(*i).copy_from_slice(g.data());
                    accumulate(&mut grads, *x, d);
                }
                Op::WeightedSum(w, items) => {
                    let wv = self.value(*w);
                    let mut dw = Tensor::zeros(wv.rows(), wv.cols());
                    for (j, it) in items.iter().enumerate() {
                        let iv = self.value(*it);
                        let mut di = Tensor::zeros(iv.rows(), iv.cols());
                        for r in 0..g.rows() {
                            let wr = wv.get(r, j);
                            dw.set(r, j, dot(g.row(r), iv.row(r)));
                            for (d, gv) in di.row_mut(r).iter_mut().zip(g.row(r)) {
                                *d = wr * gv;
                            }
                        }
                        accumulate(&mut grads, *it, di);
                    }
                    accumulate(&mut grads, *w, dw);
                }
                Op::MeanRows(x) => {
                    let xv = self.value(*x);
                    let n = xv.rows() as f64;
                    let mut d = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        for (dd, gv) in d.row_mut(r).iter_mut().zip(g.data()) {
                            *dd = gv / n;
                        }
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::SumAll(x) => {
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, Tensor::filled(xv.rows(), xv.cols(), g.item()));
                }
                Op::Norm(x) => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        let nrm = node.value.get(r, 0);
                        if nrm > 0.0 {
                            let s = g.get(r, 0) / nrm;
                            for (dd, xx) in d.row_mut(r).iter_mut().zip(xv.row(r)) {
                                *dd = s * xx;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::Nll(p, labels) => {
                    let pv = self.value(*p);
                    let n = labels.len() as f64;
                    let mut d = Tensor::zeros(pv.rows(), pv.cols());
                    for (r, &y) in labels.iter().enumerate() {
                        let q = pv.get(r, y);
                        if q > LOG_FLOOR {
                            d.set(r, y, -g.item() / (n * q));
                        }
                    }
                    accumulate(&mut grads, *p, d);
                }
                Op::Select(mask, a, b) => {
                    let mut da = Tensor::zeros(g.rows(), g.cols());
                    let mut db = Tensor::zeros(g.rows(), g.cols());
                    for (r, m) in mask.iter().enumerate() {
                        let dst = if *m { da.row_mut(r) } else { db.row_mut(r) };
                        dst.copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, d: Tensor) {
    match &mut grads[v.0] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(d.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled(t: &Tensor, s: f64) -> Tensor {
    let data = t.data().iter().map(|v| v * s).collect();
    Tensor::from_vec(t.rows(), t.cols(), data).expect("same shape")
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SeededRng};

    fn random(rng: &mut SeededRng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    /// Every op in one scalar expression, checked against central differences.
    #[test]
    fn all_ops_pass_grad_check() {
        let mut rng = SeededRng::new(11);
        let mut store = ParamStore::new();
        let x = store.add("x", random(&mut rng, 3, 4));
        let w = store.add("w", random(&mut rng, 2, 4));
        let b = store.add("b", random(&mut rng, 1, 2));
        let c = store.add("c", random(&mut rng, 3, 1));
        let r = store.add("r", random(&mut rng, 1, 2));
        let p = store.add("p", random(&mut rng, 3, 3));
        let labels = [0usize, 2, 1];

        let f = |s: &mut ParamStore, want_grad: bool| {
            let mut g = Graph::new();
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let (cv, rv, pv) = (g.param(s, c), g.param(s, r), g.param(s, p));
            let a = g.affine(xv, wv, bv);
            let t = g.tanh(a);
            let o = g.outer(cv, rv);
            let sg = g.sigmoid(o);
            let m = g.mul(t, sg);
            let mc = g.mul_col(m, cv);
            let sel = g.select(&[true, false, true], mc, t);
            let sm = g.softmax(pv, 0.7);
            let c0 = g.col(sel, 0);
            let c1 = g.col(sel, 1);
            let cat = g.concat(&[c0, c1, c0]);
            let ws = g.weighted_sum(sm, &[sel, t, mc]);
            let sh = sub_helper(&mut g, cat, sm, sel);
            let mix = g.add(ws, sh);
            let nr = g.norm(mix);
            let row = g.row(mix, 1);
            let mr = g.mean_rows(nr);
            let lnv = g.ln(sm);
            let e = g.mul(sm, lnv);
            let es = g.sum_all(e);
            let nll = g.nll(sm, &labels);
            let rs = g.sum_all(row);
            let rs = g.scale(rs, 0.3);
            let total = g.add(mr, es);
            let total = g.add(total, nll);
            let total = g.add(total, rs);
            let total = g.add_scalar(total, 2.0);
            if want_grad {
                g.backward(total, s);
            }
            g.value(total).item()
        };

        fn sub_helper(g: &mut Graph, cat: Var, sm: Var, sel: Var) -> Var {
            let d = g.sub(cat, sm);
            let c0 = g.col(d, 0);
            g.mul_col(sel, c0)
        }

        let err = grad_check(&mut store, 1e-5, |s, want| Ok(f(s, want))).unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn softmax_rows_are_simplex() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 50.0]).unwrap());
        let s = g.softmax(x, 0.5);
        for r in 0..2 {
            let sum: f64 = g.value(s).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
