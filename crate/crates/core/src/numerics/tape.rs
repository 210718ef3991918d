//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation of one forward pass. Constants and
//! parameter leaves enter through [`Tape::constant`] and [`Tape::param`];
//! [`Tape::backward`] walks the record in reverse and returns gradients for
//! every parameter in the store. Accumulation order is the reverse record
//! order, so results are bitwise reproducible.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::{dot, softmax_in_place};
use crate::numerics::{Gradients, Mask, ParamId, ParamStore, SparseMatrix, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Pointwise nonlinearity between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// A dense block written into a larger output by [`Tape::assemble`].
#[derive(Clone, Debug)]
pub struct Block {
    pub value: Var,
    pub rows: Rc<[usize]>,
    pub cols: Rc<[usize]>,
}

#[derive(Debug)]
struct BceSpec {
    probs: Var,
    rows: Vec<usize>,
    labels: Vec<u8>,
    w_pos: f64,
    w_neg: f64,
    eps: f64,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    SpMatMul(Rc<SparseMatrix>, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Activate(Var, Activation),
    LeakyRelu(Var, f64),
    SoftmaxRows(Var, Option<Rc<Mask>>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Rc<[usize]>),
    SelectCol(Var, usize),
    PairSum(Var, Var),
    Assemble(Vec<Block>),
    Mean(Vec<Var>),
    Sum(Var),
    WeightedBce(Box<BceSpec>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_bt(self.value(b))?;
        Ok(self.push(out, Op::MatMulBt(a, b)))
    }

    /// Constant sparse matrix times a dense node.
    pub fn sparse_matmul(&mut self, s: &Rc<SparseMatrix>, b: Var) -> Result<Var> {
        let out = s.matmul(self.value(b))?;
        Ok(self.push(out, Op::SpMatMul(Rc::clone(s), b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds the `1 × c` row `bias` to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        self.value(bias).expect_shape([1, c], "row bias")?;
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..r {
            for (o, &x) in out.row_mut(i).iter_mut().zip(&b) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::AddRowBias(a, bias)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        let out = self.value(a).map(|x| act.apply(x));
        self.push(out, Op::Activate(a, act))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Tanh)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// Row softmax; with a mask, excluded entries are exactly zero.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&Rc<Mask>>) -> Result<Var> {
        let mut out = self.value(a).clone();
        if let Some(m) = mask {
            if m.shape() != out.shape() {
                return Err(Error::Dimension(format!(
                    "softmax mask {:?} for scores {:?}",
                    m.shape(),
                    out.shape()
                )));
            }
        }
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r), mask.map(|m| m.row(r)));
        }
        Ok(self.push(out, Op::SoftmaxRows(a, mask.cloned())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p)[0])
            .ok_or_else(|| Error::Contract("concatenation of zero tensors".into()))?;
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p)[1]).collect();
        for &p in parts {
            if self.shape(p)[0] != rows {
                return Err(Error::Dimension(format!(
                    "concatenating {:?} with {rows} rows",
                    self.shape(p)
                )));
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(rows, total);
        for r in 0..rows {
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                out.row_mut(r)[offset..offset + w].copy_from_slice(self.value(p).row(r));
                offset += w;
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &Rc<[usize]>) -> Result<Var> {
        let out = self.value(a).gather_rows(rows)?;
        Ok(self.push(out, Op::GatherRows(a, Rc::clone(rows))))
    }

    /// Column `col` of `a` as an `n × 1` node.
    pub fn select_col(&mut self, a: Var, col: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        if col >= c {
            return Err(Error::Dimension(format!("column {col} of {:?}", [r, c])));
        }
        let v = self.value(a);
        let out = Tensor::from_vec(r, 1, (0..r).map(|i| v.get(i, col)).collect())?;
        Ok(self.push(out, Op::SelectCol(a, col)))
    }

    /// `out[i][j] = a[i] + b[j]` for column vectors `a` (`n × 1`) and `b` (`m × 1`).
    pub fn pair_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, ca] = self.shape(a);
        let [m, cb] = self.shape(b);
        if ca != 1 || cb != 1 {
            return Err(Error::Dimension(format!(
                "pair sum needs column vectors, got {:?} and {:?}",
                [n, ca],
                [m, cb]
            )));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = Tensor::zeros(n, m);
        for (i, &x) in av.iter().enumerate().take(n) {
            for (o, &y) in out.row_mut(i).iter_mut().zip(bv) {
                *o = x + y;
            }
        }
        Ok(self.push(out, Op::PairSum(a, b)))
    }

    /// Writes each block at its row/column coordinates of a zero `rows × cols`
    /// output. Blocks must not overlap.
    pub fn assemble(&mut self, rows: usize, cols: usize, blocks: Vec<Block>) -> Result<Var> {
        let mut out = Tensor::zeros(rows, cols);
        for b in &blocks {
            let v = self.value(b.value);
            v.expect_shape([b.rows.len(), b.cols.len()], "assembled block")?;
            for (bi, &r) in b.rows.iter().enumerate() {
                for (bj, &c) in b.cols.iter().enumerate() {
                    if r >= rows || c >= cols {
                        return Err(Error::Dimension(format!(
                            "block entry ({r}, {c}) outside {rows}x{cols}"
                        )));
                    }
                    out.set(r, c, v.get(bi, bj));
                }
            }
        }
        Ok(self.push(out, Op::Assemble(blocks)))
    }

    /// Elementwise mean of equally shaped nodes.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("mean of zero tensors".into()))?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let mut out = self.value(first).clone();
        for &p in &parts[1..] {
            out.add_assign(self.value(p))?;
        }
        let k = parts.len() as f64;
        out.data_mut().iter_mut().for_each(|x| *x /= k);
        Ok(self.push(out, Op::Mean(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Class-weighted binary cross-entropy over the listed rows of an
    /// `n × 2` probability node, using column 1 as the positive-class
    /// probability. Probabilities are clamped to `[eps, 1 - eps]`.
    pub fn weighted_bce(
        &mut self,
        probs: Var,
        rows: &[usize],
        labels: &[u8],
        w_pos: f64,
        w_neg: f64,
        eps: f64,
    ) -> Result<Var> {
        let p = self.value(probs);
        if p.cols() != 2 {
            return Err(Error::Dimension(format!(
                "weighted BCE expects two-class probabilities, got {:?}",
                p.shape()
            )));
        }
        if rows.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} loss rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut loss = 0.0;
        for (&r, &y) in rows.iter().zip(labels) {
            if r >= p.rows() {
                return Err(Error::Dimension(format!("loss row {r} of {:?}", p.shape())));
            }
            let pi = p.get(r, 1).clamp(eps, 1.0 - eps);
            loss += if y == 1 {
                -w_pos * pi.ln()
            } else {
                -w_neg * (1.0 - pi).ln()
            };
        }
        let spec = BceSpec {
            probs,
            rows: rows.to_vec(),
            labels: labels.to_vec(),
            w_pos,
            w_neg,
            eps,
        };
        Ok(self.push(Tensor::scalar(loss), Op::WeightedBce(Box::new(spec))))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter
    /// of `store`. Parameters absent from the tape get zero gradients.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::Contract(format!(
                "backward from a non-scalar node of shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(store);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.accumulate(*id, &g)?,
                Op::MatMul(a, b) => {
                    let ga = g.matmul_bt(self.value(*b))?;
                    let gb = self.value(*a).matmul_at(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MatMulBt(a, b) => {
                    // out = a bᵀ: da = g b, db = gᵀ a
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.matmul_at(self.value(*a))?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::SpMatMul(s, b) => {
                    let mut gb = Tensor::zeros(s.shape()[1], g.cols());
                    for (r, c, v) in s.iter() {
                        let src = g.row(r).to_vec();
                        for (o, x) in gb.row_mut(c).iter_mut().zip(src) {
                            *o += v * x;
                        }
                    }
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::AddRowBias(a, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, g)?;
                    accumulate(&mut grads, *bias, gb)?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|x| x * f))?,
                Op::Activate(a, act) => {
                    let ga = match act {
                        Activation::Relu => g.zip_map(self.value(*a), |x, z| {
                            if z > 0.0 {
                                x
                            } else {
                                0.0
                            }
                        })?,
                        Activation::Tanh => g.zip_map(&node.value, |x, y| x * (1.0 - y * y))?,
                        Activation::Identity => g,
                    };
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::LeakyRelu(a, slope) => {
                    let s = *slope;
                    let ga = g.zip_map(self.value(*a), |x, z| if z > 0.0 { x } else { s * x })?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::SoftmaxRows(a, mask) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner = dot(yr, gr);
                        let m = mask.as_ref().map(|m| m.row(r));
                        for (j, o) in ga.row_mut(r).iter_mut().enumerate() {
                            if m.is_none_or(|m| m[j]) {
                                *o = yr[j] * (gr[j] - inner);
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p)[1];
                        let mut gp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, p, gp)?;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let [n, c] = self.shape(*a);
                    let mut ga = Tensor::zeros(n, c);
                    for (k, &r) in rows.iter().enumerate() {
                        for (o, &x) in ga.row_mut(r).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::SelectCol(a, col) => {
                    let [n, c] = self.shape(*a);
                    let mut ga = Tensor::zeros(n, c);
                    for i in 0..n {
                        ga.set(i, *col, g.get(i, 0));
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::PairSum(a, b) => {
                    let [n, m] = g.shape();
                    let mut ga = Tensor::zeros(n, 1);
                    let mut gb = Tensor::zeros(m, 1);
                    for i in 0..n {
                        let row = g.row(i);
                        ga.set(i, 0, row.iter().sum());
                        for (o, &x) in gb.data_mut().iter_mut().zip(row) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Assemble(blocks) => {
                    for b in blocks {
                        let mut gb = Tensor::zeros(b.rows.len(), b.cols.len());
                        for (bi, &r) in b.rows.iter().enumerate() {
                            for (bj, &c) in b.cols.iter().enumerate() {
                                gb.set(bi, bj, g.get(r, c));
                            }
                        }
                        accumulate(&mut grads, b.value, gb)?;
                    }
                }
                Op::Mean(parts) => {
                    let k = parts.len() as f64;
                    let gp = g.map(|x| x / k);
                    for &p in parts {
                        accumulate(&mut grads, p, gp.clone())?;
                    }
                }
                Op::Sum(a) => {
                    let [r, c] = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.item()?))?;
                }
                Op::WeightedBce(spec) => {
                    let p = self.value(spec.probs);
                    let upstream = g.item()?;
                    let mut gp = Tensor::zeros(p.rows(), p.cols());
                    for (&r, &y) in spec.rows.iter().zip(&spec.labels) {
                        let pi = p.get(r, 1);
                        if pi < spec.eps || pi > 1.0 - spec.eps {
                            continue;
                        }
                        let d = if y == 1 {
                            -spec.w_pos / pi
                        } else {
                            spec.w_neg / (1.0 - pi)
                        };
                        let cur = gp.get(r, 1);
                        gp.set(r, 1, cur + upstream * d);
                    }
                    accumulate(&mut grads, spec.probs, gp)?;
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error, ParamGroup};

    fn check<F>(store: &ParamStore, build: F)
    where
        F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store).unwrap();
        let analytic = tape.backward(loss, store).unwrap();
        let numeric = finite_diff_grad(store, 1e-5, |s| {
            let mut t = Tape::new();
            let l = build(&mut t, s)?;
            t.value(l).item()
        })
        .unwrap();
        let (err, at) = max_relative_error(store, &analytic, &numeric);
        assert!(err < 1e-6, "relative error {err} at {at:?}");
    }

    #[test]
    fn sum_gives_all_ones() {
        let mut store = ParamStore::new();
        let w = store.glorot("w", ParamGroup::Graph, 2, 2, 1);
        let mut tape = Tape::new();
        let v = tape.param(&store, w);
        let loss = tape.sum(v);
        let g = tape.backward(loss, &store).unwrap();
        assert_eq!(g.get(w), &Tensor::filled(2, 2, 1.0));
    }

    #[test]
    fn squared_norm_gradient() {
        let mut store = ParamStore::new();
        let w = store.insert("w", ParamGroup::Graph, Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
        let mut tape = Tape::new();
        let v = tape.param(&store, w);
        let sq = tape.mul(v, v).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss, &store).unwrap();
        assert_eq!(g.get(w).data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(v, &store), Err(Error::Contract(_))));
    }

    #[test]
    fn dense_chain_matches_finite_differences() {
        let mut store = ParamStore::new();
        let a = store.glorot("a", ParamGroup::Graph, 4, 3, 1);
        let b = store.glorot("b", ParamGroup::Graph, 3, 5, 2);
        let bias = store.glorot("bias", ParamGroup::Graph, 1, 5, 3);
        let c = store.glorot("c", ParamGroup::Graph, 2, 5, 4);
        check(&store, |t, s| {
            let (a, b, bias, c) = (t.param(s, a), t.param(s, b), t.param(s, bias), t.param(s, c));
            let ab = t.matmul(a, b)?;
            let ab = t.add_row_bias(ab, bias)?;
            let h = t.tanh(ab);
            let k = t.matmul_bt(h, c)?;
            let k = t.leaky_relu(k, 0.2);
            let sm = t.softmax_rows(k, None)?;
            let sel = t.select_col(sm, 1)?;
            let sq = t.mul(sel, sel)?;
            Ok(t.sum(sq))
        });
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let mut store = ParamStore::new();
        let x = store.glorot("x", ParamGroup::Graph, 4, 2, 5);
        let y = store.glorot("y", ParamGroup::Graph, 4, 2, 6);
        let sparse = Rc::new(
            SparseMatrix::from_triplets(4, 4, [(0, 1, 0.5), (1, 0, 0.5), (2, 2, 1.0), (3, 0, 2.0)])
                .unwrap(),
        );
        let mut mask = Mask::full(4, 4);
        mask.set(0, 3, false);
        mask.set(2, 1, false);
        let mask = Rc::new(mask);
        let rows: Rc<[usize]> = Rc::from(vec![2usize, 0, 2]);
        check(&store, |t, s| {
            let (x, y) = (t.param(s, x), t.param(s, y));
            let sx = t.sparse_matmul(&sparse, x)?;
            let cat = t.concat_cols(&[sx, y])?;
            let c0 = t.select_col(cat, 0)?;
            let c3 = t.select_col(cat, 3)?;
            let pairs = t.pair_sum(c0, c3)?;
            let att = t.softmax_rows(pairs, Some(&mask))?;
            let mixed = t.matmul(att, y)?;
            let m = t.mean(&[mixed, x])?;
            let r = t.relu(m);
            let g = t.gather_rows(r, &rows)?;
            let scaled = t.scale(g, 1.7);
            let sq = t.mul(scaled, scaled)?;
            Ok(t.sum(sq))
        });
    }

    #[test]
    fn assemble_and_bce_match_finite_differences() {
        let mut store = ParamStore::new();
        let top = store.glorot("top", ParamGroup::Graph, 1, 2, 7);
        let bottom = store.glorot("bottom", ParamGroup::Graph, 2, 2, 8);
        check(&store, |t, s| {
            let (top, bottom) = (t.param(s, top), t.param(s, bottom));
            let full = t.assemble(
                3,
                2,
                vec![
                    Block { value: top, rows: Rc::from(vec![1usize]), cols: Rc::from(vec![0usize, 1]) },
                    Block { value: bottom, rows: Rc::from(vec![0usize, 2]), cols: Rc::from(vec![1usize, 0]) },
                ],
            )?;
            let p = t.softmax_rows(full, None)?;
            t.weighted_bce(p, &[0, 1, 2], &[1, 0, 1], 0.3, 0.7, 1e-12)
        });
    }

    #[test]
    fn masked_softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[[1.0, 2.0, 3.0], [0.5, -1.0, 4.0]]).unwrap());
        let mut mask = Mask::full(2, 3);
        mask.set(1, 2, false);
        let y = tape.softmax_rows(x, Some(&Rc::new(mask))).unwrap();
        for r in 0..2 {
            assert!((tape.value(y).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(tape.value(y).get(1, 2), 0.0);
    }
}
