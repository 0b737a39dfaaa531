//! Reverse-mode differentiation over [`Tensor2`] values.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Nodes are
//! appended in evaluation order, so the node vector is already a topological
//! order and [`Tape::backward`] is a single reverse sweep that visits each node
//! once. Broadcasting is limited to adding a `1×n` bias row to every row.

use crate::error::{Error, Result};

use super::tensor::{matmul_nt_acc, matmul_tn_acc, Tensor2};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor2),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Var, Var),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    /// Per-column mean of the selected rows; `sets[c]` holds the rows of column `c`.
    TopkMeanCols(Var, Vec<Vec<usize>>),
    /// `out[0][c] = mean(input[t][0] for t in sets[c])`.
    GatherMean(Var, Vec<Vec<usize>>),
    /// Zero-padded temporal window unfold with the given odd kernel size.
    Unfold(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor2,
    op: Op,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    /// Gradient of the output w.r.t. `v`; `None` when `v` does not influence it.
    pub fn get(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor2> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

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

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(Error::dim("add", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let value = x.zip_map(y, |p, q| p + q);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds a `1×n` row to every row of an `m×n` input.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::dim(
                "add-row",
                format!("{:?} plus bias {:?}", x.shape(), b.shape()),
            ));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            for (o, bv) in value.row_mut(r).iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.push(value, Op::AddRow(a, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(Error::dim("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let value = x.zip_map(y, |p, q| p * q);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant (non-differentiated) tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor2) -> Result<Var> {
        let x = self.value(a);
        if !x.same_shape(&c) {
            return Err(Error::dim(
                "mul-const",
                format!("{:?} vs {:?}", x.shape(), c.shape()),
            ));
        }
        let value = x.zip_map(&c, |p, q| p * q);
        Ok(self.push(value, Op::MulConst(a, c)))
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        let value = self.value(a).map(|v| alpha * v);
        self.push(value, Op::Scale(a, alpha))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if let Some(bad) = x.data().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let value = x.map(f64::ln);
        Ok(self.push(value, Op::Log(a)))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push(value, Op::Square(a))
    }

    /// Clamp to `[lo, hi]`; gradient passes only where the input is strictly inside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hcat(self.value(b))?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor2::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor2::scalar(x.sum() / x.len().max(1) as f64);
        self.push(value, Op::Mean(a))
    }

    /// Per-column mean of the `k` largest entries (ties broken by lower row
    /// index). Returns the `1×cols` result and the selected rows per column.
    pub fn topk_mean_cols(&mut self, a: Var, k: usize) -> Result<(Var, Vec<Vec<usize>>)> {
        let x = self.value(a);
        if k == 0 || k > x.rows() {
            return Err(Error::dim(
                "topk-mean",
                format!("k={k} with {} rows", x.rows()),
            ));
        }
        let mut sets = Vec::with_capacity(x.cols());
        let mut out = Tensor2::zeros(1, x.cols());
        for c in 0..x.cols() {
            let column = x.col(c);
            let idx = topk_indices(&column, k);
            let m = idx.iter().map(|&t| column[t]).sum::<f64>() / k as f64;
            out.set(0, c, m);
            sets.push(idx);
        }
        let v = self.push(out, Op::TopkMeanCols(a, sets.clone()));
        Ok((v, sets))
    }

    /// Means of a `T×1` column over each index set, as a `1×sets.len()` row.
    pub fn gather_mean(&mut self, a: Var, sets: &[Vec<usize>]) -> Result<Var> {
        let x = self.value(a);
        if x.cols() != 1 {
            return Err(Error::dim("gather-mean", format!("input {:?}", x.shape())));
        }
        let mut out = Tensor2::zeros(1, sets.len());
        for (c, set) in sets.iter().enumerate() {
            if set.is_empty() || set.iter().any(|&t| t >= x.rows()) {
                return Err(Error::dim(
                    "gather-mean",
                    format!("index set {set:?} over {} rows", x.rows()),
                ));
            }
            let m = set.iter().map(|&t| x.get(t, 0)).sum::<f64>() / set.len() as f64;
            out.set(0, c, m);
        }
        Ok(self.push(out, Op::GatherMean(a, sets.to_vec())))
    }

    /// Stacks each row with its temporal neighbours: row `t` of the output is
    /// `[x[t-h] | … | x[t] | … | x[t+h]]` with `h = kernel / 2`, zeros past the ends.
    pub fn unfold(&mut self, a: Var, kernel: usize) -> Result<Var> {
        if kernel == 0 || kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size {kernel} must be odd")));
        }
        let x = self.value(a);
        let value = unfold_forward(x, kernel);
        Ok(self.push(value, Op::Unfold(a, kernel)))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.value(out).shape();
        if shape != (1, 1) {
            return Err(Error::dim("backward", format!("output shape {shape:?} is not scalar")));
        }
        Ok(self.backward_with(out, Tensor2::scalar(1.0)))
    }

    /// Reverse sweep seeded with an arbitrary upstream gradient for `out`.
    pub fn backward_with(&self, out: Var, seed: Tensor2) -> Gradients {
        let mut grads: Vec<Option<Tensor2>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed);

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    // Leaves keep their gradient for the caller.
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = slot(&mut grads, *a, av.shape());
                    matmul_nt_acc(&g, bv, ga);
                    let gb = slot(&mut grads, *b, bv.shape());
                    matmul_tn_acc(av, &g, gb);
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &g);
                    slot(&mut grads, *b, g.shape()).axpy(1.0, &g);
                }
                Op::AddRow(a, bias) => {
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &g);
                    let gb = slot(&mut grads, *bias, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |u, y| u * y);
                    let db = g.zip_map(self.value(*a), |u, x| u * x);
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &da);
                    slot(&mut grads, *b, g.shape()).axpy(1.0, &db);
                }
                Op::MulConst(a, c) => {
                    let da = g.zip_map(c, |u, y| u * y);
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &da);
                }
                Op::Scale(a, alpha) => {
                    slot(&mut grads, *a, g.shape()).axpy(*alpha, &g);
                }
                Op::Relu(a) => {
                    let da = g.zip_map(self.value(*a), |u, x| if x > 0.0 { u } else { 0.0 });
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &da);
                }
                Op::Sigmoid(a) => {
                    let da = g.zip_map(&node.value, |u, s| u * s * (1.0 - s));
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &da);
                }
                Op::Log(a) => {
                    let da = g.zip_map(self.value(*a), |u, x| u / x);
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &da);
                }
                Op::Square(a) => {
                    let da = g.zip_map(self.value(*a), |u, x| 2.0 * u * x);
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &da);
                }
                Op::Clamp(a, lo, hi) => {
                    let da = g.zip_map(self.value(*a), |u, x| {
                        if x > *lo && x < *hi {
                            u
                        } else {
                            0.0
                        }
                    });
                    slot(&mut grads, *a, g.shape()).axpy(1.0, &da);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let rows = g.rows();
                    let ga = slot(&mut grads, *a, (rows, ca));
                    for r in 0..rows {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(&g.row(r)[..ca]) {
                            *o += v;
                        }
                    }
                    let gb = slot(&mut grads, *b, (rows, cb));
                    for r in 0..rows {
                        for (o, v) in gb.row_mut(r).iter_mut().zip(&g.row(r)[ca..]) {
                            *o += v;
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let s = &node.value;
                    let ga = slot(&mut grads, *a, g.shape());
                    for r in 0..g.rows() {
                        let srow = s.row(r);
                        let grow = g.row(r);
                        let dot: f64 = srow.iter().zip(grow).map(|(p, u)| p * u).sum();
                        for ((o, p), u) in ga.row_mut(r).iter_mut().zip(srow).zip(grow) {
                            *o += p * (u - dot);
                        }
                    }
                }
                Op::Sum(a) => {
                    let u = g.data()[0];
                    let shape = self.value(*a).shape();
                    for o in slot(&mut grads, *a, shape).data_mut() {
                        *o += u;
                    }
                }
                Op::Mean(a) => {
                    let shape = self.value(*a).shape();
                    let u = g.data()[0] / (shape.0 * shape.1).max(1) as f64;
                    for o in slot(&mut grads, *a, shape).data_mut() {
                        *o += u;
                    }
                }
                Op::TopkMeanCols(a, sets) => {
                    let shape = self.value(*a).shape();
                    let ga = slot(&mut grads, *a, shape);
                    for (c, set) in sets.iter().enumerate() {
                        let u = g.get(0, c) / set.len() as f64;
                        for &t in set {
                            let cur = ga.get(t, c);
                            ga.set(t, c, cur + u);
                        }
                    }
                }
                Op::GatherMean(a, sets) => {
                    let shape = self.value(*a).shape();
                    let ga = slot(&mut grads, *a, shape);
                    for (c, set) in sets.iter().enumerate() {
                        let u = g.get(0, c) / set.len() as f64;
                        for &t in set {
                            let cur = ga.get(t, 0);
                            ga.set(t, 0, cur + u);
                        }
                    }
                }
                Op::Unfold(a, kernel) => {
                    let shape = self.value(*a).shape();
                    let ga = slot(&mut grads, *a, shape);
                    unfold_backward(&g, *kernel, ga);
                }
            }
        }
        Gradients { grads }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor2>], v: Var, shape: (usize, usize)) -> &'a mut Tensor2 {
    grads[v.0].get_or_insert_with(|| Tensor2::zeros(shape.0, shape.1))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Indices of the `k` largest entries, ties broken by lower index, returned
/// in selection order.
pub fn topk_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    order.truncate(k);
    order
}

pub(crate) fn unfold_forward(x: &Tensor2, kernel: usize) -> Tensor2 {
    let (t, d) = x.shape();
    let half = (kernel / 2) as isize;
    let mut out = Tensor2::zeros(t, kernel * d);
    for r in 0..t {
        let orow = out.row_mut(r);
        for (slot, off) in (-half..=half).enumerate() {
            let src = r as isize + off;
            if src < 0 || src >= t as isize {
                continue;
            }
            orow[slot * d..(slot + 1) * d].copy_from_slice(x.row(src as usize));
        }
    }
    out
}

fn unfold_backward(g: &Tensor2, kernel: usize, ga: &mut Tensor2) {
    let (t, d) = ga.shape();
    let half = (kernel / 2) as isize;
    for r in 0..t {
        let grow = g.row(r);
        for (slot, off) in (-half..=half).enumerate() {
            let src = r as isize + off;
            if src < 0 || src >= t as isize {
                continue;
            }
            let dst = ga.row_mut(src as usize);
            for (o, v) in dst.iter_mut().zip(&grow[slot * d..(slot + 1) * d]) {
                *o += v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_definition() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::row_vector(&[-2.0, 3.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 3.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::row_vector(&[0.0, 0.0]));
        let y = tape.softmax_rows(x);
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn topk_mean_value_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::column(&[0.1, 0.9, 0.4]));
        let (m, sets) = tape.topk_mean_cols(x, 2).unwrap();
        assert!((tape.scalar_value(m) - 0.65).abs() < 1e-12);
        assert_eq!(sets, vec![vec![1, 2]]);
        let grads = tape.backward(m).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn topk_ties_prefer_lower_index() {
        assert_eq!(topk_indices(&[1.0, 2.0, 2.0, 2.0], 2), vec![1, 2]);
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::row_vector(&[1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(Error::Domain { .. })));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn matmul_backward_rule() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor2::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = tape.leaf(Tensor2::from_rows(&[&[1.0], &[1.0]]));
        let y = tape.matmul(a, b).unwrap();
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn unfold_pads_with_zeros() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::column(&[1.0, 2.0, 3.0]));
        let u = tape.unfold(x, 3).unwrap();
        assert_eq!(
            tape.value(u).data(),
            &[0.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 0.0]
        );
        assert!(tape.unfold(x, 2).is_err());
    }
}
