//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records matrix operations on values and parameters; calling
//! [`Tape::backward_into`] with seed gradients on any set of nodes
//! accumulates exact gradients into a parameter-shaped buffer. Parameters are
//! borrowed, never copied onto the tape.

use ndarray::{Array2, ArrayView2, Axis, Zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Scale(Var, f64),
    Transpose(Var),
    MeanRows(Var),
    Reshape(Var),
    Row(Var, usize),
    StackRows(Vec<Var>),
    Mse(Var, Var),
}

struct Node {
    op: Op,
    value: Option<Array2<f64>>,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p [Array2<f64>],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Array2<f64>]) -> Self {
        Tape { params, nodes: Vec::with_capacity(128) }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(i) => &self.params[i],
            _ => node.value.as_ref().expect("non-parameter nodes carry values"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Array2<f64>, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value: Some(value), needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn leaf_view(&mut self, value: ArrayView2<f64>) -> Var {
        self.leaf(value.to_owned())
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.nodes.push(Node { op: Op::Param(index), value: None, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a, b), v, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Add(a, b), v, ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Sub(a, b), v, ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Mul(a, b), v, ng)
    }

    /// `a + b` with the 1×c row `b` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::AddRow(a, b), v, ng)
    }

    /// `a · w + b` for a weight `w` and bias row `b`.
    pub fn affine(&mut self, a: Var, w: Var, b: Var) -> Var {
        let m = self.matmul(a, w);
        self.add_row(m, b)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(Op::Tanh(a), v, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let ng = self.needs(a);
        self.push(Op::Sigmoid(a), v, ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let ng = self.needs(a);
        self.push(Op::SoftmaxRows(a), v, ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        let ng = self.needs(a);
        self.push(Op::Scale(a, s), v, ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        let ng = self.needs(a);
        self.push(Op::Transpose(a), v, ng)
    }

    /// Column means as a 1×c row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let ng = self.needs(a);
        self.push(Op::MeanRows(a), v, ng)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("reshape preserves size");
        let ng = self.needs(a);
        self.push(Op::Reshape(a), v, ng)
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let v = self.value(a).row(i).to_owned().insert_axis(Axis(0));
        let ng = self.needs(a);
        self.push(Op::Row(a, i), v, ng)
    }

    pub fn stack_rows(&mut self, rows: Vec<Var>) -> Var {
        let views: Vec<_> = rows.iter().map(|&r| self.value(r).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("rows share width");
        let ng = rows.iter().any(|&r| self.needs(r));
        self.push(Op::StackRows(rows), v, ng)
    }

    /// Mean squared difference as a 1×1 value.
    pub fn mse(&mut self, a: Var, target: Var) -> Var {
        let diff = self.value(a) - self.value(target);
        let v = diff.mapv(|d| d * d).mean().unwrap_or(0.0);
        let ng = self.needs(a) || self.needs(target);
        self.push(Op::Mse(a, target), Array2::from_elem((1, 1), v), ng)
    }

    /// Backpropagates the seed gradients and adds parameter gradients into
    /// `grads` (one buffer per parameter, same shapes).
    pub fn backward_into(&self, seeds: &[(Var, Array2<f64>)], grads: &mut [Array2<f64>]) {
        let mut g: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        for (v, seed) in seeds {
            acc(&mut g[v.0], seed.view());
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(gy) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(i) => grads[*i] += &gy,
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = gy.dot(&self.value(*b).t());
                        acc_owned(&mut g[a.0], ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).t().dot(&gy);
                        acc_owned(&mut g[b.0], gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut g[a.0], gy.view());
                    }
                    if self.needs(*b) {
                        acc(&mut g[b.0], gy.view());
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        acc(&mut g[a.0], gy.view());
                    }
                    if self.needs(*b) {
                        acc_owned(&mut g[b.0], -&gy);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        acc_owned(&mut g[a.0], &gy * self.value(*b));
                    }
                    if self.needs(*b) {
                        acc_owned(&mut g[b.0], &gy * self.value(*a));
                    }
                }
                Op::AddRow(a, b) => {
                    if self.needs(*b) {
                        let gb = gy.sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc_owned(&mut g[b.0], gb);
                    }
                    if self.needs(*a) {
                        acc_owned(&mut g[a.0], gy);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("value");
                    let mut ga = gy;
                    Zip::from(&mut ga).and(y).for_each(|gv, &yv| *gv *= 1.0 - yv * yv);
                    acc_owned(&mut g[a.0], ga);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("value");
                    let mut ga = gy;
                    Zip::from(&mut ga).and(y).for_each(|gv, &yv| *gv *= yv * (1.0 - yv));
                    acc_owned(&mut g[a.0], ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().expect("value");
                    let mut ga = gy;
                    for (mut grow, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = grow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum();
                        Zip::from(&mut grow).and(&yrow).for_each(|gv, &yv| *gv = yv * (*gv - dot));
                    }
                    acc_owned(&mut g[a.0], ga);
                }
                Op::Scale(a, s) => acc_owned(&mut g[a.0], gy * *s),
                Op::Transpose(a) => acc_owned(&mut g[a.0], gy.t().to_owned()),
                Op::MeanRows(a) => {
                    let rows = self.value(*a).nrows();
                    let ga = ndarray::Array2::from_shape_fn((rows, gy.ncols()), |(_, j)| gy[[0, j]] / rows as f64);
                    acc_owned(&mut g[a.0], ga);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).dim();
                    let flat: Vec<f64> = gy.iter().copied().collect();
                    acc_owned(&mut g[a.0], Array2::from_shape_vec(shape, flat).expect("same size"));
                }
                Op::Row(a, i) => {
                    let shape = self.value(*a).dim();
                    let slot = g[a.0].get_or_insert_with(|| Array2::zeros(shape));
                    let mut r = slot.row_mut(*i);
                    r += &gy.row(0);
                }
                Op::StackRows(rows) => {
                    for (i, r) in rows.iter().enumerate() {
                        if self.needs(*r) {
                            acc(&mut g[r.0], gy.slice(ndarray::s![i..i + 1, ..]));
                        }
                    }
                }
                Op::Mse(a, t) => {
                    let diff = self.value(*a) - self.value(*t);
                    let k = 2.0 * gy[[0, 0]] / diff.len() as f64;
                    if self.needs(*t) {
                        acc_owned(&mut g[t.0], &diff * -k);
                    }
                    if self.needs(*a) {
                        acc_owned(&mut g[a.0], diff * k);
                    }
                }
            }
        }
    }
}

fn acc(slot: &mut Option<Array2<f64>>, v: ArrayView2<f64>) {
    match slot {
        Some(s) => *s += &v,
        None => *slot = Some(v.to_owned()),
    }
}

fn acc_owned(slot: &mut Option<Array2<f64>>, v: Array2<f64>) {
    match slot {
        Some(s) => *s += &v,
        None => *slot = Some(v),
    }
}
