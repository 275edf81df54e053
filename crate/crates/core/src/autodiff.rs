//! Build-once reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive with its operands in topological order
//! (operands always precede the node). [`Tape::backward`] consumes the
//! recorded values once; there are no higher-order derivatives.

use std::collections::BTreeMap;

use crate::error::{PanError, Result};
use crate::linalg::{Elementwise, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBroadcast(Var, Var),
    Abs(Var),
    Sigmoid(Var),
    Relu(Var),
    RowSoftmax(Var),
    RowSum(Var),
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
    Scale(Var, T),
    AddConst(Var, T),
    Gather(Var, Vec<usize>),
    /// Per-row mean BCE over positions with mask 1; rows with no labeled
    /// position contribute exactly 0.
    BceRows {
        p: Var,
        target: Matrix<T>,
        mask: Matrix<T>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Matrix<T>,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
}

/// Gradients keyed by parameter name; each entry has its parameter's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStore<T: Scalar = f64> {
    grads: BTreeMap<String, Matrix<T>>,
}

impl<T: Scalar> GradientStore<T> {
    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(Matrix::is_finite)
    }

    pub fn into_map(self) -> BTreeMap<String, Matrix<T>> {
        self.grads
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op<T>, value: Matrix<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a differentiable leaf. Names must be unique per tape.
    pub fn param(&mut self, name: &str, value: Matrix<T>) -> Result<Var> {
        if self.params.iter().any(|(n, _)| n == name) {
            return Err(PanError::contract(format!("parameter {name:?} bound twice")));
        }
        let v = self.push(Op::Leaf, value, true);
        self.params.push((name.to_string(), v));
        Ok(v)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    fn record(&mut self, op: Op<T>) -> Result<Var> {
        let value = self.compute(&op)?;
        let needs = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRowBroadcast(a, b) => self.needs(*a) || self.needs(*b),
            Op::Transpose(a)
            | Op::Abs(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::RowSoftmax(a)
            | Op::RowSum(a)
            | Op::RowNorm(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Scale(a, _)
            | Op::AddConst(a, _)
            | Op::Gather(a, _) => self.needs(*a),
            Op::BceRows { p, .. } => self.needs(*p),
        };
        Ok(self.push(op, value, needs))
    }

    fn val(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    fn compute(&self, op: &Op<T>) -> Result<Matrix<T>> {
        Ok(match op {
            Op::Leaf => return Err(PanError::contract("leaves have no forward rule")),
            Op::MatMul(a, b) => self.val(*a).matmul(self.val(*b))?,
            Op::Transpose(a) => self.val(*a).transpose(),
            Op::Add(a, b) => self.val(*a).elementwise(Elementwise::Add, Some(self.val(*b)))?,
            Op::Sub(a, b) => self
                .val(*a)
                .elementwise(Elementwise::Subtract, Some(self.val(*b)))?,
            Op::Mul(a, b) => self
                .val(*a)
                .elementwise(Elementwise::Multiply, Some(self.val(*b)))?,
            Op::AddRowBroadcast(a, b) => self.val(*a).add_row_broadcast(self.val(*b))?,
            Op::Abs(a) => self.val(*a).elementwise(Elementwise::Abs, None)?,
            Op::Sigmoid(a) => self.val(*a).elementwise(Elementwise::Sigmoid, None)?,
            Op::Relu(a) => self.val(*a).elementwise(Elementwise::Relu, None)?,
            Op::RowSoftmax(a) => self.val(*a).row_softmax()?,
            Op::RowSum(a) => self.val(*a).row_sums(),
            Op::RowNorm(a) => {
                let x = self.val(*a);
                let data = (0..x.rows())
                    .map(|r| x.row(r).iter().map(|&v| v * v).sum::<T>().sqrt())
                    .collect();
                Matrix::from_raw(x.rows(), 1, data)
            }
            Op::Sum(a) => Matrix::scalar(self.val(*a).sum()),
            Op::Mean(a) => {
                let x = self.val(*a);
                if x.is_empty() {
                    return Err(PanError::contract("mean of an empty matrix"));
                }
                Matrix::scalar(x.sum() / T::from_usize_lossy(x.len()))
            }
            Op::Scale(a, c) => self.val(*a).scale(*c),
            Op::AddConst(a, c) => self.val(*a).map(|v| v + *c),
            Op::Gather(a, idx) => self.val(*a).gather_rows(idx)?,
            Op::BceRows { p, target, mask } => {
                let x = self.val(*p);
                x.same_shape(target, "bce_rows")?;
                x.same_shape(mask, "bce_rows")?;
                let data = (0..x.rows())
                    .map(|r| {
                        crate::linalg::masked_bce_mean(x.row(r), target.row(r), mask.row(r))
                    })
                    .collect::<Result<Vec<T>>>()?;
                Matrix::from_raw(x.rows(), 1, data)
            }
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a, b))
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let op = match (kind, b) {
            (Elementwise::Abs, _) => Op::Abs(a),
            (Elementwise::Sigmoid, _) => Op::Sigmoid(a),
            (Elementwise::Relu, _) => Op::Relu(a),
            (Elementwise::Add, Some(b)) => Op::Add(a, b),
            (Elementwise::Subtract, Some(b)) => Op::Sub(a, b),
            (Elementwise::Multiply, Some(b)) => Op::Mul(a, b),
            (k, None) => return Err(PanError::contract(format!("{k:?} needs a second operand"))),
        };
        self.record(op)
    }

    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.record(Op::AddRowBroadcast(a, bias))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Abs(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowSoftmax(a))
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowSum(a))
    }

    /// Euclidean norm of each row. The subgradient at a zero row is zero.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Mean(a))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.record(Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: T) -> Result<Var> {
        self.record(Op::AddConst(a, c))
    }

    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        self.record(Op::Gather(a, indices))
    }

    /// Row-wise masked BCE of probabilities `p` against constant targets.
    pub fn bce_rows(&mut self, p: Var, target: Matrix<T>, mask: Matrix<T>) -> Result<Var> {
        self.record(Op::BceRows { p, target, mask })
    }

    /// Recomputes every non-leaf node from the stored leaves.
    pub fn replay(&self) -> Result<Vec<Matrix<T>>> {
        let mut scratch = Tape {
            nodes: Vec::with_capacity(self.nodes.len()),
            params: Vec::new(),
        };
        for node in &self.nodes {
            let value = match node.op {
                Op::Leaf => node.value.clone(),
                _ => scratch.compute(&node.op)?,
            };
            scratch.nodes.push(Node {
                op: node.op.clone(),
                value,
                needs_grad: node.needs_grad,
            });
        }
        Ok(scratch.nodes.into_iter().map(|n| n.value).collect())
    }

    /// Reverse sweep from a scalar output. Returns one gradient per bound
    /// parameter; parameters with no path to the output get zeros.
    pub fn backward(&self, output: Var) -> Result<GradientStore<T>> {
        let out = self
            .nodes
            .get(output.0)
            .ok_or_else(|| PanError::contract("output is not on this tape"))?;
        if out.value.shape() != (1, 1) {
            let (r, c) = out.value.shape();
            return Err(PanError::contract(format!(
                "backward needs a scalar output, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::scalar(T::one()));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut store = BTreeMap::new();
        for (name, v) in &self.params {
            let g = grads
                .get(v.0)
                .and_then(Clone::clone)
                .unwrap_or_else(|| {
                    let (r, c) = self.nodes[v.0].value.shape();
                    Matrix::zeros(r, c)
                });
            store.insert(name.clone(), g);
        }
        Ok(GradientStore { grads: store })
    }

    fn propagate(&self, node: &Node<T>, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) -> Result<()> {
        let mut acc = |v: Var, contrib: Matrix<T>| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let zero = T::zero();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.matmul_t(self.val(*b))?);
                }
                if self.needs(*b) {
                    acc(*b, self.val(*a).t_matmul(g)?);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.zip_map(self.val(*b), "mul_grad", |x, y| x * y)?);
                }
                if self.needs(*b) {
                    acc(*b, g.zip_map(self.val(*a), "mul_grad", |x, y| x * y)?);
                }
            }
            Op::AddRowBroadcast(a, b) => {
                acc(*a, g.clone());
                if self.needs(*b) {
                    let mut col = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (c, &v) in g.row(r).iter().enumerate() {
                            let cur = col.get(0, c);
                            col.set(0, c, cur + v);
                        }
                    }
                    acc(*b, col);
                }
            }
            Op::Abs(a) => {
                let x = self.val(*a);
                acc(
                    *a,
                    g.zip_map(x, "abs_grad", |gv, xv| {
                        if xv > zero {
                            gv
                        } else if xv < zero {
                            -gv
                        } else {
                            zero
                        }
                    })?,
                );
            }
            Op::Sigmoid(a) => {
                let s = &node.value;
                acc(*a, g.zip_map(s, "sigmoid_grad", |gv, sv| gv * sv * (T::one() - sv))?);
            }
            Op::Relu(a) => {
                let x = self.val(*a);
                acc(*a, g.zip_map(x, "relu_grad", |gv, xv| if xv > zero { gv } else { zero })?);
            }
            Op::RowSoftmax(a) => {
                let s = &node.value;
                let mut out = Matrix::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let (sr, gr) = (s.row(r), g.row(r));
                    let dot: T = sr.iter().zip(gr).map(|(&x, &y)| x * y).sum();
                    for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                        *o = sr[c] * (gr[c] - dot);
                    }
                }
                acc(*a, out);
            }
            Op::RowSum(a) => {
                let x = self.val(*a);
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let gv = g.get(r, 0);
                    out.row_mut(r).iter_mut().for_each(|o| *o = gv);
                }
                acc(*a, out);
            }
            Op::RowNorm(a) => {
                let x = self.val(*a);
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let norm = node.value.get(r, 0);
                    if norm > zero {
                        let scale = g.get(r, 0) / norm;
                        for (o, &xv) in out.row_mut(r).iter_mut().zip(x.row(r)) {
                            *o = xv * scale;
                        }
                    }
                }
                acc(*a, out);
            }
            Op::Sum(a) => {
                let (r, c) = self.val(*a).shape();
                acc(*a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let x = self.val(*a);
                let share = g.item() / T::from_usize_lossy(x.len());
                acc(*a, Matrix::filled(x.rows(), x.cols(), share));
            }
            Op::Scale(a, c) => acc(*a, g.scale(*c)),
            Op::AddConst(a, _) => acc(*a, g.clone()),
            Op::Gather(a, idx) => {
                let x = self.val(*a);
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, &gv) in out.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += gv;
                    }
                }
                acc(*a, out);
            }
            Op::BceRows { p, target, mask } => {
                let x = self.val(*p);
                let eps = T::BCE_EPS;
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let count = mask.row(r).iter().filter(|&&m| m != zero).count();
                    if count == 0 {
                        continue;
                    }
                    let scale = g.get(r, 0) / T::from_usize_lossy(count);
                    for c in 0..x.cols() {
                        if mask.get(r, c) == zero {
                            continue;
                        }
                        let pv = x.get(r, c);
                        // The clamp is flat outside [eps, 1 - eps].
                        if pv < eps || pv > T::one() - eps {
                            continue;
                        }
                        let y = target.get(r, c);
                        let d = (pv - y) / (pv * (T::one() - pv));
                        out.set(r, c, d * scale);
                    }
                }
                acc(*p, out);
            }
        }
        Ok(())
    }
}

/// Anything that owns named parameter matrices.
///
/// Names passed to the visitor must match the names used when the model
/// binds itself onto a [`Tape`].
pub trait Parameterized<T: Scalar> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, m| n += m.len());
        n
    }
}

/// Free-standing named parameters, handy for ad-hoc functions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamMap<T: Scalar = f64>(pub BTreeMap<String, Matrix<T>>);

impl<T: Scalar> ParamMap<T> {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn with(mut self, name: &str, value: Matrix<T>) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.0.get(name)
    }

    /// Binds every entry onto the tape in name order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<BTreeMap<String, Var>> {
        self.0
            .iter()
            .map(|(k, v)| Ok((k.clone(), tape.param(k, v.clone())?)))
            .collect()
    }
}

impl<T: Scalar> Parameterized<T> for ParamMap<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        for (k, v) in &self.0 {
            f(k, v);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        for (k, v) in self.0.iter_mut() {
            f(k, v);
        }
    }
}
