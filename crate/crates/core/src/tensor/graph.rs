//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the node list is already a topological order and
//! [`Graph::backward`] simply walks it in reverse.
//!
//! ```
//! use mmdl::tensor::{Graph, Matrix};
//!
//! let mut g = Graph::new();
//! let x = g.param(Matrix::from_rows(&[[1.0, 2.0]]));
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x), &Matrix::from_rows(&[[2.0, 4.0]]));
//! ```

use crate::error::{Error, Result};
use crate::tensor::matrix::{Matrix, NORM_EPS};

/// Handle to a node of one [`Graph`]. Only meaningful for the graph that
/// created it.
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
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    RowSum(Var),
    Sum(Var),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    RowL2Normalize { input: Var, norms: Vec<f64> },
    ArcMargin {
        input: Var,
        targets: Vec<usize>,
        margins: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    grad: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Computation graph with per-node gradients.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(Node {
            value,
            grad,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].grad
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    /// Adds the `1 x cols` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Shape {
                op: "add_row",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut value = av.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, rg, Op::AddRow(a, bias)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        let rg = self.rg(a);
        self.push(value, rg, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v + c);
        let rg = self.rg(a);
        self.push(value, rg, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, rg, Op::Tanh(a))
    }

    /// `max(x, 0)`; the derivative at zero is taken as zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(value, rg, Op::Relu(a))
    }

    /// Sum of each row, giving a `rows x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = Matrix::from_fn(av.rows(), 1, |r, _| av.row(r).iter().sum());
        let rg = self.rg(a);
        self.push(value, rg, Op::RowSum(a))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, rg, Op::Sum(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, rg, Op::Transpose(a))
    }

    /// Contiguous rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let rows = self.value(a).rows();
        if start + len > rows {
            return Err(Error::Range(format!(
                "slice_rows {start}..{} of a matrix with {rows} rows",
                start + len
            )));
        }
        let indices: Vec<usize> = (start..start + len).collect();
        self.gather_rows(a, &indices)
    }

    /// Rows picked by index; repeated indices are allowed and their
    /// gradients accumulate.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::Range(format!(
                "row index {bad} into a matrix with {} rows",
                av.rows()
            )));
        }
        let value = av.select_rows(indices);
        let rg = self.rg(a);
        Ok(self.push(value, rg, Op::GatherRows(a, indices.to_vec())))
    }

    /// Scales every row to unit Euclidean norm.
    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let mut value = av.clone();
        let mut norms = Vec::with_capacity(av.rows());
        for r in 0..av.rows() {
            let norm = av.row_norm(r);
            if !(norm >= NORM_EPS) {
                return Err(Error::Degenerate {
                    op: "row_l2_normalize",
                    row: r,
                });
            }
            value.row_mut(r).iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let rg = self.rg(a);
        Ok(self.push(value, rg, Op::RowL2Normalize { input: a, norms }))
    }

    /// Additive angular margin on the target entry of each row of a cosine
    /// matrix: `cos(θ + m)` while `cos θ > cos(π − m)`, otherwise the
    /// fallback `cos θ − m·sin m`. Non-target entries pass through.
    pub fn arc_margin(&mut self, cosines: Var, targets: &[usize], margins: &[f64]) -> Result<Var> {
        let cv = self.value(cosines);
        check_targets(cv, targets, "arc_margin")?;
        if margins.len() != cv.rows() {
            return Err(Error::Contract(format!(
                "arc_margin: {} margins for {} rows",
                margins.len(),
                cv.rows()
            )));
        }
        let mut value = cv.clone();
        for (r, (&t, &m)) in targets.iter().zip(margins).enumerate() {
            value[(r, t)] = arc_margin_value(cv[(r, t)], m);
        }
        let rg = self.rg(cosines);
        Ok(self.push(
            value,
            rg,
            Op::ArcMargin {
                input: cosines,
                targets: targets.to_vec(),
                margins: margins.to_vec(),
            },
        ))
    }

    /// Per-row softmax cross-entropy against integer targets, as a
    /// `rows x 1` column.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        check_targets(lv, targets, "softmax_cross_entropy")?;
        let mut probs = Matrix::zeros(lv.rows(), lv.cols());
        let mut losses = Matrix::zeros(lv.rows(), 1);
        for r in 0..lv.rows() {
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (p, &x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - max).exp();
                total += *p;
            }
            probs.row_mut(r).iter_mut().for_each(|p| *p /= total);
            losses[(r, 0)] = total.ln() - (row[targets[r]] - max);
        }
        let rg = self.rg(logits);
        Ok(self.push(
            losses,
            rg,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Back-propagates from a `1 x 1` node, adding into the stored gradient
    /// of every node that requires one. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut adj);
            self.nodes[idx].grad.add_assign(&g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, contrib: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    send(*a, g.matmul_t(self.value(*b)).expect("shapes checked in forward"));
                }
                if self.rg(*b) {
                    send(*b, self.value(*a).t_matmul(g).expect("shapes checked in forward"));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    send(*a, g.zip_map(bv, "mul", |x, y| x * y).unwrap());
                }
                if self.rg(*b) {
                    send(*b, g.zip_map(av, "mul", |x, y| x * y).unwrap());
                }
            }
            Op::AddRow(a, bias) => {
                send(*a, g.clone());
                if self.rg(*bias) {
                    let cols = g.cols();
                    let summed = Matrix::from_fn(1, cols, |_, c| (0..g.rows()).map(|r| g[(r, c)]).sum());
                    send(*bias, summed);
                }
            }
            Op::Scale(a, factor) => send(*a, g.scale(*factor)),
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::Tanh(a) => {
                let dx = g.zip_map(&node.value, "tanh", |gy, y| gy * (1.0 - y * y)).unwrap();
                send(*a, dx);
            }
            Op::Relu(a) => {
                let input = self.value(*a);
                let dx = g.zip_map(input, "relu", |gy, x| if x > 0.0 { gy } else { 0.0 }).unwrap();
                send(*a, dx);
            }
            Op::RowSum(a) => {
                let cols = self.value(*a).cols();
                send(*a, Matrix::from_fn(g.rows(), cols, |r, _| g[(r, 0)]));
            }
            Op::Sum(a) => {
                let (rows, cols) = self.value(*a).shape();
                send(*a, Matrix::filled(rows, cols, g.item()));
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::GatherRows(a, indices) => {
                let (rows, cols) = self.value(*a).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for (k, &i) in indices.iter().enumerate() {
                    for (d, s) in dx.row_mut(i).iter_mut().zip(g.row(k)) {
                        *d += s;
                    }
                }
                send(*a, dx);
            }
            Op::RowL2Normalize { input, norms } => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for (r, &norm) in norms.iter().enumerate() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yi), &gi) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d = (gi - yi * proj) / norm;
                    }
                }
                send(*input, dx);
            }
            Op::ArcMargin {
                input,
                targets,
                margins,
            } => {
                let cv = self.value(*input);
                let mut dx = g.clone();
                for (r, (&t, &m)) in targets.iter().zip(margins).enumerate() {
                    dx[(r, t)] *= arc_margin_slope(cv[(r, t)], m);
                }
                send(*input, dx);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let mut dx = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    dx[(r, t)] -= 1.0;
                    let gr = g[(r, 0)];
                    dx.row_mut(r).iter_mut().for_each(|v| *v *= gr);
                }
                send(*logits, dx);
            }
        }
    }
}

fn check_targets(m: &Matrix, targets: &[usize], op: &'static str) -> Result<()> {
    if targets.len() != m.rows() {
        return Err(Error::Contract(format!(
            "{op}: {} targets for {} rows",
            targets.len(),
            m.rows()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= m.cols()) {
        return Err(Error::Label {
            label: bad,
            classes: m.cols(),
        });
    }
    Ok(())
}

fn clamp_cos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0)
}

/// Target logit after the additive angular margin.
pub fn arc_margin_value(cos_theta: f64, margin: f64) -> f64 {
    if margin == 0.0 {
        return cos_theta;
    }
    let threshold = (std::f64::consts::PI - margin).cos();
    if cos_theta > threshold {
        let c = clamp_cos(cos_theta);
        let s = (1.0 - c * c).max(0.0).sqrt();
        c * margin.cos() - s * margin.sin()
    } else {
        cos_theta - margin * margin.sin()
    }
}

fn arc_margin_slope(cos_theta: f64, margin: f64) -> f64 {
    if margin == 0.0 {
        return 1.0;
    }
    let threshold = (std::f64::consts::PI - margin).cos();
    if cos_theta > threshold {
        let c = clamp_cos(cos_theta);
        let s = (1.0 - c * c).max(0.0).sqrt().max(NORM_EPS);
        margin.cos() + c * margin.sin() / s
    } else {
        1.0
    }
}
