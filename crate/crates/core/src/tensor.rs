//! Dense row-major matrices and a tape for reverse-mode differentiation.
//!
//! Everything is two-dimensional: a vector is a `1×n` or `n×1` tensor. The
//! tape records each operation on [`Var`] handles; calling [`Var::backward`]
//! on a scalar walks the tape in reverse, returns the gradients of every
//! variable and clears the tape.

use std::cell::RefCell;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },
    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NotScalarLoss([usize; 2]),
    #[error("no gradient for parameter `{0}`")]
    MissingGrad(String),
    #[error("tensor shape {shape:?} does not match {len} values")]
    BadData { shape: [usize; 2], len: usize },
    #[error("empty tensor in {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, NumericError>;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &[self.rows, self.cols])
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(NumericError::BadData {
                shape: [rows, cols],
                len: data.len(),
            });
        }
        if rows == 0 || cols == 0 {
            return Err(NumericError::Empty("Tensor::new"));
        }
        let t = Tensor { rows, cols, data };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// A `1×n` tensor.
    pub fn row(values: &[f64]) -> Result<Self> {
        Tensor::new(1, values.len(), values.to_vec())
    }

    /// An `n×1` tensor.
    pub fn column(values: &[f64]) -> Result<Self> {
        Tensor::new(values.len(), 1, values.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).ok_or(NumericError::Empty("from_rows"))?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NumericError::ShapeMismatch {
                    op: "from_rows",
                    left: [1, cols],
                    right: [1, r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scalar(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(NumericError::NonFiniteValue { op })
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape(), other.shape());
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(NumericError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out.check_finite("matmul")?;
        Ok(out)
    }

    fn column_sums(&self) -> Tensor {
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c] += self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// Numerically stable softmax of a plain slice.
pub fn softmax(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(NumericError::Empty("softmax"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NumericError::NonFiniteValue { op: "softmax" });
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Rows with a norm below this are scaled by its inverse instead.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    ConcatRows(usize, usize),
    Stack(Vec<usize>),
    RowMean(usize),
    Sum(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    ClampMin(usize, f64),
    Transpose(usize),
    PadCols(usize),
    NormalizeRows(usize),
    Softmax(usize),
    LogSoftmaxRows(usize),
    Diag(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward/backward pass. Single-threaded.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var<'_>> {
        value.check_finite(op_name)?;
        let parents = op_parents(&op);
        let rg = self.requires(&parents);
        Ok(self.push(value, op, rg))
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    fn with_value<R>(&self, id: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }
}

fn op_parents(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::AddRow(a, b)
        | Op::ConcatRows(a, b) => vec![*a, *b],
        Op::Stack(ids) => ids.clone(),
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::RowMean(a)
        | Op::Sum(a)
        | Op::Relu(a)
        | Op::Exp(a)
        | Op::Ln(a)
        | Op::ClampMin(a, _)
        | Op::Transpose(a)
        | Op::PadCols(a)
        | Op::NormalizeRows(a)
        | Op::Softmax(a)
        | Op::LogSoftmaxRows(a)
        | Op::Diag(a) => vec![*a],
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(NumericError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.with_value(self.id, Tensor::shape)
    }

    pub fn scalar(&self) -> Option<f64> {
        self.tape.with_value(self.id, Tensor::scalar)
    }

    fn binary(
        &self,
        other: Var<'t>,
        name: &'static str,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
        op: Op,
    ) -> Result<Var<'t>> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.id].value, &nodes[other.id].value)?
        };
        self.tape.record(name, out, op)
    }

    fn unary(
        &self,
        name: &'static str,
        f: impl FnOnce(&Tensor) -> Result<Tensor>,
        op: Op,
    ) -> Result<Var<'t>> {
        let out = self.tape.with_value(self.id, f)?;
        self.tape.record(name, out, op)
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "matmul", |a, b| a.matmul(b), Op::MatMul(self.id, other.id))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(
            other,
            "add",
            |a, b| {
                same_shape("add", a, b)?;
                Ok(a.zip(b, |x, y| x + y))
            },
            Op::Add(self.id, other.id),
        )
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(
            other,
            "sub",
            |a, b| {
                same_shape("sub", a, b)?;
                Ok(a.zip(b, |x, y| x - y))
            },
            Op::Sub(self.id, other.id),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(
            other,
            "mul",
            |a, b| {
                same_shape("mul", a, b)?;
                Ok(a.zip(b, |x, y| x * y))
            },
            Op::Mul(self.id, other.id),
        )
    }

    /// Adds a `1×c` row to every row of an `n×c` tensor.
    pub fn add_row(&self, row: Var<'t>) -> Result<Var<'t>> {
        self.binary(
            row,
            "add_row",
            |a, r| {
                if r.rows != 1 || r.cols != a.cols {
                    return Err(NumericError::ShapeMismatch {
                        op: "add_row",
                        left: a.shape(),
                        right: r.shape(),
                    });
                }
                let mut out = a.clone();
                for chunk in out.data.chunks_mut(a.cols) {
                    for (o, b) in chunk.iter_mut().zip(&r.data) {
                        *o += b;
                    }
                }
                Ok(out)
            },
            Op::AddRow(self.id, row.id),
        )
    }

    pub fn scale(&self, s: f64) -> Result<Var<'t>> {
        self.unary("scale", |a| Ok(a.map(|x| x * s)), Op::Scale(self.id, s))
    }

    pub fn add_scalar(&self, s: f64) -> Result<Var<'t>> {
        self.unary("add_scalar", |a| Ok(a.map(|x| x + s)), Op::AddScalar(self.id))
    }

    /// Joins `n×a` and `n×b` row by row into `n×(a+b)`.
    pub fn concat_rows(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(
            other,
            "concat_rows",
            |a, b| {
                if a.rows != b.rows {
                    return Err(NumericError::ShapeMismatch {
                        op: "concat_rows",
                        left: a.shape(),
                        right: b.shape(),
                    });
                }
                let cols = a.cols + b.cols;
                let mut data = Vec::with_capacity(a.rows * cols);
                for r in 0..a.rows {
                    data.extend_from_slice(a.row_slice(r));
                    data.extend_from_slice(b.row_slice(r));
                }
                Ok(Tensor {
                    rows: a.rows,
                    cols,
                    data,
                })
            },
            Op::ConcatRows(self.id, other.id),
        )
    }

    /// Stacks tensors with equal column counts on top of each other.
    pub fn stack(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or(NumericError::Empty("stack"))?;
        let tape = first.tape;
        let out = {
            let nodes = tape.nodes.borrow();
            let cols = nodes[first.id].value.cols;
            let mut rows = 0;
            let mut data = Vec::new();
            for p in parts {
                let v = &nodes[p.id].value;
                if v.cols != cols {
                    return Err(NumericError::ShapeMismatch {
                        op: "stack",
                        left: nodes[first.id].value.shape(),
                        right: v.shape(),
                    });
                }
                rows += v.rows;
                data.extend_from_slice(&v.data);
            }
            Tensor { rows, cols, data }
        };
        tape.record("stack", out, Op::Stack(parts.iter().map(|p| p.id).collect()))
    }

    /// Mean over rows: `n×c → 1×c`.
    pub fn row_mean(&self) -> Result<Var<'t>> {
        self.unary(
            "row_mean",
            |a| {
                let mut s = a.column_sums();
                let n = a.rows as f64;
                s.data.iter_mut().for_each(|x| *x /= n);
                Ok(s)
            },
            Op::RowMean(self.id),
        )
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        self.unary(
            "sum",
            |a| Ok(Tensor::filled(1, 1, a.data.iter().sum())),
            Op::Sum(self.id),
        )
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let n = self.tape.with_value(self.id, |t| t.data.len()) as f64;
        self.sum()?.scale(1.0 / n)
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.unary("relu", |a| Ok(a.map(|x| x.max(0.0))), Op::Relu(self.id))
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.unary("exp", |a| Ok(a.map(f64::exp)), Op::Exp(self.id))
    }

    pub fn ln(&self) -> Result<Var<'t>> {
        self.unary("ln", |a| Ok(a.map(f64::ln)), Op::Ln(self.id))
    }

    pub fn clamp_min(&self, floor: f64) -> Result<Var<'t>> {
        self.unary(
            "clamp_min",
            |a| Ok(a.map(|x| x.max(floor))),
            Op::ClampMin(self.id, floor),
        )
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        self.unary("transpose", |a| Ok(a.transpose()), Op::Transpose(self.id))
    }

    /// Appends zero columns up to `width`.
    pub fn pad_cols(&self, width: usize) -> Result<Var<'t>> {
        self.unary(
            "pad_cols",
            |a| {
                if width < a.cols {
                    return Err(NumericError::ShapeMismatch {
                        op: "pad_cols",
                        left: a.shape(),
                        right: [a.rows, width],
                    });
                }
                let mut out = Tensor::zeros(a.rows, width);
                for r in 0..a.rows {
                    out.data[r * width..r * width + a.cols].copy_from_slice(a.row_slice(r));
                }
                Ok(out)
            },
            Op::PadCols(self.id),
        )
    }

    /// Scales each row to unit L2 norm.
    pub fn normalize_rows(&self) -> Result<Var<'t>> {
        self.unary(
            "normalize_rows",
            |a| {
                let mut out = a.clone();
                for chunk in out.data.chunks_mut(a.cols) {
                    let norm = row_norm(chunk);
                    chunk.iter_mut().for_each(|x| *x /= norm);
                }
                Ok(out)
            },
            Op::NormalizeRows(self.id),
        )
    }

    /// Softmax over all entries, treating the tensor as one vector.
    pub fn softmax(&self) -> Result<Var<'t>> {
        self.unary(
            "softmax",
            |a| {
                Ok(Tensor {
                    rows: a.rows,
                    cols: a.cols,
                    data: softmax(&a.data)?,
                })
            },
            Op::Softmax(self.id),
        )
    }

    pub fn log_softmax_rows(&self) -> Result<Var<'t>> {
        self.unary(
            "log_softmax_rows",
            |a| {
                let mut out = a.clone();
                for chunk in out.data.chunks_mut(a.cols) {
                    let max = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + chunk.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                    chunk.iter_mut().for_each(|x| *x -= lse);
                }
                Ok(out)
            },
            Op::LogSoftmaxRows(self.id),
        )
    }

    /// Diagonal of a square tensor as an `n×1` column.
    pub fn diag(&self) -> Result<Var<'t>> {
        self.unary(
            "diag",
            |a| {
                if a.rows != a.cols {
                    return Err(NumericError::ShapeMismatch {
                        op: "diag",
                        left: a.shape(),
                        right: [a.cols, a.rows],
                    });
                }
                Ok(Tensor {
                    rows: a.rows,
                    cols: 1,
                    data: (0..a.rows).map(|i| a.get(i, i)).collect(),
                })
            },
            Op::Diag(self.id),
        )
    }

    /// Reverse sweep from this scalar. Clears the tape.
    pub fn backward(&self) -> Result<Gradients> {
        let nodes = std::mem::take(&mut *self.tape.nodes.borrow_mut());
        let loss = &nodes[self.id].value;
        if loss.shape() != [1, 1] {
            return Err(NumericError::NotScalarLoss(loss.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[self.id] = Some(Tensor::filled(1, 1, 1.0));

        for id in (0..=self.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                for (parent, contrib) in local_grads(&nodes, node, &g)? {
                    if !nodes[parent].requires_grad {
                        continue;
                    }
                    match &mut grads[parent] {
                        Some(acc) => acc.add_assign(&contrib),
                        slot => *slot = Some(contrib),
                    }
                }
            }
            grads[id] = Some(g);
        }

        // Leaves that need a gradient but were not reached get zeros.
        for (id, node) in nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[id].is_none() {
                let [r, c] = node.value.shape();
                grads[id] = Some(Tensor::zeros(r, c));
            }
        }
        for g in grads.iter().flatten() {
            g.check_finite("backward")?;
        }
        Ok(Gradients { grads })
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR)
}

fn local_grads(nodes: &[Node], node: &Node, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    let val = |i: usize| &nodes[i].value;
    let out = &node.value;
    Ok(match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => vec![
            (*a, g.matmul(&val(*b).transpose())?),
            (*b, val(*a).transpose().matmul(g)?),
        ],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
        Op::Mul(a, b) => vec![
            (*a, g.zip(val(*b), |x, y| x * y)),
            (*b, g.zip(val(*a), |x, y| x * y)),
        ],
        Op::AddRow(a, r) => vec![(*a, g.clone()), (*r, g.column_sums())],
        Op::Scale(a, s) => vec![(*a, g.map(|x| x * s))],
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::ConcatRows(a, b) => {
            let (ca, cb) = (val(*a).cols, val(*b).cols);
            let mut ga = Tensor::zeros(g.rows, ca);
            let mut gb = Tensor::zeros(g.rows, cb);
            for r in 0..g.rows {
                let row = g.row_slice(r);
                ga.data[r * ca..(r + 1) * ca].copy_from_slice(&row[..ca]);
                gb.data[r * cb..(r + 1) * cb].copy_from_slice(&row[ca..]);
            }
            vec![(*a, ga), (*b, gb)]
        }
        Op::Stack(ids) => {
            let mut start = 0;
            ids.iter()
                .map(|&p| {
                    let rows = val(p).rows;
                    let part = Tensor {
                        rows,
                        cols: g.cols,
                        data: g.data[start * g.cols..(start + rows) * g.cols].to_vec(),
                    };
                    start += rows;
                    (p, part)
                })
                .collect()
        }
        Op::RowMean(a) => {
            let x = val(*a);
            let n = x.rows as f64;
            let mut ga = Tensor::zeros(x.rows, x.cols);
            for chunk in ga.data.chunks_mut(x.cols) {
                for (o, gv) in chunk.iter_mut().zip(&g.data) {
                    *o = gv / n;
                }
            }
            vec![(*a, ga)]
        }
        Op::Sum(a) => {
            let x = val(*a);
            vec![(*a, Tensor::filled(x.rows, x.cols, g.data[0]))]
        }
        Op::Relu(a) => vec![(*a, g.zip(val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 }))],
        Op::Exp(a) => vec![(*a, g.zip(out, |gv, y| gv * y))],
        Op::Ln(a) => vec![(*a, g.zip(val(*a), |gv, x| gv / x))],
        Op::ClampMin(a, floor) => {
            vec![(*a, g.zip(val(*a), |gv, x| if x >= *floor { gv } else { 0.0 }))]
        }
        Op::Transpose(a) => vec![(*a, g.transpose())],
        Op::PadCols(a) => {
            let x = val(*a);
            let mut ga = Tensor::zeros(x.rows, x.cols);
            for r in 0..x.rows {
                ga.data[r * x.cols..(r + 1) * x.cols].copy_from_slice(&g.row_slice(r)[..x.cols]);
            }
            vec![(*a, ga)]
        }
        Op::NormalizeRows(a) => {
            let x = val(*a);
            let mut ga = Tensor::zeros(x.rows, x.cols);
            for r in 0..x.rows {
                let norm = row_norm(x.row_slice(r));
                let y = out.row_slice(r);
                let gy = g.row_slice(r);
                let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                for c in 0..x.cols {
                    ga.data[r * x.cols + c] = (gy[c] - y[c] * dot) / norm;
                }
            }
            vec![(*a, ga)]
        }
        Op::Softmax(a) => {
            let dot: f64 = out.data.iter().zip(&g.data).map(|(s, gv)| s * gv).sum();
            vec![(*a, g.zip(out, |gv, s| s * (gv - dot)))]
        }
        Op::LogSoftmaxRows(a) => {
            let mut ga = g.clone();
            for r in 0..out.rows {
                let gsum: f64 = g.row_slice(r).iter().sum();
                for c in 0..out.cols {
                    let p = out.get(r, c).exp();
                    ga.data[r * out.cols + c] -= p * gsum;
                }
            }
            vec![(*a, ga)]
        }
        Op::Diag(a) => {
            let n = out.rows;
            let mut ga = Tensor::zeros(n, n);
            for i in 0..n {
                ga.data[i * n + i] = g.data[i];
            }
            vec![(*a, ga)]
        }
    })
}

/// Gradients produced by [`Var::backward`], indexed by variable.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.get_id(var.id)
    }

    pub fn get_id(&self, id: usize) -> Option<&Tensor> {
        self.grads.get(id).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let i = tape.constant(Tensor::identity(2));
        assert_eq!(a.matmul(i).unwrap().value(), a.value());
    }

    #[test]
    fn row_mean_of_two_rows() {
        let tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 3.0], &[3.0, 5.0]]));
        assert_eq!(a.row_mean().unwrap().value().data(), &[2.0, 4.0]);
    }

    #[test]
    fn concat_rows_shape_law() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(3, 2));
        let b = tape.constant(Tensor::zeros(3, 5));
        assert_eq!(a.concat_rows(b).unwrap().shape(), [3, 7]);
        let c = tape.constant(Tensor::zeros(2, 5));
        assert!(matches!(
            a.concat_rows(c),
            Err(NumericError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn softmax_values() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let big = softmax(&[1000.0, 0.0]).unwrap();
        assert!((big[0] - 1.0).abs() < 1e-12 && big[1] < 1e-300);
        let p = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-12);
        assert!(softmax(&[f64::NAN]).is_err());
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let tape = Tape::new();
        let w = tape.param(t(&[&[1.0, -2.0], &[0.5, 3.0]]));
        let g = w.sum().unwrap().backward().unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0; 4]);
        assert!(tape.is_empty());
    }

    #[test]
    fn grad_of_half_square_norm_is_w() {
        let tape = Tape::new();
        let w = tape.param(t(&[&[1.0, -2.0, 0.25]]));
        let loss = w.mul(w).unwrap().sum().unwrap().scale(0.5).unwrap();
        let g = loss.backward().unwrap();
        assert_eq!(g.get(w).unwrap(), &w_value());
        fn w_value() -> Tensor {
            Tensor::row(&[1.0, -2.0, 0.25]).unwrap()
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let w = tape.param(Tensor::zeros(2, 2));
        assert_eq!(
            w.backward().unwrap_err(),
            NumericError::NotScalarLoss([2, 2])
        );
    }

    #[test]
    fn non_finite_values_trip() {
        let tape = Tape::new();
        let w = tape.param(Tensor::row(&[0.0]).unwrap());
        assert_eq!(
            w.ln().unwrap_err(),
            NumericError::NonFiniteValue { op: "ln" }
        );
        let big = tape.constant(Tensor::row(&[1000.0]).unwrap());
        assert!(big.exp().is_err());
        assert!(Tensor::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::row(&[1.0, 2.0]).unwrap());
        let w = tape.param(Tensor::row(&[3.0, 4.0]).unwrap());
        let g = c.mul(w).unwrap().sum().unwrap().backward().unwrap();
        assert!(g.get_id(c.id()).is_none());
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 2.0]);
    }
}
