//! Reverse-mode tape over small dense matrices.
//!
//! Every node is a row-major `rows x cols` block of `f64`. Elementwise binary
//! operations broadcast along a dimension of extent 1 (and nothing more).
//! Unary nodes store their local partials so the backward sweep never
//! re-evaluates a primitive.

use std::sync::atomic::{AtomicU32, Ordering};

use super::AutodiffError;
use crate::scalar::{sigmoid_f64, softplus_f64};

/// Row-major dense block.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn column(data: Vec<f64>) -> Self {
        Self { rows: data.len(), cols: 1, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

/// Identifier of a trainable leaf, chosen by whoever registers it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Min(Var, Var),
    Max(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Unary(Var, Vec<f64>),
    MatMul(Var, Var),
    RowSums(Var),
    ColSums(Var),
    Sum(Var),
    CumsumExclusive(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

/// Append-only record of primitive operations.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
    budget: Option<usize>,
    used: usize,
    overflow: bool,
    first_nonfinite: Option<&'static str>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn bshape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast {a:?} with {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

#[inline]
fn bidx(shape: (usize, usize), r: usize, c: usize) -> usize {
    let rr = if shape.0 == 1 { 0 } else { r };
    let cc = if shape.1 == 1 { 0 } else { c };
    rr * shape.1 + cc
}

fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.rows, a.cols, data);
    }
    let (rows, cols) = bshape(a.shape(), b.shape());
    if b.len() == 1 {
        let y = b.data[0];
        return Tensor::new(rows, cols, a.data.iter().map(|&x| f(x, y)).collect());
    }
    if a.len() == 1 {
        let x = a.data[0];
        return Tensor::new(rows, cols, b.data.iter().map(|&y| f(x, y)).collect());
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(f(a.data[bidx(a.shape(), r, c)], b.data[bidx(b.shape(), r, c)]));
        }
    }
    Tensor::new(rows, cols, data)
}

/// Sums a full-shape gradient down to a (possibly broadcast) operand shape.
fn reduce_to(shape: (usize, usize), out_shape: (usize, usize), g: &[f64], scale: impl Fn(usize) -> f64) -> Vec<f64> {
    if shape == out_shape {
        return g.iter().enumerate().map(|(i, &v)| v * scale(i)).collect();
    }
    let mut acc = vec![0.0; shape.0 * shape.1];
    for r in 0..out_shape.0 {
        for c in 0..out_shape.1 {
            let i = r * out_shape.1 + c;
            acc[bidx(shape, r, c)] += g[i] * scale(i);
        }
    }
    acc
}

fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_strides: (isize, isize), b: &[f64], b_strides: (isize, isize), c: &mut [f64]) {
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: the strides describe in-bounds views of `a` (m x k) and `b`
    // (k x n) and `c` is a contiguous m x n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            budget: None,
            used: 0,
            overflow: false,
            first_nonfinite: None,
        }
    }

    /// A tape that refuses to run backward once more than `elements` values
    /// have been recorded.
    pub fn with_budget(elements: usize) -> Self {
        Self { budget: Some(elements), ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `f64` values currently held by the tape.
    pub fn elements(&self) -> usize {
        self.used
    }

    pub fn first_nonfinite(&self) -> Option<&'static str> {
        self.first_nonfinite
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Var {
        if self.first_nonfinite.is_none() && value.data.iter().any(|v| !v.is_finite()) {
            self.first_nonfinite = Some(name);
        }
        self.used += value.len();
        if let Some(b) = self.budget {
            if self.used > b {
                self.overflow = true;
            }
        }
        let index = self.nodes.len() as u32;
        self.nodes.push(Node { value, op });
        Var { tape: self.id, index }
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.index as usize]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.node(v).value.shape()
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar node");
        t.data[0]
    }

    pub fn owns(&self, v: Var) -> bool {
        v.tape == self.id && (v.index as usize) < self.nodes.len()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, "constant")
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.push(value, Op::Param(id), "param")
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, name: &'static str) -> Var {
        let out = zip_broadcast(self.value(a), self.value(b), f);
        self.push(out, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b), "div")
    }

    /// Elementwise minimum; ties select `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if x <= y { x } else { y }, Op::Min(a, b), "min")
    }

    /// Elementwise maximum; ties select `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if x >= y { x } else { y }, Op::Max(a, b), "max")
    }

    /// `min(a, c)` against a constant threshold.
    pub fn clip_max(&mut self, a: Var, c: f64) -> Var {
        let k = self.constant_scalar(c);
        self.min(a, k)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.rows, t.cols, t.data.iter().map(|&x| x * k).collect());
        self.push(out, Op::Scale(a, k), "scale")
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `a + k` for a constant `k`.
    pub fn shift(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.rows, t.cols, t.data.iter().map(|&x| x + k).collect());
        self.push(out, Op::Shift(a), "shift")
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> (f64, f64)) -> Var {
        let t = self.value(a);
        let mut vals = Vec::with_capacity(t.len());
        let mut partial = Vec::with_capacity(t.len());
        for &x in &t.data {
            let (v, d) = f(x);
            vals.push(v);
            partial.push(d);
        }
        let out = Tensor::new(t.rows, t.cols, vals);
        self.push(out, Op::Unary(a, partial), name)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, "exp", |x| {
            let e = x.exp();
            (e, e)
        })
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, "log", |x| (x.ln(), 1.0 / x))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, "sqrt", |x| {
            let s = x.sqrt();
            (s, 0.5 / s)
        })
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, "sin", |x| (x.sin(), x.cos()))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, "cos", |x| (x.cos(), -x.sin()))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, "square", |x| (x * x, 2.0 * x))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, "div", |x| (1.0 / x, -1.0 / (x * x)))
    }

    /// Absolute value; the derivative at 0 is taken as +1.
    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, "abs", |x| if x < 0.0 { (-x, -1.0) } else { (x, 1.0) })
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, "softplus", |x| (softplus_f64(x), sigmoid_f64(x)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, "sigmoid", |x| {
            let s = sigmoid_f64(x);
            (s, s * (1.0 - s))
        })
    }

    /// Cumulative distribution of a zero-mean Laplace law with scale `beta`.
    pub fn laplace_cdf(&mut self, a: Var, beta: f64) -> Var {
        self.unary(a, "laplace_cdf", |s| {
            let e = 0.5 * (-s.abs() / beta).exp();
            let v = if s <= 0.0 { e } else { 1.0 - e };
            (v, e / beta)
        })
    }

    /// `a (m x k) · b (k x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.rows, "matmul {:?} x {:?}", ta.shape(), tb.shape());
        let (m, k, n) = (ta.rows, ta.cols, tb.cols);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, (k as isize, 1), &tb.data, (n as isize, 1), &mut out);
        self.push(Tensor::new(m, n, out), Op::MatMul(a, b), "matmul")
    }

    /// Sum of every row: `r x c -> r x 1`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data.chunks(t.cols.max(1)).map(|row| row.iter().sum()).collect::<Vec<f64>>();
        let out = Tensor::new(t.rows, 1, data);
        self.push(out, Op::RowSums(a), "row_sums")
    }

    /// Sum of every column: `r x c -> 1 x c`.
    pub fn col_sums(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut acc = vec![0.0; t.cols];
        for row in t.data.chunks(t.cols.max(1)) {
            for (s, &v) in acc.iter_mut().zip(row) {
                *s += v;
            }
        }
        let out = Tensor::new(1, t.cols, acc);
        self.push(out, Op::ColSums(a), "col_sums")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Exclusive prefix sum along each row: `out[r][c] = Σ_{j<c} a[r][j]`.
    pub fn cumsum_exclusive(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = vec![0.0; t.len()];
        for (src, dst) in t.data.chunks(t.cols.max(1)).zip(out.chunks_mut(t.cols.max(1))) {
            let mut run = 0.0;
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = run;
                run += s;
            }
        }
        let out = Tensor::new(t.rows, t.cols, out);
        self.push(out, Op::CumsumExclusive(a), "cumsum")
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), rows * cols, "reshape {:?} -> {rows}x{cols}", t.shape());
        let out = Tensor::new(rows, cols, t.data.clone());
        self.push(out, Op::Reshape(a), "reshape")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows, rows, "concat_cols row mismatch");
                data.extend_from_slice(&t.data[r * t.cols..(r + 1) * t.cols]);
            }
        }
        self.push(Tensor::new(rows, cols, data), Op::ConcatCols(parts.to_vec()), "concat")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols, "slice out of range");
        let mut data = Vec::with_capacity(t.rows * len);
        for r in 0..t.rows {
            data.extend_from_slice(&t.data[r * t.cols + start..r * t.cols + start + len]);
        }
        let out = Tensor::new(t.rows, len, data);
        self.push(out, Op::SliceCols(a, start), "slice")
    }
}

/// Parameter gradients produced by [`backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(|s| s.as_ref())
    }

    /// Gradient of `id`, or zeros of the given shape if it did not influence
    /// the output.
    pub fn get_or_zeros(&self, id: ParamId, rows: usize, cols: usize) -> Tensor {
        self.get(id).cloned().unwrap_or_else(|| Tensor::zeros(rows, cols))
    }

    fn accumulate(&mut self, id: ParamId, shape: (usize, usize), g: Vec<f64>) {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, None);
        }
        match &mut self.slots[id.0] {
            Some(t) => t.data.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(Tensor::new(shape.0, shape.1, g)),
        }
    }
}

fn add_into(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    let slot = &mut grads[v.index as usize];
    match slot {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

/// Differentiates the 1x1 node `output` with respect to every parameter leaf.
///
/// Nodes are visited once each, in reverse recording order.
pub fn backward(tape: &Tape, output: Var) -> Result<Gradients, AutodiffError> {
    if !tape.owns(output) {
        return Err(AutodiffError::ForeignOutput);
    }
    if tape.overflow {
        return Err(AutodiffError::TapeExhausted { limit: tape.budget.unwrap_or(0) });
    }
    if let Some(primitive) = tape.first_nonfinite {
        return Err(AutodiffError::NonFinite { primitive });
    }
    let (rows, cols) = tape.shape(output);
    if rows * cols != 1 {
        return Err(AutodiffError::NotScalar { rows, cols });
    }
    let last = output.index as usize;
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; last + 1];
    grads[last] = Some(vec![1.0]);
    let mut out = Gradients::default();

    for i in (0..=last).rev() {
        let Some(g) = grads[i].take() else { continue };
        let node = &tape.nodes[i];
        let oshape = node.value.shape();
        let val = |v: Var| &tape.nodes[v.index as usize].value;
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => out.accumulate(*id, oshape, g),
            Op::Add(a, b) => {
                let ga = reduce_to(val(*a).shape(), oshape, &g, |_| 1.0);
                let gb = reduce_to(val(*b).shape(), oshape, &g, |_| 1.0);
                add_into(&mut grads, *a, ga);
                add_into(&mut grads, *b, gb);
            }
            Op::Sub(a, b) => {
                let ga = reduce_to(val(*a).shape(), oshape, &g, |_| 1.0);
                let gb = reduce_to(val(*b).shape(), oshape, &g, |_| -1.0);
                add_into(&mut grads, *a, ga);
                add_into(&mut grads, *b, gb);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (sa, sb) = (ta.shape(), tb.shape());
                let cols = oshape.1;
                let ga = reduce_to(sa, oshape, &g, |i| tb.data[bidx(sb, i / cols, i % cols)]);
                let gb = reduce_to(sb, oshape, &g, |i| ta.data[bidx(sa, i / cols, i % cols)]);
                add_into(&mut grads, *a, ga);
                add_into(&mut grads, *b, gb);
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (sa, sb) = (ta.shape(), tb.shape());
                let cols = oshape.1;
                let ga = reduce_to(sa, oshape, &g, |i| 1.0 / tb.data[bidx(sb, i / cols, i % cols)]);
                let gb = reduce_to(sb, oshape, &g, |i| {
                    let y = tb.data[bidx(sb, i / cols, i % cols)];
                    -node.value.data[i] / y
                });
                add_into(&mut grads, *a, ga);
                add_into(&mut grads, *b, gb);
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(node.op, Op::Min(..));
                let (ta, tb) = (val(*a), val(*b));
                let (sa, sb) = (ta.shape(), tb.shape());
                let cols = oshape.1;
                let pick_a = |i: usize| {
                    let x = ta.data[bidx(sa, i / cols, i % cols)];
                    let y = tb.data[bidx(sb, i / cols, i % cols)];
                    if is_min {
                        x <= y
                    } else {
                        x >= y
                    }
                };
                let ga = reduce_to(sa, oshape, &g, |i| if pick_a(i) { 1.0 } else { 0.0 });
                let gb = reduce_to(sb, oshape, &g, |i| if pick_a(i) { 0.0 } else { 1.0 });
                add_into(&mut grads, *a, ga);
                add_into(&mut grads, *b, gb);
            }
            Op::Scale(a, k) => add_into(&mut grads, *a, g.iter().map(|v| v * k).collect()),
            Op::Shift(a) | Op::Reshape(a) => add_into(&mut grads, *a, g),
            Op::Unary(a, partial) => {
                add_into(&mut grads, *a, g.iter().zip(partial).map(|(x, d)| x * d).collect());
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows, ta.cols, tb.cols);
                // dA = G · Bᵀ, dB = Aᵀ · G
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, &g, (n as isize, 1), &tb.data, (1, n as isize), &mut ga);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, &ta.data, (1, k as isize), &g, (n as isize, 1), &mut gb);
                add_into(&mut grads, *a, ga);
                add_into(&mut grads, *b, gb);
            }
            Op::RowSums(a) => {
                let ta = val(*a);
                let ga = (0..ta.len()).map(|i| g[i / ta.cols]).collect();
                add_into(&mut grads, *a, ga);
            }
            Op::ColSums(a) => {
                let ta = val(*a);
                let ga = (0..ta.len()).map(|i| g[i % ta.cols]).collect();
                add_into(&mut grads, *a, ga);
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                add_into(&mut grads, *a, vec![g[0]; n]);
            }
            Op::CumsumExclusive(a) => {
                // adjoint of an exclusive prefix sum is an exclusive suffix sum
                let cols = oshape.1.max(1);
                let mut ga = vec![0.0; g.len()];
                for (src, dst) in g.chunks(cols).zip(ga.chunks_mut(cols)) {
                    let mut run = 0.0;
                    for c in (0..src.len()).rev() {
                        dst[c] = run;
                        run += src[c];
                    }
                }
                add_into(&mut grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let rows = oshape.0;
                let mut offset = 0;
                for &p in parts {
                    let pc = val(p).cols;
                    let mut gp = Vec::with_capacity(rows * pc);
                    for r in 0..rows {
                        let base = r * oshape.1 + offset;
                        gp.extend_from_slice(&g[base..base + pc]);
                    }
                    add_into(&mut grads, p, gp);
                    offset += pc;
                }
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let mut ga = vec![0.0; ta.len()];
                let len = oshape.1;
                for r in 0..ta.rows {
                    ga[r * ta.cols + start..r * ta.cols + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                add_into(&mut grads, *a, ga);
            }
        }
    }
    Ok(out)
}
