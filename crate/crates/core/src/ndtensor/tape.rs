//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Every operation appends a node holding its output value and the ids of
//! its inputs, so the node list is topologically ordered by construction.
//! [`Tape::backward`] walks it once in reverse and returns a [`Gradients`]
//! table; parameter leaves can then be flushed into a [`ParamStore`].
//!
//! Shapes are rank 0 (scalar), 1 (vector) or 2 (matrix). Row-wise operations
//! treat a vector of length `n` as a single `1 x n` row.

use std::collections::HashMap;
use std::sync::Arc;

use super::tensor::{numel, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulScalar(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    MulRow(Var, Var),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { a: Var, start: usize },
    SliceRows { a: Var, start: usize },
    GatherRows { a: Var, ids: Vec<usize> },
    Reshape(Var),
    Glu(Var),
    Conv1d { x: Var, kernel: Var, bias: Var, width: usize },
    SqDist(Var, Var),
    ColMax { a: Var, argmax: Vec<usize> },
    KMax { a: Var, sources: Vec<usize> },
    Pick { a: Var, idx: Vec<usize> },
    BceLogits { logit: Var, target: f64 },
    Mask { a: Var, mask: Arc<Vec<f64>> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MulScalar(a, b) | AddRow(a, b) | AddCol(a, b)
            | MulRow(a, b) | SqDist(a, b) => vec![*a, *b],
            MatMul { a, b, .. } => vec![*a, *b],
            Scale(a, _) | AddScalar(a) | Transpose(a) | Sigmoid(a) | Tanh(a) | Relu(a) | Exp(a)
            | Log(a) | SoftmaxRows(a) | LogSoftmaxRows(a) | Sum(a) | Reshape(a) | Glu(a) => vec![*a],
            ConcatCols(vs) | ConcatRows(vs) => vs.clone(),
            SliceCols { a, .. } | SliceRows { a, .. } | GatherRows { a, .. } | ColMax { a, .. }
            | KMax { a, .. } | Pick { a, .. } | Mask { a, .. } => vec![*a],
            Conv1d { x, kernel, bias, .. } => vec![*x, *kernel, *bias],
            BceLogits { logit, .. } => vec![*logit],
        }
    }
}

struct Node {
    shape: Vec<usize>,
    value: Arc<Vec<f64>>,
    op: Op,
    needs_grad: bool,
}

/// The computation record: an append-only list of executed operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    param_leaves: Vec<(Var, String)>,
}

/// `(rows, cols)` view of a rank <= 2 shape.
pub(crate) fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[0], shape[1]),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        self.push_shared(shape, Arc::new(value), op)
    }

    fn push_shared(&mut self, shape: Vec<usize>, value: Arc<Vec<f64>>, op: Op) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { shape, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn check_rank(&self, v: Var, what: &str) -> Result<()> {
        if self.nodes[v.0].shape.len() > 2 {
            return Err(Error::shape(format!("{what}: rank > 2 unsupported")));
        }
        Ok(())
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        dims2(&self.nodes[v.0].shape)
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        Tensor::new(node.shape.clone(), node.value.to_vec()).expect("tape node shape")
    }

    /// Records a leaf. Its gradient is tracked when `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        let var = self.push_shared(tensor.shape().to_vec(), tensor.shared_values(), Op::Leaf);
        self.nodes[var.0].needs_grad = tensor.requires_grad;
        var
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        if numel(&shape) != values.len() {
            return Err(Error::shape(format!(
                "constant of shape {shape:?} given {} values",
                values.len()
            )));
        }
        Ok(self.push(shape, values, Op::Leaf))
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(vec![], vec![value], Op::Leaf)
    }

    /// Leaf bound to a named parameter. Repeated lookups return the same var.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let tensor = store.get(name)?;
        let var = self.push_shared(tensor.shape().to_vec(), tensor.shared_values(), Op::Leaf);
        self.nodes[var.0].needs_grad = tensor.requires_grad;
        self.params.insert(name.to_string(), var);
        self.param_leaves.push((var, name.to_string()));
        Ok(var)
    }

    // ---- elementwise -------------------------------------------------

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    /// `a * s` where `s` holds a single value.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape(format!("mul_scalar: {:?} is not a scalar", self.shape(s))));
        }
        let c = self.value(s)[0];
        Ok(self.map(a, Op::MulScalar(a, s), |x| x * c))
    }

    fn broadcast_check(&self, a: Var, v: Var, along_rows: bool, what: &str) -> Result<(usize, usize)> {
        self.check_rank(a, what)?;
        let (m, n) = self.dims(a);
        let want = if along_rows { n } else { m };
        if self.value(v).len() != want {
            return Err(Error::shape(format!(
                "{what}: {:?} cannot broadcast against {:?}",
                self.shape(v),
                self.shape(a)
            )));
        }
        Ok((m, n))
    }

    /// Adds vector `v` (length `cols`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let (m, n) = self.broadcast_check(a, v, true, "add_row")?;
        let (av, vv) = (self.value(a), self.value(v));
        let mut out = av.to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += vv[j];
            }
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::AddRow(a, v)))
    }

    /// Adds `v[i]` to every entry of row `i` of `a`.
    pub fn add_col(&mut self, a: Var, v: Var) -> Result<Var> {
        let (m, n) = self.broadcast_check(a, v, false, "add_col")?;
        let (av, vv) = (self.value(a), self.value(v));
        let mut out = av.to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += vv[i];
            }
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::AddCol(a, v)))
    }

    /// Multiplies every row of `a` elementwise by `v`.
    pub fn mul_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let (m, n) = self.broadcast_check(a, v, true, "mul_row")?;
        let (av, vv) = (self.value(a), self.value(v));
        let mut out = av.to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] *= vv[j];
            }
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::MulRow(a, v)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), f64::ln)
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(Error::shape("mask length mismatch"));
        }
        let mask = Arc::new(mask);
        let out: Vec<f64> = self.value(a).iter().zip(mask.iter()).map(|(x, m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Mask { a, mask }))
    }

    // ---- linear algebra ------------------------------------------------

    /// Matrix product. A vector on the left acts as a row, on the right as
    /// a column; the corresponding output axis is dropped.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_rank(a, "matmul")?;
        self.check_rank(b, "matmul")?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sb.is_empty() {
            return Err(Error::shape("matmul: scalar operand"));
        }
        let (m, k) = if sa.len() == 1 { (1, sa[0]) } else { (sa[0], sa[1]) };
        let (k2, n) = if sb.len() == 1 { (sb[0], 1) } else { (sb[0], sb[1]) };
        if k != k2 {
            return Err(Error::shape(format!("matmul: {sa:?} x {sb:?}")));
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        let shape = match (sa.len(), sb.len()) {
            (2, 2) => vec![m, n],
            (1, 2) => vec![n],
            (2, 1) => vec![m],
            _ => vec![],
        };
        Ok(self.push(shape, out, Op::MatMul { a, b, m, k, n }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check_rank(a, "transpose")?;
        let (m, n) = self.dims(a);
        let av = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        Ok(self.push(vec![n, m], out, Op::Transpose(a)))
    }

    // ---- reductions and normalisation --------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![], vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check_rank(a, "softmax")?;
        let (m, n) = self.dims(a);
        let mut out = self.value(a).to_vec();
        for i in 0..m {
            softmax_in_place(&mut out[i * n..(i + 1) * n]);
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::SoftmaxRows(a)))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check_rank(a, "log_softmax")?;
        let (m, n) = self.dims(a);
        let mut out = self.value(a).to_vec();
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::LogSoftmaxRows(a)))
    }

    // ---- structural ----------------------------------------------------

    /// Horizontal concatenation. All-vector inputs give a vector.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols: no inputs"));
        }
        for &p in parts {
            self.check_rank(p, "concat_cols")?;
        }
        let m = self.dims(parts[0]).0;
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(Error::shape("concat_cols: row count mismatch"));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let n = self.dims(p).1;
                out.extend_from_slice(&self.value(p)[i * n..(i + 1) * n]);
            }
        }
        let all_vectors = parts.iter().all(|&p| self.shape(p).len() == 1);
        let shape = if all_vectors { vec![total] } else { vec![m, total] };
        Ok(self.push(shape, out, Op::ConcatCols(parts.to_vec())))
    }

    /// Vertical concatenation; a vector input contributes one row.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_rows: no inputs"));
        }
        for &p in parts {
            self.check_rank(p, "concat_rows")?;
        }
        let n = self.dims(parts[0]).1;
        if parts.iter().any(|&p| self.dims(p).1 != n) {
            return Err(Error::shape("concat_rows: column count mismatch"));
        }
        let rows: usize = parts.iter().map(|&p| self.dims(p).0).sum();
        let mut out = Vec::with_capacity(rows * n);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![rows, n], out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check_rank(a, "slice_cols")?;
        let (m, n) = self.dims(a);
        if len == 0 || start + len > n {
            return Err(Error::shape(format!("slice_cols {start}+{len} of {n}")));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&av[i * n + start..i * n + start + len]);
        }
        let shape = if self.shape(a).len() == 1 { vec![len] } else { vec![m, len] };
        Ok(self.push(shape, out, Op::SliceCols { a, start }))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check_rank(a, "slice_rows")?;
        let (m, n) = self.dims(a);
        if len == 0 || start + len > m {
            return Err(Error::shape(format!("slice_rows {start}+{len} of {m}")));
        }
        let out = self.value(a)[start * n..(start + len) * n].to_vec();
        Ok(self.push(vec![len, n], out, Op::SliceRows { a, start }))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let n = self.dims(a).1;
        let r = self.slice_rows(a, i, 1)?;
        self.reshape(r, vec![n])
    }

    /// Rows `ids` of `a` stacked into a `[ids.len() x cols]` matrix.
    pub fn gather_rows(&mut self, a: Var, ids: &[usize]) -> Result<Var> {
        self.check_rank(a, "gather_rows")?;
        let (m, n) = self.dims(a);
        if ids.is_empty() {
            return Err(Error::shape("gather_rows: empty id list"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= m) {
            return Err(Error::shape(format!("gather_rows: row {bad} out of {m}")));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            out.extend_from_slice(&av[i * n..(i + 1) * n]);
        }
        Ok(self.push(vec![ids.len(), n], out, Op::GatherRows { a, ids: ids.to_vec() }))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != self.value(a).len() {
            return Err(Error::shape(format!("reshape {:?} -> {shape:?}", self.shape(a))));
        }
        let value = Arc::clone(&self.nodes[a.0].value);
        Ok(self.push_shared(shape, value, Op::Reshape(a)))
    }

    // ---- model-specific primitives -----------------------------------

    /// Gated linear unit over the last axis: `[x1; x2] -> x1 * sigmoid(x2)`.
    pub fn glu(&mut self, a: Var) -> Result<Var> {
        self.check_rank(a, "glu")?;
        let (m, n2) = self.dims(a);
        if self.shape(a).is_empty() || n2 % 2 != 0 {
            return Err(Error::shape(format!("glu: width {n2} is not even")));
        }
        let n = n2 / 2;
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &av[i * n2..(i + 1) * n2];
            for j in 0..n {
                out.push(row[j] * sigmoid(row[n + j]));
            }
        }
        let shape = if self.shape(a).len() == 1 { vec![n] } else { vec![m, n] };
        Ok(self.push(shape, out, Op::Glu(a)))
    }

    /// Same-length 1-D convolution over the rows of `x` (`[L x d]`) with a
    /// centered window of odd `width`, zero-padded on both ends.
    /// `kernel` is `[out x width*d]`, `bias` is `[out]`; result is `[L x out]`.
    pub fn conv1d_ngram(&mut self, x: Var, kernel: Var, bias: Var, width: usize) -> Result<Var> {
        if width == 0 || width % 2 == 0 {
            return Err(Error::shape(format!("conv1d: width {width} must be odd")));
        }
        if self.shape(x).len() != 2 || self.shape(kernel).len() != 2 {
            return Err(Error::shape("conv1d: expects matrix input and kernel"));
        }
        let (len, d) = self.dims(x);
        let (out_w, kw) = self.dims(kernel);
        if kw != width * d {
            return Err(Error::shape(format!(
                "conv1d: kernel {:?} does not match width {width} x d {d}",
                self.shape(kernel)
            )));
        }
        if self.value(bias).len() != out_w || self.shape(bias).len() != 1 {
            return Err(Error::shape(format!(
                "conv1d: bias {:?} does not match {out_w} outputs",
                self.shape(bias)
            )));
        }
        let half = (width - 1) / 2;
        let (xv, kv, bv) = (self.value(x), self.value(kernel), self.value(bias));
        let mut out = vec![0.0; len * out_w];
        for i in 0..len {
            let row = &mut out[i * out_w..(i + 1) * out_w];
            row.copy_from_slice(bv);
            for t in 0..width {
                let src = i + t;
                if src < half || src - half >= len {
                    continue;
                }
                let xr = &xv[(src - half) * d..(src - half + 1) * d];
                for (r, o) in row.iter_mut().enumerate() {
                    let kr = &kv[r * kw + t * d..r * kw + (t + 1) * d];
                    *o += kr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        Ok(self.push(vec![len, out_w], out, Op::Conv1d { x, kernel, bias, width }))
    }

    /// Pairwise squared Euclidean distances between rows: `[m x d], [n x d] -> [m x n]`.
    pub fn sq_dist(&mut self, s: Var, t: Var) -> Result<Var> {
        if self.shape(s).len() != 2 || self.shape(t).len() != 2 {
            return Err(Error::shape("sq_dist: expects matrices"));
        }
        let (m, d) = self.dims(s);
        let (n, d2) = self.dims(t);
        if d != d2 {
            return Err(Error::shape(format!("sq_dist: widths {d} vs {d2}")));
        }
        let (sv, tv) = (self.value(s), self.value(t));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = sv[i * d..(i + 1) * d]
                    .iter()
                    .zip(&tv[j * d..(j + 1) * d])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        }
        Ok(self.push(vec![m, n], out, Op::SqDist(s, t)))
    }

    /// Maximum of each column (reduction over rows); first maximum wins ties.
    pub fn col_max(&mut self, a: Var) -> Result<Var> {
        self.check_rank(a, "col_max")?;
        let (m, n) = self.dims(a);
        let av = self.value(a);
        let mut argmax = vec![0usize; n];
        let mut out = av[..n].to_vec();
        for i in 1..m {
            for j in 0..n {
                if av[i * n + j] > out[j] {
                    out[j] = av[i * n + j];
                    argmax[j] = i;
                }
            }
        }
        Ok(self.push(vec![n], out, Op::ColMax { a, argmax }))
    }

    /// k-max pooling of a vector: the `k` largest entries in their original
    /// order (lower index wins ties), zero-padded when fewer than `k` exist.
    pub fn k_max(&mut self, a: Var, k: usize) -> Result<Var> {
        if k == 0 {
            return Err(Error::shape("k_max: k must be positive"));
        }
        let av = self.value(a);
        let sources = k_max_indices(av, k);
        let mut out = vec![0.0; k];
        for (slot, &src) in sources.iter().enumerate() {
            out[slot] = av[src];
        }
        Ok(self.push(vec![k], out, Op::KMax { a, sources }))
    }

    /// `out[i] = a[i, idx[i]]`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        self.check_rank(a, "pick")?;
        let (m, n) = self.dims(a);
        if idx.len() != m || idx.iter().any(|&j| j >= n) {
            return Err(Error::shape(format!("pick: {} indices into [{m} x {n}]", idx.len())));
        }
        let av = self.value(a);
        let out = idx.iter().enumerate().map(|(i, &j)| av[i * n + j]).collect();
        Ok(self.push(vec![m], out, Op::Pick { a, idx: idx.to_vec() }))
    }

    /// Binary cross-entropy of `sigmoid(logit)` against `target`, computed
    /// from the logit for stability.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        if self.value(logit).len() != 1 {
            return Err(Error::shape("bce_with_logits: logit must be scalar"));
        }
        let x = self.value(logit)[0];
        let loss = x.max(0.0) - x * target + (-x.abs()).exp().ln_1p();
        Ok(self.push(vec![], vec![loss], Op::BceLogits { logit, target }))
    }

    // ---- backward ------------------------------------------------------

    /// Propagates adjoints from a scalar `loss` back through the record.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(Error::shape(format!(
                "backward: loss must be scalar, got shape {:?}",
                loss_node.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, param_leaves: self.param_leaves.clone() })
    }

    /// Runs [`Tape::backward`] and adds parameter gradients into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        grads.accumulate_into(store)?;
        Ok(grads)
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let target = &self.nodes[v.0];
            if !target.needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; target.value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g * c)),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::MulScalar(a, s) => {
                let c = val(*s)[0];
                let av = val(*a);
                acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g * c));
                let ds: f64 = g.iter().zip(av).map(|(g, x)| g * x).sum();
                acc(*s, &mut |d| d[0] += ds);
            }
            Op::AddRow(a, v) => {
                let n = val(*v).len();
                acc(*a, &mut |d| add_into(d, g));
                acc(*v, &mut |d| {
                    for (i, gi) in g.iter().enumerate() {
                        d[i % n] += gi;
                    }
                });
            }
            Op::AddCol(a, v) => {
                let n = g.len() / val(*v).len();
                acc(*a, &mut |d| add_into(d, g));
                acc(*v, &mut |d| {
                    for (i, gi) in g.iter().enumerate() {
                        d[i / n] += gi;
                    }
                });
            }
            Op::MulRow(a, v) => {
                let (av, vv) = (val(*a), val(*v));
                let n = vv.len();
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * vv[i % n];
                    }
                });
                acc(*v, &mut |d| {
                    for i in 0..g.len() {
                        d[i % n] += g[i] * av[i];
                    }
                });
            }
            Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (*m, *k, *n);
                // dA = dC B^T
                acc(*a, &mut |d| {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let bp = &bv[p * n..(p + 1) * n];
                            d[i * k + p] += gi.iter().zip(bp).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                // dB = A^T dC
                acc(*b, &mut |d| {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            let dp = &mut d[p * n..(p + 1) * n];
                            dp.iter_mut().zip(gi).for_each(|(d, g)| *d += a_ip * g);
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = dims2(&self.nodes[a.0].shape);
                acc(*a, &mut |d| {
                    for i in 0..m {
                        for j in 0..n {
                            d[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }),
            Op::Relu(a) => {
                let av = val(*a);
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        if av[i] > 0.0 {
                            d[i] += g[i];
                        }
                    }
                })
            }
            Op::Exp(a) => acc(*a, &mut |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * y[i];
                }
            }),
            Op::Log(a) => {
                let av = val(*a);
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] / av[i];
                    }
                })
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = dims2(&node.shape);
                acc(*a, &mut |d| {
                    for i in 0..m {
                        let (yr, gr) = (&y[i * n..(i + 1) * n], &g[i * n..(i + 1) * n]);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            d[i * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                })
            }
            Op::LogSoftmaxRows(a) => {
                let (m, n) = dims2(&node.shape);
                acc(*a, &mut |d| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        let total: f64 = gr.iter().sum();
                        for j in 0..n {
                            d[i * n + j] += gr[j] - y[i * n + j].exp() * total;
                        }
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::ConcatCols(parts) => {
                let (m, total) = dims2(&node.shape);
                let mut offset = 0;
                for &p in parts {
                    let n = dims2(&self.nodes[p.0].shape).1;
                    acc(p, &mut |d| {
                        for i in 0..m {
                            let src = &g[i * total + offset..i * total + offset + n];
                            add_into(&mut d[i * n..(i + 1) * n], src);
                        }
                    });
                    offset += n;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    acc(p, &mut |d| add_into(d, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SliceCols { a, start } => {
                let (m, len) = dims2(&node.shape);
                let n = dims2(&self.nodes[a.0].shape).1;
                acc(*a, &mut |d| {
                    for i in 0..m {
                        add_into(&mut d[i * n + start..i * n + start + len], &g[i * len..(i + 1) * len]);
                    }
                })
            }
            Op::SliceRows { a, start } => {
                let n = dims2(&self.nodes[a.0].shape).1;
                acc(*a, &mut |d| add_into(&mut d[start * n..start * n + g.len()], g))
            }
            Op::GatherRows { a, ids } => {
                let n = dims2(&self.nodes[a.0].shape).1;
                acc(*a, &mut |d| {
                    for (r, &i) in ids.iter().enumerate() {
                        add_into(&mut d[i * n..(i + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                })
            }
            Op::Glu(a) => {
                let av = val(*a);
                let (m, n) = dims2(&node.shape);
                acc(*a, &mut |d| {
                    for i in 0..m {
                        for j in 0..n {
                            let x1 = av[i * 2 * n + j];
                            let s = sigmoid(av[i * 2 * n + n + j]);
                            let gij = g[i * n + j];
                            d[i * 2 * n + j] += gij * s;
                            d[i * 2 * n + n + j] += gij * x1 * s * (1.0 - s);
                        }
                    }
                })
            }
            Op::Conv1d { x, kernel, bias, width } => {
                let (xv, kv) = (val(*x), val(*kernel));
                let (len, d) = dims2(&self.nodes[x.0].shape);
                let (out_w, kw) = dims2(&self.nodes[kernel.0].shape);
                let half = (width - 1) / 2;
                acc(*bias, &mut |db| {
                    for i in 0..len {
                        add_into(db, &g[i * out_w..(i + 1) * out_w]);
                    }
                });
                acc(*kernel, &mut |dk| {
                    for i in 0..len {
                        for t in 0..*width {
                            let src = i + t;
                            if src < half || src - half >= len {
                                continue;
                            }
                            let xr = &xv[(src - half) * d..(src - half + 1) * d];
                            for r in 0..out_w {
                                let gr = g[i * out_w + r];
                                let dkr = &mut dk[r * kw + t * d..r * kw + (t + 1) * d];
                                dkr.iter_mut().zip(xr).for_each(|(a, b)| *a += gr * b);
                            }
                        }
                    }
                });
                acc(*x, &mut |dx| {
                    for i in 0..len {
                        for t in 0..*width {
                            let src = i + t;
                            if src < half || src - half >= len {
                                continue;
                            }
                            let row = src - half;
                            for r in 0..out_w {
                                let gr = g[i * out_w + r];
                                let kr = &kv[r * kw + t * d..r * kw + (t + 1) * d];
                                let dxr = &mut dx[row * d..(row + 1) * d];
                                dxr.iter_mut().zip(kr).for_each(|(a, b)| *a += gr * b);
                            }
                        }
                    }
                });
            }
            Op::SqDist(s, t) => {
                let (sv, tv) = (val(*s), val(*t));
                let (m, d) = dims2(&self.nodes[s.0].shape);
                let n = dims2(&self.nodes[t.0].shape).0;
                acc(*s, &mut |ds| {
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for c in 0..d {
                                ds[i * d + c] += 2.0 * gij * (sv[i * d + c] - tv[j * d + c]);
                            }
                        }
                    }
                });
                acc(*t, &mut |dt| {
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for c in 0..d {
                                dt[j * d + c] -= 2.0 * gij * (sv[i * d + c] - tv[j * d + c]);
                            }
                        }
                    }
                });
            }
            Op::ColMax { a, argmax } => {
                let n = argmax.len();
                acc(*a, &mut |d| {
                    for (j, &i) in argmax.iter().enumerate() {
                        d[i * n + j] += g[j];
                    }
                })
            }
            Op::KMax { a, sources } => acc(*a, &mut |d| {
                for (slot, &src) in sources.iter().enumerate() {
                    d[src] += g[slot];
                }
            }),
            Op::Pick { a, idx } => {
                let n = dims2(&self.nodes[a.0].shape).1;
                acc(*a, &mut |d| {
                    for (i, &j) in idx.iter().enumerate() {
                        d[i * n + j] += g[i];
                    }
                })
            }
            Op::BceLogits { logit, target } => {
                let x = val(*logit)[0];
                acc(*logit, &mut |d| d[0] += g[0] * (sigmoid(x) - target))
            }
            Op::Mask { a, mask } => acc(*a, &mut |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * mask[i];
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let oi = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let bp = &b[p * n..(p + 1) * n];
            oi.iter_mut().zip(bp).for_each(|(o, b)| *o += a_ip * b);
        }
    }
    out
}

/// Source positions kept by k-max pooling, in ascending order.
pub(crate) fn k_max_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Adjoints produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    param_leaves: Vec<(Var, String)>,
}

impl Gradients {
    /// Gradient with respect to `v`; `None` when nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds every parameter leaf's gradient into the matching tensor.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for (var, name) in &self.param_leaves {
            if let Some(g) = self.wrt(*var) {
                let t = store.get_mut(name)?;
                if t.requires_grad {
                    t.accumulate_grad(g);
                }
            }
        }
        Ok(())
    }

    /// Parameter gradients keyed by name, for callers that reduce across tapes.
    pub fn param_grads(&self) -> Vec<(&str, &[f64])> {
        self.param_leaves
            .iter()
            .filter_map(|(v, name)| self.wrt(*v).map(|g| (name.as_str(), g)))
            .collect()
    }
}
