//! Dense 64-bit tensors with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation whose inputs are tracked; [`Tape::backward`]
//! replays the records in reverse and accumulates gradients into each reachable
//! leaf. Tensors whose `node` is `None` are constants: operations on them
//! compute values but record nothing, which is also how detached (stop-gradient)
//! branches and evaluation-mode forwards work.

mod kernels;
pub mod optim;

pub use kernels::set_kernel_threads;
pub use optim::AdamState;

use crate::error::TensorError;
use std::sync::Arc;

type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major tensor of 64-bit floats.
///
/// `node` is present when the tensor participates in gradient tracking on
/// some [`Tape`].
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Arc<Vec<f64>>,
    node: Option<usize>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != values.len() {
            return Err(TensorError::ShapeValueCount {
                shape,
                values: values.len(),
            });
        }
        Ok(Self {
            shape,
            values: Arc::new(values),
            node: None,
        })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::from_vec(vec![rows, cols], values)
    }

    /// Column vector (n×1).
    pub fn column(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::from_vec(vec![n, 1], values).expect("column shape always consistent")
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(vec![1, 1], vec![v]).expect("scalar shape always consistent")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(vec![rows, cols], vec![0.0; rows * cols])
            .expect("zeros shape always consistent")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Number of rows when interpreted as a matrix.
    pub fn rows(&self) -> usize {
        match self.shape.as_slice() {
            [r, _] => *r,
            [n] => *n,
            _ => panic!("rows() on tensor of shape {:?}", self.shape),
        }
    }

    /// Number of columns when interpreted as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.as_slice() {
            [_, c] => *c,
            [_] => 1,
            _ => panic!("cols() on tensor of shape {:?}", self.shape),
        }
    }

    /// Scalar value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1, "item() on non-scalar");
        self.values[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    /// Same values, no tape node: gradients stop here.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: Arc::clone(&self.values),
            node: None,
        }
    }

    fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.is_matrix() {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(TensorError::NotMatrix {
                op,
                shape: self.shape.clone(),
            })
        }
    }

    fn src(&self) -> Src {
        Src {
            node: self.node,
            vals: Arc::clone(&self.values),
        }
    }
}

/// Input reference saved inside a tape node: the producing node (if tracked)
/// plus the forward values a backward rule may need.
#[derive(Debug)]
struct Src {
    node: Option<usize>,
    vals: Arc<Vec<f64>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul {
        a: Src,
        b: Src,
        n: usize,
        k: usize,
        m: usize,
    },
    Add {
        a: Src,
        b: Src,
    },
    Sub {
        a: Src,
        b: Src,
    },
    Mul {
        a: Src,
        b: Src,
    },
    Scale {
        a: Src,
        factor: f64,
    },
    Transpose {
        a: Src,
        rows: usize,
        cols: usize,
    },
    RowSoftmax {
        a: Src,
        out: Arc<Vec<f64>>,
        rows: usize,
        cols: usize,
    },
    LeakyRelu {
        a: Src,
        slope: f64,
    },
    Elu {
        a: Src,
        out: Arc<Vec<f64>>,
    },
    Sigmoid {
        a: Src,
        out: Arc<Vec<f64>>,
    },
    Exp {
        a: Src,
        out: Arc<Vec<f64>>,
    },
    Ln {
        a: Src,
    },
    Sum {
        a: Src,
    },
    RowSum {
        a: Src,
        rows: usize,
        cols: usize,
    },
    AbsSum {
        a: Src,
    },
    RowAbsSum {
        a: Src,
        rows: usize,
        cols: usize,
    },
    ConcatCols {
        parts: Vec<(Src, usize)>,
        rows: usize,
    },
    GatherRows {
        a: Src,
        indices: Arc<Vec<usize>>,
        src_rows: usize,
        cols: usize,
    },
    OuterSum {
        a: Src,
        b: Src,
        rows: usize,
        cols: usize,
    },
    AddRow {
        a: Src,
        b: Src,
        rows: usize,
        cols: usize,
    },
    RowNormalize {
        a: Src,
        norms: Arc<Vec<f64>>,
        out: Arc<Vec<f64>>,
        rows: usize,
        cols: usize,
    },
    Diag {
        a: Src,
        n: usize,
    },
    CrossEntropy {
        a: Src,
        probs: Arc<Vec<f64>>,
        labels: Arc<Vec<usize>>,
        rows: usize,
        cols: usize,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    size: usize,
}

/// Gradient tape. Nodes are stored in the order they were recorded, so every
/// input id precedes its output id and one reverse sweep suffices.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `t`, or `None` when `t` is untracked or
    /// unreachable from the loss.
    pub fn wrt(&self, t: &Tensor) -> Option<&[f64]> {
        t.node
            .and_then(|id| self.grads.get(id).and_then(|g| g.as_deref()))
    }

    /// Gradient as an owned vector, zeros when the tensor never influenced
    /// the loss.
    pub fn wrt_or_zeros(&self, t: &Tensor) -> Vec<f64> {
        match self.wrt(t) {
            Some(g) => g.to_vec(),
            None => vec![0.0; t.len()],
        }
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

    /// Registers a tracked leaf holding `values`.
    pub fn leaf(&mut self, t: &Tensor) -> Tensor {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op: Op::Leaf,
            size: t.len(),
        });
        Tensor {
            shape: t.shape.clone(),
            values: Arc::clone(&t.values),
            node: Some(id),
        }
    }

    fn emit(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Option<Op>) -> Tensor {
        let node = op.map(|op| {
            let id = self.nodes.len();
            self.nodes.push(Node {
                op,
                size: values.len(),
            });
            id
        });
        Tensor {
            shape,
            values: Arc::new(values),
            node,
        }
    }

    fn tracked(inputs: &[&Tensor]) -> bool {
        inputs.iter().any(|t| t.node.is_some())
    }

    // ── arithmetic ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (n, k) = a.require_matrix("matmul")?;
        let (k2, m) = b.require_matrix("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let mut out = vec![0.0; n * m];
        kernels::matmul_nn(a.values(), b.values(), n, k, m, &mut out);
        let op = Self::tracked(&[a, b]).then(|| Op::Matmul {
            a: a.src(),
            b: b.src(),
            n,
            k,
            m,
        });
        Ok(self.emit(vec![n, m], out, op))
    }

    fn zip_same_shape(
        &mut self,
        op_name: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
        mk: impl FnOnce(Src, Src) -> Op,
    ) -> Result<Tensor> {
        if a.shape != b.shape {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let out: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let op = Self::tracked(&[a, b]).then(|| mk(a.src(), b.src()));
        Ok(self.emit(a.shape.clone(), out, op))
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_same_shape("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_same_shape("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_same_shape("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: &Tensor, factor: f64) -> Tensor {
        let out: Vec<f64> = a.values().iter().map(|&x| x * factor).collect();
        let op = Self::tracked(&[a]).then(|| Op::Scale { a: a.src(), factor });
        self.emit(a.shape.clone(), out, op)
    }

    pub fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        let (r, c) = a.require_matrix("transpose")?;
        let vals = a.values();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = vals[i * c + j];
            }
        }
        let op = Self::tracked(&[a]).then(|| Op::Transpose {
            a: a.src(),
            rows: r,
            cols: c,
        });
        Ok(self.emit(vec![c, r], out, op))
    }

    /// Adds a 1×m row vector to every row of an n×m matrix.
    pub fn add_row(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (n, m) = a.require_matrix("add_row")?;
        let (br, bc) = b.require_matrix("add_row")?;
        if br != 1 || bc != m {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let bv = b.values();
        let out: Vec<f64> = a
            .values()
            .chunks(m)
            .flat_map(|row| row.iter().zip(bv.iter()).map(|(&x, &y)| x + y))
            .collect();
        let op = Self::tracked(&[a, b]).then(|| Op::AddRow {
            a: a.src(),
            b: b.src(),
            rows: n,
            cols: m,
        });
        Ok(self.emit(vec![n, m], out, op))
    }

    /// Outer sum of two column vectors: `out[i][j] = a[i] + b[j]`.
    pub fn outer_sum(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (n, ac) = a.require_matrix("outer_sum")?;
        let (m, bc) = b.require_matrix("outer_sum")?;
        if ac != 1 || bc != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "outer_sum",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let av = a.values();
        let bv = b.values();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = av[i] + bv[j];
            }
        }
        let op = Self::tracked(&[a, b]).then(|| Op::OuterSum {
            a: a.src(),
            b: b.src(),
            rows: n,
            cols: m,
        });
        Ok(self.emit(vec![n, m], out, op))
    }

    // ── nonlinearities ──────────────────────────────────────────────────

    pub fn leaky_relu(&mut self, a: &Tensor, slope: f64) -> Result<Tensor> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(TensorError::InvalidSlope(slope));
        }
        let out: Vec<f64> = a
            .values()
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let op = Self::tracked(&[a]).then(|| Op::LeakyRelu { a: a.src(), slope });
        Ok(self.emit(a.shape.clone(), out, op))
    }

    pub fn elu(&mut self, a: &Tensor) -> Tensor {
        let out: Vec<f64> = a
            .values()
            .iter()
            .map(|&x| if x >= 0.0 { x } else { x.exp() - 1.0 })
            .collect();
        let out_arc = Arc::new(out);
        let op = Self::tracked(&[a]).then(|| Op::Elu {
            a: a.src(),
            out: Arc::clone(&out_arc),
        });
        self.emit_shared(a.shape.clone(), out_arc, op)
    }

    pub fn sigmoid(&mut self, a: &Tensor) -> Tensor {
        let out: Vec<f64> = a.values().iter().map(|&x| sigmoid_scalar(x)).collect();
        let out_arc = Arc::new(out);
        let op = Self::tracked(&[a]).then(|| Op::Sigmoid {
            a: a.src(),
            out: Arc::clone(&out_arc),
        });
        self.emit_shared(a.shape.clone(), out_arc, op)
    }

    pub fn exp(&mut self, a: &Tensor) -> Tensor {
        let out: Vec<f64> = a.values().iter().map(|&x| x.exp()).collect();
        let out_arc = Arc::new(out);
        let op = Self::tracked(&[a]).then(|| Op::Exp {
            a: a.src(),
            out: Arc::clone(&out_arc),
        });
        self.emit_shared(a.shape.clone(), out_arc, op)
    }

    pub fn ln(&mut self, a: &Tensor) -> Tensor {
        let out: Vec<f64> = a.values().iter().map(|&x| x.ln()).collect();
        let op = Self::tracked(&[a]).then(|| Op::Ln { a: a.src() });
        self.emit(a.shape.clone(), out, op)
    }

    fn emit_shared(&mut self, shape: Vec<usize>, values: Arc<Vec<f64>>, op: Option<Op>) -> Tensor {
        let node = op.map(|op| {
            let id = self.nodes.len();
            self.nodes.push(Node {
                op,
                size: values.len(),
            });
            id
        });
        Tensor {
            shape,
            values,
            node,
        }
    }

    /// Row-wise softmax, numerically stabilized by row-max subtraction.
    /// Masked entries are exactly zero in the output and receive no gradient;
    /// a fully masked row is an error.
    pub fn row_softmax(&mut self, a: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
        let (n, m) = a.require_matrix("row_softmax")?;
        if let Some(mk) = mask {
            if mk.len() != n * m {
                return Err(TensorError::ShapeMismatch {
                    op: "row_softmax mask",
                    lhs: a.shape.clone(),
                    rhs: vec![mk.len()],
                });
            }
        }
        let vals = a.values();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &vals[i * m..(i + 1) * m];
            let live = |j: usize| mask.map_or(true, |mk| mk[i * m + j]);
            let mut max = f64::NEG_INFINITY;
            for (j, &x) in row.iter().enumerate() {
                if live(j) && x > max {
                    max = x;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(TensorError::DegenerateRow { row: i });
            }
            let mut denom = 0.0;
            for (j, &x) in row.iter().enumerate() {
                if live(j) {
                    let e = (x - max).exp();
                    out[i * m + j] = e;
                    denom += e;
                }
            }
            for j in 0..m {
                out[i * m + j] /= denom;
            }
        }
        let out_arc = Arc::new(out);
        let op = Self::tracked(&[a]).then(|| Op::RowSoftmax {
            a: a.src(),
            out: Arc::clone(&out_arc),
            rows: n,
            cols: m,
        });
        Ok(self.emit_shared(vec![n, m], out_arc, op))
    }

    /// Normalizes each row to unit L2 norm. Errors on a zero-norm row.
    pub fn row_l2_normalize(&mut self, a: &Tensor) -> Result<Tensor> {
        let (n, m) = a.require_matrix("row_l2_normalize")?;
        let vals = a.values();
        let mut norms = vec![0.0; n];
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &vals[i * m..(i + 1) * m];
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(TensorError::ZeroNormRow { row: i });
            }
            norms[i] = norm;
            for j in 0..m {
                out[i * m + j] = row[j] / norm;
            }
        }
        let out_arc = Arc::new(out);
        let op = Self::tracked(&[a]).then(|| Op::RowNormalize {
            a: a.src(),
            norms: Arc::new(norms),
            out: Arc::clone(&out_arc),
            rows: n,
            cols: m,
        });
        Ok(self.emit_shared(vec![n, m], out_arc, op))
    }

    // ── reductions ──────────────────────────────────────────────────────

    pub fn sum(&mut self, a: &Tensor) -> Tensor {
        let s: f64 = a.values().iter().sum();
        let op = Self::tracked(&[a]).then(|| Op::Sum { a: a.src() });
        self.emit(vec![1, 1], vec![s], op)
    }

    pub fn mean(&mut self, a: &Tensor) -> Tensor {
        let n = a.len().max(1) as f64;
        let s = self.sum(a);
        self.scale(&s, 1.0 / n)
    }

    /// Sums each row: n×m → n×1.
    pub fn row_sum(&mut self, a: &Tensor) -> Result<Tensor> {
        let (n, m) = a.require_matrix("row_sum")?;
        let vals = a.values();
        let out: Vec<f64> = (0..n).map(|i| vals[i * m..(i + 1) * m].iter().sum()).collect();
        let op = Self::tracked(&[a]).then(|| Op::RowSum {
            a: a.src(),
            rows: n,
            cols: m,
        });
        Ok(self.emit(vec![n, 1], out, op))
    }

    /// Sum of absolute values. The subgradient at 0 is 0.
    pub fn abs_sum(&mut self, a: &Tensor) -> Tensor {
        let s: f64 = a.values().iter().map(|x| x.abs()).sum();
        let op = Self::tracked(&[a]).then(|| Op::AbsSum { a: a.src() });
        self.emit(vec![1, 1], vec![s], op)
    }

    /// Per-row sum of absolute values: n×m → n×1. Subgradient at 0 is 0.
    pub fn row_abs_sum(&mut self, a: &Tensor) -> Result<Tensor> {
        let (n, m) = a.require_matrix("row_abs_sum")?;
        let vals = a.values();
        let out: Vec<f64> = (0..n)
            .map(|i| vals[i * m..(i + 1) * m].iter().map(|x| x.abs()).sum())
            .collect();
        let op = Self::tracked(&[a]).then(|| Op::RowAbsSum {
            a: a.src(),
            rows: n,
            cols: m,
        });
        Ok(self.emit(vec![n, 1], out, op))
    }

    /// L1 distance between two equally shaped tensors.
    pub fn l1_distance(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let d = self.sub(a, b)?;
        Ok(self.abs_sum(&d))
    }

    /// Diagonal of a square matrix as a column vector.
    pub fn diag(&mut self, a: &Tensor) -> Result<Tensor> {
        let (n, m) = a.require_matrix("diag")?;
        if n != m {
            return Err(TensorError::ShapeMismatch {
                op: "diag",
                lhs: a.shape.clone(),
                rhs: a.shape.clone(),
            });
        }
        let vals = a.values();
        let out: Vec<f64> = (0..n).map(|i| vals[i * n + i]).collect();
        let op = Self::tracked(&[a]).then(|| Op::Diag { a: a.src(), n });
        Ok(self.emit(vec![n, 1], out, op))
    }

    // ── structure ───────────────────────────────────────────────────────

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let (n, _) = parts[0].require_matrix("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.require_matrix("concat_cols")?;
            if r != n {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(widths.iter()) {
            let vals = p.values();
            for i in 0..n {
                out[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&vals[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let tracked = parts.iter().any(|p| p.node.is_some());
        let op = tracked.then(|| Op::ConcatCols {
            parts: parts
                .iter()
                .zip(widths.iter())
                .map(|(p, &w)| (p.src(), w))
                .collect(),
            rows: n,
        });
        Ok(self.emit(vec![n, total], out, op))
    }

    /// Selects rows by index (duplicates allowed); gradients scatter-add back.
    pub fn gather_rows(&mut self, a: &Tensor, indices: &[usize]) -> Result<Tensor> {
        let (n, m) = a.require_matrix("gather_rows")?;
        for &i in indices {
            if i >= n {
                return Err(TensorError::RowIndexOutOfBounds { index: i, rows: n });
            }
        }
        let vals = a.values();
        let mut out = vec![0.0; indices.len() * m];
        for (r, &i) in indices.iter().enumerate() {
            out[r * m..(r + 1) * m].copy_from_slice(&vals[i * m..(i + 1) * m]);
        }
        let op = Self::tracked(&[a]).then(|| Op::GatherRows {
            a: a.src(),
            indices: Arc::new(indices.to_vec()),
            src_rows: n,
            cols: m,
        });
        Ok(self.emit(vec![indices.len(), m], out, op))
    }

    /// Mean cross-entropy of logits against class indices.
    /// Gradient is `(softmax − one-hot) / rows`.
    pub fn cross_entropy_logits(&mut self, logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let (n, c) = logits.require_matrix("cross_entropy_logits")?;
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy_logits",
                lhs: logits.shape.clone(),
                rhs: vec![labels.len()],
            });
        }
        let vals = logits.values();
        let mut probs = vec![0.0; n * c];
        let mut total = 0.0;
        for i in 0..n {
            let y = labels[i];
            if y >= c {
                return Err(TensorError::LabelOutOfRange {
                    row: i,
                    label: y,
                    classes: c,
                });
            }
            let row = &vals[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                probs[i * c + j] = e;
                denom += e;
            }
            for j in 0..c {
                probs[i * c + j] /= denom;
            }
            total += denom.ln() - (row[y] - max);
        }
        let loss = total / n as f64;
        let op = Self::tracked(&[logits]).then(|| Op::CrossEntropy {
            a: logits.src(),
            probs: Arc::new(probs),
            labels: Arc::new(labels.to_vec()),
            rows: n,
            cols: c,
        });
        Ok(self.emit(vec![1, 1], vec![loss], op))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients accumulate (sum) into
    /// every tracked tensor reachable from the loss.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        let root = loss.node.ok_or(TensorError::UntrackedLoss)?;
        if loss.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: loss.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root] = Some(vec![1.0]);

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let mut add_to = |src: &Src, contribution: Vec<f64>| {
            if let Some(target) = src.node {
                let slot = grads[target].get_or_insert_with(|| vec![0.0; self.nodes[target].size]);
                for (s, c) in slot.iter_mut().zip(contribution.iter()) {
                    *s += c;
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b, n, k, m } => {
                if a.node.is_some() {
                    let mut da = vec![0.0; n * k];
                    kernels::matmul_nt(g, &b.vals, *n, *m, *k, &mut da);
                    add_to(a, da);
                }
                if b.node.is_some() {
                    let mut db = vec![0.0; k * m];
                    kernels::matmul_tn(&a.vals, g, *n, *k, *m, &mut db);
                    add_to(b, db);
                }
            }
            Op::Add { a, b } => {
                add_to(a, g.to_vec());
                add_to(b, g.to_vec());
            }
            Op::Sub { a, b } => {
                add_to(a, g.to_vec());
                add_to(b, g.iter().map(|x| -x).collect());
            }
            Op::Mul { a, b } => {
                if a.node.is_some() {
                    add_to(a, g.iter().zip(b.vals.iter()).map(|(x, y)| x * y).collect());
                }
                if b.node.is_some() {
                    add_to(b, g.iter().zip(a.vals.iter()).map(|(x, y)| x * y).collect());
                }
            }
            Op::Scale { a, factor } => {
                add_to(a, g.iter().map(|x| x * factor).collect());
            }
            Op::Transpose { a, rows, cols } => {
                // g has shape cols×rows
                let mut da = vec![0.0; rows * cols];
                for i in 0..*rows {
                    for j in 0..*cols {
                        da[i * cols + j] = g[j * rows + i];
                    }
                }
                add_to(a, da);
            }
            Op::RowSoftmax { a, out, rows, cols } => {
                let mut da = vec![0.0; rows * cols];
                for i in 0..*rows {
                    let y = &out[i * cols..(i + 1) * cols];
                    let gr = &g[i * cols..(i + 1) * cols];
                    let dot: f64 = y.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                    for j in 0..*cols {
                        da[i * cols + j] = y[j] * (gr[j] - dot);
                    }
                }
                add_to(a, da);
            }
            Op::LeakyRelu { a, slope } => {
                add_to(
                    a,
                    g.iter()
                        .zip(a.vals.iter())
                        .map(|(gx, &x)| if x >= 0.0 { *gx } else { gx * slope })
                        .collect(),
                );
            }
            Op::Elu { a, out } => {
                add_to(
                    a,
                    g.iter()
                        .zip(out.iter())
                        .map(|(gx, &y)| if y >= 0.0 { *gx } else { gx * (y + 1.0) })
                        .collect(),
                );
            }
            Op::Sigmoid { a, out } => {
                add_to(
                    a,
                    g.iter()
                        .zip(out.iter())
                        .map(|(gx, &y)| gx * y * (1.0 - y))
                        .collect(),
                );
            }
            Op::Exp { a, out } => {
                add_to(a, g.iter().zip(out.iter()).map(|(gx, &y)| gx * y).collect());
            }
            Op::Ln { a } => {
                add_to(a, g.iter().zip(a.vals.iter()).map(|(gx, &x)| gx / x).collect());
            }
            Op::Sum { a } => {
                add_to(a, vec![g[0]; a.vals.len()]);
            }
            Op::RowSum { a, rows, cols } => {
                let mut da = vec![0.0; rows * cols];
                for i in 0..*rows {
                    da[i * cols..(i + 1) * cols].fill(g[i]);
                }
                add_to(a, da);
            }
            Op::AbsSum { a } => {
                add_to(
                    a,
                    a.vals.iter().map(|&x| g[0] * sign_zero(x)).collect(),
                );
            }
            Op::RowAbsSum { a, rows, cols } => {
                let mut da = vec![0.0; rows * cols];
                for i in 0..*rows {
                    for j in 0..*cols {
                        da[i * cols + j] = g[i] * sign_zero(a.vals[i * cols + j]);
                    }
                }
                add_to(a, da);
            }
            Op::ConcatCols { parts, rows } => {
                let total: usize = parts.iter().map(|(_, w)| w).sum();
                let mut offset = 0;
                for (src, w) in parts {
                    if src.node.is_some() {
                        let mut dp = vec![0.0; rows * w];
                        for i in 0..*rows {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        add_to(src, dp);
                    }
                    offset += w;
                }
            }
            Op::GatherRows {
                a,
                indices,
                src_rows,
                cols,
            } => {
                let mut da = vec![0.0; src_rows * cols];
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..*cols {
                        da[i * cols + j] += g[r * cols + j];
                    }
                }
                add_to(a, da);
            }
            Op::OuterSum { a, b, rows, cols } => {
                if a.node.is_some() {
                    let da: Vec<f64> = (0..*rows)
                        .map(|i| g[i * cols..(i + 1) * cols].iter().sum())
                        .collect();
                    add_to(a, da);
                }
                if b.node.is_some() {
                    let mut db = vec![0.0; *cols];
                    for i in 0..*rows {
                        for j in 0..*cols {
                            db[j] += g[i * cols + j];
                        }
                    }
                    add_to(b, db);
                }
            }
            Op::AddRow { a, b, rows, cols } => {
                add_to(a, g.to_vec());
                if b.node.is_some() {
                    let mut db = vec![0.0; *cols];
                    for i in 0..*rows {
                        for j in 0..*cols {
                            db[j] += g[i * cols + j];
                        }
                    }
                    add_to(b, db);
                }
            }
            Op::RowNormalize {
                a,
                norms,
                out,
                rows,
                cols,
            } => {
                let mut da = vec![0.0; rows * cols];
                for i in 0..*rows {
                    let y = &out[i * cols..(i + 1) * cols];
                    let gr = &g[i * cols..(i + 1) * cols];
                    let dot: f64 = y.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                    for j in 0..*cols {
                        da[i * cols + j] = (gr[j] - y[j] * dot) / norms[i];
                    }
                }
                add_to(a, da);
            }
            Op::Diag { a, n } => {
                let mut da = vec![0.0; n * n];
                for i in 0..*n {
                    da[i * n + i] = g[i];
                }
                add_to(a, da);
            }
            Op::CrossEntropy {
                a,
                probs,
                labels,
                rows,
                cols,
            } => {
                let scale = g[0] / *rows as f64;
                let mut da = vec![0.0; rows * cols];
                for i in 0..*rows {
                    for j in 0..*cols {
                        let one_hot = if labels[i] == j { 1.0 } else { 0.0 };
                        da[i * cols + j] = scale * (probs[i * cols + j] - one_hot);
                    }
                }
                add_to(a, da);
            }
        }
    }
}

fn sign_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests;
