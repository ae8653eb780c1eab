use crate::scalar::Scalar;

use super::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pointwise {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Unary(Var, Pointwise),
    Clamp(Var, T, T),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, inv: Vec<T> },
    Segment { x: Var, seg: Vec<usize>, mode: Reduce, counts: Vec<usize>, argmax: Vec<usize> },
    GatherRows(Var, Vec<usize>),
    GatherElems(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    EdgeMatVec { w: Var, x: Var, dout: usize, din: usize },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Append-only record of primitive applications for reverse-mode
/// differentiation. Node order is a topological order by construction.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var, like: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.to_vec()))
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

fn two_d(op: &'static str, t: &[usize]) -> Result<(usize, usize)> {
    match t {
        [r, c] => Ok((*r, *c)),
        _ => Err(shape_err(op, format!("expected a matrix, got shape {t:?}"))),
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Records a leaf; it receives a gradient iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let g = t.requires_grad();
        self.push(t, Op::Leaf, g)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t.with_grad(true), Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t.with_grad(false), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = two_d("matmul", self.shape(a))?;
        let (p2, q) = two_d("matmul", self.shape(b))?;
        if p != p2 {
            return Err(shape_err("matmul", format!("inner dimensions {p} and {p2} differ")));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![T::zero(); m * q];
        for i in 0..m {
            let orow = &mut out[i * q..(i + 1) * q];
            for k in 0..p {
                let aik = av[i * p + k];
                if aik == T::zero() {
                    continue;
                }
                let brow = &bv[k * q..(k + 1) * q];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        let ng = self.ng(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, q], out)?, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = two_d("transpose", self.shape(a))?;
        let v = self.value(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        let ng = self.ng(&[a]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, rec: Op<T>) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let av = self.value(a);
        let data = av.data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(t, rec, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `x[r, c] + b[c]` for a matrix `x` and a vector (or `1×c` matrix) `b`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let c = self.value(x).cols();
        if self.value(b).len() != c {
            return Err(shape_err("add_row", format!("{:?} + {:?}", self.shape(x), self.shape(b))));
        }
        let bv = self.value(b).data().to_vec();
        let xv = self.value(x);
        let data = xv.data().chunks(c.max(1)).flat_map(|r| r.iter().zip(&bv).map(|(&p, &q)| p + q)).collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        let ng = self.ng(&[x, b]);
        Ok(self.push(t, Op::AddRow(x, b), ng))
    }

    /// `x[r, c] * s[r]` scaling each row by a per-row scalar (`s` has `rows(x)` entries).
    pub fn mul_col(&mut self, x: Var, s: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        if self.value(s).len() != r {
            return Err(shape_err("mul_col", format!("{:?} * {:?}", self.shape(x), self.shape(s))));
        }
        let sv = self.value(s).data();
        let mut data = xv.data().to_vec();
        for (i, row) in data.chunks_mut(c.max(1)).enumerate() {
            for v in row {
                *v *= sv[i];
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        let ng = self.ng(&[x, s]);
        Ok(self.push(t, Op::MulCol(x, s), ng))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x).map(|v| v * c);
        let ng = self.ng(&[x]);
        self.push(t, Op::Scale(x, c), ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x).map(|v| v + c);
        let ng = self.ng(&[x]);
        self.push(t, Op::AddScalar(x), ng)
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let n = self.scale(x, -T::one());
        self.add_scalar(n, T::one())
    }

    pub fn pointwise(&mut self, x: Var, f: Pointwise) -> Result<Var> {
        let xv = self.value(x);
        if f == Pointwise::Log {
            if let Some(bad) = xv.data().iter().find(|v| !(**v > T::zero())) {
                return Err(TensorError::Domain { op: "log", detail: format!("non-positive input {bad}") });
            }
        }
        let t = xv.map(|v| match f {
            Pointwise::Relu => v.max(T::zero()),
            Pointwise::Sigmoid => sigmoid(v),
            Pointwise::Tanh => v.tanh(),
            Pointwise::Exp => v.exp(),
            Pointwise::Log => v.ln(),
            Pointwise::Neg => -v,
        });
        let ng = self.ng(&[x]);
        Ok(self.push(t, Op::Unary(x, f), ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Relu).expect("relu has no domain restriction")
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Sigmoid).expect("sigmoid has no domain restriction")
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Tanh).expect("tanh has no domain restriction")
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.pointwise(x, Pointwise::Exp).expect("exp has no domain restriction")
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.pointwise(x, Pointwise::Log)
    }

    /// Clamps into `[lo, hi]`; the gradient passes only where the input is inside.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let t = self.value(x).map(|v| v.max(lo).min(hi));
        let ng = self.ng(&[x]);
        self.push(t, Op::Clamp(x, lo, hi), ng)
    }

    /// Softmax over the last axis, stabilized by max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.cols().max(1);
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(&[x]);
        self.push(t, Op::Softmax(x), ng)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.cols().max(1);
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(c) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(&[x]);
        self.push(t, Op::LogSoftmax(x), ng)
    }

    /// Row-wise `(a - mean(a)) / (std(a) + eps)` over the last axis, population std.
    pub fn layer_norm(&mut self, x: Var, eps: T) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        if c == 0 {
            return Err(shape_err("layer_norm", "empty last axis".into()));
        }
        let nf = T::of_usize(c);
        let mut data = xv.data().to_vec();
        let mut inv = Vec::with_capacity(xv.rows());
        for row in data.chunks_mut(c) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let k = T::one() / (var.sqrt() + eps);
            for v in row.iter_mut() {
                *v = (*v - mean) * k;
            }
            inv.push(k);
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        let ng = self.ng(&[x]);
        Ok(self.push(t, Op::LayerNorm { x, inv }, ng))
    }

    /// Reduces rows of `x` into `n_out` segments. Empty segments produce zero
    /// rows in every mode; see [`empty_segments`] for the max-mode flag.
    pub fn segment_reduce(&mut self, x: Var, seg: &[usize], n_out: usize, mode: Reduce) -> Result<Var> {
        let xv = self.value(x);
        let (m, d) = (xv.rows(), xv.cols());
        if seg.len() != m {
            return Err(shape_err("segment_reduce", format!("{} segment ids for {m} rows", seg.len())));
        }
        if let Some(&bad) = seg.iter().find(|&&s| s >= n_out) {
            return Err(TensorError::Index { op: "segment_reduce", index: bad, bound: n_out });
        }
        let mut counts = vec![0usize; n_out];
        for &s in seg {
            counts[s] += 1;
        }
        let src = xv.data();
        let mut out = vec![T::zero(); n_out * d];
        let mut argmax = Vec::new();
        match mode {
            Reduce::Sum | Reduce::Mean => {
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..d {
                        out[s * d + c] += src[r * d + c];
                    }
                }
                if mode == Reduce::Mean {
                    for (s, &cnt) in counts.iter().enumerate() {
                        if cnt > 0 {
                            let k = T::of_usize(cnt);
                            for c in 0..d {
                                out[s * d + c] /= k;
                            }
                        }
                    }
                }
            }
            Reduce::Max => {
                argmax = vec![usize::MAX; n_out * d];
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..d {
                        let o = s * d + c;
                        let v = src[r * d + c];
                        if argmax[o] == usize::MAX || v > out[o] {
                            out[o] = v;
                            argmax[o] = r;
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![n_out, d], out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(t, Op::Segment { x, seg: seg.to_vec(), mode, counts, argmax }, ng))
    }

    /// Selects rows `idx` of a matrix (duplicates allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (r, d) = (xv.rows(), xv.cols());
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= r {
                return Err(TensorError::Index { op: "gather_rows", index: i, bound: r });
            }
            out.extend_from_slice(xv.row(i));
        }
        let t = Tensor::new(vec![idx.len(), d], out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(t, Op::GatherRows(x, idx.to_vec()), ng))
    }

    /// Selects flat elements of `x` into a vector.
    pub fn gather_elems(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= xv.len() {
                return Err(TensorError::Index { op: "gather_elems", index: i, bound: xv.len() });
            }
            out.push(xv[i]);
        }
        let t = Tensor::vector(out);
        let ng = self.ng(&[x]);
        Ok(self.push(t, Op::GatherElems(x, idx.to_vec()), ng))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let r = match xs.first() {
            Some(&v) => self.value(v).rows(),
            None => return Err(shape_err("concat_cols", "no inputs".into())),
        };
        if xs.iter().any(|&v| self.value(v).rows() != r) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let total: usize = xs.iter().map(|&v| self.value(v).cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &v in xs {
                out.extend_from_slice(self.value(v).row(i));
            }
        }
        let t = Tensor::new(vec![r, total], out)?;
        let ng = self.ng(xs);
        Ok(self.push(t, Op::ConcatCols(xs.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let c = match xs.first() {
            Some(&v) => self.value(v).cols(),
            None => return Err(shape_err("concat_rows", "no inputs".into())),
        };
        if xs.iter().any(|&v| self.value(v).cols() != c) {
            return Err(shape_err("concat_rows", "column counts differ".into()));
        }
        let mut out = Vec::new();
        let mut rows = 0;
        for &v in xs {
            out.extend_from_slice(self.value(v).data());
            rows += self.value(v).rows();
        }
        let t = Tensor::new(vec![rows, c], out)?;
        let ng = self.ng(xs);
        Ok(self.push(t, Op::ConcatRows(xs.to_vec()), ng))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        if start + len > c {
            return Err(TensorError::Index { op: "slice_cols", index: start + len, bound: c });
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&xv.row(i)[start..start + len]);
        }
        let t = Tensor::new(vec![r, len], out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(t, Op::SliceCols(x, start), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        let ng = self.ng(&[x]);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let ng = self.ng(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().copied().sum::<T>() / T::of_usize(v.len().max(1));
        let ng = self.ng(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// Per-row matrix-vector product: row `e` of `w` is read as a row-major
    /// `dout×din` matrix and applied to row `e` of `x`.
    pub fn edge_matvec(&mut self, w: Var, x: Var, dout: usize, din: usize) -> Result<Var> {
        let (wv, xv) = (self.value(w), self.value(x));
        let m = xv.rows();
        if xv.cols() != din || wv.cols() != dout * din || wv.rows() != m {
            return Err(shape_err(
                "edge_matvec",
                format!("w {:?}, x {:?}, dout {dout}, din {din}", wv.shape(), xv.shape()),
            ));
        }
        let (wd, xd) = (wv.data(), xv.data());
        let mut out = vec![T::zero(); m * dout];
        for e in 0..m {
            let xr = &xd[e * din..(e + 1) * din];
            for o in 0..dout {
                let wr = &wd[e * dout * din + o * din..e * dout * din + (o + 1) * din];
                out[e * dout + o] = wr.iter().zip(xr).map(|(&a, &b)| a * b).sum();
            }
        }
        let t = Tensor::new(vec![m, dout], out)?;
        let ng = self.ng(&[w, x]);
        Ok(self.push(t, Op::EdgeMatVec { w, x, dout, din }, ng))
    }

    /// Reverse pass from a single-element output. Visits every recorded node
    /// once, in reverse insertion order.
    pub fn backward(&self, out: Var) -> Result<Grads<T>> {
        if self.value(out).len() != 1 {
            return Err(shape_err("backward", format!("output has shape {:?}", self.shape(out))));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![T::one()]);
        for id in (0..=out.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].needs_grad)
                    .map(|g| Tensor::new(self.nodes[i].value.shape().to_vec(), g).expect("grad shape"))
            })
            .collect();
        Ok(Grads { grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, p) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let q = self.value(*b).shape()[1];
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.acc(grads, *a, |ga| {
                    for i in 0..m {
                        for k in 0..p {
                            let mut s = T::zero();
                            for j in 0..q {
                                s += g[i * q + j] * bv[k * q + j];
                            }
                            ga[i * p + k] += s;
                        }
                    }
                });
                self.acc(grads, *b, |gb| {
                    for i in 0..m {
                        for k in 0..p {
                            let aik = av[i * p + k];
                            if aik == T::zero() {
                                continue;
                            }
                            for j in 0..q {
                                gb[k * q + j] += aik * g[i * q + j];
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                self.acc(grads, *a, |ga| {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
                self.acc(grads, *b, |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |ga| add_into(ga, g));
                self.acc(grads, *b, |gb| gb.iter_mut().zip(g).for_each(|(o, &v)| *o -= v));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.acc(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                self.acc(grads, *b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::AddRow(x, b) => {
                let c = self.value(*x).cols().max(1);
                self.acc(grads, *x, |gx| add_into(gx, g));
                self.acc(grads, *b, |gb| {
                    for row in g.chunks(c) {
                        add_into(gb, row);
                    }
                });
            }
            Op::MulCol(x, s) => {
                let c = self.value(*x).cols().max(1);
                let xv = self.value(*x).data();
                let sv = self.value(*s).data();
                self.acc(grads, *x, |gx| {
                    for (i, (gr, orow)) in g.chunks(c).zip(gx.chunks_mut(c)).enumerate() {
                        for (o, &v) in orow.iter_mut().zip(gr) {
                            *o += v * sv[i];
                        }
                    }
                });
                self.acc(grads, *s, |gs| {
                    for (i, (gr, xr)) in g.chunks(c).zip(xv.chunks(c)).enumerate() {
                        gs[i] += gr.iter().zip(xr).map(|(&a, &b)| a * b).sum::<T>();
                    }
                });
            }
            Op::Scale(x, c) => {
                self.acc(grads, *x, |gx| gx.iter_mut().zip(g).for_each(|(o, &v)| *o += v * *c));
            }
            Op::AddScalar(x) => self.acc(grads, *x, |gx| add_into(gx, g)),
            Op::Unary(x, f) => {
                let xv = self.value(*x).data();
                self.acc(grads, *x, |gx| {
                    for i in 0..gx.len() {
                        let d = match f {
                            Pointwise::Relu => {
                                if xv[i] > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Pointwise::Sigmoid => y[i] * (T::one() - y[i]),
                            Pointwise::Tanh => T::one() - y[i] * y[i],
                            Pointwise::Exp => y[i],
                            Pointwise::Log => T::one() / xv[i],
                            Pointwise::Neg => -T::one(),
                        };
                        gx[i] += g[i] * d;
                    }
                });
            }
            Op::Clamp(x, lo, hi) => {
                let xv = self.value(*x).data();
                self.acc(grads, *x, |gx| {
                    for i in 0..gx.len() {
                        if xv[i] >= *lo && xv[i] <= *hi {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let c = node.value.cols().max(1);
                self.acc(grads, *x, |gx| {
                    for ((yr, gr), orow) in y.chunks(c).zip(g.chunks(c)).zip(gx.chunks_mut(c)) {
                        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for k in 0..c {
                            orow[k] += yr[k] * (gr[k] - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let c = node.value.cols().max(1);
                self.acc(grads, *x, |gx| {
                    for ((yr, gr), orow) in y.chunks(c).zip(g.chunks(c)).zip(gx.chunks_mut(c)) {
                        let gs: T = gr.iter().copied().sum();
                        for k in 0..c {
                            orow[k] += gr[k] - yr[k].exp() * gs;
                        }
                    }
                });
            }
            Op::LayerNorm { x, inv } => {
                let c = node.value.cols();
                let xv = self.value(*x).data();
                let nf = T::of_usize(c);
                self.acc(grads, *x, |gx| {
                    for (r, k) in inv.iter().enumerate() {
                        let xr = &xv[r * c..(r + 1) * c];
                        let gr = &g[r * c..(r + 1) * c];
                        let mean = xr.iter().copied().sum::<T>() / nf;
                        let centered: Vec<T> = xr.iter().map(|&v| v - mean).collect();
                        let var = centered.iter().map(|&v| v * v).sum::<T>() / nf;
                        let sd = var.sqrt();
                        // y = c * k with k = 1/(sd+eps); dk/dx_j = -k^2 * c_j / (n sd)
                        let gsum: T = gr.iter().copied().sum();
                        let gc: T = gr.iter().zip(&centered).map(|(&a, &b)| a * b).sum();
                        for j in 0..c {
                            let mut d = *k * (gr[j] - gsum / nf);
                            if sd > T::zero() {
                                d -= *k * *k * gc * centered[j] / (nf * sd);
                            }
                            gx[r * c + j] += d;
                        }
                    }
                });
            }
            Op::Segment { x, seg, mode, counts, argmax } => {
                let d = node.value.cols();
                self.acc(grads, *x, |gx| match mode {
                    Reduce::Sum => {
                        for (r, &s) in seg.iter().enumerate() {
                            add_into(&mut gx[r * d..(r + 1) * d], &g[s * d..(s + 1) * d]);
                        }
                    }
                    Reduce::Mean => {
                        for (r, &s) in seg.iter().enumerate() {
                            let k = T::one() / T::of_usize(counts[s]);
                            for c in 0..d {
                                gx[r * d + c] += g[s * d + c] * k;
                            }
                        }
                    }
                    Reduce::Max => {
                        for (o, &r) in argmax.iter().enumerate() {
                            if r != usize::MAX {
                                gx[r * d + o % d] += g[o];
                            }
                        }
                    }
                });
            }
            Op::GatherRows(x, idx) => {
                let d = node.value.cols();
                self.acc(grads, *x, |gx| {
                    for (o, &i) in idx.iter().enumerate() {
                        add_into(&mut gx[i * d..(i + 1) * d], &g[o * d..(o + 1) * d]);
                    }
                });
            }
            Op::GatherElems(x, idx) => {
                self.acc(grads, *x, |gx| {
                    for (o, &i) in idx.iter().enumerate() {
                        gx[i] += g[o];
                    }
                });
            }
            Op::ConcatCols(xs) => {
                let total = node.value.cols();
                let mut off = 0;
                for &v in xs {
                    let c = self.value(v).cols();
                    self.acc(grads, v, |gv| {
                        for (r, orow) in gv.chunks_mut(c.max(1)).enumerate() {
                            add_into(orow, &g[r * total + off..r * total + off + c]);
                        }
                    });
                    off += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut off = 0;
                for &v in xs {
                    let n = self.value(v).len();
                    self.acc(grads, v, |gv| add_into(gv, &g[off..off + n]));
                    off += n;
                }
            }
            Op::SliceCols(x, start) => {
                let c = self.value(*x).cols();
                let len = node.value.cols();
                self.acc(grads, *x, |gx| {
                    for (r, gr) in g.chunks(len.max(1)).enumerate() {
                        add_into(&mut gx[r * c + start..r * c + start + len], gr);
                    }
                });
            }
            Op::Reshape(x) => self.acc(grads, *x, |gx| add_into(gx, g)),
            Op::Sum(x) => self.acc(grads, *x, |gx| gx.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(x) => {
                let n = T::of_usize(self.value(*x).len().max(1));
                self.acc(grads, *x, |gx| gx.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::EdgeMatVec { w, x, dout, din } => {
                let (dout, din) = (*dout, *din);
                let wd = self.value(*w).data();
                let xd = self.value(*x).data();
                let m = self.value(*x).rows();
                self.acc(grads, *w, |gw| {
                    for e in 0..m {
                        for o in 0..dout {
                            let go = g[e * dout + o];
                            let base = e * dout * din + o * din;
                            for i in 0..din {
                                gw[base + i] += go * xd[e * din + i];
                            }
                        }
                    }
                });
                self.acc(grads, *x, |gx| {
                    for e in 0..m {
                        for o in 0..dout {
                            let go = g[e * dout + o];
                            let base = e * dout * din + o * din;
                            for i in 0..din {
                                gx[e * din + i] += go * wd[base + i];
                            }
                        }
                    }
                });
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(o, &v)| *o += v);
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Flags the segments that receive no rows.
pub fn empty_segments(seg: &[usize], n_out: usize) -> Vec<bool> {
    let mut empty = vec![true; n_out];
    for &s in seg {
        if s < n_out {
            empty[s] = false;
        }
    }
    empty
}
