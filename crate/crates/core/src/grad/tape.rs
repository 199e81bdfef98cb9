use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use super::GradError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `b` is a row vector repeated over every row of `a`.
    Row,
    /// `b` is a column vector repeated over every column of `a`.
    Col,
    Scalar,
}

impl Broadcast {
    fn detect(a: &[usize], b: &[usize]) -> Option<Self> {
        if a == b {
            return Some(Self::Same);
        }
        if b.iter().product::<usize>() == 1 {
            return Some(Self::Scalar);
        }
        if a.len() == 2 {
            let (m, n) = (a[0], a[1]);
            if b == [n] || b == [1, n] {
                return Some(Self::Row);
            }
            if b == [m, 1] {
                return Some(Self::Col);
            }
        }
        None
    }

    #[inline]
    fn index(self, i: usize, cols: usize) -> usize {
        match self {
            Self::Same => i,
            Self::Row => i % cols,
            Self::Col => i / cols,
            Self::Scalar => 0,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Reshape(Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumAxis { input: Var, axis: usize },
    L2Norm { input: Var, axis: usize },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Adjoints produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`, or `None` when `var` does not
    /// influence the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.adjoints.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of the loss w.r.t. `var`; zeros when unreachable.
    pub fn wrt(&self, var: Var) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        self.adjoints[var.0].take().unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

/// Wengert list for one forward pass. Consumed by exactly one call to
/// [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

fn view2(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize), GradError> {
    // Returns (rows, cols, axis) with rank-1 tensors viewed as a single row.
    match (shape.len(), axis) {
        (1, 0) => Ok((1, shape[0], 1)),
        (2, 0 | 1) => Ok((shape[0], shape[1], axis)),
        _ => Err(GradError::ShapeMismatch { op, detail: format!("axis {axis} invalid for shape {shape:?}") }),
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

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Records a differentiable leaf (parameter or input).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push_raw(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str, parents: &[Var]) -> Result<Var, GradError> {
        if !value.all_finite() {
            return Err(GradError::NonFinite { op: name });
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        Ok(self.push_raw(value, op, needs_grad))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(GradError::ShapeMismatch { op: "matmul", detail: format!("{sa:?} x {sb:?}") });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).values(), self.value(b).values(), &mut out, m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), "matmul", &[a, b])
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(Var, Var, Broadcast) -> Op,
    ) -> Result<Var, GradError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b));
        let kind = Broadcast::detect(&sa, sb)
            .ok_or_else(|| GradError::ShapeMismatch { op: name, detail: format!("{sa:?} vs {sb:?}") })?;
        let cols = self.value(a).dims2().1;
        let (va, vb) = (self.value(a).values(), self.value(b).values());
        let out = va.iter().enumerate().map(|(i, &x)| f(x, vb[kind.index(i, cols)])).collect();
        self.push(Tensor::new(sa, out)?, make(a, b, kind), name, &[a, b])
    }

    /// Elementwise sum; `b` may broadcast as a row, a column or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, GradError> {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c), "scale", &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), "tanh", &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), "sigmoid", &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), "exp", &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a), "log", &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, GradError> {
        self.masked_softmax(a, None)
    }

    /// Softmax over the last axis where entries with `mask[i] == false` are
    /// excluded before normalization and come out as exactly zero.
    pub fn masked_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, GradError> {
        let x = self.value(a);
        if x.rank() == 0 {
            return Err(GradError::ShapeMismatch { op: "softmax", detail: "scalar input".into() });
        }
        if let Some(m) = mask {
            if m.len() != x.len() {
                return Err(GradError::ShapeMismatch {
                    op: "softmax",
                    detail: format!("mask has {} entries for {} values", m.len(), x.len()),
                });
            }
        }
        let (rows, cols) = x.dims2();
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            let row = x.row(r);
            let keep = |c: usize| mask.map_or(true, |m| m[r * cols + c]);
            let max = (0..cols).filter(|&c| keep(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(GradError::InvalidArgument(format!("softmax row {r} has no unmasked entries")));
            }
            let mut total = 0.0;
            for c in 0..cols {
                if keep(c) {
                    let e = (row[c] - max).exp();
                    out[r * cols + c] = e;
                    total += e;
                }
            }
            for v in &mut out[r * cols..(r + 1) * cols] {
                *v /= total;
            }
        }
        let shape = x.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Softmax(a), "softmax", &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, GradError> {
        let first = parts.first().ok_or_else(|| GradError::InvalidArgument("concat of nothing".into()))?;
        let rank = self.shape(*first).len();
        let mut views = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != rank {
                return Err(GradError::ShapeMismatch { op: "concat", detail: "rank differs".into() });
            }
            views.push(view2(s, axis, "concat")?);
        }
        let (rows0, cols0, ax) = views[0];
        let (out_rows, out_cols) = if ax == 0 {
            if views.iter().any(|v| v.1 != cols0) {
                return Err(GradError::ShapeMismatch { op: "concat", detail: "column counts differ".into() });
            }
            (views.iter().map(|v| v.0).sum(), cols0)
        } else {
            if views.iter().any(|v| v.0 != rows0) {
                return Err(GradError::ShapeMismatch { op: "concat", detail: "row counts differ".into() });
            }
            (rows0, views.iter().map(|v| v.1).sum())
        };
        let mut out = Vec::with_capacity(out_rows * out_cols);
        if ax == 0 {
            for &p in parts {
                out.extend_from_slice(self.value(p).values());
            }
        } else {
            for r in 0..out_rows {
                for (&p, v) in parts.iter().zip(&views) {
                    out.extend_from_slice(&self.value(p).values()[r * v.1..(r + 1) * v.1]);
                }
            }
        }
        let shape = if rank == 1 { vec![out_cols] } else { vec![out_rows, out_cols] };
        self.push(Tensor::new(shape, out)?, Op::Concat { parts: parts.to_vec(), axis: ax }, "concat", parts)
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, GradError> {
        let shape = self.shape(a).to_vec();
        let (rows, cols, ax) = view2(&shape, axis, "slice")?;
        let extent = if ax == 0 { rows } else { cols };
        if start + len > extent || len == 0 {
            return Err(GradError::ShapeMismatch {
                op: "slice",
                detail: format!("range {start}..{} of extent {extent}", start + len),
            });
        }
        let v = self.value(a).values();
        let (out, out_shape) = if ax == 0 {
            (v[start * cols..(start + len) * cols].to_vec(), vec![len, cols])
        } else {
            let mut out = Vec::with_capacity(rows * len);
            for r in 0..rows {
                out.extend_from_slice(&v[r * cols + start..r * cols + start + len]);
            }
            let s = if shape.len() == 1 { vec![len] } else { vec![rows, len] };
            (out, s)
        };
        self.push(Tensor::new(out_shape, out)?, Op::Slice { input: a, axis: ax, start }, "slice", &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, GradError> {
        let v = self.value(a);
        if shape.iter().product::<usize>() != v.len() {
            return Err(GradError::ShapeMismatch { op: "reshape", detail: format!("{:?} -> {shape:?}", v.shape()) });
        }
        let t = v.clone().reshaped(shape.to_vec());
        self.push(t, Op::Reshape(a), "reshape", &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(GradError::ShapeMismatch { op: "transpose", detail: format!("{:?}", v.shape()) });
        }
        let (m, n) = (v.shape()[0], v.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v.values()[i * n + j];
            }
        }
        self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), "transpose", &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, GradError> {
        let s = self.value(a).values().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum", &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a);
        let s = v.values().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), "mean", &[a])
    }

    /// Sum along `axis`, keeping the reduced dimension with size 1 for
    /// matrices; a vector reduces to a scalar.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, GradError> {
        let shape = self.shape(a).to_vec();
        let (rows, cols, ax) = view2(&shape, axis, "sum_axis")?;
        let v = self.value(a).values();
        let (out, out_shape) = reduce_axis(v, rows, cols, ax, &shape, |acc, x| acc + x);
        self.push(Tensor::new(out_shape, out)?, Op::SumAxis { input: a, axis: ax }, "sum_axis", &[a])
    }

    /// Euclidean norm along `axis`, same shape convention as [`Tape::sum_axis`].
    pub fn l2_norm(&mut self, a: Var, axis: usize) -> Result<Var, GradError> {
        let shape = self.shape(a).to_vec();
        let (rows, cols, ax) = view2(&shape, axis, "l2_norm")?;
        let v = self.value(a).values();
        let (mut out, out_shape) = reduce_axis(v, rows, cols, ax, &shape, |acc, x| acc + x * x);
        out.iter_mut().for_each(|x| *x = x.sqrt());
        self.push(Tensor::new(out_shape, out)?, Op::L2Norm { input: a, axis: ax }, "l2_norm", &[a])
    }

    /// Gathers rows of `table` (`[V, d]`) → `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, GradError> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(GradError::ShapeMismatch { op: "embedding", detail: format!("table {:?}", t.shape()) });
        }
        let (vocab, dim) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(GradError::InvalidArgument(format!("token id {id} outside vocabulary of {vocab}")));
            }
            out.extend_from_slice(t.row(id));
        }
        let op = Op::Embedding { table, ids: ids.to_vec() };
        self.push(Tensor::new(vec![ids.len(), dim], out)?, op, "embedding", &[table])
    }

    /// Mean softmax cross-entropy of `logits: [B, C]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, GradError> {
        let z = self.value(logits);
        if z.rank() != 2 || z.shape()[0] != targets.len() {
            return Err(GradError::ShapeMismatch {
                op: "cross_entropy",
                detail: format!("logits {:?} with {} targets", z.shape(), targets.len()),
            });
        }
        let (b, c) = (z.shape()[0], z.shape()[1]);
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(GradError::InvalidArgument(format!("target {t} outside {c} classes")));
            }
            let row = z.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + total.ln();
            loss += lse - row[t];
            for k in 0..c {
                probs[r * c + k] = (row[k] - lse).exp();
            }
        }
        let probs = Tensor::new(vec![b, c], probs)?;
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), probs };
        self.push(Tensor::scalar(loss / b as f64), op, "cross_entropy", &[logits])
    }

    /// Reverse pass from the scalar `loss`. The tape cannot be replayed again.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, GradError> {
        if self.consumed {
            return Err(GradError::TapeConsumed);
        }
        let loss_shape = self.shape(loss).to_vec();
        if self.value(loss).len() != 1 {
            return Err(GradError::NonScalarLoss(loss_shape));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut adj: Vec<Option<Tensor>> = vec![None; n];
        adj[loss.0] = Some(Tensor::filled(&loss_shape, 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { adjoints: adj, shapes })
    }

    fn slot<'a>(&self, adj: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(adj[v.0].get_or_insert_with(|| Tensor::zeros(node.value.shape())))
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gv = g.values();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if let Some(da) = self.slot(adj, *a) {
                    matmul_bt_acc(gv, vb.values(), da.values_mut(), m, n, k);
                }
                if let Some(db) = self.slot(adj, *b) {
                    matmul_at_acc(va.values(), gv, db.values_mut(), m, k, n);
                }
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(da) = self.slot(adj, *a) {
                    da.add_assign(g);
                }
                let cols = node.value.dims2().1;
                if let Some(db) = self.slot(adj, *b) {
                    let d = db.values_mut();
                    for (idx, &x) in gv.iter().enumerate() {
                        d[kind.index(idx, cols)] += sign * x;
                    }
                }
            }
            Op::Mul(a, b, kind) => {
                let (va, vb) = (self.value(*a).values(), self.value(*b).values());
                let cols = node.value.dims2().1;
                if let Some(da) = self.slot(adj, *a) {
                    for (idx, d) in da.values_mut().iter_mut().enumerate() {
                        *d += gv[idx] * vb[kind.index(idx, cols)];
                    }
                }
                if let Some(db) = self.slot(adj, *b) {
                    let d = db.values_mut();
                    for (idx, &x) in gv.iter().enumerate() {
                        d[kind.index(idx, cols)] += x * va[idx];
                    }
                }
            }
            Op::Scale(a, c) => self.unary_acc(adj, *a, gv, |_| *c),
            Op::Tanh(a) => {
                let y = node.value.values();
                self.unary_acc(adj, *a, gv, |idx| 1.0 - y[idx] * y[idx]);
            }
            Op::Sigmoid(a) => {
                let y = node.value.values();
                self.unary_acc(adj, *a, gv, |idx| y[idx] * (1.0 - y[idx]));
            }
            Op::Exp(a) => {
                let y = node.value.values();
                self.unary_acc(adj, *a, gv, |idx| y[idx]);
            }
            Op::Log(a) => {
                let x = self.value(*a).values();
                self.unary_acc(adj, *a, gv, |idx| 1.0 / x[idx]);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let (rows, cols) = y.dims2();
                if let Some(da) = self.slot(adj, *a) {
                    let d = da.values_mut();
                    for r in 0..rows {
                        let yr = y.row(r);
                        let gr = &gv[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for c in 0..cols {
                            d[r * cols + c] += yr[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (_, out_cols) = node.value.dims2();
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.value(p).dims2();
                    if let Some(dp) = self.slot(adj, p) {
                        let d = dp.values_mut();
                        if *axis == 0 {
                            for (x, y) in d.iter_mut().zip(&gv[offset * pc..(offset + pr) * pc]) {
                                *x += y;
                            }
                        } else {
                            for r in 0..pr {
                                for c in 0..pc {
                                    d[r * pc + c] += gv[r * out_cols + offset + c];
                                }
                            }
                        }
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { input, axis, start } => {
                let (_, in_cols) = self.value(*input).dims2();
                let (gr, gc) = g.dims2();
                if let Some(dp) = self.slot(adj, *input) {
                    let d = dp.values_mut();
                    if *axis == 0 {
                        for (x, y) in d[start * in_cols..(start + gr) * in_cols].iter_mut().zip(gv) {
                            *x += y;
                        }
                    } else {
                        for r in 0..gr {
                            for c in 0..gc {
                                d[r * in_cols + start + c] += gv[r * gc + c];
                            }
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(da) = self.slot(adj, *a) {
                    for (x, y) in da.values_mut().iter_mut().zip(gv) {
                        *x += y;
                    }
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (node.value.shape()[1], node.value.shape()[0]);
                if let Some(da) = self.slot(adj, *a) {
                    let d = da.values_mut();
                    for r in 0..m {
                        for c in 0..n {
                            d[r * n + c] += gv[c * m + r];
                        }
                    }
                }
            }
            Op::Sum(a) => self.unary_acc(adj, *a, &[], |_| gv[0]),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.unary_acc(adj, *a, &[], |_| gv[0] / n);
            }
            Op::SumAxis { input, axis } => {
                let (_, cols) = self.value(*input).dims2();
                let ax = *axis;
                self.unary_acc(adj, *input, &[], |idx| gv[if ax == 0 { idx % cols } else { idx / cols }]);
            }
            Op::L2Norm { input, axis } => {
                let x = self.value(*input).values();
                let (_, cols) = self.value(*input).dims2();
                let norms = node.value.values();
                let ax = *axis;
                self.unary_acc(adj, *input, &[], |idx| {
                    let o = if ax == 0 { idx % cols } else { idx / cols };
                    if norms[o] == 0.0 {
                        0.0
                    } else {
                        gv[o] * x[idx] / norms[o]
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let dim = node.value.dims2().1;
                if let Some(dt) = self.slot(adj, *table) {
                    let d = dt.values_mut();
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..dim {
                            d[id * dim + c] += gv[r * dim + c];
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = probs.dims2().1;
                let scale = gv[0] / targets.len() as f64;
                if let Some(dl) = self.slot(adj, *logits) {
                    let d = dl.values_mut();
                    for (r, &t) in targets.iter().enumerate() {
                        for k in 0..c {
                            let onehot = if k == t { 1.0 } else { 0.0 };
                            d[r * c + k] += scale * (probs.values()[r * c + k] - onehot);
                        }
                    }
                }
            }
        }
    }

    /// `d[a][idx] += upstream[idx] * local(idx)`; when `upstream` is empty the
    /// closure already returns the full contribution.
    fn unary_acc(&self, adj: &mut [Option<Tensor>], a: Var, upstream: &[f64], local: impl Fn(usize) -> f64) {
        if let Some(da) = self.slot(adj, a) {
            if upstream.is_empty() {
                for (idx, d) in da.values_mut().iter_mut().enumerate() {
                    *d += local(idx);
                }
            } else {
                for (idx, d) in da.values_mut().iter_mut().enumerate() {
                    *d += upstream[idx] * local(idx);
                }
            }
        }
    }
}

fn reduce_axis(
    v: &[f64],
    rows: usize,
    cols: usize,
    ax: usize,
    shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> (Vec<f64>, Vec<usize>) {
    if ax == 0 {
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c] = f(out[c], v[r * cols + c]);
            }
        }
        (out, vec![1, cols])
    } else {
        let out: Vec<f64> = (0..rows).map(|r| v[r * cols..(r + 1) * cols].iter().fold(0.0, |a, &x| f(a, x))).collect();
        let s = if shape.len() == 1 { Vec::new() } else { vec![rows, 1] };
        (out, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        assert!(tape.value(y).values().iter().all(|&p| close(p, 1.0 / 3.0)));
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.tanh(x).unwrap();
        assert_eq!(tape.value(y).item(), 0.0);
    }

    #[test]
    fn identity_matmul_is_noop() {
        let mut tape = Tape::new();
        let i3 = tape.constant(Tensor::identity(3));
        let a = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![7.0, 0.25]]);
        let av = tape.leaf(a.clone());
        let out = tape.matmul(i3, av).unwrap();
        assert_eq!(tape.value(out), &a);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).values(), &[2.0, 4.0]);
    }

    #[test]
    fn linear_gradient_is_weight_vector() {
        let w = vec![0.3, -1.5, 2.25];
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 4.0, -2.0]));
        let wv = tape.constant(Tensor::vector(w.clone()));
        let prod = tape.mul(x, wv).unwrap();
        let loss = tape.sum(prod).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).values(), w.as_slice());
        assert!(grads.get(wv).is_none());
    }

    #[test]
    fn second_backward_is_usage_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(GradError::TapeConsumed)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(GradError::NonScalarLoss(_))));
        assert!(!tape.is_consumed());
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(GradError::ShapeMismatch { op: "matmul", .. })));
        let c = tape.leaf(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.add(a, c), Err(GradError::ShapeMismatch { op: "add", .. })));
    }

    #[test]
    fn log_of_zero_is_numeric_failure() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(tape.log(a), Err(GradError::NonFinite { op: "log" })));
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_rows(&[vec![5.0, 1.0, 1.0], vec![0.0, 2.0, 9.0]]));
        let y = tape.masked_softmax(a, Some(&[false, true, true, true, true, false])).unwrap();
        let v = tape.value(y).values();
        assert_eq!(v[0], 0.0);
        assert!(close(v[1], 0.5) && close(v[2], 0.5));
        assert_eq!(v[5], 0.0);
        assert!(close(v[3] + v[4], 1.0));
    }

    #[test]
    fn broadcasting_forms() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let row = tape.leaf(Tensor::vector(vec![10.0, 20.0]));
        let col = tape.leaf(Tensor::new(vec![2, 1], vec![100.0, 200.0]).unwrap());
        let s = tape.add(a, row).unwrap();
        assert_eq!(tape.value(s).values(), &[11.0, 22.0, 13.0, 24.0]);
        let t = tape.mul(a, col).unwrap();
        assert_eq!(tape.value(t).values(), &[100.0, 200.0, 600.0, 800.0]);
        let total = tape.add(s, t).unwrap();
        let loss = tape.sum(total).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(row).values(), &[2.0, 2.0]);
        assert_eq!(g.wrt(col).values(), &[3.0, 7.0]);
        assert_eq!(g.wrt(a).values(), &[101.0, 101.0, 201.0, 201.0]);
    }
}
