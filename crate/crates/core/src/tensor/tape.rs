use super::{dim_err, domain_err, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    ScaleRows(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    Neg(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Powf(usize, f64),
    Clamp(usize, f64, f64),
    Sum(usize, Option<usize>),
    Mean(usize, Option<usize>),
    Max(usize, Vec<usize>),
    LogSoftmax(usize),
    Gather(usize, Vec<usize>),
    ScatterAdd(usize, Vec<usize>),
    SegmentMax(usize, Vec<usize>),
    ConcatCols(usize, usize),
    Reshape(usize),
    CrossEntropy(usize, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
///
/// Inputs always precede the operations that consume them, since a node can
/// only reference `Var`s that were already handed out.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: one optional adjoint per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, or an exact zero tensor when the loss
    /// does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]).expect("recorded shapes are non-empty"),
        }
    }
}

fn same_or_scalar(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        dim_err(op, format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()))
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n: usize = shape.iter().product();
    let ad = a.data();
    let bd = b.data();
    let data = (0..n)
        .map(|i| {
            let x = if ad.len() == 1 { ad[0] } else { ad[i] };
            let y = if bd.len() == 1 { bd[0] } else { bd[i] };
            f(x, y)
        })
        .collect();
    Tensor { shape, data }
}

/// Collapses a gradient back onto an operand that may have been broadcast
/// from a single element.
fn unbroadcast(grad: Tensor, target: &Tensor) -> Tensor {
    if target.numel() == 1 && grad.numel() != 1 {
        let s: f64 = grad.data().iter().sum();
        Tensor {
            shape: target.shape().to_vec(),
            data: vec![s],
        }
    } else {
        grad
    }
}

/// (outer, axis_len, inner) strides for reducing `shape` along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: Option<usize>) -> Vec<usize> {
    match axis {
        None => vec![1],
        Some(ax) => {
            let mut s: Vec<usize> = shape.to_vec();
            s.remove(ax);
            if s.is_empty() {
                vec![1]
            } else {
                s
            }
        }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op: if requires_grad { op } else { Op::Leaf },
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", v, Op::MatMul(a.0, b.0), rg)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = same_or_scalar(name, ta, tb)?;
        let v = zip_broadcast(ta, tb, shape, f);
        let rg = self.rg(a) || self.rg(b);
        self.push(name, v, op, rg)
    }

    /// Elementwise sum; operands must share a shape or one must hold a single value.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return domain_err("div", "division by zero");
        }
        self.binary("div", a, b, Op::Div(a.0, b.0), |x, y| x / y)
    }

    /// Adds a length-`d` vector to every row of an `n × d` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if ta.rank() != 2 || tr.numel() != ta.shape()[1] {
            return dim_err("add_row", format!("{:?} + row {:?}", ta.shape(), tr.shape()));
        }
        let d = ta.shape()[1];
        let rd = tr.data();
        let data = ta.data().iter().enumerate().map(|(i, &x)| x + rd[i % d]).collect();
        let v = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a) || self.rg(row);
        self.push("add_row", v, Op::AddRow(a.0, row.0), rg)
    }

    /// Multiplies every row of an `n × d` matrix elementwise by a length-`d` vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if ta.rank() != 2 || tr.numel() != ta.shape()[1] {
            return dim_err("mul_row", format!("{:?} * row {:?}", ta.shape(), tr.shape()));
        }
        let d = ta.shape()[1];
        let rd = tr.data();
        let data = ta.data().iter().enumerate().map(|(i, &x)| x * rd[i % d]).collect();
        let v = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a) || self.rg(row);
        self.push("mul_row", v, Op::MulRow(a.0, row.0), rg)
    }

    /// Multiplies row `i` of `a` by `w[i]`.
    pub fn scale_rows(&mut self, a: Var, w: Var) -> Result<Var> {
        let (ta, tw) = (self.value(a), self.value(w));
        let (n, d) = ta.as_matrix_dims();
        if tw.numel() != n {
            return dim_err("scale_rows", format!("{:?} by {:?}", ta.shape(), tw.shape()));
        }
        let wd = tw.data();
        let data = ta.data().iter().enumerate().map(|(i, &x)| x * wd[i / d]).collect();
        let v = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a) || self.rg(w);
        self.push("scale_rows", v, Op::ScaleRows(a.0, w.0), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push("add_scalar", v, Op::AddScalar(a.0), rg)
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push("mul_scalar", v, Op::MulScalar(a.0, c), rg)
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let v = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(name, v, op, rg)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary("neg", a, Op::Neg(a.0), |x| -x)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a.0), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a.0), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, Op::Tanh(a.0), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a.0), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return domain_err("log", format!("non-positive argument {bad}"));
        }
        self.unary("log", a, Op::Log(a.0), f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x < 0.0) {
            return domain_err("sqrt", format!("negative argument {bad}"));
        }
        self.unary("sqrt", a, Op::Sqrt(a.0), f64::sqrt)
    }

    /// `x^c` for a constant exponent; non-integer exponents need positive input.
    pub fn powf(&mut self, a: Var, c: f64) -> Result<Var> {
        if c.fract() != 0.0 {
            if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
                return domain_err("powf", format!("non-positive base {bad} with exponent {c}"));
            }
        }
        self.unary("powf", a, Op::Powf(a.0, c), |x| x.powf(c))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary("clamp", a, Op::Clamp(a.0, lo, hi), |x| x.clamp(lo, hi))
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: Option<usize>) -> Result<()> {
        if let Some(ax) = axis {
            if ax >= self.value(a).rank() {
                return dim_err(op, format!("axis {ax} out of range for {:?}", self.value(a).shape()));
            }
        }
        Ok(())
    }

    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis("sum", a, axis)?;
        let t = self.value(a);
        let v = reduce(t, axis, |xs| xs.iter().sum());
        let rg = self.rg(a);
        self.push("sum", v, Op::Sum(a.0, axis), rg)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis("mean", a, axis)?;
        let t = self.value(a);
        let v = reduce(t, axis, |xs| xs.iter().sum::<f64>() / xs.len() as f64);
        let rg = self.rg(a);
        self.push("mean", v, Op::Mean(a.0, axis), rg)
    }

    /// Maximum along `axis` (or over everything); the first maximal entry
    /// receives the whole adjoint.
    pub fn max(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis("max", a, axis)?;
        let t = self.value(a);
        let (outer, len, inner) = match axis {
            None => (1, t.numel(), 1),
            Some(ax) => axis_split(t.shape(), ax),
        };
        let mut data = Vec::with_capacity(outer * inner);
        let mut arg = Vec::with_capacity(outer * inner);
        let d = t.data();
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * len * inner + i;
                for k in 1..len {
                    let idx = o * len * inner + k * inner + i;
                    if d[idx] > d[best] {
                        best = idx;
                    }
                }
                data.push(d[best]);
                arg.push(best);
            }
        }
        let v = Tensor {
            shape: reduced_shape(t.shape(), axis),
            data,
        };
        let rg = self.rg(a);
        self.push("max", v, Op::Max(a.0, arg), rg)
    }

    /// Row-wise log-softmax of a matrix (a vector is one row).
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let c = *t.shape().last().expect("non-empty shape");
        let mut data = Vec::with_capacity(t.numel());
        for row in t.data().chunks(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lse));
        }
        let v = Tensor {
            shape: t.shape().to_vec(),
            data,
        };
        let rg = self.rg(a);
        self.push("log_softmax", v, Op::LogSoftmax(a.0), rg)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` (`n × c`).
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (n, c) = t.as_matrix_dims();
        let (n, c) = if t.rank() == 1 { (1, n) } else { (n, c) };
        if targets.len() != n {
            return dim_err("cross_entropy", format!("{n} rows but {} targets", targets.len()));
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= c) {
            return dim_err("cross_entropy", format!("target {bad} out of {c} classes"));
        }
        let mut total = 0.0;
        for (row, &y) in t.data().chunks(c).zip(targets) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let v = Tensor::scalar(total / n as f64);
        let rg = self.rg(logits);
        self.push("cross_entropy", v, Op::CrossEntropy(logits.0, targets.to_vec()), rg)
    }

    /// Selects rows of a matrix (or entries of a vector) by index.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (n, d) = t.as_matrix_dims();
        if idx.is_empty() {
            return dim_err("gather", "empty index list");
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return dim_err("gather", format!("row {bad} out of {n}"));
        }
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
        }
        let shape = if t.rank() == 1 { vec![idx.len()] } else { vec![idx.len(), d] };
        let v = Tensor { shape, data };
        let rg = self.rg(a);
        self.push("gather", v, Op::Gather(a.0, idx.to_vec()), rg)
    }

    /// Sums row `i` of `a` into output row `idx[i]`; the output has `rows` rows.
    pub fn scatter_add(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let t = self.value(a);
        let (n, d) = t.as_matrix_dims();
        if idx.len() != n || rows == 0 {
            return dim_err("scatter_add", format!("{n} rows, {} indices, {rows} outputs", idx.len()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return dim_err("scatter_add", format!("target row {bad} out of {rows}"));
        }
        let mut data = vec![0.0; rows * d];
        for (r, &o) in idx.iter().enumerate() {
            for k in 0..d {
                data[o * d + k] += t.data()[r * d + k];
            }
        }
        let shape = if t.rank() == 1 { vec![rows] } else { vec![rows, d] };
        let v = Tensor { shape, data };
        let rg = self.rg(a);
        self.push("scatter_add", v, Op::ScatterAdd(a.0, idx.to_vec()), rg)
    }

    /// Column-wise maximum over the rows belonging to each segment.
    /// `segment[i]` assigns row `i`; every segment must own at least one row.
    pub fn segment_max(&mut self, a: Var, segment: &[usize], segments: usize) -> Result<Var> {
        let t = self.value(a);
        let (n, d) = t.as_matrix_dims();
        if segment.len() != n {
            return dim_err("segment_max", format!("{n} rows but {} segment ids", segment.len()));
        }
        let mut arg: Vec<Option<usize>> = vec![None; segments * d];
        let x = t.data();
        for (r, &s) in segment.iter().enumerate() {
            if s >= segments {
                return dim_err("segment_max", format!("segment {s} out of {segments}"));
            }
            for k in 0..d {
                let slot = &mut arg[s * d + k];
                let idx = r * d + k;
                match slot {
                    Some(b) if x[*b] >= x[idx] => {}
                    _ => *slot = Some(idx),
                }
            }
        }
        let arg = arg
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                a.ok_or_else(|| TensorError::Domain {
                    op: "segment_max",
                    detail: format!("segment {} is empty", i / d),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let data = arg.iter().map(|&i| x[i]).collect();
        let v = Tensor {
            shape: vec![segments, d],
            data,
        };
        let rg = self.rg(a);
        self.push("segment_max", v, Op::SegmentMax(a.0, arg), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, da) = ta.as_matrix_dims();
        let (m, db) = tb.as_matrix_dims();
        if n != m {
            return dim_err("concat_cols", format!("{:?} with {:?}", ta.shape(), tb.shape()));
        }
        let mut data = Vec::with_capacity(n * (da + db));
        for r in 0..n {
            data.extend_from_slice(&ta.data()[r * da..(r + 1) * da]);
            data.extend_from_slice(&tb.data()[r * db..(r + 1) * db]);
        }
        let v = Tensor {
            shape: vec![n, da + db],
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        self.push("concat_cols", v, Op::ConcatCols(a.0, b.0), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        let rg = self.rg(a);
        self.push("reshape", v, Op::Reshape(a.0), rg)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::Contract("loss is not on this tape".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::ones(self.value(loss).shape())?);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        // Only leaves and intermediates that require grad keep their adjoints.
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: usize, g: Tensor) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut grads[target] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |j: usize| &self.nodes[j].value;
        let like = |t: &Tensor, data: Vec<f64>| Tensor {
            shape: t.shape().to_vec(),
            data,
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[*a].requires_grad {
                    let ga = g.matmul(&val(*b).transpose().unwrap()).unwrap();
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[*b].requires_grad {
                    let gb = val(*a).transpose().unwrap().matmul(g).unwrap();
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.accumulate(grads, *a, unbroadcast(g.clone(), val(*a)));
                self.accumulate(grads, *b, unbroadcast(g.map(|x| sign * x), val(*b)));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let shape = out.shape().to_vec();
                let ga = zip_broadcast(g, tb, shape.clone(), |gi, y| gi * y);
                let gb = zip_broadcast(g, ta, shape, |gi, x| gi * x);
                self.accumulate(grads, *a, unbroadcast(ga, ta));
                self.accumulate(grads, *b, unbroadcast(gb, tb));
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let shape = out.shape().to_vec();
                let ga = zip_broadcast(g, tb, shape.clone(), |gi, y| gi / y);
                // d(a/b)/db = -out / b
                let q = zip_broadcast(g, out, shape.clone(), |gi, o| gi * o);
                let gb = zip_broadcast(&q, tb, shape, |qi, y| -qi / y);
                self.accumulate(grads, *a, unbroadcast(ga, ta));
                self.accumulate(grads, *b, unbroadcast(gb, tb));
            }
            Op::AddRow(a, r) => {
                self.accumulate(grads, *a, g.clone());
                if self.nodes[*r].requires_grad {
                    let d = out.shape()[1];
                    let mut acc = vec![0.0; d];
                    for (k, x) in g.data().iter().enumerate() {
                        acc[k % d] += x;
                    }
                    self.accumulate(grads, *r, like(val(*r), acc));
                }
            }
            Op::MulRow(a, r) => {
                let (ta, tr) = (val(*a), val(*r));
                let d = tr.numel();
                if self.nodes[*a].requires_grad {
                    let data = g.data().iter().enumerate().map(|(k, x)| x * tr.data()[k % d]).collect();
                    self.accumulate(grads, *a, like(ta, data));
                }
                if self.nodes[*r].requires_grad {
                    let mut acc = vec![0.0; d];
                    for (k, (x, y)) in g.data().iter().zip(ta.data()).enumerate() {
                        acc[k % d] += x * y;
                    }
                    self.accumulate(grads, *r, like(tr, acc));
                }
            }
            Op::ScaleRows(a, w) => {
                let (ta, tw) = (val(*a), val(*w));
                let (_, d) = ta.as_matrix_dims();
                if self.nodes[*a].requires_grad {
                    let data = g.data().iter().enumerate().map(|(k, x)| x * tw.data()[k / d]).collect();
                    self.accumulate(grads, *a, like(ta, data));
                }
                if self.nodes[*w].requires_grad {
                    let mut acc = vec![0.0; tw.numel()];
                    for (k, (x, y)) in g.data().iter().zip(ta.data()).enumerate() {
                        acc[k / d] += x * y;
                    }
                    self.accumulate(grads, *w, like(tw, acc));
                }
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::MulScalar(a, c) => self.accumulate(grads, *a, g.map(|x| x * c)),
            Op::Neg(a) => self.accumulate(grads, *a, g.map(|x| -x)),
            Op::Relu(a) => {
                let data = g.data().iter().zip(val(*a).data()).map(|(x, &v)| if v > 0.0 { *x } else { 0.0 }).collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Sigmoid(a) => {
                let data = g.data().iter().zip(out.data()).map(|(x, s)| x * s * (1.0 - s)).collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Tanh(a) => {
                let data = g.data().iter().zip(out.data()).map(|(x, t)| x * (1.0 - t * t)).collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Exp(a) => {
                let data = g.data().iter().zip(out.data()).map(|(x, e)| x * e).collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Log(a) => {
                let data = g.data().iter().zip(val(*a).data()).map(|(x, v)| x / v).collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Sqrt(a) => {
                // The derivative at zero is unbounded; treat it as zero.
                let data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(x, s)| if *s > 0.0 { x / (2.0 * s) } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Powf(a, c) => {
                let data = g.data().iter().zip(val(*a).data()).map(|(x, v)| x * c * v.powf(c - 1.0)).collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Clamp(a, lo, hi) => {
                let data = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(x, v)| if v < lo || v > hi { 0.0 } else { *x })
                    .collect();
                self.accumulate(grads, *a, like(g, data));
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let ta = val(*a);
                let (outer, len, inner) = match axis {
                    None => (1, ta.numel(), 1),
                    Some(ax) => axis_split(ta.shape(), *ax),
                };
                let scale = if matches!(node.op, Op::Mean(..)) { 1.0 / len as f64 } else { 1.0 };
                let mut data = vec![0.0; ta.numel()];
                for o in 0..outer {
                    for k in 0..len {
                        for j in 0..inner {
                            data[o * len * inner + k * inner + j] = g.data()[o * inner + j] * scale;
                        }
                    }
                }
                self.accumulate(grads, *a, like(ta, data));
            }
            Op::Max(a, arg) | Op::SegmentMax(a, arg) => {
                let ta = val(*a);
                let mut data = vec![0.0; ta.numel()];
                for (x, &idx) in g.data().iter().zip(arg) {
                    data[idx] += x;
                }
                self.accumulate(grads, *a, like(ta, data));
            }
            Op::LogSoftmax(a) => {
                let c = *out.shape().last().unwrap();
                let mut data = Vec::with_capacity(g.numel());
                for (grow, orow) in g.data().chunks(c).zip(out.data().chunks(c)) {
                    let s: f64 = grow.iter().sum();
                    data.extend(grow.iter().zip(orow).map(|(gi, lo)| gi - lo.exp() * s));
                }
                self.accumulate(grads, *a, like(g, data));
            }
            Op::CrossEntropy(a, targets) => {
                let ta = val(*a);
                let c = *ta.shape().last().unwrap();
                let n = targets.len() as f64;
                let scale = g.data()[0] / n;
                let mut data = Vec::with_capacity(ta.numel());
                for (row, &y) in ta.data().chunks(c).zip(targets) {
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
                    data.extend(row.iter().enumerate().map(|(k, x)| {
                        let p = (x - m).exp() / z;
                        scale * (p - if k == y { 1.0 } else { 0.0 })
                    }));
                }
                self.accumulate(grads, *a, like(ta, data));
            }
            Op::Gather(a, idx) => {
                let ta = val(*a);
                let (_, d) = ta.as_matrix_dims();
                let mut data = vec![0.0; ta.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    for k in 0..d {
                        data[i * d + k] += g.data()[r * d + k];
                    }
                }
                self.accumulate(grads, *a, like(ta, data));
            }
            Op::ScatterAdd(a, idx) => {
                let ta = val(*a);
                let (_, d) = ta.as_matrix_dims();
                let mut data = Vec::with_capacity(ta.numel());
                for &o in idx {
                    data.extend_from_slice(&g.data()[o * d..(o + 1) * d]);
                }
                self.accumulate(grads, *a, like(ta, data));
            }
            Op::ConcatCols(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, da) = ta.as_matrix_dims();
                let (_, db) = tb.as_matrix_dims();
                let mut ga = Vec::with_capacity(n * da);
                let mut gb = Vec::with_capacity(n * db);
                for row in g.data().chunks(da + db) {
                    ga.extend_from_slice(&row[..da]);
                    gb.extend_from_slice(&row[da..]);
                }
                self.accumulate(grads, *a, like(ta, ga));
                self.accumulate(grads, *b, like(tb, gb));
            }
            Op::Reshape(a) => {
                let ta = val(*a);
                self.accumulate(grads, *a, like(ta, g.data().to_vec()));
            }
        }
    }
}

fn reduce(t: &Tensor, axis: Option<usize>, f: impl Fn(&[f64]) -> f64) -> Tensor {
    match axis {
        None => Tensor::scalar(f(t.data())),
        Some(ax) => {
            let (outer, len, inner) = axis_split(t.shape(), ax);
            let mut data = Vec::with_capacity(outer * inner);
            let mut buf = vec![0.0; len];
            for o in 0..outer {
                for j in 0..inner {
                    for (k, b) in buf.iter_mut().enumerate() {
                        *b = t.data()[o * len * inner + k * inner + j];
                    }
                    data.push(f(&buf));
                }
            }
            Tensor {
                shape: reduced_shape(t.shape(), axis),
                data,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Tensor {
        Tensor::vector(data.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_and_relu_reference_points() {
        let mut tape = Tape::new();
        let x = tape.constant(v(&[0.0, 2.1972, -3.2]));
        let s = tape.sigmoid(x).unwrap();
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(s).data()[0], 0.5);
        assert!((tape.value(s).data()[1] - 0.9).abs() < 1e-4);
        assert_eq!(tape.value(r).data()[2], 0.0);
    }

    #[test]
    fn log_of_non_positive_is_a_domain_error() {
        let mut tape = Tape::new();
        let x = tape.constant(v(&[1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(TensorError::Domain { op: "log", .. })));
    }

    #[test]
    fn reductions() {
        let mut tape = Tape::new();
        let x = tape.constant(v(&[1.0, 2.0, 3.0]));
        let s = tape.sum(x, None).unwrap();
        assert_eq!(tape.value(s).data(), &[6.0]);
        let m = tape.constant(Tensor::from_rows(&[vec![1.0, 5.0], vec![7.0, 2.0]]).unwrap());
        let mx = tape.max(m, Some(0)).unwrap();
        assert_eq!(tape.value(mx).data(), &[7.0, 5.0]);
        assert!(tape.sum(x, Some(1)).is_err());
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).data(), &[6.0]);
    }

    #[test]
    fn independent_leaf_gets_exact_zero() {
        let mut tape = Tape::new();
        let x = tape.param(v(&[1.0, 2.0]));
        let unused = tape.param(v(&[4.0, 5.0, 6.0]));
        let y = tape.sum(x, None).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(v(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(TensorError::Contract(_))));
    }

    #[test]
    fn max_routes_adjoint_to_argmax_only() {
        let mut tape = Tape::new();
        let x = tape.param(v(&[1.0, 9.0, 3.0, 9.0]));
        let m = tape.max(x, None).unwrap();
        let g = tape.backward(m).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn segment_max_rejects_empty_segment() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        assert!(tape.segment_max(x, &[0, 0], 2).is_err());
        let s = tape.segment_max(x, &[0, 1], 2).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0, 2.0]);
    }

    #[test]
    fn cross_entropy_matches_log_softmax_composition() {
        let logits = Tensor::from_rows(&[vec![0.2, -1.0, 0.7], vec![1.5, 0.3, -0.2]]).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(logits.clone());
        let ce = tape.cross_entropy(x, &[2, 0]).unwrap();
        let ls = tape.log_softmax(x).unwrap();
        let expected = -(tape.value(ls).get2(0, 2) + tape.value(ls).get2(1, 0)) / 2.0;
        assert!((tape.value(ce).item().unwrap() - expected).abs() < 1e-12);
    }
}
