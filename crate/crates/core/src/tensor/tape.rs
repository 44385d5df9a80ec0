use super::{matmul_raw, transpose_raw, Result, Tensor, TensorError};

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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Slice {
        src: Var,
        row0: usize,
        col0: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Softmax {
        x: Var,
        axis: usize,
    },
    LogSoftmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Log(Var),
    Exp(Var),
    ClampMin(Var, f64),
    PickRows {
        x: Var,
        idx: Vec<usize>,
    },
    Cosine(Var, Var),
    NormalizeRows {
        x: Var,
        norms: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Append-only computation record.
///
/// Nodes are stored in creation order, which is a topological order, so
/// backward is a single reverse sweep. Gradients accumulate additively
/// until [`Tape::zero_grad`] is called.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

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

    /// Records an input. `requires_grad` marks it as a differentiation target.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor {
            shape: va.shape().to_vec(),
            data,
        };
        let rg = self.any_grad(&[a, b]);
        self.push(value, rg, op)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.any_grad(&[a]);
        self.push(value, rg, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    /// Adds a length-`n` vector to every row of an `[m×n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.value(x).require_matrix("add_bias")?;
        if self.shape(bias) != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: self.shape(x).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let vx = self.value(x);
        let vb = self.value(bias).data();
        let mut data = vx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(vb) {
                *o += b;
            }
        }
        let value = Tensor {
            shape: vx.shape().to_vec(),
            data,
        };
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(value, rg, Op::AddBias(x, bias)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let va = self.value(a);
        let vb = self.value(b);
        let shape_err = || TensorError::ShapeMismatch {
            op: "matmul",
            left: va.shape().to_vec(),
            right: vb.shape().to_vec(),
        };
        if va.rank() != 2 || vb.rank() != 2 {
            return Err(shape_err());
        }
        let (m, k) = (va.shape()[0], va.shape()[1]);
        let (k2, n) = (vb.shape()[0], vb.shape()[1]);
        if k != k2 {
            return Err(shape_err());
        }
        let data = matmul_raw(va.data(), vb.data(), m, k, n);
        let value = Tensor {
            shape: vec![m, n],
            data,
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).require_matrix("transpose")?;
        let data = transpose_raw(self.value(a).data(), r, c);
        let value = Tensor {
            shape: vec![c, r],
            data,
        };
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, rg, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, rg, Op::Reshape(a)))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.value(table).require_matrix("gather_rows")?;
        if ids.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "gather_rows",
                reason: "no ids".into(),
            });
        }
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: id,
                    bound: v,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor {
            shape: vec![ids.len(), d],
            data,
        };
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            value,
            rg,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Rectangular sub-block `[row0..row0+rows, col0..col0+cols]` of a matrix.
    pub fn slice(&mut self, src: Var, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.value(src).require_matrix("slice")?;
        if rows == 0 || cols == 0 || row0 + rows > r || col0 + cols > c {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                reason: format!("block [{row0}+{rows}, {col0}+{cols}] outside [{r}×{c}]"),
            });
        }
        let s = self.value(src).data();
        let mut data = Vec::with_capacity(rows * cols);
        for i in row0..row0 + rows {
            data.extend_from_slice(&s[i * c + col0..i * c + col0 + cols]);
        }
        let value = Tensor {
            shape: vec![rows, cols],
            data,
        };
        let rg = self.any_grad(&[src]);
        Ok(self.push(value, rg, Op::Slice { src, row0, col0 }))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat_rows",
            reason: "no inputs".into(),
        })?;
        let (_, c) = self.value(first).require_matrix("concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, pc) = self.value(p).require_matrix("concat_rows")?;
            if pc != c {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(first).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor {
            shape: vec![rows, c],
            data,
        };
        let rg = self.any_grad(parts);
        Ok(self.push(value, rg, Op::ConcatRows(parts.to_vec())))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat_cols",
            reason: "no inputs".into(),
        })?;
        let (r, _) = self.value(first).require_matrix("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.value(p).require_matrix("concat_cols")?;
            if pr != r {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(first).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor {
            shape: vec![r, total],
            data,
        };
        let rg = self.any_grad(parts);
        Ok(self.push(value, rg, Op::ConcatCols(parts.to_vec())))
    }

    fn axis_layout(&self, op: &'static str, x: Var, axis: usize) -> Result<(usize, usize, usize)> {
        let shape = self.shape(x);
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op,
                axis,
                rank: shape.len(),
            });
        }
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        Ok((outer, shape[axis], inner))
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let layout = self.axis_layout("softmax", x, axis)?;
        let mut data = self.value(x).data().to_vec();
        for_each_lane(layout, |idx| {
            let max = idx.clone().map(|i| data[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in idx.clone() {
                data[i] = (data[i] - max).exp();
                total += data[i];
            }
            for i in idx {
                data[i] /= total;
            }
        });
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::Softmax { x, axis }))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let layout = self.axis_layout("log_softmax", x, axis)?;
        let mut data = self.value(x).data().to_vec();
        for_each_lane(layout, |idx| {
            let max = idx.clone().map(|i| data[i]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = idx.clone().map(|i| (data[i] - max).exp()).sum();
            let lse = max + total.ln();
            for i in idx {
                data[i] -= lse;
            }
        });
        let value = Tensor {
            shape: self.shape(x).to_vec(),
            data,
        };
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::LogSoftmax { x, axis }))
    }

    /// Normalizes each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let n = self.value(x).cols();
        for p in [gain, bias] {
            if self.shape(p) != [n] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: self.shape(x).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let vx = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = vx.len() / n;
        let mut xhat = Vec::with_capacity(vx.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(vx.len());
        for row in vx.data().chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(r);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                data.push(h * g[j] + b[j]);
            }
        }
        let value = Tensor {
            shape: vx.shape().to_vec(),
            data,
        };
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            value,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Gelu(a), |x| {
            0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    /// `max(x, floor)` elementwise, NaN preserved; no gradient flows where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, Op::ClampMin(a, floor), |x| if x < floor { floor } else { x })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), rg, Op::Mean(a))
    }

    /// Picks `x[i, idx[i]]` from every row of a matrix.
    pub fn pick_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.value(x).require_matrix("pick_rows")?;
        if idx.len() != r {
            return Err(TensorError::ShapeMismatch {
                op: "pick_rows",
                left: vec![r, c],
                right: vec![idx.len()],
            });
        }
        let mut data = Vec::with_capacity(r);
        for (i, &j) in idx.iter().enumerate() {
            if j >= c {
                return Err(TensorError::IndexOutOfRange {
                    op: "pick_rows",
                    index: j,
                    bound: c,
                });
            }
            data.push(self.value(x).get2(i, j));
        }
        let value = Tensor { shape: vec![r], data };
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::PickRows { x, idx: idx.to_vec() }))
    }

    /// `u·v / (‖u‖‖v‖)` for two vectors of equal length.
    pub fn cosine_similarity(&mut self, u: Var, v: Var) -> Result<Var> {
        self.same_shape("cosine_similarity", u, v)?;
        let a = self.value(u).data();
        let b = self.value(v).data();
        let (nu, nv) = (norm(a), norm(b));
        if nu == 0.0 || nv == 0.0 {
            return Err(TensorError::Degenerate {
                op: "cosine_similarity",
                reason: "zero-norm input".into(),
            });
        }
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let s = (dot / (nu * nv)).clamp(-1.0, 1.0);
        let rg = self.any_grad(&[u, v]);
        Ok(self.push(Tensor::scalar(s), rg, Op::Cosine(u, v)))
    }

    /// Scales each row of a matrix to unit Euclidean norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (_, c) = self.value(x).require_matrix("normalize_rows")?;
        let vx = self.value(x);
        let mut norms = Vec::with_capacity(vx.rows());
        let mut data = Vec::with_capacity(vx.len());
        for (i, row) in vx.data().chunks(c).enumerate() {
            let n = norm(row);
            if n == 0.0 {
                return Err(TensorError::Degenerate {
                    op: "normalize_rows",
                    reason: format!("row {i} has zero norm"),
                });
            }
            norms.push(n);
            data.extend(row.iter().map(|v| v / n));
        }
        let value = Tensor {
            shape: vx.shape().to_vec(),
            data,
        };
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::NormalizeRows { x, norms }))
    }

    /// Reverse sweep from a scalar root. Gradients are added to whatever is
    /// already stored on each node.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(TensorError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut pending: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        pending[root.0] = Some(Tensor::filled(root_value.shape(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(upstream) = pending[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            for (parent, g) in self.vjp(i, &upstream) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut pending[parent.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&upstream),
                slot => *slot = Some(upstream),
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian products for the parents of node `i`.
    fn vjp(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let out = &node.value;
        let like = |v: Var, data: Vec<f64>| Tensor {
            shape: self.nodes[v.0].value.shape().to_vec(),
            data,
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let mut res = Vec::new();
                if self.needs(*a) {
                    res.push((*a, like(*a, gd.iter().zip(vb).map(|(g, y)| g * y).collect())));
                }
                if self.needs(*b) {
                    res.push((*b, like(*b, gd.iter().zip(va).map(|(g, x)| g * x).collect())));
                }
                res
            }
            Op::Scale(a, c) => vec![(*a, g.map(|x| x * c))],
            Op::AddBias(x, b) => {
                let n = self.value(*b).len();
                let mut gb = vec![0.0; n];
                for row in gd.chunks(n) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(*x, g.clone()), (*b, like(*b, gb))]
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                let mut res = Vec::new();
                if self.needs(*a) {
                    let bt = transpose_raw(vb.data(), k, n);
                    res.push((*a, like(*a, matmul_raw(gd, &bt, m, n, k))));
                }
                if self.needs(*b) {
                    let at = transpose_raw(va.data(), m, k);
                    res.push((*b, like(*b, matmul_raw(&at, gd, k, m, n))));
                }
                res
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                vec![(*a, like(*a, transpose_raw(gd, r, c)))]
            }
            Op::Reshape(a) => vec![(*a, like(*a, gd.to_vec()))],
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let d = t.cols();
                let mut gt = vec![0.0; t.len()];
                for (row, &id) in gd.chunks(d).zip(ids) {
                    for (acc, v) in gt[id * d..(id + 1) * d].iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(*table, like(*table, gt))]
            }
            Op::Slice { src, row0, col0 } => {
                let s = self.value(*src);
                let c = s.cols();
                let (rows, cols) = (out.shape()[0], out.shape()[1]);
                let mut gs = vec![0.0; s.len()];
                for r in 0..rows {
                    let dst = (row0 + r) * c + col0;
                    gs[dst..dst + cols].copy_from_slice(&gd[r * cols..(r + 1) * cols]);
                }
                vec![(*src, like(*src, gs))]
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let n = self.value(p).len();
                        let piece = gd[offset..offset + n].to_vec();
                        offset += n;
                        (p, like(p, piece))
                    })
                    .collect()
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let w = self.value(p).cols();
                        let piece = gd
                            .chunks(total)
                            .flat_map(|row| row[offset..offset + w].iter().copied())
                            .collect();
                        offset += w;
                        (p, like(p, piece))
                    })
                    .collect()
            }
            Op::Softmax { x, axis } => {
                let y = out.data();
                let mut gx = vec![0.0; y.len()];
                let layout = self.axis_layout("softmax", *x, *axis).expect("validated");
                for_each_lane(layout, |idx| {
                    let dot: f64 = idx.clone().map(|i| gd[i] * y[i]).sum();
                    for i in idx {
                        gx[i] = y[i] * (gd[i] - dot);
                    }
                });
                vec![(*x, like(*x, gx))]
            }
            Op::LogSoftmax { x, axis } => {
                let y = out.data();
                let mut gx = vec![0.0; y.len()];
                let layout = self.axis_layout("log_softmax", *x, *axis).expect("validated");
                for_each_lane(layout, |idx| {
                    let total: f64 = idx.clone().map(|i| gd[i]).sum();
                    for i in idx {
                        gx[i] = gd[i] - y[i].exp() * total;
                    }
                });
                vec![(*x, like(*x, gx))]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = self.value(*gain).len();
                let gain_v = self.value(*gain).data();
                let mut ggain = vec![0.0; n];
                let mut gbias = vec![0.0; n];
                let mut gx = vec![0.0; gd.len()];
                for (r, (grow, hrow)) in gd.chunks(n).zip(xhat.chunks(n)).enumerate() {
                    let mut mean_gh = 0.0;
                    let mut mean_ghh = 0.0;
                    for j in 0..n {
                        ggain[j] += grow[j] * hrow[j];
                        gbias[j] += grow[j];
                        let gh = grow[j] * gain_v[j];
                        mean_gh += gh;
                        mean_ghh += gh * hrow[j];
                    }
                    mean_gh /= n as f64;
                    mean_ghh /= n as f64;
                    for j in 0..n {
                        let gh = grow[j] * gain_v[j];
                        gx[r * n + j] = rstd[r] * (gh - mean_gh - hrow[j] * mean_ghh);
                    }
                }
                vec![
                    (*x, like(*x, gx)),
                    (*gain, like(*gain, ggain)),
                    (*bias, like(*bias, gbias)),
                ]
            }
            Op::Gelu(a) => {
                let xs = self.value(*a).data();
                let gx = gd
                    .iter()
                    .zip(xs)
                    .map(|(g, &x)| {
                        let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x);
                        g * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                vec![(*a, like(*a, gx))]
            }
            Op::Relu(a) => {
                let xs = self.value(*a).data();
                let gx = gd
                    .iter()
                    .zip(xs)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![(*a, like(*a, gx))]
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                vec![(*a, like(*a, vec![gd[0]; n]))]
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                vec![(*a, like(*a, vec![gd[0] / n as f64; n]))]
            }
            Op::Log(a) => {
                let xs = self.value(*a).data();
                vec![(*a, like(*a, gd.iter().zip(xs).map(|(g, x)| g / x).collect()))]
            }
            Op::Exp(a) => {
                let ys = out.data();
                vec![(*a, like(*a, gd.iter().zip(ys).map(|(g, y)| g * y).collect()))]
            }
            Op::ClampMin(a, floor) => {
                let xs = self.value(*a).data();
                let gx = gd
                    .iter()
                    .zip(xs)
                    .map(|(g, &x)| if x < *floor { 0.0 } else { *g })
                    .collect();
                vec![(*a, like(*a, gx))]
            }
            Op::PickRows { x, idx } => {
                let c = self.value(*x).cols();
                let mut gx = vec![0.0; self.value(*x).len()];
                for (i, &j) in idx.iter().enumerate() {
                    gx[i * c + j] = gd[i];
                }
                vec![(*x, like(*x, gx))]
            }
            Op::Cosine(u, v) => {
                let a = self.value(*u).data();
                let b = self.value(*v).data();
                let (na, nb) = (norm(a), norm(b));
                let s = out.item();
                let up = gd[0];
                let ga = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| up * (y / (na * nb) - s * x / (na * na)))
                    .collect();
                let gb = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| up * (x / (na * nb) - s * y / (nb * nb)))
                    .collect();
                vec![(*u, like(*u, ga)), (*v, like(*v, gb))]
            }
            Op::NormalizeRows { x, norms } => {
                let y = out.data();
                let c = out.cols();
                let mut gx = vec![0.0; y.len()];
                for (r, n) in norms.iter().enumerate() {
                    let span = r * c..(r + 1) * c;
                    let dot: f64 = span.clone().map(|i| y[i] * gd[i]).sum();
                    for i in span {
                        gx[i] = (gd[i] - y[i] * dot) / n;
                    }
                }
                vec![(*x, like(*x, gx))]
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Calls `f` with the flat indices of every 1-D lane along an axis.
fn for_each_lane(
    (outer, len, inner): (usize, usize, usize),
    mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>),
) {
    for o in 0..outer {
        for i in 0..inner {
            let start = o * len * inner + i;
            f((start..start + len * inner).step_by(inner));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_identity_and_projector() {
        let mut t = Tape::new();
        let eye = t.constant(Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
        let m = t.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let p = t.matmul(eye, m).unwrap();
        assert_eq!(t.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let proj = t.constant(Tensor::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap());
        let b = t.constant(Tensor::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).unwrap());
        let q = t.matmul(proj, b).unwrap();
        assert_eq!(t.value(q).data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn softmax_fixtures() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0, 0.0]).unwrap());
        let s = t.softmax(x, 0).unwrap();
        assert_eq!(t.value(s).data(), &[0.5, 0.5]);

        let x = t.constant(Tensor::vector(vec![1f64.ln(), 3f64.ln()]).unwrap());
        let s = t.softmax(x, 0).unwrap();
        assert!(close(t.value(s).data(), &[0.25, 0.75], 1e-15));

        let x = t.constant(Tensor::vector(vec![1000.0, 1000.0]).unwrap());
        let s = t.softmax(x, 0).unwrap();
        assert_eq!(t.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_along_leading_axis() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[[0.0, 1.0], [0.0, 1.0]]).unwrap());
        let s = t.softmax(x, 0).unwrap();
        assert!(close(t.value(s).data(), &[0.5, 0.5, 0.5, 0.5], 1e-15));
        assert!(matches!(t.softmax(x, 2), Err(TensorError::InvalidAxis { .. })));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_fixtures() {
        let mut t = Tape::new();
        let mut cos = |u: [f64; 2], v: [f64; 2]| {
            let a = t.constant(Tensor::vector(u.to_vec()).unwrap());
            let b = t.constant(Tensor::vector(v.to_vec()).unwrap());
            let c = t.cosine_similarity(a, b).unwrap();
            t.value(c).item()
        };
        assert_eq!(cos([1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(cos([1.0, 0.0], [0.0, 1.0]), 0.0);
        assert!((cos([1.0, 1.0], [1.0, 0.0]) - 0.707_106_78).abs() < 1e-8);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![0.0, 0.0]).unwrap());
        let b = t.constant(Tensor::vector(vec![1.0, 0.0]).unwrap());
        assert!(matches!(
            t.cosine_similarity(a, b),
            Err(TensorError::Degenerate { .. })
        ));
        let m = t.constant(Tensor::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap());
        assert!(matches!(t.normalize_rows(m), Err(TensorError::Degenerate { .. })));
    }

    #[test]
    fn quadratic_gradient() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let sq = t.mul(x, x).unwrap();
        let f = t.sum(sq);
        t.backward(f).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_p_minus_y() {
        let mut t = Tape::new();
        let logits = t.param(Tensor::from_rows(&[[0.2, -1.0, 0.7]]).unwrap());
        let p = t.softmax(logits, 1).unwrap();
        let picked = t.pick_rows(p, &[2]).unwrap();
        let lp = t.log(picked);
        let m = t.mean(lp);
        let loss = t.scale(m, -1.0);
        t.backward(loss).unwrap();
        let probs = t.value(p).data().to_vec();
        let expected = [probs[0], probs[1], probs[2] - 1.0];
        assert!(close(t.grad(logits).unwrap().data(), &expected, 1e-12));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let y = t.scale(x, 2.0);
        assert_eq!(t.backward(y), Err(TensorError::NonScalarRoot(vec![2])));
    }

    #[test]
    fn reused_value_accumulates_both_paths() {
        // f = sum(x*w) + sum(x*w) == 2 * sum(x*w)
        let x0 = Tensor::vector(vec![0.5, -1.5, 2.0]).unwrap();
        let w0 = Tensor::vector(vec![3.0, 0.25, -1.0]).unwrap();

        let mut t = Tape::new();
        let x = t.param(x0.clone());
        let w = t.constant(w0.clone());
        let xw = t.mul(x, w).unwrap();
        let s1 = t.sum(xw);
        let s2 = t.sum(xw);
        let f = t.add(s1, s2).unwrap();
        t.backward(f).unwrap();

        let mut r = Tape::new();
        let xr = r.param(x0);
        let wr = r.constant(w0);
        let xwr = r.mul(xr, wr).unwrap();
        let sr = r.sum(xwr);
        let fr = r.scale(sr, 2.0);
        r.backward(fr).unwrap();

        assert_eq!(t.grad(x).unwrap().data(), r.grad(xr).unwrap().data());
    }

    #[test]
    fn repeated_backward_accumulates_until_zeroed() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, -2.0]).unwrap());
        let f = t.sum(x);
        t.backward(f).unwrap();
        t.backward(f).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[2.0, 2.0]);
        t.zero_grad();
        assert!(t.grad(x).is_none());
        t.backward(f).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn unreached_leaf_keeps_no_grad_but_reached_zero_path_does() {
        let mut t = Tape::new();
        let a = t.param(Tensor::vector(vec![1.0]).unwrap());
        let unused = t.param(Tensor::vector(vec![1.0]).unwrap());
        let z = t.scale(a, 0.0);
        let f = t.sum(z);
        t.backward(f).unwrap();
        assert_eq!(t.grad(a).unwrap().data(), &[0.0]);
        assert!(t.grad(unused).is_none());
    }

    #[test]
    fn gather_out_of_range_is_an_error() {
        let mut t = Tape::new();
        let e = t.param(Tensor::zeros(&[3, 2]));
        assert!(matches!(
            t.gather_rows(e, &[0, 3]),
            Err(TensorError::IndexOutOfRange { index: 3, .. })
        ));
    }

    #[test]
    fn gather_scatters_gradient_into_used_rows_only() {
        let mut t = Tape::new();
        let e = t.param(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap());
        let g = t.gather_rows(e, &[2, 0, 2]).unwrap();
        let f = t.sum(g);
        t.backward(f).unwrap();
        assert_eq!(t.grad(e).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }
}
