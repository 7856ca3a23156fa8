//! The recording tape and its operation set.

use super::{NumError, Result};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    /// a: m x k, b: k x n
    MatMul { a: usize, b: usize },
    /// a: m x k, b: n x k, output a . b^T : m x n
    MatMulNT { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    /// [m,n] + [1,n] row broadcast
    AddRow { a: usize, bias: usize },
    Tanh { x: usize },
    Sigmoid { x: usize },
    Exp { x: usize },
    Log { x: usize },
    Scale { x: usize, c: f64 },
    AddScalar { x: usize },
    /// row-wise softmax of x / temperature
    SoftmaxRows { x: usize, temperature: f64 },
    LogSoftmaxRows { x: usize, temperature: f64 },
    L2NormalizeRows { x: usize },
    /// forward = discrete; gradient copied to continuous, none to discrete
    StraightThrough { continuous: usize },
    /// output row i = table row indices[i]
    GatherRows { table: usize, indices: Vec<usize> },
    /// output[i] = x[i, cols[i]], shape (m, 1)
    TakePerRow { x: usize, cols: Vec<usize> },
    /// out[i,k] = ||x_i - codes_k||^2; codes carry no gradient
    SqDistToRows { x: usize, codes: usize },
    SumAll { x: usize },
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Wengert list: ops are appended in forward order, so a single reverse sweep
/// visits every node exactly once with all downstream gradients accumulated.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(rows * cols, values.len());
        self.nodes.push(Node { rows, cols, values, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].values.len(), 1);
        self.nodes[v.0].values[0]
    }

    /// Errors if any value in the node is NaN or infinite.
    pub fn check_finite(&self, v: Var, label: &str) -> Result<()> {
        if self.nodes[v.0].values.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(NumError::NonFinite(label.to_string()))
        }
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool) -> Var {
        assert_eq!(rows * cols, values.len(), "leaf value length must match shape");
        self.push(rows, cols, values, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        self.leaf(rows, cols, values, false)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> Var {
        self.constant(1, 1, vec![value])
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) != (br, bc) {
            return Err(NumError::ShapeMismatch { op, expected: (ar, ac), got: (br, bc) });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(NumError::InnerDim { a: (m, k), b: (k2, n) });
        }
        let mut out = vec![0.0; m * n];
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bpn) in orow.iter_mut().zip(brow) {
                    *o += aip * bpn;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(m, n, out, rg, Op::MatMul { a: a.0, b: b.0 }))
    }

    /// `a . b^T` with `a: m x k`, `b: n x k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(NumError::InnerDim { a: (m, k), b: (n, k2) });
        }
        let mut out = vec![0.0; m * n];
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += av[i * k + p] * bv[j * k + p];
                }
                out[i * n + j] = s;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(m, n, out, rg, Op::MatMulNT { a: a.0, b: b.0 }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (r, c) = self.shape(a);
        let v: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, v, rg, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let (r, c) = self.shape(a);
        let v: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, v, rg, Op::Sub { a: a.0, b: b.0 }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (r, c) = self.shape(a);
        let v: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, v, rg, Op::Mul { a: a.0, b: b.0 }))
    }

    /// `[m,n] + [1,n]`, broadcasting the bias row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let (br, bc) = self.shape(bias);
        if br != 1 || bc != n {
            return Err(NumError::ShapeMismatch { op: "add_row", expected: (1, n), got: (br, bc) });
        }
        let bv = self.nodes[bias.0].values.clone();
        let mut v = self.nodes[a.0].values.clone();
        for i in 0..m {
            for j in 0..n {
                v[i * n + j] += bv[j];
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(m, n, v, rg, Op::AddRow { a: a.0, bias: bias.0 }))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let v: Vec<f64> = self.nodes[x.0].values.iter().map(|a| a.tanh()).collect();
        let rg = self.rg(x);
        self.push(r, c, v, rg, Op::Tanh { x: x.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let v: Vec<f64> = self.nodes[x.0].values.iter().map(|a| 1.0 / (1.0 + (-a).exp())).collect();
        let rg = self.rg(x);
        self.push(r, c, v, rg, Op::Sigmoid { x: x.0 })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let v: Vec<f64> = self.nodes[x.0].values.iter().map(|a| a.exp()).collect();
        let rg = self.rg(x);
        self.push(r, c, v, rg, Op::Exp { x: x.0 })
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.nodes[x.0].values.iter().any(|&a| a <= 0.0) {
            return Err(NumError::Domain { op: "log", what: "non-positive input".into() });
        }
        let v: Vec<f64> = self.nodes[x.0].values.iter().map(|a| a.ln()).collect();
        let rg = self.rg(x);
        Ok(self.push(r, c, v, rg, Op::Log { x: x.0 }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let (r, cl) = self.shape(x);
        let v: Vec<f64> = self.nodes[x.0].values.iter().map(|a| a * c).collect();
        let rg = self.rg(x);
        self.push(r, cl, v, rg, Op::Scale { x: x.0, c })
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let (r, cl) = self.shape(x);
        let v: Vec<f64> = self.nodes[x.0].values.iter().map(|a| a + c).collect();
        let rg = self.rg(x);
        self.push(r, cl, v, rg, Op::AddScalar { x: x.0 })
    }

    fn softmax_row(values: &[f64], temperature: f64) -> Vec<f64> {
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = values.iter().map(|&a| ((a - max) / temperature).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    /// Row-wise `softmax(x / temperature)`, computed with max-subtraction.
    pub fn softmax_rows(&mut self, x: Var, temperature: f64) -> Result<Var> {
        if temperature <= 0.0 {
            return Err(NumError::Parameter { name: "temperature", value: temperature });
        }
        let (r, c) = self.shape(x);
        let mut v = Vec::with_capacity(r * c);
        for i in 0..r {
            v.extend(Self::softmax_row(&self.nodes[x.0].values[i * c..(i + 1) * c], temperature));
        }
        let rg = self.rg(x);
        Ok(self.push(r, c, v, rg, Op::SoftmaxRows { x: x.0, temperature }))
    }

    /// Row-wise `log softmax(x / temperature)` without an exp-then-log round trip.
    pub fn log_softmax_rows(&mut self, x: Var, temperature: f64) -> Result<Var> {
        if temperature <= 0.0 {
            return Err(NumError::Parameter { name: "temperature", value: temperature });
        }
        let (r, c) = self.shape(x);
        let mut v = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &self.nodes[x.0].values[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse: f64 = row.iter().map(|&a| ((a - max) / temperature).exp()).sum::<f64>().ln();
            v.extend(row.iter().map(|&a| (a - max) / temperature - lse));
        }
        let rg = self.rg(x);
        Ok(self.push(r, c, v, rg, Op::LogSoftmaxRows { x: x.0, temperature }))
    }

    /// Normalizes every row to unit L2 norm.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let mut v = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &self.nodes[x.0].values[i * c..(i + 1) * c];
            let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm <= 1e-12 {
                return Err(NumError::DegenerateInput(1e-12));
            }
            v.extend(row.iter().map(|a| a / norm));
        }
        let rg = self.rg(x);
        Ok(self.push(r, c, v, rg, Op::L2NormalizeRows { x: x.0 }))
    }

    /// Forward value is `discrete`; the backward pass copies the incoming
    /// gradient to `continuous` and sends nothing to `discrete`.
    pub fn straight_through(&mut self, discrete: Var, continuous: Var) -> Result<Var> {
        self.same_shape(discrete, continuous, "straight_through")?;
        let (r, c) = self.shape(discrete);
        let v = self.nodes[discrete.0].values.clone();
        let rg = self.rg(continuous);
        Ok(self.push(r, c, v, rg, Op::StraightThrough { continuous: continuous.0 }))
    }

    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, c) = self.shape(table);
        let mut v = Vec::with_capacity(indices.len() * c);
        for &ix in indices {
            if ix >= rows {
                return Err(NumError::IndexOutOfRange { index: ix, len: rows });
            }
            v.extend_from_slice(&self.nodes[table.0].values[ix * c..(ix + 1) * c]);
        }
        let rg = self.rg(table);
        Ok(self.push(indices.len(), c, v, rg, Op::GatherRows { table: table.0, indices: indices.to_vec() }))
    }

    /// `out[i] = x[i, cols[i]]` as an `(m, 1)` column.
    pub fn take_per_row(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.shape(x);
        if cols.len() != m {
            return Err(NumError::ShapeMismatch { op: "take_per_row", expected: (m, 1), got: (cols.len(), 1) });
        }
        let mut v = Vec::with_capacity(m);
        for (i, &j) in cols.iter().enumerate() {
            if j >= n {
                return Err(NumError::IndexOutOfRange { index: j, len: n });
            }
            v.push(self.nodes[x.0].values[i * n + j]);
        }
        let rg = self.rg(x);
        Ok(self.push(m, 1, v, rg, Op::TakePerRow { x: x.0, cols: cols.to_vec() }))
    }

    /// Pairwise squared Euclidean distances between rows of `x` and rows of
    /// `codes`. Gradient flows into `x` only; `codes` is treated as constant.
    pub fn sq_dist_to_rows(&mut self, x: Var, codes: Var) -> Result<Var> {
        let (m, d) = self.shape(x);
        let (k, d2) = self.shape(codes);
        if d != d2 {
            return Err(NumError::InnerDim { a: (m, d), b: (k, d2) });
        }
        let xv = &self.nodes[x.0].values;
        let cv = &self.nodes[codes.0].values;
        let mut v = Vec::with_capacity(m * k);
        for i in 0..m {
            for kk in 0..k {
                let mut s = 0.0;
                for j in 0..d {
                    let diff = xv[i * d + j] - cv[kk * d + j];
                    s += diff * diff;
                }
                v.push(s);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(m, k, v, rg, Op::SqDistToRows { x: x.0, codes: codes.0 }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].values.iter().sum();
        let rg = self.rg(x);
        self.push(1, 1, vec![s], rg, Op::SumAll { x: x.0 })
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].values.len();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Reverse sweep from a scalar loss. Returns per-node gradients; read them
    /// through [`Tape::grad_of`] on the returned buffer.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(NumError::NonScalarLoss((r, c)));
        }
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.values.len()]).collect();
        grads[loss.0][0] = 1.0;
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            self.backprop_node(id, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, id: usize, grads: &mut [Vec<f64>]) {
        let node = &self.nodes[id];
        let n_cols = node.cols;
        let g = std::mem::take(&mut grads[id]);
        match &node.op {
            Op::Leaf => {
                grads[id] = g;
                return;
            }
            Op::MatMul { a, b } => {
                let (m, k) = (self.nodes[*a].rows, self.nodes[*a].cols);
                let n = n_cols;
                let av = &self.nodes[*a].values;
                let bv = &self.nodes[*b].values;
                if self.nodes[*a].requires_grad {
                    // a.grad += g . b^T
                    let ga = &mut grads[*a];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                }
                if self.nodes[*b].requires_grad {
                    // b.grad += a^T . g
                    let gb = &mut grads[*b];
                    for p in 0..k {
                        for i in 0..m {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                }
            }
            Op::MatMulNT { a, b } => {
                let (m, k) = (self.nodes[*a].rows, self.nodes[*a].cols);
                let n = n_cols;
                let av = &self.nodes[*a].values;
                let bv = &self.nodes[*b].values;
                if self.nodes[*a].requires_grad {
                    // a.grad += g . b
                    let ga = &mut grads[*a];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                ga[i * k + p] += gij * bv[j * k + p];
                            }
                        }
                    }
                }
                if self.nodes[*b].requires_grad {
                    // b.grad += g^T . a
                    let gb = &mut grads[*b];
                    for j in 0..n {
                        for i in 0..m {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                gb[j * k + p] += gij * av[i * k + p];
                            }
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                if self.nodes[*a].requires_grad {
                    for (ga, &gi) in grads[*a].iter_mut().zip(&g) {
                        *ga += gi;
                    }
                }
                if self.nodes[*b].requires_grad {
                    for (gb, &gi) in grads[*b].iter_mut().zip(&g) {
                        *gb += gi;
                    }
                }
            }
            Op::Sub { a, b } => {
                if self.nodes[*a].requires_grad {
                    for (ga, &gi) in grads[*a].iter_mut().zip(&g) {
                        *ga += gi;
                    }
                }
                if self.nodes[*b].requires_grad {
                    for (gb, &gi) in grads[*b].iter_mut().zip(&g) {
                        *gb -= gi;
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.nodes[*a].requires_grad {
                    let bv = &self.nodes[*b].values;
                    for ((ga, &gi), &bvi) in grads[*a].iter_mut().zip(&g).zip(bv) {
                        *ga += gi * bvi;
                    }
                }
                if self.nodes[*b].requires_grad {
                    let av = &self.nodes[*a].values;
                    for ((gb, &gi), &avi) in grads[*b].iter_mut().zip(&g).zip(av) {
                        *gb += gi * avi;
                    }
                }
            }
            Op::AddRow { a, bias } => {
                let n = n_cols;
                if self.nodes[*a].requires_grad {
                    for (ga, &gi) in grads[*a].iter_mut().zip(&g) {
                        *ga += gi;
                    }
                }
                if self.nodes[*bias].requires_grad {
                    let gb = &mut grads[*bias];
                    for (idx, &gi) in g.iter().enumerate() {
                        gb[idx % n] += gi;
                    }
                }
            }
            Op::Tanh { x } => {
                if self.nodes[*x].requires_grad {
                    for ((gx, &gi), &y) in grads[*x].iter_mut().zip(&g).zip(&node.values) {
                        *gx += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid { x } => {
                if self.nodes[*x].requires_grad {
                    for ((gx, &gi), &y) in grads[*x].iter_mut().zip(&g).zip(&node.values) {
                        *gx += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Exp { x } => {
                if self.nodes[*x].requires_grad {
                    for ((gx, &gi), &y) in grads[*x].iter_mut().zip(&g).zip(&node.values) {
                        *gx += gi * y;
                    }
                }
            }
            Op::Log { x } => {
                if self.nodes[*x].requires_grad {
                    let xv = &self.nodes[*x].values;
                    for ((gx, &gi), &xi) in grads[*x].iter_mut().zip(&g).zip(xv) {
                        *gx += gi / xi;
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.nodes[*x].requires_grad {
                    for (gx, &gi) in grads[*x].iter_mut().zip(&g) {
                        *gx += gi * c;
                    }
                }
            }
            Op::AddScalar { x } => {
                if self.nodes[*x].requires_grad {
                    for (gx, &gi) in grads[*x].iter_mut().zip(&g) {
                        *gx += gi;
                    }
                }
            }
            Op::SoftmaxRows { x, temperature } => {
                if self.nodes[*x].requires_grad {
                    let rows = node.rows;
                    let n = n_cols;
                    let gx = &mut grads[*x];
                    for i in 0..rows {
                        let y = &node.values[i * n..(i + 1) * n];
                        let gi = &g[i * n..(i + 1) * n];
                        let dot: f64 = y.iter().zip(gi).map(|(&yj, &gj)| yj * gj).sum();
                        for j in 0..n {
                            gx[i * n + j] += y[j] * (gi[j] - dot) / temperature;
                        }
                    }
                }
            }
            Op::LogSoftmaxRows { x, temperature } => {
                if self.nodes[*x].requires_grad {
                    let rows = node.rows;
                    let n = n_cols;
                    let gx = &mut grads[*x];
                    for i in 0..rows {
                        let y = &node.values[i * n..(i + 1) * n];
                        let gi = &g[i * n..(i + 1) * n];
                        let gsum: f64 = gi.iter().sum();
                        for j in 0..n {
                            gx[i * n + j] += (gi[j] - y[j].exp() * gsum) / temperature;
                        }
                    }
                }
            }
            Op::L2NormalizeRows { x } => {
                if self.nodes[*x].requires_grad {
                    let rows = node.rows;
                    let n = n_cols;
                    let xv = &self.nodes[*x].values;
                    let gx = &mut grads[*x];
                    for i in 0..rows {
                        let xr = &xv[i * n..(i + 1) * n];
                        let yr = &node.values[i * n..(i + 1) * n];
                        let gi = &g[i * n..(i + 1) * n];
                        let norm = xr.iter().map(|a| a * a).sum::<f64>().sqrt();
                        let dot: f64 = yr.iter().zip(gi).map(|(&yj, &gj)| yj * gj).sum();
                        // projection Jacobian: (I - y y^T) / ||x||
                        for j in 0..n {
                            gx[i * n + j] += (gi[j] - yr[j] * dot) / norm;
                        }
                    }
                }
            }
            Op::StraightThrough { continuous } => {
                if self.nodes[*continuous].requires_grad {
                    for (gc, &gi) in grads[*continuous].iter_mut().zip(&g) {
                        *gc += gi;
                    }
                }
            }
            Op::GatherRows { table, indices } => {
                if self.nodes[*table].requires_grad {
                    let n = n_cols;
                    let gt = &mut grads[*table];
                    for (i, &ix) in indices.iter().enumerate() {
                        for j in 0..n {
                            gt[ix * n + j] += g[i * n + j];
                        }
                    }
                }
            }
            Op::TakePerRow { x, cols } => {
                if self.nodes[*x].requires_grad {
                    let n = self.nodes[*x].cols;
                    let gx = &mut grads[*x];
                    for (i, &j) in cols.iter().enumerate() {
                        gx[i * n + j] += g[i];
                    }
                }
            }
            Op::SqDistToRows { x, codes } => {
                if self.nodes[*x].requires_grad {
                    let (m, k) = (node.rows, node.cols);
                    let d = self.nodes[*x].cols;
                    let xv = &self.nodes[*x].values;
                    let cv = &self.nodes[*codes].values;
                    let gx = &mut grads[*x];
                    for i in 0..m {
                        for kk in 0..k {
                            let gik = g[i * k + kk];
                            if gik == 0.0 {
                                continue;
                            }
                            for j in 0..d {
                                gx[i * d + j] += 2.0 * gik * (xv[i * d + j] - cv[kk * d + j]);
                            }
                        }
                    }
                }
            }
            Op::SumAll { x } => {
                if self.nodes[*x].requires_grad {
                    for gx in grads[*x].iter_mut() {
                        *gx += g[0];
                    }
                }
            }
        }
        grads[id] = g;
    }
}

/// Gradient buffers produced by one backward sweep.
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }
}
