use crate::error::{Error, Result};

use super::{Array, Dual, Scalar};

/// Variance floor below which logit normalization is refused.
pub const LOGIT_VARIANCE_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Constant data fed at evaluation time.
    Input(usize),
    /// Row-major view into the flat parameter vector.
    Param {
        offset: usize,
    },
    MatMul(NodeId, NodeId),
    /// Elementwise sum; a `1×k` right operand is broadcast over rows.
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Mean(NodeId),
    Scale(NodeId, f64),
    /// Mean over rows of `-Σ_k t_k log softmax(l)_k`.
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: NodeId,
    },
    /// `½ Σ (pred - target)²` over all entries.
    HalfSquaredError {
        pred: NodeId,
        target: NodeId,
    },
    /// Row-wise `f / sqrt(mean((f - mean f)²))`.
    NormalizeLogits(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    /// Whether the node depends on the parameters.
    active: bool,
}

/// Builds an immutable [`Graph`]. Nodes can only refer to earlier nodes, so
/// insertion order is a topological order.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    inputs: Vec<[usize; 2]>,
    n_params: usize,
}

impl GraphBuilder {
    pub fn new(n_params: usize) -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            inputs: Vec::new(),
            n_params,
        }
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, active: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            rows,
            cols,
            active,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown node {}", id.0)))
    }

    pub fn input(&mut self, rows: usize, cols: usize) -> NodeId {
        let idx = self.inputs.len();
        self.inputs.push([rows, cols]);
        self.push(Op::Input(idx), rows, cols, false)
    }

    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Result<NodeId> {
        if offset + rows * cols > self.n_params {
            return Err(Error::Shape(format!(
                "parameter block {rows}x{cols} at offset {offset} exceeds {} parameters",
                self.n_params
            )));
        }
        Ok(self.push(Op::Param { offset }, rows, cols, true))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, nb) = (self.node(a)?.clone(), self.node(b)?.clone());
        if na.cols != nb.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} by {}x{}",
                na.rows, na.cols, nb.rows, nb.cols
            )));
        }
        Ok(self.push(Op::MatMul(a, b), na.rows, nb.cols, na.active || nb.active))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, nb) = (self.node(a)?.clone(), self.node(b)?.clone());
        let same = na.rows == nb.rows && na.cols == nb.cols;
        let broadcast = nb.rows == 1 && na.cols == nb.cols;
        if !(same || broadcast) {
            return Err(Error::Shape(format!(
                "add {}x{} and {}x{}",
                na.rows, na.cols, nb.rows, nb.cols
            )));
        }
        Ok(self.push(Op::Add(a, b), na.rows, na.cols, na.active || nb.active))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, nb) = (self.node(a)?.clone(), self.node(b)?.clone());
        if na.rows != nb.rows || na.cols != nb.cols {
            return Err(Error::Shape(format!(
                "elementwise product {}x{} and {}x{}",
                na.rows, na.cols, nb.rows, nb.cols
            )));
        }
        Ok(self.push(Op::Mul(a, b), na.rows, na.cols, na.active || nb.active))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.node(a)?.clone();
        Ok(self.push(Op::Relu(a), n.rows, n.cols, n.active))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.node(a)?.clone();
        Ok(self.push(Op::Mean(a), 1, 1, n.active))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let n = self.node(a)?.clone();
        Ok(self.push(Op::Scale(a, factor), n.rows, n.cols, n.active))
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: NodeId) -> Result<NodeId> {
        let (nl, nt) = (self.node(logits)?.clone(), self.node(targets)?.clone());
        if nl.rows != nt.rows || nl.cols != nt.cols {
            return Err(Error::Shape(format!(
                "cross-entropy logits {}x{} vs targets {}x{}",
                nl.rows, nl.cols, nt.rows, nt.cols
            )));
        }
        if nt.active {
            return Err(Error::InvalidArgument(
                "cross-entropy targets must be constant".into(),
            ));
        }
        Ok(self.push(Op::SoftmaxCrossEntropy { logits, targets }, 1, 1, nl.active))
    }

    pub fn half_squared_error(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (np, nt) = (self.node(pred)?.clone(), self.node(target)?.clone());
        if np.rows != nt.rows || np.cols != nt.cols {
            return Err(Error::Shape(format!(
                "squared error {}x{} vs {}x{}",
                np.rows, np.cols, nt.rows, nt.cols
            )));
        }
        Ok(self.push(
            Op::HalfSquaredError { pred, target },
            1,
            1,
            np.active || nt.active,
        ))
    }

    pub fn normalize_logits(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.node(a)?.clone();
        if n.cols < 2 {
            return Err(Error::InvalidArgument(format!(
                "logit normalization needs at least 2 classes, got {}",
                n.cols
            )));
        }
        Ok(self.push(Op::NormalizeLogits(a), n.rows, n.cols, n.active))
    }

    pub fn build(self, output: NodeId) -> Result<Graph> {
        self.node(output)?;
        Ok(Graph {
            nodes: self.nodes,
            inputs: self.inputs,
            n_params: self.n_params,
            output,
        })
    }
}

/// How Hessian-vector products are formed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HvpMethod {
    /// Forward-mode over reverse-mode: exact up to rounding.
    #[default]
    Nested,
    /// Central differences of the gradient with step `h·‖w‖∞/‖v‖∞`.
    FiniteDifference { h: f64 },
}

/// Immutable computation graph over a flat parameter vector and constant
/// data inputs. Evaluations keep their own buffers, so one graph can be
/// evaluated from many threads at once.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    inputs: Vec<[usize; 2]>,
    n_params: usize,
    output: NodeId,
}

/// Primal values of every node from one forward pass.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    values: Vec<Array<T>>,
    output: NodeId,
}

impl<T: Scalar> Evaluation<T> {
    pub fn output(&self) -> &Array<T> {
        &self.values[self.output.0]
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

impl Graph {
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn input_shapes(&self) -> &[[usize; 2]] {
        &self.inputs
    }

    pub fn output_shape(&self) -> [usize; 2] {
        let n = &self.nodes[self.output.0];
        [n.rows, n.cols]
    }

    /// Runs the forward pass, caching every intermediate.
    pub fn evaluate<T: Scalar>(
        &self,
        params: &[T],
        inputs: &[&Array<f64>],
    ) -> Result<Evaluation<T>> {
        check_len(self.n_params, params.len())?;
        if inputs.len() != self.inputs.len() {
            return Err(Error::Shape(format!(
                "graph takes {} inputs, got {}",
                self.inputs.len(),
                inputs.len()
            )));
        }
        for (i, (decl, arr)) in self.inputs.iter().zip(inputs).enumerate() {
            if *decl != arr.shape() {
                return Err(Error::Shape(format!(
                    "input {i}: expected {}x{}, got {}x{}",
                    decl[0],
                    decl[1],
                    arr.rows(),
                    arr.cols()
                )));
            }
        }

        let mut values: Vec<Array<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Input(i) => inputs[i].lift(),
                Op::Param { offset } => Array::new(
                    node.rows,
                    node.cols,
                    params[offset..offset + node.rows * node.cols].to_vec(),
                )?,
                Op::MatMul(a, b) => values[a.0].matmul(&values[b.0])?,
                Op::Add(a, b) => {
                    let (x, y) = (&values[a.0], &values[b.0]);
                    let mut out = x.clone();
                    let cols = x.cols();
                    if y.rows() == x.rows() {
                        for (o, &b) in out.data_mut().iter_mut().zip(y.data()) {
                            *o += b;
                        }
                    } else {
                        for (k, o) in out.data_mut().iter_mut().enumerate() {
                            *o += y.data()[k % cols];
                        }
                    }
                    out
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&values[a.0], &values[b.0]);
                    let data = x
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&p, &q)| p * q)
                        .collect();
                    Array::new(x.rows(), x.cols(), data)?
                }
                Op::Relu(a) => values[a.0].map(|x| if x.re() > 0.0 { x } else { T::zero() }),
                Op::Mean(a) => {
                    let x = &values[a.0];
                    let mut s = T::zero();
                    for &v in x.data() {
                        s += v;
                    }
                    Array::scalar(s / T::from_f64(x.data().len() as f64))
                }
                Op::Scale(a, k) => values[a.0].map(|x| x * T::from_f64(k)),
                Op::SoftmaxCrossEntropy { logits, targets } => {
                    let (l, t) = (&values[logits.0], &values[targets.0]);
                    let mut total = T::zero();
                    for i in 0..l.rows() {
                        let lse = log_sum_exp(l.row(i));
                        for (&lk, &tk) in l.row(i).iter().zip(t.row(i)) {
                            if tk != T::zero() {
                                total += tk * (lse - lk);
                            }
                        }
                    }
                    Array::scalar(total / T::from_f64(l.rows() as f64))
                }
                Op::HalfSquaredError { pred, target } => {
                    let mut s = T::zero();
                    for (&p, &t) in values[pred.0].data().iter().zip(values[target.0].data()) {
                        let r = p - t;
                        s += r * r;
                    }
                    Array::scalar(s * T::from_f64(0.5))
                }
                Op::NormalizeLogits(a) => {
                    let x = &values[a.0];
                    let mut out = x.clone();
                    for i in 0..x.rows() {
                        let (_, s) = row_stats(x.row(i))?;
                        for j in 0..x.cols() {
                            out.set(i, j, x.get(i, j) / s);
                        }
                    }
                    out
                }
            };
            values.push(v);
        }
        Ok(Evaluation {
            values,
            output: self.output,
        })
    }

    /// Primal output for `f64` parameters.
    pub fn forward(&self, params: &[f64], inputs: &[&Array<f64>]) -> Result<Array<f64>> {
        let eval = self.evaluate(params, inputs)?;
        Ok(eval
            .values
            .into_iter()
            .nth(self.output.0)
            .expect("output node"))
    }

    /// Scalar output value.
    pub fn value(&self, params: &[f64], inputs: &[&Array<f64>]) -> Result<f64> {
        self.ensure_scalar()?;
        Ok(self.forward(params, inputs)?.data()[0])
    }

    fn ensure_scalar(&self) -> Result<()> {
        let [rows, cols] = self.output_shape();
        if rows != 1 || cols != 1 {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        Ok(())
    }

    /// Reverse pass: derivative of the scalar output with respect to the
    /// flat parameter vector.
    pub fn backward<T: Scalar>(&self, eval: &Evaluation<T>) -> Result<Vec<T>> {
        self.ensure_scalar()?;
        let values = &eval.values;
        let mut grad = vec![T::zero(); self.n_params];
        let mut adj: Vec<Option<Array<T>>> = vec![None; self.nodes.len()];
        adj[self.output.0] = Some(Array::scalar(T::from_f64(1.0)));

        for (idx, node) in self.nodes.iter().enumerate().rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !node.active {
                continue;
            }
            match node.op {
                Op::Input(_) => {}
                Op::Param { offset } => {
                    for (acc, &d) in grad[offset..].iter_mut().zip(g.data()) {
                        *acc += d;
                    }
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].active {
                        let da = g.matmul_t(&values[b.0])?;
                        accumulate(&mut adj, a, da);
                    }
                    if self.nodes[b.0].active {
                        let db = values[a.0].t_matmul(&g)?;
                        accumulate(&mut adj, b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[b.0].active {
                        let nb = &self.nodes[b.0];
                        let db = if nb.rows == node.rows {
                            g.clone()
                        } else {
                            let mut s = Array::zeros(1, node.cols);
                            for (k, &d) in g.data().iter().enumerate() {
                                s.data_mut()[k % node.cols] += d;
                            }
                            s
                        };
                        accumulate(&mut adj, b, db);
                    }
                    if self.nodes[a.0].active {
                        accumulate(&mut adj, a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].active {
                        let da = elementwise(&g, &values[b.0])?;
                        accumulate(&mut adj, a, da);
                    }
                    if self.nodes[b.0].active {
                        let db = elementwise(&g, &values[a.0])?;
                        accumulate(&mut adj, b, db);
                    }
                }
                Op::Relu(a) => {
                    let x = &values[a.0];
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&d, &v)| if v.re() > 0.0 { d } else { T::zero() })
                        .collect();
                    accumulate(&mut adj, a, Array::new(x.rows(), x.cols(), data)?);
                }
                Op::Mean(a) => {
                    let na = &self.nodes[a.0];
                    let d = g.data()[0] / T::from_f64((na.rows * na.cols) as f64);
                    accumulate(
                        &mut adj,
                        a,
                        Array::new(na.rows, na.cols, vec![d; na.rows * na.cols])?,
                    );
                }
                Op::Scale(a, k) => {
                    accumulate(&mut adj, a, g.map(|d| d * T::from_f64(k)));
                }
                Op::SoftmaxCrossEntropy { logits, targets } => {
                    let (l, t) = (&values[logits.0], &values[targets.0]);
                    let scale = g.data()[0] / T::from_f64(l.rows() as f64);
                    let mut dl = Array::zeros(l.rows(), l.cols());
                    for i in 0..l.rows() {
                        let lse = log_sum_exp(l.row(i));
                        let mut mass = T::zero();
                        for &tk in t.row(i) {
                            mass += tk;
                        }
                        for j in 0..l.cols() {
                            let p = (l.get(i, j) - lse).exp();
                            dl.set(i, j, scale * (p * mass - t.get(i, j)));
                        }
                    }
                    accumulate(&mut adj, logits, dl);
                }
                Op::HalfSquaredError { pred, target } => {
                    let (p, t) = (&values[pred.0], &values[target.0]);
                    let s = g.data()[0];
                    let r: Vec<T> = p
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(&a, &b)| (a - b) * s)
                        .collect();
                    if self.nodes[target.0].active {
                        let neg = r.iter().map(|&x| -x).collect();
                        accumulate(&mut adj, target, Array::new(t.rows(), t.cols(), neg)?);
                    }
                    if self.nodes[pred.0].active {
                        accumulate(&mut adj, pred, Array::new(p.rows(), p.cols(), r)?);
                    }
                }
                Op::NormalizeLogits(a) => {
                    let x = &values[a.0];
                    let k = T::from_f64(x.cols() as f64);
                    let mut dx = Array::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let f = x.row(i);
                        let (mean, s) = row_stats(f)?;
                        let mut gf = T::zero();
                        for (&gj, &fj) in g.row(i).iter().zip(f) {
                            gf += gj * fj;
                        }
                        let coef = gf / (s * s * s * k);
                        for (j, &fj) in f.iter().enumerate() {
                            dx.set(i, j, g.get(i, j) / s - coef * (fj - mean));
                        }
                    }
                    accumulate(&mut adj, a, dx);
                }
            }
        }
        Ok(grad)
    }

    pub fn value_and_grad(
        &self,
        params: &[f64],
        inputs: &[&Array<f64>],
    ) -> Result<(f64, Vec<f64>)> {
        self.ensure_scalar()?;
        let eval = self.evaluate(params, inputs)?;
        let value = eval.output().data()[0];
        Ok((value, self.backward(&eval)?))
    }

    pub fn grad(&self, params: &[f64], inputs: &[&Array<f64>]) -> Result<Vec<f64>> {
        Ok(self.value_and_grad(params, inputs)?.1)
    }

    /// Hessian of the scalar output applied to `v`.
    pub fn hvp(
        &self,
        params: &[f64],
        inputs: &[&Array<f64>],
        v: &[f64],
        method: HvpMethod,
    ) -> Result<Vec<f64>> {
        check_len(self.n_params, v.len())?;
        match method {
            HvpMethod::Nested => {
                let duals: Vec<Dual> = params
                    .iter()
                    .zip(v)
                    .map(|(&w, &t)| Dual::new(w, t))
                    .collect();
                let eval = self.evaluate(&duals, inputs)?;
                Ok(self.backward(&eval)?.into_iter().map(|d| d.eps).collect())
            }
            HvpMethod::FiniteDifference { h } => {
                let v_max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if v_max == 0.0 {
                    return Ok(vec![0.0; v.len()]);
                }
                let w_max = params.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let eps = h * if w_max > 0.0 { w_max } else { 1.0 } / v_max;
                let plus: Vec<f64> = params.iter().zip(v).map(|(w, t)| w + eps * t).collect();
                let minus: Vec<f64> = params.iter().zip(v).map(|(w, t)| w - eps * t).collect();
                let gp = self.grad(&plus, inputs)?;
                let gm = self.grad(&minus, inputs)?;
                Ok(gp
                    .iter()
                    .zip(&gm)
                    .map(|(a, b)| (a - b) / (2.0 * eps))
                    .collect())
            }
        }
    }
}

fn accumulate<T: Scalar>(adj: &mut [Option<Array<T>>], id: NodeId, d: Array<T>) {
    match &mut adj[id.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(d.data()) {
                *e += *x;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

fn elementwise<T: Scalar>(a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    Array::new(a.rows(), a.cols(), data)
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let m = row
        .iter()
        .copied()
        .max_by(|a, b| a.re().total_cmp(&b.re()))
        .unwrap_or_else(T::zero);
    let mut s = T::zero();
    for &x in row {
        s += (x - m).exp();
    }
    s.ln() + m
}

/// Mean and standard deviation (population) of one row of logits.
fn row_stats<T: Scalar>(row: &[T]) -> Result<(T, T)> {
    let k = T::from_f64(row.len() as f64);
    let mut mean = T::zero();
    for &x in row {
        mean += x;
    }
    mean = mean / k;
    let mut var = T::zero();
    for &x in row {
        let d = x - mean;
        var += d * d;
    }
    var = var / k;
    if !(var.re() >= LOGIT_VARIANCE_FLOOR) {
        return Err(Error::DegenerateLogits { variance: var.re() });
    }
    Ok((mean, var.sqrt()))
}
