//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Nodes are appended in construction order and values are computed eagerly,
//! so the tape itself is the topological order: `backward` is one reverse
//! sweep. Scalars are vectors of dimension 1, which keeps the op set small.

use crate::error::{Error, Result};
use crate::numerics::dense::{softmax, Matrix, Vector};

/// Handle to a node in a [`DiffGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Value {
    Vec(Vector),
    Mat(Matrix),
}

impl Value {
    fn zeros_like(&self) -> Value {
        match self {
            Value::Vec(v) => Value::Vec(Vector::zeros(v.dim())),
            Value::Mat(m) => Value::Mat(Matrix::zeros(m.rows(), m.cols())),
        }
    }

    fn data(&self) -> &[f64] {
        match self {
            Value::Vec(v) => v.as_slice(),
            Value::Mat(m) => m.as_slice(),
        }
    }

    fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Vec(v) => v.as_mut_slice(),
            Value::Mat(m) => m.as_mut_slice(),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec { m: NodeId, x: NodeId },
    EmbedRow { m: NodeId, row: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddConst { x: NodeId },
    Hadamard { a: NodeId, b: NodeId },
    MulScalar { s: NodeId, x: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    Relu { x: NodeId },
    LnClamped { x: NodeId, floor: f64 },
    Sqrt { x: NodeId },
    Recip { x: NodeId },
    Dot { a: NodeId, b: NodeId },
    Concat { parts: Vec<NodeId> },
    Mean { parts: Vec<NodeId> },
    Sum { parts: Vec<NodeId> },
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    Stack { parts: Vec<NodeId> },
    Pick { x: NodeId, index: usize },
    Softmax { x: NodeId },
}

/// Adjoints of the trainable leaves after a [`DiffGraph::backward`] pass.
#[derive(Debug)]
pub struct Gradients {
    by_node: Vec<Option<Value>>,
}

impl Gradients {
    /// Gradient of a trainable vector leaf. Panics on non-parameter nodes:
    /// that is a caller bug, not a data error.
    pub fn vector(&self, id: NodeId) -> &Vector {
        match self.by_node[id.0].as_ref() {
            Some(Value::Vec(v)) => v,
            Some(Value::Mat(_)) => panic!("gradient for node {} is a matrix", id.0),
            None => panic!("node {} is not a trainable parameter", id.0),
        }
    }

    /// Gradient of a trainable matrix leaf.
    pub fn matrix(&self, id: NodeId) -> &Matrix {
        match self.by_node[id.0].as_ref() {
            Some(Value::Mat(m)) => m,
            Some(Value::Vec(_)) => panic!("gradient for node {} is a vector", id.0),
            None => panic!("node {} is not a trainable parameter", id.0),
        }
    }

    /// Flat view of a parameter gradient, row-major for matrices.
    pub fn data(&self, id: NodeId) -> &[f64] {
        self.by_node[id.0]
            .as_ref()
            .unwrap_or_else(|| panic!("node {} is not a trainable parameter", id.0))
            .data()
    }
}

/// A tape of primitive operations with eagerly computed values.
#[derive(Debug, Default)]
pub struct DiffGraph {
    ops: Vec<Op>,
    values: Vec<Value>,
    trainable: Vec<bool>,
    ln_clamp_hits: usize,
}

impl DiffGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// How many coordinates were clamped by `ln_clamped` so far.
    pub fn ln_clamp_hits(&self) -> usize {
        self.ln_clamp_hits
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.trainable.push(false);
        NodeId(self.values.len() - 1)
    }

    fn vec(&self, id: NodeId, op: &str) -> Result<&Vector> {
        match &self.values[id.0] {
            Value::Vec(v) => Ok(v),
            Value::Mat(_) => Err(Error::Argument(format!(
                "{op}: node {} holds a matrix, expected a vector",
                id.0
            ))),
        }
    }

    fn mat(&self, id: NodeId, op: &str) -> Result<&Matrix> {
        match &self.values[id.0] {
            Value::Mat(m) => Ok(m),
            Value::Vec(_) => Err(Error::Argument(format!(
                "{op}: node {} holds a vector, expected a matrix",
                id.0
            ))),
        }
    }

    /// Current value of a vector node.
    pub fn value_vec(&self, id: NodeId) -> Result<&Vector> {
        self.vec(id, "value_vec")
    }

    /// Current value of a matrix node.
    pub fn value_mat(&self, id: NodeId) -> Result<&Matrix> {
        self.mat(id, "value_mat")
    }

    pub fn constant(&mut self, v: Vector) -> NodeId {
        self.push(Op::Leaf, Value::Vec(v))
    }

    pub fn constant_matrix(&mut self, m: Matrix) -> NodeId {
        self.push(Op::Leaf, Value::Mat(m))
    }

    /// Vector leaf whose gradient is reported by `backward`.
    pub fn param_vector(&mut self, v: Vector) -> NodeId {
        let id = self.push(Op::Leaf, Value::Vec(v));
        self.trainable[id.0] = true;
        id
    }

    /// Matrix leaf whose gradient is reported by `backward`.
    pub fn param_matrix(&mut self, m: Matrix) -> NodeId {
        let id = self.push(Op::Leaf, Value::Mat(m));
        self.trainable[id.0] = true;
        id
    }

    /// `M x`.
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let y = {
            let mv = self.mat(m, "matvec")?;
            let xv = self.vec(x, "matvec")?;
            mv.matvec(xv)?
        };
        Ok(self.push(Op::MatVec { m, x }, Value::Vec(y)))
    }

    /// Row `row` of a matrix node as a vector.
    pub fn embed_row(&mut self, m: NodeId, row: usize) -> Result<NodeId> {
        let y = {
            let mv = self.mat(m, "embed_row")?;
            if row >= mv.rows() {
                return Err(Error::Argument(format!(
                    "embed_row: row {row} out of bounds for {} rows",
                    mv.rows()
                )));
            }
            mv.row_vector(row)
        };
        Ok(self.push(Op::EmbedRow { m, row }, Value::Vec(y)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.vec(a, "add")?.add(self.vec(b, "add")?)?;
        Ok(self.push(Op::Add { a, b }, Value::Vec(y)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.vec(a, "sub")?.sub(self.vec(b, "sub")?)?;
        Ok(self.push(Op::Sub { a, b }, Value::Vec(y)))
    }

    /// `c * x` with a compile-time constant, not a trainable scalar.
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let y = self.vec(x, "scale")?.scale(c);
        Ok(self.push(Op::Scale { x, c }, Value::Vec(y)))
    }

    /// `x + c` elementwise with a constant.
    pub fn add_const(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let y = Vector::new(self.vec(x, "add_const")?.as_slice().iter().map(|v| v + c).collect());
        Ok(self.push(Op::AddConst { x }, Value::Vec(y)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.vec(a, "hadamard")?.hadamard(self.vec(b, "hadamard")?)?;
        Ok(self.push(Op::Hadamard { a, b }, Value::Vec(y)))
    }

    /// `s[0] * x` where `s` is a dimension-1 node.
    pub fn mul_scalar(&mut self, s: NodeId, x: NodeId) -> Result<NodeId> {
        let y = {
            let sv = self.vec(s, "mul_scalar")?;
            if sv.dim() != 1 {
                return Err(Error::dim("mul_scalar scalar operand", sv.dim(), 1));
            }
            self.vec(x, "mul_scalar")?.scale(sv[0])
        };
        Ok(self.push(Op::MulScalar { s, x }, Value::Vec(y)))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let y = self.vec(x, "tanh")?.tanh();
        Ok(self.push(Op::Tanh { x }, Value::Vec(y)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let y = self.vec(x, "sigmoid")?.sigmoid();
        Ok(self.push(Op::Sigmoid { x }, Value::Vec(y)))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = Vector::new(self.vec(x, "relu")?.as_slice().iter().map(|v| v.max(0.0)).collect());
        Ok(self.push(Op::Relu { x }, Value::Vec(y)))
    }

    /// `ln(max(x, floor))` elementwise. Clamp events are counted, not fatal.
    pub fn ln_clamped(&mut self, x: NodeId, floor: f64) -> Result<NodeId> {
        if floor <= 0.0 {
            return Err(Error::Argument(format!("ln_clamped: floor must be positive, got {floor}")));
        }
        let (y, hits) = {
            let xv = self.vec(x, "ln_clamped")?;
            let mut hits = 0usize;
            let data = xv
                .as_slice()
                .iter()
                .map(|&v| {
                    if v < floor {
                        hits += 1;
                        floor.ln()
                    } else {
                        v.ln()
                    }
                })
                .collect();
            (Vector::new(data), hits)
        };
        self.ln_clamp_hits += hits;
        Ok(self.push(Op::LnClamped { x, floor }, Value::Vec(y)))
    }

    /// Elementwise square root; negative inputs are a numerical error.
    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        let y = {
            let xv = self.vec(x, "sqrt")?;
            if xv.as_slice().iter().any(|&v| v < 0.0) {
                return Err(Error::Numerical("sqrt of a negative value".into()));
            }
            Vector::new(xv.as_slice().iter().map(|v| v.sqrt()).collect())
        };
        Ok(self.push(Op::Sqrt { x }, Value::Vec(y)))
    }

    /// Elementwise reciprocal; zero inputs are a numerical error.
    pub fn recip(&mut self, x: NodeId) -> Result<NodeId> {
        let y = {
            let xv = self.vec(x, "recip")?;
            if xv.as_slice().iter().any(|&v| v == 0.0) {
                return Err(Error::Numerical("reciprocal of zero".into()));
            }
            Vector::new(xv.as_slice().iter().map(|v| 1.0 / v).collect())
        };
        Ok(self.push(Op::Recip { x }, Value::Vec(y)))
    }

    /// Inner product as a dimension-1 node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.vec(a, "dot")?.dot(self.vec(b, "dot")?)?;
        Ok(self.push(Op::Dot { a, b }, Value::Vec(Vector::new(vec![y]))))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Argument("concat: no parts".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.vec(p, "concat")?.as_slice());
        }
        Ok(self.push(Op::Concat { parts: parts.to_vec() }, Value::Vec(Vector::new(data))))
    }

    /// Elementwise mean of same-dimension vectors.
    pub fn mean(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let y = self.combine(parts, "mean")?.scale(1.0 / parts.len() as f64);
        Ok(self.push(Op::Mean { parts: parts.to_vec() }, Value::Vec(y)))
    }

    /// Elementwise sum of same-dimension vectors.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let y = self.combine(parts, "sum")?;
        Ok(self.push(Op::Sum { parts: parts.to_vec() }, Value::Vec(y)))
    }

    fn combine(&self, parts: &[NodeId], op: &str) -> Result<Vector> {
        if parts.is_empty() {
            return Err(Error::Argument(format!("{op}: no parts")));
        }
        let mut acc = self.vec(parts[0], op)?.clone();
        for &p in &parts[1..] {
            acc = acc.add(self.vec(p, op)?)?;
        }
        Ok(acc)
    }

    /// `sum_i weights[i] * items[i]`; `weights` is a vector node of
    /// dimension `items.len()`.
    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        let y = {
            let w = self.vec(weights, "weighted_sum")?;
            if w.dim() != items.len() {
                return Err(Error::dim("weighted_sum", w.dim(), items.len()));
            }
            if items.is_empty() {
                return Err(Error::Argument("weighted_sum: no items".into()));
            }
            let mut acc = self.vec(items[0], "weighted_sum")?.scale(w[0]);
            for (i, &it) in items.iter().enumerate().skip(1) {
                acc = acc.add(&self.vec(it, "weighted_sum")?.scale(w[i]))?;
            }
            acc
        };
        Ok(self.push(Op::WeightedSum { weights, items: items.to_vec() }, Value::Vec(y)))
    }

    /// Packs dimension-1 nodes into one vector.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Argument("stack: no parts".into()));
        }
        let mut data = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.vec(p, "stack")?;
            if v.dim() != 1 {
                return Err(Error::dim("stack part", v.dim(), 1));
            }
            data.push(v[0]);
        }
        Ok(self.push(Op::Stack { parts: parts.to_vec() }, Value::Vec(Vector::new(data))))
    }

    /// Single coordinate of a vector as a dimension-1 node.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let y = {
            let xv = self.vec(x, "pick")?;
            if index >= xv.dim() {
                return Err(Error::Argument(format!(
                    "pick: index {index} out of bounds for dimension {}",
                    xv.dim()
                )));
            }
            xv[index]
        };
        Ok(self.push(Op::Pick { x, index }, Value::Vec(Vector::new(vec![y]))))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let y = softmax(self.vec(x, "softmax")?)?;
        Ok(self.push(Op::Softmax { x }, Value::Vec(y)))
    }

    /// Reverse sweep from `loss`, which must be a dimension-1 node.
    /// Returns adjoints for every trainable leaf; leaves a graph usable for
    /// further forward construction.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.vec(loss, "backward")?;
        if lv.dim() != 1 {
            return Err(Error::dim("backward loss", lv.dim(), 1));
        }
        let mut adj: Vec<Value> = self.values.iter().map(Value::zeros_like).collect();
        adj[loss.0].data_mut()[0] = 1.0;

        for id in (0..=loss.0).rev() {
            if adj[id].data().iter().all(|&v| v == 0.0) {
                continue;
            }
            let g = adj[id].clone();
            let g = g.data();
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatVec { m, x } => {
                    let xv = self.values[x.0].data().to_vec();
                    let (rows, cols) = match &self.values[m.0] {
                        Value::Mat(mm) => mm.shape(),
                        Value::Vec(_) => unreachable!("matvec input checked at construction"),
                    };
                    {
                        let dm = adj[m.0].data_mut();
                        for i in 0..rows {
                            let gi = g[i];
                            if gi != 0.0 {
                                for j in 0..cols {
                                    dm[i * cols + j] += gi * xv[j];
                                }
                            }
                        }
                    }
                    let mval = match &self.values[m.0] {
                        Value::Mat(mm) => mm,
                        Value::Vec(_) => unreachable!(),
                    };
                    let mut dx = vec![0.0; cols];
                    for i in 0..rows {
                        let gi = g[i];
                        if gi != 0.0 {
                            let row = mval.row(i);
                            for j in 0..cols {
                                dx[j] += gi * row[j];
                            }
                        }
                    }
                    axpy(adj[x.0].data_mut(), 1.0, &dx);
                }
                Op::EmbedRow { m, row } => {
                    let cols = g.len();
                    let dm = adj[m.0].data_mut();
                    axpy(&mut dm[row * cols..(row + 1) * cols], 1.0, g);
                }
                Op::Add { a, b } => {
                    axpy(adj[a.0].data_mut(), 1.0, g);
                    axpy(adj[b.0].data_mut(), 1.0, g);
                }
                Op::Sub { a, b } => {
                    axpy(adj[a.0].data_mut(), 1.0, g);
                    axpy(adj[b.0].data_mut(), -1.0, g);
                }
                Op::Scale { x, c } => axpy(adj[x.0].data_mut(), *c, g),
                Op::AddConst { x } => axpy(adj[x.0].data_mut(), 1.0, g),
                Op::Hadamard { a, b } => {
                    let av = self.values[a.0].data().to_vec();
                    let bv = self.values[b.0].data().to_vec();
                    mul_axpy(adj[a.0].data_mut(), g, &bv);
                    mul_axpy(adj[b.0].data_mut(), g, &av);
                }
                Op::MulScalar { s, x } => {
                    let s0 = self.values[s.0].data()[0];
                    let xv = self.values[x.0].data();
                    adj[s.0].data_mut()[0] += dot_slices(g, xv);
                    axpy(adj[x.0].data_mut(), s0, g);
                }
                Op::Tanh { x } => {
                    let y = self.values[id].data();
                    let dx = adj[x.0].data_mut();
                    for i in 0..g.len() {
                        dx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Sigmoid { x } => {
                    let y = self.values[id].data();
                    let dx = adj[x.0].data_mut();
                    for i in 0..g.len() {
                        dx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Relu { x } => {
                    let xv = self.values[x.0].data();
                    let dx = adj[x.0].data_mut();
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            dx[i] += g[i];
                        }
                    }
                }
                Op::LnClamped { x, floor } => {
                    let xv = self.values[x.0].data();
                    let dx = adj[x.0].data_mut();
                    for i in 0..g.len() {
                        if xv[i] >= *floor {
                            dx[i] += g[i] / xv[i];
                        }
                    }
                }
                Op::Sqrt { x } => {
                    let y = self.values[id].data();
                    let dx = adj[x.0].data_mut();
                    for i in 0..g.len() {
                        dx[i] += g[i] / (2.0 * y[i]);
                    }
                }
                Op::Recip { x } => {
                    let y = self.values[id].data();
                    let dx = adj[x.0].data_mut();
                    for i in 0..g.len() {
                        dx[i] -= g[i] * y[i] * y[i];
                    }
                }
                Op::Dot { a, b } => {
                    let g0 = g[0];
                    let av = self.values[a.0].data().to_vec();
                    let bv = self.values[b.0].data().to_vec();
                    axpy(adj[a.0].data_mut(), g0, &bv);
                    axpy(adj[b.0].data_mut(), g0, &av);
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let d = self.values[p.0].data().len();
                        axpy(adj[p.0].data_mut(), 1.0, &g[off..off + d]);
                        off += d;
                    }
                }
                Op::Mean { parts } => {
                    let c = 1.0 / parts.len() as f64;
                    for &p in parts {
                        axpy(adj[p.0].data_mut(), c, g);
                    }
                }
                Op::Sum { parts } => {
                    for &p in parts {
                        axpy(adj[p.0].data_mut(), 1.0, g);
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let w = self.values[weights.0].data().to_vec();
                    for (i, &it) in items.iter().enumerate() {
                        let xv = self.values[it.0].data();
                        adj[weights.0].data_mut()[i] += dot_slices(g, xv);
                        axpy(adj[it.0].data_mut(), w[i], g);
                    }
                }
                Op::Stack { parts } => {
                    for (i, &p) in parts.iter().enumerate() {
                        adj[p.0].data_mut()[0] += g[i];
                    }
                }
                Op::Pick { x, index } => {
                    adj[x.0].data_mut()[*index] += g[0];
                }
                Op::Softmax { x } => {
                    let y = self.values[id].data();
                    let s = dot_slices(g, y);
                    let dx = adj[x.0].data_mut();
                    for i in 0..g.len() {
                        dx[i] += y[i] * (g[i] - s);
                    }
                }
            }
        }

        let by_node = adj
            .into_iter()
            .enumerate()
            .map(|(i, v)| if self.trainable[i] { Some(v) } else { None })
            .collect();
        Ok(Gradients { by_node })
    }
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// `dst[i] += g[i] * m[i]`.
fn mul_axpy(dst: &mut [f64], g: &[f64], m: &[f64]) {
    for i in 0..dst.len() {
        dst[i] += g[i] * m[i];
    }
}

fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
