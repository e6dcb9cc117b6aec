use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::{NnError, ParamStore, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// An operation whose forward value is computed by the caller and whose
/// vector-Jacobian product is supplied here.
pub trait CustomOp {
    /// Gradients w.r.t. each input, given the upstream gradient of the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

enum Op {
    Leaf,
    Param(usize),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleCols(NodeId, Vec<f64>),
    Square(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Dropout(NodeId, Tensor),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    Sum(NodeId),
    Custom(Box<dyn CustomOp>, Vec<NodeId>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Reverse-mode tape over dense row-major matrices (rows are batch entries).
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape(format!("{op}: {:?} vs {:?}", a.dim(), b.dim()))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Brings a stored parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId, NnError> {
        let idx = store
            .index_of(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        Ok(self.push(store.value_at(idx).clone(), Op::Param(idx)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(shape_err("matmul", va, vb));
        }
        let v = va.dot(vb);
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, NnError> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.nrows() != 1 || vb.ncols() != vx.ncols() {
            return Err(shape_err("add_bias", vx, vb));
        }
        let v = vx + vb;
        Ok(self.push(v, Op::AddBias(x, bias)))
    }

    fn same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<(), NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err(op, va, vb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a) * self.value(b);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x) * c;
        self.push(v, Op::Scale(x, c))
    }

    /// Multiplies column `j` by `weights[j]`.
    pub fn scale_cols(&mut self, x: NodeId, weights: &[f64]) -> Result<NodeId, NnError> {
        let vx = self.value(x);
        if vx.ncols() != weights.len() {
            return Err(NnError::Shape(format!(
                "scale_cols: {} columns, {} weights",
                vx.ncols(),
                weights.len()
            )));
        }
        let w = ndarray::ArrayView1::from(weights);
        let v = vx * &w;
        Ok(self.push(v, Op::ScaleCols(x, weights.to_vec())))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(|a| a * a);
        self.push(v, Op::Square(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(|a| a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    /// Inverted dropout. Identity (no new node) when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng>(
        &mut self,
        x: NodeId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let (r, c) = self.value(x).dim();
        let mask = Array2::from_shape_fn((r, c), |_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        });
        let v = self.value(x) * &mask;
        Ok(self.push(v, Op::Dropout(x, mask)))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId, NnError> {
        let vx = self.value(x);
        if start > end || end > vx.ncols() {
            return Err(NnError::Shape(format!(
                "slice_cols {start}..{end} of {} columns",
                vx.ncols()
            )));
        }
        let v = vx.slice(s![.., start..end]).to_owned();
        Ok(self.push(v, Op::SliceCols(x, start, end)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        if parts.is_empty() {
            return Err(NnError::Shape("concat_cols of nothing".into()));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| NnError::Shape(format!("concat_cols: {e}")))?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(x))
    }

    pub fn custom(
        &mut self,
        op: Box<dyn CustomOp>,
        inputs: &[NodeId],
        value: Tensor,
    ) -> NodeId {
        self.push(value, Op::Custom(op, inputs.to_vec()))
    }

    /// Backpropagates from a `1 x 1` root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, NnError> {
        if self.value(root).dim() != (1, 1) {
            return Err(NnError::Shape(format!(
                "backward root must be 1x1, got {:?}",
                self.value(root).dim()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param(_) => grads[idx] = Some(g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(x, c) => accumulate(&mut grads, *x, g * *c),
                Op::ScaleCols(x, w) => {
                    let w = ndarray::ArrayView1::from(w.as_slice());
                    accumulate(&mut grads, *x, g * &w);
                }
                Op::Square(x) => {
                    let gx = g * &self.value(*x).mapv(|a| 2.0 * a);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = g * &node.value.mapv(|y| y * (1.0 - y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let gx = g * &node.value.mapv(|y| 1.0 - y * y);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = g * &node.value.mapv(|y| if y > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Dropout(x, mask) => accumulate(&mut grads, *x, g * mask),
                Op::SliceCols(x, start, end) => {
                    let mut gx = Array2::zeros(self.value(*x).dim());
                    gx.slice_mut(s![.., *start..*end]).assign(&g);
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(s![.., offset..offset + w]).to_owned();
                        accumulate(&mut grads, *p, gp);
                        offset += w;
                    }
                }
                Op::Sum(x) => {
                    let gx = Array2::from_elem(self.value(*x).dim(), g[[0, 0]]);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Custom(op, inputs) => {
                    let vals: Vec<&Tensor> = inputs.iter().map(|&i| self.value(i)).collect();
                    let gs = op.backward(&vals, &node.value, &g);
                    for (i, gi) in inputs.iter().zip(gs) {
                        accumulate(&mut grads, *i, gi);
                    }
                }
            }
        }

        let mut params = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, grads[idx].take()) {
                params.push((*p, g));
            }
        }
        Ok(Gradients { params })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
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

/// Parameter gradients from one backward pass.
pub struct Gradients {
    params: Vec<(usize, Tensor)>,
}

impl Gradients {
    /// Dense per-parameter gradients aligned with `store`; unused parameters are `None`.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = vec![None; store.len()];
        for (idx, g) in &self.params {
            match &mut out[*idx] {
                Some(existing) => *existing += g,
                slot => *slot = Some(g.clone()),
            }
        }
        out
    }

    /// Gradient of a named parameter, summed over every use on the tape.
    pub fn get(&self, store: &ParamStore, name: &str) -> Option<Tensor> {
        let idx = store.index_of(name)?;
        let mut acc: Option<Tensor> = None;
        for (i, g) in &self.params {
            if *i == idx {
                match &mut acc {
                    Some(a) => *a += g,
                    None => acc = Some(g.clone()),
                }
            }
        }
        acc
    }
}
