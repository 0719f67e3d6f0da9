//! Reverse-mode differentiation on an explicit tape.
//!
//! A [`Graph`] records every primitive applied to its nodes in issue order,
//! which is already a topological order, so the backward pass is a single
//! reverse sweep that visits each node exactly once. The primitive set is
//! deliberately small and fixed: matmul, elementwise arithmetic, a handful
//! of unary maps, full reductions, concatenation/slicing, and a masking
//! multiply with a straight-through backward. Every network in this project
//! decomposes into these.
//!
//! Broadcasting is restricted to two documented cases: a one-element tensor
//! against anything, and a length-`c` vector against the rows of an `r x c`
//! matrix. Anything else is a shape error.

use crate::error::{CoreError, Result};
use crate::tensor::{gemm, Tensor};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    /// Forward multiplies by the thresholded mask `1[r > 0.5]`; backward
    /// routes the mask gradient through the relaxed values (straight-through).
    MaskMul,
    Neg,
    Sin,
    Exp,
    Log,
    Sqrt,
    Sigmoid,
    LeakyRelu(f64),
    Sum,
    Mean,
    L1Norm,
    ConcatCols,
    Row(usize),
    SliceCols(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::MaskMul => "mask_mul",
            Op::Neg => "neg",
            Op::Sin => "sin",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Sigmoid => "sigmoid",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::L1Norm => "l1_norm",
            Op::ConcatCols => "concat_cols",
            Op::Row(_) => "row",
            Op::SliceCols(_, _) => "slice_cols",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    needs_grad: bool,
}

/// Tape plus values: records primitives as they are applied.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.by_node.get_mut(id.0).and_then(|g| g.take())
    }
}

/// How the second operand of a binary op lines up with the first.
#[derive(Copy, Clone, Debug, PartialEq)]
enum Align {
    Same,
    /// rhs is a one-element tensor
    ScalarRhs,
    /// lhs is a one-element tensor
    ScalarLhs,
    /// lhs is `r x c`, rhs is a length-`c` vector applied to every row
    RowRhs,
}

fn classify(a: &Tensor, b: &Tensor, op: &'static str) -> Result<Align> {
    if a.shape() == b.shape() {
        return Ok(Align::Same);
    }
    // row broadcast wins over the scalar rules so length-1 rows still reduce
    // back to their own shape
    if a.rank() == 2 && b.rank() == 1 && b.len() == a.shape()[1] {
        return Ok(Align::RowRhs);
    }
    if b.is_scalar() {
        return Ok(Align::ScalarRhs);
    }
    if a.is_scalar() {
        return Ok(Align::ScalarLhs);
    }
    Err(CoreError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
}

fn bin_forward(a: &Tensor, b: &Tensor, align: Align, f: impl Fn(f64, f64) -> f64) -> Tensor {
    match align {
        Align::Same => Tensor::from_fn(a.shape(), |i| f(a.data()[i], b.data()[i])),
        Align::ScalarRhs => {
            let s = b.item();
            a.map(|x| f(x, s))
        }
        Align::ScalarLhs => {
            let s = a.item();
            b.map(|x| f(s, x))
        }
        Align::RowRhs => {
            let c = a.shape()[1];
            Tensor::from_fn(a.shape(), |i| f(a.data()[i], b.data()[i % c]))
        }
    }
}

/// Reduce a gradient of the broadcast output back to the operand's shape.
fn reduce_to(full: Tensor, operand: &Tensor, align: Align, is_rhs: bool) -> Tensor {
    match (align, is_rhs) {
        (Align::Same, _) => full,
        (Align::ScalarRhs, true) | (Align::ScalarLhs, false) => {
            let mut t = Tensor::zeros(operand.shape());
            t.data_mut()[0] = full.sum();
            t
        }
        (Align::ScalarRhs, false) | (Align::ScalarLhs, true) => full,
        (Align::RowRhs, true) => full.col_sum(),
        (Align::RowRhs, false) => full,
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Leaf that accumulates no gradient (data, noise draws, fixed masks).
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push_unchecked(Op::Constant, vec![], t, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    /// Leaf that receives a gradient in [`Graph::backward`].
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push_unchecked(Op::Param, vec![], t, true)
    }

    fn push_unchecked(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor, grad: bool) -> NodeId {
        self.nodes.push(Node { op, inputs, value, needs_grad: grad });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(CoreError::NonFinite { node: self.nodes.len(), op: op.name().to_string() });
        }
        let grad = inputs.iter().any(|id| self.nodes[id.0].needs_grad);
        Ok(self.push_unchecked(op, inputs, value, grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul, vec![a, b], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let align = classify(self.value(a), self.value(b), "add")?;
        let value = bin_forward(self.value(a), self.value(b), align, |x, y| x + y);
        self.push(Op::Add, vec![a, b], value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let align = classify(self.value(a), self.value(b), "sub")?;
        let value = bin_forward(self.value(a), self.value(b), align, |x, y| x - y);
        self.push(Op::Sub, vec![a, b], value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let align = classify(self.value(a), self.value(b), "mul")?;
        let value = bin_forward(self.value(a), self.value(b), align, |x, y| x * y);
        self.push(Op::Mul, vec![a, b], value)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let align = classify(self.value(a), self.value(b), "div")?;
        let value = bin_forward(self.value(a), self.value(b), align, |x, y| x / y);
        self.push(Op::Div, vec![a, b], value)
    }

    /// Multiply `x` by the hard-thresholded mask `1[relaxed > 0.5]`.
    ///
    /// The forward value is exactly binary-masked; the backward pass treats
    /// the mask as if it were the relaxed values (straight-through), so mask
    /// logits keep receiving gradient.
    pub fn mask_mul(&mut self, x: NodeId, relaxed: NodeId) -> Result<NodeId> {
        let align = classify(self.value(x), self.value(relaxed), "mask_mul")?;
        if align == Align::ScalarLhs || align == Align::ScalarRhs {
            return Err(CoreError::shape(
                "mask_mul",
                format!("{:?} vs {:?}", self.value(x).shape(), self.value(relaxed).shape()),
            ));
        }
        let value = bin_forward(self.value(x), self.value(relaxed), align, |x, r| {
            x * if r > 0.5 { 1.0 } else { 0.0 }
        });
        self.push(Op::MaskMul, vec![x, relaxed], value)
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|x| -x);
        self.push(Op::Neg, vec![a], value)
    }

    pub fn sin(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::sin);
        self.push(Op::Sin, vec![a], value)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::exp);
        self.push(Op::Exp, vec![a], value)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::ln);
        self.push(Op::Log, vec![a], value)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt, vec![a], value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid, vec![a], value)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(slope), vec![a], value)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.leaky_relu(a, 0.0)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum, vec![a], value)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len() as f64;
        let value = Tensor::scalar(self.value(a).sum() / n);
        self.push(Op::Mean, vec![a], value)
    }

    pub fn l1_norm(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::scalar(self.value(a).data().iter().map(|v| v.abs()).sum());
        self.push(Op::L1Norm, vec![a], value)
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(CoreError::shape("concat_cols", "no inputs".to_string()));
        }
        let rows = self.value(parts[0]).shape().first().copied().unwrap_or(0);
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != rows {
                return Err(CoreError::shape("concat_cols", format!("part shape {:?}", s)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).shape()[1]).sum();
        let mut out = Tensor::zeros(&[rows, total]);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.shape()[1];
            for i in 0..rows {
                for j in 0..c {
                    out.set(i, offset + j, t.at(i, j));
                }
            }
            offset += c;
        }
        self.push(Op::ConcatCols, parts.to_vec(), out)
    }

    /// Extract row `i` of a matrix as a vector.
    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let t = self.value(a);
        if t.rank() != 2 || i >= t.shape()[0] {
            return Err(CoreError::shape("row", format!("row {i} of {:?}", t.shape())));
        }
        let c = t.shape()[1];
        let value = Tensor::vector(t.data()[i * c..(i + 1) * c].to_vec());
        self.push(Op::Row(i), vec![a], value)
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let t = self.value(a);
        if t.rank() != 2 || start >= end || end > t.shape()[1] {
            return Err(CoreError::shape(
                "slice_cols",
                format!("[{start},{end}) of {:?}", t.shape()),
            ));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = Tensor::zeros(&[r, end - start]);
        for i in 0..r {
            for j in start..end {
                out.set(i, j - start, t.data()[i * c + j]);
            }
        }
        self.push(Op::SliceCols(start, end), vec![a], out)
    }

    /// Reverse sweep from a scalar seed node. Returns gradients for every
    /// node that requires them (params and everything on a path to one).
    pub fn backward(&self, seed: NodeId) -> Result<Gradients> {
        let seed_val = &self.nodes[seed.0].value;
        if seed_val.len() != 1 {
            return Err(CoreError::Contract(format!(
                "backward seed must be scalar, got shape {:?}",
                seed_val.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[seed.0] = Some(Tensor::from_fn(seed_val.shape(), |_| 1.0));
        for idx in (0..=seed.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate_inputs(idx, &g, &mut grads)?;
            // Leaves keep their gradient for the caller.
            if matches!(node.op, Op::Param | Op::Constant) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { by_node: grads })
    }

    fn accumulate_inputs(
        &self,
        idx: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let node = &self.nodes[idx];
        let add_grad = |grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor| {
            if !self.nodes[id.0].needs_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(acc) => {
                    debug_assert_eq!(acc.shape(), delta.shape());
                    for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                        *a += d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };
        match node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = self.value(a);
                let bv = self.value(b);
                if bv.rank() == 1 {
                    // C (m,) = A (m,k) . b (k,)
                    if self.nodes[a.0].needs_grad {
                        let m = av.shape()[0];
                        let k = av.shape()[1];
                        let da = Tensor::from_fn(av.shape(), |i| {
                            g.data()[i / k] * bv.data()[i % k]
                        });
                        debug_assert_eq!(da.shape(), [m, k]);
                        add_grad(grads, a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gv = Tensor::vector(g.data().to_vec());
                        let db = gemm(av, true, &gv, false)?;
                        add_grad(grads, b, db);
                    }
                } else {
                    if self.nodes[a.0].needs_grad {
                        add_grad(grads, a, gemm(g, false, bv, true)?);
                    }
                    if self.nodes[b.0].needs_grad {
                        add_grad(grads, b, gemm(av, true, g, false)?);
                    }
                }
            }
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::MaskMul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = self.value(a);
                let bv = self.value(b);
                let align = classify(av, bv, node.op.name())?;
                let (da_full, db_full): (Tensor, Tensor) = match node.op {
                    Op::Add => (g.clone(), g.clone()),
                    Op::Sub => (g.clone(), g.map(|x| -x)),
                    Op::Mul => (
                        bin_forward(g, bv, rhs_align(align), |gi, bi| gi * bi),
                        bin_forward(g, av, lhs_align(align), |gi, ai| gi * ai),
                    ),
                    Op::Div => (
                        bin_forward(g, bv, rhs_align(align), |gi, bi| gi / bi),
                        {
                            let out = &node.value;
                            let tmp = g.zip_map(out, |gi, oi| gi * oi)?;
                            bin_forward(&tmp, bv, rhs_align(align), |ti, bi| -ti / bi)
                        },
                    ),
                    Op::MaskMul => (
                        bin_forward(g, bv, rhs_align(align), |gi, ri| {
                            gi * if ri > 0.5 { 1.0 } else { 0.0 }
                        }),
                        bin_forward(g, av, lhs_align(align), |gi, ai| gi * ai),
                    ),
                    _ => unreachable!(),
                };
                if self.nodes[a.0].needs_grad {
                    add_grad(grads, a, reduce_to(da_full, av, align, false));
                }
                if self.nodes[b.0].needs_grad {
                    add_grad(grads, b, reduce_to(db_full, bv, align, true));
                }
            }
            Op::Neg => add_grad(grads, node.inputs[0], g.map(|x| -x)),
            Op::Sin => {
                let xv = self.value(node.inputs[0]);
                let d = g.zip_map(&xv.map(f64::cos), |gi, c| gi * c)?;
                add_grad(grads, node.inputs[0], d);
            }
            Op::Exp => {
                let d = g.zip_map(&node.value, |gi, v| gi * v)?;
                add_grad(grads, node.inputs[0], d);
            }
            Op::Log => {
                let xv = self.value(node.inputs[0]);
                let d = g.zip_map(xv, |gi, x| gi / x)?;
                add_grad(grads, node.inputs[0], d);
            }
            Op::Sqrt => {
                let d = g.zip_map(&node.value, |gi, v| 0.5 * gi / v)?;
                add_grad(grads, node.inputs[0], d);
            }
            Op::Sigmoid => {
                let d = g.zip_map(&node.value, |gi, s| gi * s * (1.0 - s))?;
                add_grad(grads, node.inputs[0], d);
            }
            Op::LeakyRelu(slope) => {
                let xv = self.value(node.inputs[0]);
                let d = g.zip_map(xv, |gi, x| if x > 0.0 { gi } else { slope * gi })?;
                add_grad(grads, node.inputs[0], d);
            }
            Op::Sum => {
                let xv = self.value(node.inputs[0]);
                let gs = g.item();
                add_grad(grads, node.inputs[0], Tensor::full(xv.shape(), gs));
            }
            Op::Mean => {
                let xv = self.value(node.inputs[0]);
                let gs = g.item() / xv.len() as f64;
                add_grad(grads, node.inputs[0], Tensor::full(xv.shape(), gs));
            }
            Op::L1Norm => {
                let xv = self.value(node.inputs[0]);
                let gs = g.item();
                add_grad(grads, node.inputs[0], xv.map(|x| gs * sign(x)));
            }
            Op::ConcatCols => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in &node.inputs {
                    let c = self.value(p).shape()[1];
                    if self.nodes[p.0].needs_grad {
                        let mut dp = Tensor::zeros(&[rows, c]);
                        for i in 0..rows {
                            for j in 0..c {
                                dp.set(i, j, g.data()[i * total + offset + j]);
                            }
                        }
                        add_grad(grads, p, dp);
                    }
                    offset += c;
                }
            }
            Op::Row(i) => {
                let xv = self.value(node.inputs[0]);
                let c = xv.shape()[1];
                let mut dx = Tensor::zeros(xv.shape());
                for j in 0..c {
                    dx.set(i, j, g.data()[j]);
                }
                add_grad(grads, node.inputs[0], dx);
            }
            Op::SliceCols(start, end) => {
                let xv = self.value(node.inputs[0]);
                let (r, c) = (xv.shape()[0], xv.shape()[1]);
                let mut dx = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    for j in start..end {
                        dx.set(i, j, g.data()[i * (end - start) + (j - start)]);
                    }
                }
                add_grad(grads, node.inputs[0], dx);
            }
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Alignment of `g` (shaped like the op output) against the rhs operand.
fn rhs_align(align: Align) -> Align {
    match align {
        Align::Same => Align::Same,
        Align::ScalarRhs => Align::ScalarRhs,
        // output is shaped like rhs when lhs was the scalar
        Align::ScalarLhs => Align::Same,
        Align::RowRhs => Align::RowRhs,
    }
}

/// Alignment of `g` against the lhs operand.
fn lhs_align(align: Align) -> Align {
    match align {
        Align::Same => Align::Same,
        Align::ScalarRhs => Align::Same,
        Align::ScalarLhs => Align::ScalarLhs,
        Align::RowRhs => Align::Same,
    }
}
