//! Define-by-run reverse-mode differentiation.
//!
//! Every operation applied through a [`Graph`] appends a node to its tape. Nodes
//! only ever reference earlier nodes, so the tape order is a topological order
//! and [`Graph::backward`] is a single reverse sweep. The sweep consumes the
//! tape: a second call fails with [`Error::TapeConsumed`].
//!
//! Layer kernels plug into the tape through the [`Backward`] trait.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Inputs available to a node's backward rule.
pub struct BackwardCtx<'a> {
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    pub grad_output: &'a [f64],
    /// Whether each input needs a gradient; rules may skip the others.
    pub needs_grad: Vec<bool>,
}

/// Vector-Jacobian product of one recorded operation.
pub trait Backward: Send {
    /// One entry per input, `None` where no gradient is needed.
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>>;
}

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    backward: Option<Box<dyn Backward>>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a loss with respect to every leaf that requires one.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_leaf: BTreeMap<Var, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.by_leaf.get(&var).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &[f64])> {
        self.by_leaf.iter().map(|(v, g)| (*v, g.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// Right-hand side of an elementwise operation.
#[derive(Debug, Clone, Copy)]
pub enum Operand {
    Var(Var),
    Scalar(f64),
}

impl From<Var> for Operand {
    fn from(v: Var) -> Self {
        Operand::Var(v)
    }
}

impl From<f64> for Operand {
    fn from(x: f64) -> Self {
        Operand::Scalar(x)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an input; it requires a gradient iff the tensor says so.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let requires_grad = value.requires_grad();
        self.push(Node { value, inputs: Vec::new(), backward: None, requires_grad })
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    pub fn parameter(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(true))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
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

    /// Appends the result of an operation. The backward rule is kept only when
    /// some input requires a gradient.
    pub fn record(
        &mut self,
        inputs: &[Var],
        value: Tensor,
        backward: impl Backward + 'static,
    ) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let backward: Option<Box<dyn Backward>> =
            if requires_grad { Some(Box::new(backward)) } else { None };
        self.push(Node { value, inputs: inputs.to_vec(), backward, requires_grad })
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Runs the reverse sweep from a scalar loss and consumes the tape.
    ///
    /// Every leaf that requires a gradient gets an entry; leaves the loss does
    /// not depend on get zeros.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        if !loss_node.requires_grad {
            return Err(Error::DetachedLoss);
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(grad) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let Some(rule) = &node.backward else {
                if node.inputs.is_empty() && node.requires_grad {
                    out.by_leaf.insert(Var(i), grad);
                }
                continue;
            };
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|v| &self.nodes[v.0].value).collect(),
                output: &node.value,
                grad_output: &grad,
                needs_grad: node.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect(),
            };
            let input_grads = rule.backward(&ctx)?;
            for ((input, needed), g) in node.inputs.iter().zip(&ctx.needs_grad).zip(input_grads) {
                let (true, Some(g)) = (*needed, g) else { continue };
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
            }
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.inputs.is_empty() && node.requires_grad {
                out.by_leaf.entry(Var(i)).or_insert_with(|| vec![0.0; node.value.numel()]);
            }
        }
        Ok(out)
    }

    /// `a (op) b` for equal shapes, or with `b` a scalar (operand or one-element tensor).
    pub fn elementwise(&mut self, a: Var, b: impl Into<Operand>, kind: ElemKind) -> Result<Var> {
        let av = self.value(a);
        match b.into() {
            Operand::Scalar(s) => {
                if kind == ElemKind::Div && s == 0.0 {
                    return Err(Error::DivisionByZero(0));
                }
                let out = av.map(|x| apply(kind, x, s));
                Ok(self.record(&[a], out, ScalarElemFn { kind, rhs: s }))
            }
            Operand::Var(b) => {
                let bv = self.value(b);
                let broadcast = bv.numel() == 1 && av.shape() != bv.shape();
                if !broadcast && av.shape() != bv.shape() {
                    return Err(Error::shape(format!(
                        "elementwise {:?} on {:?} and {:?}",
                        kind,
                        av.shape(),
                        bv.shape()
                    )));
                }
                if kind == ElemKind::Div {
                    if let Some(i) = bv.data().iter().position(|&x| x == 0.0) {
                        return Err(Error::DivisionByZero(i));
                    }
                }
                let data = if broadcast {
                    let s = bv.data()[0];
                    av.data().iter().map(|&x| apply(kind, x, s)).collect()
                } else {
                    av.data().iter().zip(bv.data()).map(|(&x, &y)| apply(kind, x, y)).collect()
                };
                let out = Tensor::new(av.shape().to_vec(), data)?;
                Ok(self.record(&[a, b], out, ElemFn { kind, broadcast }))
            }
        }
    }

    pub fn add(&mut self, a: Var, b: impl Into<Operand>) -> Result<Var> {
        self.elementwise(a, b, ElemKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: impl Into<Operand>) -> Result<Var> {
        self.elementwise(a, b, ElemKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: impl Into<Operand>) -> Result<Var> {
        self.elementwise(a, b, ElemKind::Mul)
    }

    pub fn div(&mut self, a: Var, b: impl Into<Operand>) -> Result<Var> {
        self.elementwise(a, b, ElemKind::Div)
    }

    /// `[M,K] · [K,N] -> [M,N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (&[m, k], &[k2, n]) = (av.shape(), bv.shape()) else {
            return Err(Error::shape(format!(
                "matmul needs 2-D operands, got {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!("matmul inner dimensions {k} and {k2}")));
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut c, false);
        let out = Tensor::new(vec![m, n], c)?;
        Ok(self.record(&[a, b], out, MatmulFn { m, k, n }))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        Ok(self.record(&[a], Tensor::scalar(total), SumFn))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.record(&[a], out, ReshapeFn))
    }
}

fn apply(kind: ElemKind, x: f64, y: f64) -> f64 {
    match kind {
        ElemKind::Add => x + y,
        ElemKind::Sub => x - y,
        ElemKind::Mul => x * y,
        ElemKind::Div => x / y,
    }
}

struct ScalarElemFn {
    kind: ElemKind,
    rhs: f64,
}

impl Backward for ScalarElemFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let g = ctx.grad_output;
        let ga = match self.kind {
            ElemKind::Add | ElemKind::Sub => g.to_vec(),
            ElemKind::Mul => g.iter().map(|x| x * self.rhs).collect(),
            ElemKind::Div => g.iter().map(|x| x / self.rhs).collect(),
        };
        Ok(vec![Some(ga)])
    }
}

struct ElemFn {
    kind: ElemKind,
    broadcast: bool,
}

impl Backward for ElemFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let g = ctx.grad_output;
        let a = ctx.inputs[0].data();
        let b = ctx.inputs[1].data();
        let bi = |i: usize| if self.broadcast { b[0] } else { b[i] };
        let ga = ctx.needs_grad[0].then(|| match self.kind {
            ElemKind::Add | ElemKind::Sub => g.to_vec(),
            ElemKind::Mul => g.iter().enumerate().map(|(i, x)| x * bi(i)).collect(),
            ElemKind::Div => g.iter().enumerate().map(|(i, x)| x / bi(i)).collect(),
        });
        let gb = ctx.needs_grad[1].then(|| {
            let per_elem: Vec<f64> = match self.kind {
                ElemKind::Add => g.to_vec(),
                ElemKind::Sub => g.iter().map(|x| -x).collect(),
                ElemKind::Mul => g.iter().zip(a).map(|(x, a)| x * a).collect(),
                ElemKind::Div => g
                    .iter()
                    .zip(a)
                    .enumerate()
                    .map(|(i, (x, a))| -x * a / (bi(i) * bi(i)))
                    .collect(),
            };
            if self.broadcast {
                vec![per_elem.iter().sum()]
            } else {
                per_elem
            }
        });
        Ok(vec![ga, gb])
    }
}

struct MatmulFn {
    m: usize,
    k: usize,
    n: usize,
}

impl Backward for MatmulFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let g = ctx.grad_output;
        let ga = ctx.needs_grad[0].then(|| {
            let mut ga = vec![0.0; m * k];
            gemm(m, n, k, g, false, ctx.inputs[1].data(), true, &mut ga, false);
            ga
        });
        let gb = ctx.needs_grad[1].then(|| {
            let mut gb = vec![0.0; k * n];
            gemm(k, m, n, ctx.inputs[0].data(), true, g, false, &mut gb, false);
            gb
        });
        Ok(vec![ga, gb])
    }
}

struct SumFn;

impl Backward for SumFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        Ok(vec![Some(vec![ctx.grad_output[0]; ctx.inputs[0].numel()])])
    }
}

struct ReshapeFn;

impl Backward for ReshapeFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        Ok(vec![Some(ctx.grad_output.to_vec())])
    }
}
