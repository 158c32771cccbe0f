//! Single-use reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so the node list is already
//! topologically sorted and backward is a single reverse sweep.

use std::sync::Arc;

use crate::bank::FilterBank2D;
use crate::error::{Error, Result};

use super::ops;
use super::tensor::{Scalar, Tensor};

/// Index of a node in a [`ValueGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    Conv { x: NodeId, w: NodeId },
    BiasAdd { x: NodeId, b: NodeId },
    Relu(NodeId),
    Analysis { x: NodeId, bank: Arc<FilterBank2D> },
    Synthesis { x: NodeId, bank: Arc<FilterBank2D> },
    Concat(NodeId, NodeId),
    Slice { x: NodeId, start: usize },
    Add(NodeId, NodeId),
}

#[derive(Debug)]
struct Node<T> {
    op: Op,
    value: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Recording,
    Spent,
}

#[derive(Debug)]
pub struct ValueGraph<T> {
    nodes: Vec<Node<T>>,
    output: Option<NodeId>,
    state: State,
}

impl<T: Scalar> Default for ValueGraph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ValueGraph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            output: None,
            state: State::Recording,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Learnable leaf; `slot` is the parameter's index in the network table.
    pub fn param(&mut self, slot: usize, value: Tensor<T>) -> NodeId {
        self.push(Op::Param(slot), value)
    }

    pub fn conv(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let v = ops::conv2d(self.value(x), self.value(w))?;
        Ok(self.push(Op::Conv { x, w }, v))
    }

    pub fn bias_add(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::bias_add(self.value(x), self.value(b))?;
        Ok(self.push(Op::BiasAdd { x, b }, v))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = ops::relu(self.value(x));
        self.push(Op::Relu(x), v)
    }

    pub fn analysis(&mut self, x: NodeId, bank: Arc<FilterBank2D>) -> Result<NodeId> {
        let v = ops::wavelet_analysis(self.value(x), &bank)?;
        Ok(self.push(Op::Analysis { x, bank }, v))
    }

    pub fn synthesis(&mut self, x: NodeId, bank: Arc<FilterBank2D>) -> Result<NodeId> {
        let v = ops::wavelet_synthesis(self.value(x), &bank)?;
        Ok(self.push(Op::Synthesis { x, bank }, v))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::concat(self.value(a), self.value(b))?;
        Ok(self.push(Op::Concat(a, b), v))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, count: usize) -> Result<NodeId> {
        let v = ops::slice_channels(self.value(x), start, count)?;
        Ok(self.push(Op::Slice { x, start }, v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dims() != vb.dims() {
            return Err(Error::Shape(format!(
                "cannot add {:?} and {:?}",
                va.dims(),
                vb.dims()
            )));
        }
        let mut v = va.clone();
        v.add_assign(vb);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    /// Propagates `output_grad` from the recorded output back to every leaf.
    ///
    /// Returns `(slot, gradient)` for each parameter leaf in recording order.
    /// The tape is consumed; a second call is a state error.
    pub fn backward(&mut self, output_grad: &Tensor<T>) -> Result<Vec<(usize, Tensor<T>)>> {
        if self.state == State::Spent {
            return Err(Error::State("graph has already been differentiated".into()));
        }
        let out = self
            .output
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        if self.value(out).dims() != output_grad.dims() {
            return Err(Error::Shape(format!(
                "output gradient {:?} for output {:?}",
                output_grad.dims(),
                self.value(out).dims()
            )));
        }
        self.state = State::Spent;

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(output_grad.clone());
        let mut params = Vec::new();

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Input => {}
                Op::Param(slot) => params.push((slot, g)),
                Op::Conv { x, w } => {
                    let (gx, gw) = ops::conv2d_backward(self.value(x), self.value(w), &g)?;
                    accumulate(&mut grads, x, gx);
                    accumulate(&mut grads, w, gw);
                }
                Op::BiasAdd { x, b } => {
                    let gb = ops::bias_backward(&g)?;
                    accumulate(&mut grads, b, gb);
                    accumulate(&mut grads, x, g);
                }
                Op::Relu(x) => {
                    let gx = ops::relu_backward(self.value(x), &g);
                    accumulate(&mut grads, x, gx);
                }
                Op::Analysis { x, bank } => {
                    accumulate(&mut grads, x, ops::wavelet_synthesis(&g, &bank)?);
                }
                Op::Synthesis { x, bank } => {
                    accumulate(&mut grads, x, ops::wavelet_analysis(&g, &bank)?);
                }
                Op::Concat(a, b) => {
                    let ca = self.value(a).chw()?.0;
                    let cb = self.value(b).chw()?.0;
                    accumulate(&mut grads, a, ops::slice_channels(&g, 0, ca)?);
                    accumulate(&mut grads, b, ops::slice_channels(&g, ca, cb)?);
                }
                Op::Slice { x, start } => {
                    let src = self.value(x);
                    let (c, h, w) = src.chw()?;
                    let count = g.chw()?.0;
                    let mut full = Tensor::zeros(&[c, h, w]);
                    let hw = h * w;
                    full.data_mut()[start * hw..(start + count) * hw].copy_from_slice(g.data());
                    accumulate(&mut grads, x, full);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
            }
        }
        params.reverse();
        Ok(params)
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
