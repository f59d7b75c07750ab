use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Gradient contributions of one record, one slot per input.
pub(crate) type Contribs = Vec<Option<Vec<Scalar>>>;

pub(crate) type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Contribs>;

/// What a backward rule sees when it is replayed.
pub(crate) struct BackwardCtx<'a> {
    graph: &'a Graph,
    inputs: &'a [usize],
    pub grad: &'a [Scalar],
    pub needs: Vec<bool>,
}

impl BackwardCtx<'_> {
    pub fn input(&self, k: usize) -> &Tensor {
        &self.graph.nodes[self.inputs[k]].value
    }

    pub fn needs(&self, k: usize) -> bool {
        self.needs[k]
    }
}

struct Node {
    op: &'static str,
    value: Tensor,
    inputs: Vec<usize>,
    requires_grad: bool,
    rule: Option<BackwardFn>,
}

/// Define-by-run operation record.
///
/// Nodes are appended in execution order, so every record's inputs precede
/// it and the reversed list is a valid reverse topological order.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
    check_finite: bool,
    first_nonfinite: Option<&'static str>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            check_finite: cfg!(debug_assertions),
            first_nonfinite: None,
        }
    }

    /// Enable or disable the per-op NaN/Inf scan (on by default in debug builds).
    pub fn set_finite_checks(&mut self, on: bool) {
        self.check_finite = on;
    }

    /// Name of the first op whose output contained NaN or Inf, if checks are on.
    pub fn first_nonfinite(&self) -> Option<&'static str> {
        self.first_nonfinite
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// A leaf whose gradient is populated by [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.record_finite("leaf", &value);
        self.nodes.push(Node {
            op: "leaf",
            value,
            inputs: Vec::new(),
            requires_grad,
            rule: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        inputs: &[Var],
        rule: BackwardFn,
    ) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.record_finite(op, &value);
        self.nodes.push(Node {
            op,
            value,
            inputs: inputs.iter().map(|v| v.0).collect(),
            requires_grad,
            rule: requires_grad.then_some(rule),
        });
        Var(self.nodes.len() - 1)
    }

    fn record_finite(&mut self, op: &'static str, value: &Tensor) {
        if self.check_finite && self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some(op);
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op
    }

    /// Gradient of the last backward pass with respect to a leaf variable.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Clear gradients so that `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(
                "backward called twice without zero_grad".into(),
            ));
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        if !loss_node.requires_grad {
            return Err(Error::Graph(
                "loss is detached: no variable contributes to it".into(),
            ));
        }

        let mut pending: Vec<Option<Vec<Scalar>>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(vec![1.0]);
        let mut leaf_grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];

        for i in (0..=loss.0).rev() {
            let Some(grad) = pending[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.rule {
                None => {
                    if node.requires_grad {
                        leaf_grads[i] =
                            Some(Tensor::from_parts(node.value.shape().to_vec(), grad));
                    }
                }
                Some(rule) => {
                    let ctx = BackwardCtx {
                        graph: self,
                        inputs: &node.inputs,
                        grad: &grad,
                        needs: node
                            .inputs
                            .iter()
                            .map(|&j| self.nodes[j].requires_grad)
                            .collect(),
                    };
                    let contribs = rule(&ctx);
                    debug_assert_eq!(contribs.len(), node.inputs.len(), "{}", node.op);
                    for (&j, contrib) in node.inputs.iter().zip(contribs) {
                        let Some(c) = contrib else { continue };
                        if !self.nodes[j].requires_grad {
                            continue;
                        }
                        debug_assert_eq!(c.len(), self.nodes[j].value.numel(), "{}", node.op);
                        match &mut pending[j] {
                            Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                            slot @ None => *slot = Some(c),
                        }
                    }
                }
            }
        }
        self.grads = leaf_grads;
        self.backward_done = true;
        Ok(())
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: "add",
                axis: "numel",
                expected: ta.numel(),
                found: tb.numel(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(
            "add",
            out,
            &[a, b],
            Box::new(|ctx| {
                vec![
                    ctx.needs(0).then(|| ctx.grad.to_vec()),
                    ctx.needs(1).then(|| ctx.grad.to_vec()),
                ]
            }),
        ))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: "mul",
                axis: "numel",
                expected: ta.numel(),
                found: tb.numel(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(
            "mul",
            out,
            &[a, b],
            Box::new(|ctx| {
                let (x, y) = (ctx.input(0).data(), ctx.input(1).data());
                vec![
                    ctx.needs(0)
                        .then(|| ctx.grad.iter().zip(y).map(|(g, v)| g * v).collect()),
                    ctx.needs(1)
                        .then(|| ctx.grad.iter().zip(x).map(|(g, v)| g * v).collect()),
                ]
            }),
        ))
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, a: Var, factor: Scalar) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * factor).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(
            "scale",
            out,
            &[a],
            Box::new(move |ctx| vec![Some(ctx.grad.iter().map(|g| g * factor).collect())]),
        )
    }

    /// Sum of all elements, accumulated in index order.
    pub fn sum(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let total: Scalar = ta.data().iter().sum();
        let n = ta.numel();
        self.push(
            "sum",
            Tensor::scalar(total),
            &[a],
            Box::new(move |ctx| vec![Some(vec![ctx.grad[0]; n])]),
        )
    }
}
