//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records one forward pass; [`Graph::backward`] walks the
//! recorded operations in reverse and returns the gradients of a scalar
//! loss with respect to every leaf that asked for them. Trainable
//! parameters live outside the graph in a [`ParamStore`]; each forward
//! pass pulls them in as leaves via [`Graph::param`], which lets many
//! graphs (one per sample) read the same parameters without sharing
//! mutable state. Per-sample gradients are therefore plain values that
//! can be computed on worker threads and reduced in a fixed order.

mod ops;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a trainable tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Owns every trainable tensor of a model, in registration order.
#[derive(Clone, Debug)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    /// Total number of trainable scalars.
    pub fn total_elements(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Snapshot of all parameter tensors (used by early stopping).
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.values.len(), "snapshot/store mismatch");
        self.values.clone_from_slice(snapshot);
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Node handle within one [`Graph`].
#[derive(Clone, Copy, Debug)]
pub struct Var {
    pub(crate) id: usize,
}

type BackwardFn = Box<dyn Fn(&Tensor, &[Tensor], &mut GradSink)>;

struct OpRecord {
    out: usize,
    backward: BackwardFn,
}

/// Accumulates gradient contributions by node id during the reverse sweep.
pub struct GradSink {
    grads: Vec<Option<Tensor>>,
    requires: Vec<bool>,
}

impl GradSink {
    /// Add a contribution to a node's gradient. No-op for nodes that do
    /// not require gradients.
    fn add(&mut self, node: usize, contrib: Tensor) {
        if !self.requires[node] {
            return;
        }
        match &mut self.grads[node] {
            Some(g) => {
                g.add_assign_scaled(&contrib, 1.0).expect("gradient shape mismatch");
            }
            None => self.grads[node] = Some(contrib),
        }
    }

    /// Mutable access to a node's gradient buffer (created as zeros on
    /// first use), or `None` when the node does not need gradients.
    fn entry(&mut self, node: usize, shape: &[usize]) -> Option<&mut Tensor> {
        if !self.requires[node] {
            return None;
        }
        Some(self.grads[node].get_or_insert_with(|| Tensor::zeros(shape)))
    }
}

/// Gradients of one scalar loss, queryable by leaf [`Var`] or [`ParamId`].
pub struct Gradients {
    by_node: HashMap<usize, Tensor>,
    param_of_node: HashMap<usize, usize>,
}

impl Gradients {
    /// Gradient with respect to a leaf variable, if it required one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(&v.id)
    }

    pub fn by_param(&self, id: ParamId) -> Option<&Tensor> {
        self.param_of_node
            .iter()
            .find(|(_, &p)| p == id.0)
            .and_then(|(&node, _)| self.by_node.get(&node))
    }

    /// Fold this graph's parameter gradients into a dense accumulator.
    pub fn accumulate_into(&self, acc: &mut ParamGrads) -> Result<()> {
        for (&node, &p) in &self.param_of_node {
            if let Some(g) = self.by_node.get(&node) {
                acc.grads[p].add_assign_scaled(g, 1.0)?;
            }
        }
        Ok(())
    }
}

/// Dense per-parameter gradient accumulator aligned with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ParamGrads {
    grads: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros(store: &ParamStore) -> Self {
        ParamGrads {
            grads: store.values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &ParamGrads) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::shape("ParamGrads::add_assign", "length mismatch"));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign_scaled(b, 1.0)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
}

/// Records one forward pass for reverse-mode differentiation.
pub struct Graph {
    values: Vec<Tensor>,
    requires: Vec<bool>,
    ops: Vec<OpRecord>,
    node_of_param: HashMap<usize, usize>,
    param_of_node: HashMap<usize, usize>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            requires: Vec::new(),
            ops: Vec::new(),
            node_of_param: HashMap::new(),
            param_of_node: HashMap::new(),
            consumed: false,
        }
    }

    fn push(&mut self, value: Tensor, requires: bool) -> Var {
        self.values.push(value);
        self.requires.push(requires);
        Var {
            id: self.values.len() - 1,
        }
    }

    fn record(&mut self, out: Var, backward: BackwardFn) {
        if self.requires[out.id] {
            self.ops.push(OpRecord {
                out: out.id,
                backward,
            });
        }
    }

    /// A leaf that does not participate in differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false)
    }

    /// A leaf whose gradient will be available from [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, true)
    }

    /// Pull a stored parameter into the graph. Repeated calls for the
    /// same parameter return the same node, so fan-out accumulates.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&node) = self.node_of_param.get(&id.0) {
            return Var { id: node };
        }
        let v = self.push(store.get(id).clone(), true);
        self.node_of_param.insert(id.0, v.id);
        self.param_of_node.insert(v.id, id.0);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.id]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.id].shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.id]
    }

    fn check_live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::Graph(
                "graph already consumed by backward; build a fresh one".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// Reverse sweep from a scalar loss. Consumes the recorded tape:
    /// calling `backward` twice on the same graph is an error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check_live()?;
        if !self.values[loss.id].is_scalar() {
            return Err(Error::Graph(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.values[loss.id].shape()
            )));
        }
        self.consumed = true;
        let mut sink = GradSink {
            grads: vec![None; self.values.len()],
            requires: self.requires.clone(),
        };
        if self.requires[loss.id] {
            sink.grads[loss.id] = Some(Tensor::scalar(1.0));
        }
        for op in self.ops.iter().rev() {
            // Every consumer of `op.out` was recorded later, so by the
            // time we get here its gradient is complete.
            if let Some(gout) = sink.grads[op.out].take() {
                (op.backward)(&gout, &self.values, &mut sink);
            }
        }
        self.ops.clear();
        let mut by_node = HashMap::new();
        for (id, g) in sink.grads.into_iter().enumerate() {
            if let Some(g) = g {
                by_node.insert(id, g);
            }
        }
        Ok(Gradients {
            by_node,
            param_of_node: self.param_of_node.clone(),
        })
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}
