//! Named parameter storage and per-graph binding.

use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::checkpoint::Checkpoint;
use crate::autodiff::{Graph, RunningStats, Scalar, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Learnable,
    /// Batch-norm moving average, updated from observed batch statistics.
    Running,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Insertion-ordered set of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parameters {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry { name, kind, tensor });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].tensor)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count of learnable tensors.
    pub fn learnable_scalars(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Learnable)
            .map(|e| e.tensor.numel())
            .sum()
    }

    pub fn running_stats(&self, prefix: &str) -> Result<RunningStats> {
        let fetch = |suffix: &str| {
            let name = format!("{prefix}.running_{suffix}");
            self.get(&name)
                .map(|t| t.data().to_vec())
                .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
        };
        Ok(RunningStats {
            mean: fetch("mean")?,
            var: fetch("var")?,
        })
    }

    pub fn set_running_stats(&mut self, prefix: &str, stats: &RunningStats) -> Result<()> {
        for (suffix, values) in [("mean", &stats.mean), ("var", &stats.var)] {
            let name = format!("{prefix}.running_{suffix}");
            let t = self
                .get_mut(&name)
                .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))?;
            t.data_mut().copy_from_slice(values);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint) {
        for e in &self.entries {
            ck.push(e.name.clone(), e.tensor.clone());
        }
    }

    /// Overwrite every tensor from a checkpoint; names and shapes must match.
    pub fn load_from(&mut self, ck: &Checkpoint) -> Result<()> {
        for e in &mut self.entries {
            let t = ck
                .get(&e.name)
                .ok_or_else(|| Error::Contract(format!("checkpoint lacks parameter {}", e.name)))?;
            if t.shape() != e.tensor.shape() {
                return Err(Error::Contract(format!(
                    "parameter {} has shape {:?} in checkpoint, expected {:?}",
                    e.name,
                    t.shape(),
                    e.tensor.shape()
                )));
            }
            e.tensor = t.clone();
        }
        Ok(())
    }

    // Initializers used by the model builders.

    pub(crate) fn init_uniform(&mut self, name: String, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound) as Scalar).collect();
        self.insert(name, ParamKind::Learnable, Tensor::from_parts(shape.to_vec(), data));
    }

    pub(crate) fn init_linear(&mut self, prefix: &str, cin: usize, cout: usize, rng: &mut impl Rng) {
        self.init_uniform(format!("{prefix}.weight"), &[cin, cout], cin, cout, rng);
        self.insert(format!("{prefix}.bias"), ParamKind::Learnable, Tensor::zeros(&[cout]));
    }

    pub(crate) fn init_bn(&mut self, prefix: &str, c: usize) {
        self.insert(format!("{prefix}.gamma"), ParamKind::Learnable, Tensor::full(&[c], 1.0));
        self.insert(format!("{prefix}.beta"), ParamKind::Learnable, Tensor::zeros(&[c]));
        self.insert(format!("{prefix}.running_mean"), ParamKind::Running, Tensor::zeros(&[c]));
        self.insert(format!("{prefix}.running_var"), ParamKind::Running, Tensor::full(&[c], 1.0));
    }
}

/// Learnable parameters registered as leaves of one graph.
pub struct Bound<'p> {
    params: &'p Parameters,
    vars: Vec<Option<Var>>,
}

impl<'p> Bound<'p> {
    /// Register every learnable tensor on `g`; as variables when `trainable`.
    pub fn bind(g: &mut Graph, params: &'p Parameters, trainable: bool) -> Self {
        let vars = params
            .entries
            .iter()
            .map(|e| match e.kind {
                ParamKind::Learnable if trainable => Some(g.variable(e.tensor.clone())),
                ParamKind::Learnable => Some(g.constant(e.tensor.clone())),
                ParamKind::Running => None,
            })
            .collect();
        Bound { params, vars }
    }

    /// Use existing graph nodes for the learnable tensors, given in entry order.
    pub fn with_vars(params: &'p Parameters, learnable: &[Var]) -> Result<Self> {
        let expected = params.entries.iter().filter(|e| e.kind == ParamKind::Learnable).count();
        if learnable.len() != expected {
            return Err(Error::Dimension {
                op: "Bound::with_vars",
                axis: "learnable parameter count",
                expected,
                found: learnable.len(),
            });
        }
        let mut it = learnable.iter();
        let vars = params
            .entries
            .iter()
            .map(|e| match e.kind {
                ParamKind::Learnable => it.next().copied(),
                ParamKind::Running => None,
            })
            .collect();
        Ok(Bound { params, vars })
    }

    pub fn params(&self) -> &'p Parameters {
        self.params
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.params
            .position(name)
            .and_then(|i| self.vars[i])
            .ok_or_else(|| Error::Contract(format!("missing learnable parameter {name}")))
    }

    /// Gradients aligned with [`Parameters::entries`]; `None` for running stats
    /// and for parameters that did not influence the loss.
    pub fn grads(&self, g: &Graph) -> Vec<Option<Tensor>> {
        self.vars
            .iter()
            .map(|v| v.and_then(|v| g.grad(v).cloned()))
            .collect()
    }
}
