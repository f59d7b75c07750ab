//! Forward-pass context shared by the blocks and the model.

use crate::autodiff::{BatchNormStats, Graph, Mode, Scalar, Var, BN_EPS};
use crate::error::Result;
use crate::params::Bound;
use crate::rng::{derive_seed, hash_label};

/// Mutable state threaded through one forward pass over a batch.
///
/// Layers take one `Var` per sample; only batch norm mixes samples.
pub struct FwdCtx<'g, 'p> {
    pub g: &'g mut Graph,
    pub params: &'g Bound<'p>,
    pub mode: Mode,
    /// Master seed for stochastic layers in this pass.
    pub seed: u64,
    /// Batch statistics observed by train-mode batch norms, keyed by layer prefix.
    pub observed: Vec<(String, BatchNormStats)>,
}

impl<'g, 'p> FwdCtx<'g, 'p> {
    pub fn new(g: &'g mut Graph, params: &'g Bound<'p>, mode: Mode, seed: u64) -> Self {
        FwdCtx {
            g,
            params,
            mode,
            seed,
            observed: Vec::new(),
        }
    }

    /// Pointwise linear layer applied to every sample.
    pub fn linear(&mut self, xs: &[Var], prefix: &str) -> Result<Vec<Var>> {
        let w = self.params.var(&format!("{prefix}.weight"))?;
        let b = self.params.var(&format!("{prefix}.bias"))?;
        xs.iter().map(|&x| self.g.linear(x, w, b)).collect()
    }

    /// Batch norm whose train-mode statistics pool every sample in `xs`.
    pub fn batch_norm(&mut self, xs: &[Var], prefix: &str, channel_axis: usize) -> Result<Vec<Var>> {
        let gamma = self.params.var(&format!("{prefix}.gamma"))?;
        let beta = self.params.var(&format!("{prefix}.beta"))?;
        let running = match self.mode {
            Mode::Eval => Some(self.params.params().running_stats(prefix)?),
            Mode::Train => None,
        };
        let (ys, stats) = if let [x] = xs {
            let (y, stats) =
                self.g
                    .batch_norm(*x, gamma, beta, channel_axis, self.mode, running.as_ref(), BN_EPS)?;
            (vec![y], stats)
        } else {
            let stacked = self.g.stack(xs)?;
            let (y, stats) =
                self.g
                    .batch_norm(stacked, gamma, beta, channel_axis + 1, self.mode, running.as_ref(), BN_EPS)?;
            let ys = (0..xs.len()).map(|k| self.g.unstack(y, k)).collect::<Result<_>>()?;
            (ys, stats)
        };
        if let Some(stats) = stats {
            self.observed.push((prefix.to_string(), stats));
        }
        Ok(ys)
    }

    pub fn relu(&mut self, xs: &[Var]) -> Vec<Var> {
        xs.iter().map(|&x| self.g.relu(x)).collect()
    }

    /// Dropout seeded by the pass seed, the sample index and the layer's name.
    pub fn dropout(&mut self, xs: &[Var], rate: Scalar, prefix: &str) -> Result<Vec<Var>> {
        let layer = hash_label(prefix);
        xs.iter()
            .enumerate()
            .map(|(k, &x)| {
                let seed = derive_seed(derive_seed(self.seed, k as u64), layer);
                self.g.dropout(x, rate, self.mode, seed)
            })
            .collect()
    }

    /// Pointwise linear → batch norm → ReLU on `N × C` matrices.
    pub fn shared_mlp(&mut self, xs: &[Var], prefix: &str) -> Result<Vec<Var>> {
        let h = self.linear(xs, prefix)?;
        let h = self.batch_norm(&h, &format!("{prefix}_bn"), 1)?;
        Ok(self.relu(&h))
    }
}
