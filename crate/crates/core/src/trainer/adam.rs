use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: Scalar,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub eps: Scalar,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        Adam {
            config,
            t: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// Update `params[i]` with `grads[i]`; `None` gradients count as zero.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                op: "adam",
                axis: "tensor count",
                expected: self.m.len(),
                found: params.len().min(grads.len()),
            });
        }
        self.t += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps } = self.config;
        let c1 = 1.0 - b1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.t.min(i32::MAX as u64) as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            match &grads[i] {
                Some(g) => {
                    for (((w, m), v), &g) in pd.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
                None => {
                    for ((w, m), v) in pd.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m *= b1;
                        *v *= b2;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr · g/|g| (up to eps).
        let mut w = Tensor::from_vec(vec![1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default(), &[&[2]]);
        adam.step(&mut [&mut w], &[Some(Tensor::from_vec(vec![0.5, -3.0]))]).unwrap();
        assert!((w.data()[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w.data()[1] - (-2.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_is_frozen() {
        let mut w = Tensor::from_vec(vec![0.3, -0.0, 7.0]);
        let before = w.clone();
        let cfg = AdamConfig { learning_rate: 0.0, ..Default::default() };
        let mut adam = Adam::new(cfg, &[&[3]]);
        for _ in 0..10 {
            adam.step(&mut [&mut w], &[Some(Tensor::from_vec(vec![1.0, 2.0, -3.0]))]).unwrap();
        }
        assert_eq!(w.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   before.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
