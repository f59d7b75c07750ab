use super::graph::{Graph, Var};
use super::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: Scalar = 1e-5;
pub const BN_MOMENTUM: Scalar = 0.1;

/// Per-channel statistics observed by a train-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<Scalar>,
    /// Unbiased variance (biased when only one element per channel).
    pub var: Vec<Scalar>,
}

/// Exponential moving averages consumed by eval-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<Scalar>,
    pub var: Vec<Scalar>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn update(&mut self, observed: &BatchNormStats, momentum: Scalar) {
        for (r, o) in self.mean.iter_mut().zip(&observed.mean) {
            *r = (1.0 - momentum) * *r + momentum * o;
        }
        for (r, o) in self.var.iter_mut().zip(&observed.var) {
            *r = (1.0 - momentum) * *r + momentum * o;
        }
    }
}

/// Split a shape around `axis` into `(outer, channels, inner)`.
fn layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    /// Batch normalization over every axis except `channel_axis`.
    ///
    /// Train mode normalizes with the statistics of `x` itself and returns
    /// them so the caller can fold them into its [`RunningStats`]. Eval mode
    /// normalizes with `running`, which is then required.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        channel_axis: usize,
        mode: Mode,
        running: Option<&RunningStats>,
        eps: Scalar,
    ) -> Result<(Var, Option<BatchNormStats>)> {
        if eps <= 0.0 {
            return Err(Error::Config("batch_norm epsilon must be positive".into()));
        }
        let tx = self.value(x);
        if channel_axis >= tx.rank() {
            return Err(Error::Config(format!(
                "batch_norm channel axis {channel_axis} out of range for rank {}",
                tx.rank()
            )));
        }
        let (outer, c, inner) = layout(tx.shape(), channel_axis);
        let per = outer * inner;
        if per == 0 || c == 0 {
            return Err(Error::Config("batch_norm: zero elements per channel".into()));
        }
        for (t, axis) in [(gamma, "gamma"), (beta, "beta")] {
            if self.value(t).shape() != [c] {
                return Err(Error::Dimension {
                    op: "batch_norm",
                    axis,
                    expected: c,
                    found: self.value(t).numel(),
                });
            }
        }
        let xd = tx.data();
        let at = move |o: usize, ch: usize, i: usize| (o * c + ch) * inner + i;

        let (mean, var, observed) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for o in 0..outer {
                    for ch in 0..c {
                        mean[ch] += xd[at(o, ch, 0)..at(o, ch, 0) + inner].iter().sum::<Scalar>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= per as Scalar);
                for o in 0..outer {
                    for ch in 0..c {
                        let m = mean[ch];
                        var[ch] += xd[at(o, ch, 0)..at(o, ch, 0) + inner]
                            .iter()
                            .map(|v| (v - m) * (v - m))
                            .sum::<Scalar>();
                    }
                }
                let unbiased: Vec<Scalar> = var
                    .iter()
                    .map(|v| if per > 1 { v / (per - 1) as Scalar } else { v / per as Scalar })
                    .collect();
                var.iter_mut().for_each(|v| *v /= per as Scalar);
                let obs = BatchNormStats { mean: mean.clone(), var: unbiased };
                (mean, var, Some(obs))
            }
            Mode::Eval => {
                let rs = running.ok_or_else(|| {
                    Error::Contract("batch_norm in eval mode needs running statistics".into())
                })?;
                if rs.mean.len() != c || rs.var.len() != c {
                    return Err(Error::Dimension {
                        op: "batch_norm",
                        axis: "running statistics",
                        expected: c,
                        found: rs.mean.len(),
                    });
                }
                (rs.mean.clone(), rs.var.clone(), None)
            }
        };

        let inv_std: Vec<Scalar> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for ch in 0..c {
                let base = at(o, ch, 0);
                for i in base..base + inner {
                    let h = (xd[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = gd[ch] * h + bd[ch];
                }
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), out);
        let train = mode == Mode::Train;

        let var_out = self.push(
            "batch_norm",
            out,
            &[x, gamma, beta],
            Box::new(move |ctx| {
                let g = ctx.grad;
                let gamma = ctx.input(1).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for o in 0..outer {
                    for ch in 0..c {
                        let base = at(o, ch, 0);
                        for i in base..base + inner {
                            dgamma[ch] += g[i] * xhat[i];
                            dbeta[ch] += g[i];
                        }
                    }
                }
                let dx = ctx.needs(0).then(|| {
                    let mut dx = vec![0.0; g.len()];
                    let m = per as Scalar;
                    for o in 0..outer {
                        for ch in 0..c {
                            let base = at(o, ch, 0);
                            let scale = gamma[ch] * inv_std[ch];
                            for i in base..base + inner {
                                dx[i] = if train {
                                    // dβ and dγ double as Σ dy and Σ dy·x̂ for this channel.
                                    scale * (g[i] - dbeta[ch] / m - xhat[i] * dgamma[ch] / m)
                                } else {
                                    scale * g[i]
                                };
                            }
                        }
                    }
                    dx
                });
                vec![dx, ctx.needs(1).then_some(dgamma), ctx.needs(2).then_some(dbeta)]
            }),
        );
        Ok((var_out, observed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bn(x: Tensor, axis: usize, mode: Mode, running: Option<&RunningStats>, eps: Scalar) -> Result<(Tensor, Option<BatchNormStats>)> {
        let c = x.shape()[axis];
        let mut g = Graph::new();
        let x = g.constant(x);
        let gamma = g.constant(Tensor::full(&[c], 1.0));
        let beta = g.constant(Tensor::zeros(&[c]));
        let (y, stats) = g.batch_norm(x, gamma, beta, axis, mode, running, eps)?;
        Ok((g.value(y).clone(), stats))
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[2.0, 1.0], [2.0, 5.0], [2.0, -3.0]]).unwrap());
        let gamma = g.constant(Tensor::from_vec(vec![3.0, 1.0]));
        let beta = g.constant(Tensor::from_vec(vec![0.25, 0.0]));
        let (y, _) = g.batch_norm(x, gamma, beta, 1, Mode::Train, None, BN_EPS).unwrap();
        for r in 0..3 {
            assert_eq!(g.value(y).row(r)[0], 0.25);
        }
    }

    #[test]
    fn two_element_channel_hand_normalized() {
        let x = Tensor::from_rows(&[[1.0], [3.0]]).unwrap();
        let (y, stats) = bn(x, 1, Mode::Train, None, 1e-14).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
        let stats = stats.unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.var, vec![2.0]);
    }

    #[test]
    fn standardized_input_is_nearly_unchanged() {
        let x = Tensor::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let (y, _) = bn(x.clone(), 1, Mode::Train, None, BN_EPS).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn grid_layout_uses_leading_channel_axis() {
        // Channel 0 constant, channel 1 alternating.
        let mut data = vec![4.0; 8];
        data.extend((0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }));
        let x = Tensor::new(vec![2, 2, 2, 2], data).unwrap();
        let (y, _) = bn(x, 0, Mode::Train, None, BN_EPS).unwrap();
        assert!(y.data()[..8].iter().all(|&v| v == 0.0));
        assert!((y.data()[8] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn eval_uses_running_stats() {
        let running = RunningStats { mean: vec![1.0], var: vec![4.0 - BN_EPS] };
        let x = Tensor::from_rows(&[[3.0], [1.0]]).unwrap();
        let (y, stats) = bn(x, 1, Mode::Eval, Some(&running), BN_EPS).unwrap();
        assert!(stats.is_none());
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert_eq!(y.data()[1], 0.0);
        assert!(bn(Tensor::zeros(&[2, 1]), 1, Mode::Eval, None, BN_EPS).is_err());
    }

    #[test]
    fn empty_channel_is_config_error() {
        let err = bn(Tensor::zeros(&[0, 3]), 1, Mode::Train, None, BN_EPS).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn running_update_is_momentum_blend() {
        let mut rs = RunningStats::new(1);
        rs.update(&BatchNormStats { mean: vec![10.0], var: vec![3.0] }, 0.1);
        assert!((rs.mean[0] - 1.0).abs() < 1e-12);
        assert!((rs.var[0] - 1.2).abs() < 1e-12);
    }
}
