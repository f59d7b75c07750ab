use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

impl Graph {
    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        self.push(
            "relu",
            out,
            &[x],
            Box::new(|ctx| {
                let xd = ctx.input(0).data();
                let dx = ctx
                    .grad
                    .iter()
                    .zip(xd)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![Some(dx)]
            }),
        )
    }

    /// Inverted dropout. Identity in eval mode or at rate 0; otherwise each
    /// element is zeroed with probability `rate` and survivors are scaled by
    /// `1 / (1 − rate)`. The mask is a pure function of `seed`.
    pub fn dropout(&mut self, x: Var, rate: Scalar, mode: Mode, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let tx = self.value(x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<Scalar> = (0..tx.numel())
            .map(|_| {
                if (rng.random::<f64>() as Scalar) < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        Ok(self.push(
            "dropout",
            out,
            &[x],
            Box::new(move |ctx| {
                vec![Some(ctx.grad.iter().zip(&mask).map(|(g, m)| g * m).collect())]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dropout_degenerate_cases_are_identity() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![1.0, -2.0, 3.5]));
        for mode in [Mode::Train, Mode::Eval] {
            let y = g.dropout(x, 0.0, mode, 9).unwrap();
            assert_eq!(g.value(y), g.value(x));
        }
        let y = g.dropout(x, 0.9, Mode::Eval, 9).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn dropout_rate_validated() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![1.0]));
        assert!(matches!(g.dropout(x, 1.0, Mode::Train, 0), Err(Error::Config(_))));
        assert!(g.dropout(x, -0.1, Mode::Train, 0).is_err());
    }

    #[test]
    fn dropout_is_seeded_and_scaled() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[4000], 1.0));
        let a = g.dropout(x, 0.25, Mode::Train, 42).unwrap();
        let b = g.dropout(x, 0.25, Mode::Train, 42).unwrap();
        assert_eq!(g.value(a), g.value(b));
        let vals = g.value(a).data();
        let kept = vals.iter().filter(|&&v| v != 0.0).count();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        // 3000 expected survivors; binomial sd ≈ 27.
        assert!((kept as i64 - 3000).abs() < 150, "kept {kept}");
    }
}
