//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Graph, Scalar, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub epsilon: Scalar,
    /// Maximum accepted relative error.
    pub tolerance: Scalar,
    /// Denominator floor for the relative error.
    pub abs_floor: Scalar,
    /// Check at most this many coordinates per input (chosen by `seed`).
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
    /// Classify failing coordinates that sit on a kink as non-smooth.
    pub skip_nonsmooth: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            max_coords_per_input: None,
            seed: 0,
            skip_nonsmooth: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates excluded because the function is not differentiable there.
    pub nonsmooth: usize,
    pub max_rel_error: Scalar,
    /// `(input, coordinate)` of the worst smooth coordinate.
    pub worst: Option<(usize, usize)>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn nonsmooth_fraction(&self) -> f64 {
        let total = self.checked + self.nonsmooth;
        if total == 0 {
            0.0
        } else {
            self.nonsmooth as f64 / total as f64
        }
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<Scalar>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    g.set_finite_checks(false);
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

fn rel_err(a: Scalar, b: Scalar, floor: Scalar) -> Scalar {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compare the autodiff gradient of the scalar function `f` at `inputs`
/// with central differences `(f(x+ε) − f(x−ε)) / 2ε`, coordinate by coordinate.
///
/// With `skip_nonsmooth`, a coordinate whose central difference disagrees
/// but whose one-sided differences bracket a kink (one side agrees with the
/// autodiff value, the central one does not) is counted as non-smooth
/// instead of failing.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor], config: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let base = g.value(out).item();
    let analytic: Vec<Tensor> = if g.requires_grad(out) {
        g.backward(out)?;
        vars.iter()
            .zip(inputs)
            .map(|(v, t)| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    } else {
        inputs.iter().map(|t| Tensor::zeros(t.shape())).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut coords = Vec::new();
    for (k, t) in inputs.iter().enumerate() {
        let n = t.numel();
        match config.max_coords_per_input {
            Some(m) if m < n => {
                let mut picked = sample(&mut rng, n, m).into_vec();
                picked.sort_unstable();
                coords.extend(picked.into_iter().map(|i| (k, i)));
            }
            _ => coords.extend((0..n).map(|i| (k, i))),
        }
    }

    let eps = config.epsilon;
    let results: Vec<Result<(usize, usize, Scalar, bool)>> = coords
        .par_iter()
        .map(|&(k, i)| {
            let mut perturbed = inputs.to_vec();
            let x0 = perturbed[k].data()[i];
            perturbed[k].data_mut()[i] = x0 + eps;
            let fp = evaluate(&f, &perturbed)?;
            perturbed[k].data_mut()[i] = x0 - eps;
            let fm = evaluate(&f, &perturbed)?;
            let central = (fp - fm) / (2.0 * eps);
            let ad = analytic[k].data()[i];
            let err = rel_err(ad, central, config.abs_floor);
            let mut kink = false;
            if config.skip_nonsmooth && err >= config.tolerance {
                let right = (fp - base) / eps;
                let left = (base - fm) / eps;
                let loose = 100.0 * config.tolerance;
                kink = rel_err(ad, right, config.abs_floor) < loose
                    || rel_err(ad, left, config.abs_floor) < loose;
            }
            Ok((k, i, err, kink))
        })
        .collect();

    let mut report = GradCheckReport {
        checked: 0,
        nonsmooth: 0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    for r in results {
        let (k, i, err, kink) = r?;
        if kink {
            report.nonsmooth += 1;
            continue;
        }
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err;
            report.worst = Some((k, i));
        }
    }
    report.passed = report.max_rel_error < config.tolerance;
    Ok(report)
}
