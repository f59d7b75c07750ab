//! Bidirectional Chamfer distance.
//!
//! `d(S, G) = Σ_{x∈S} min_{y∈G} ‖x − y‖² + Σ_{y∈G} min_{x∈S} ‖x − y‖²`,
//! with squared distances and no point-count normalization. The
//! mean-normalized variant is exposed separately.

mod kdtree;

pub use kdtree::KdTree;

use rayon::prelude::*;

use crate::autodiff::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::pointvoxel::{tensor_to_coords, Point};
use kdtree::sq_dist;

#[derive(Debug, Clone, PartialEq)]
pub struct ChamferResult {
    /// `forward + backward`.
    pub value: f64,
    /// Sum over predicted points of the squared distance to their match.
    pub forward: f64,
    /// Sum over ground-truth points of the squared distance to their match.
    pub backward: f64,
    /// Nearest ground-truth index for every predicted point.
    pub fwd_nn: Vec<usize>,
    /// Nearest predicted index for every ground-truth point.
    pub bwd_nn: Vec<usize>,
}

impl ChamferResult {
    /// `forward / n + backward / m`: each direction averaged over its own points.
    pub fn normalized(&self) -> f64 {
        self.forward / self.fwd_nn.len() as f64 + self.backward / self.bwd_nn.len() as f64
    }
}

fn check_nonempty(s: &[Point], g: &[Point]) -> Result<()> {
    if s.is_empty() || g.is_empty() {
        return Err(Error::Contract(format!(
            "chamfer distance needs non-empty clouds, got {} and {} points",
            s.len(),
            g.len()
        )));
    }
    Ok(())
}

fn brute_nearest(points: &[Point], q: &Point) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = sq_dist(q, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn assemble(s: &[Point], g: &[Point], fwd_nn: Vec<usize>, bwd_nn: Vec<usize>) -> ChamferResult {
    let forward: f64 = fwd_nn.iter().enumerate().map(|(i, &j)| sq_dist(&s[i], &g[j])).sum();
    let backward: f64 = bwd_nn.iter().enumerate().map(|(j, &i)| sq_dist(&s[i], &g[j])).sum();
    ChamferResult {
        value: forward + backward,
        forward,
        backward,
        fwd_nn,
        bwd_nn,
    }
}

/// Linear-scan reference implementation. Ties go to the lowest index.
pub fn chamfer_brute(s: &[Point], g: &[Point]) -> Result<ChamferResult> {
    check_nonempty(s, g)?;
    let fwd = s.par_iter().map(|p| brute_nearest(g, p)).collect();
    let bwd = g.par_iter().map(|p| brute_nearest(s, p)).collect();
    Ok(assemble(s, g, fwd, bwd))
}

/// KD-tree accelerated search; results are identical to [`chamfer_brute`].
pub fn chamfer_kdtree(s: &[Point], g: &[Point]) -> Result<ChamferResult> {
    check_nonempty(s, g)?;
    let tree_g = KdTree::build(g);
    let tree_s = KdTree::build(s);
    let fwd = s.par_iter().map(|p| tree_g.nearest(p).expect("non-empty").0).collect();
    let bwd = g.par_iter().map(|p| tree_s.nearest(p).expect("non-empty").0).collect();
    Ok(assemble(s, g, fwd, bwd))
}

/// Gradients of `value` with respect to both clouds, matches held fixed.
pub fn chamfer_grad(s: &[Point], g: &[Point], result: &ChamferResult) -> (Vec<Point>, Vec<Point>) {
    chamfer_grad_weighted(s, g, result, 1.0, 1.0)
}

/// Gradients of `w_fwd · forward + w_bwd · backward`.
fn chamfer_grad_weighted(
    s: &[Point],
    g: &[Point],
    result: &ChamferResult,
    w_fwd: f64,
    w_bwd: f64,
) -> (Vec<Point>, Vec<Point>) {
    let mut gs = vec![[0.0; 3]; s.len()];
    let mut gg = vec![[0.0; 3]; g.len()];
    for (i, &j) in result.fwd_nn.iter().enumerate() {
        for a in 0..3 {
            let d = 2.0 * w_fwd * (s[i][a] - g[j][a]);
            gs[i][a] += d;
            gg[j][a] -= d;
        }
    }
    for (j, &i) in result.bwd_nn.iter().enumerate() {
        for a in 0..3 {
            let d = 2.0 * w_bwd * (s[i][a] - g[j][a]);
            gs[i][a] += d;
            gg[j][a] -= d;
        }
    }
    (gs, gg)
}

impl Graph {
    /// Chamfer distance between two `n × 3` / `m × 3` coordinate matrices as a
    /// scalar node. With `normalized` the node holds `forward / n + backward / m`.
    pub fn chamfer(&mut self, pred: Var, target: Var, normalized: bool) -> Result<(Var, ChamferResult)> {
        let s = tensor_to_coords(self.value(pred))?;
        let g = tensor_to_coords(self.value(target))?;
        let result = chamfer_kdtree(&s, &g)?;
        let (w_fwd, w_bwd) = if normalized {
            (1.0 / s.len() as f64, 1.0 / g.len() as f64)
        } else {
            (1.0, 1.0)
        };
        let value = w_fwd * result.forward + w_bwd * result.backward;
        let (gs, gg) = chamfer_grad_weighted(&s, &g, &result, w_fwd, w_bwd);
        let flat = |v: Vec<Point>| -> Vec<Scalar> { v.iter().flatten().map(|&x| x as Scalar).collect() };
        let (gs, gg) = (flat(gs), flat(gg));
        let var = self.push(
            "chamfer",
            Tensor::scalar(value as Scalar),
            &[pred, target],
            Box::new(move |ctx| {
                let up = ctx.grad[0];
                let scaled = |v: &[Scalar]| v.iter().map(|x| x * up).collect::<Vec<_>>();
                vec![
                    ctx.needs(0).then(|| scaled(&gs)),
                    ctx.needs(1).then(|| scaled(&gg)),
                ]
            }),
        );
        Ok((var, result))
    }
}
