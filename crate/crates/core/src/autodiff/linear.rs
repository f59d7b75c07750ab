use super::graph::{Graph, Var};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

impl Graph {
    /// Shared pointwise affine map: `out[n, j] = Σ_i x[n, i] · w[i, j] + b[j]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(weight), self.value(bias));
        if tx.rank() != 2 {
            return Err(Error::Dimension {
                op: "linear_pointwise",
                axis: "input rank",
                expected: 2,
                found: tx.rank(),
            });
        }
        if tw.rank() != 2 {
            return Err(Error::Dimension {
                op: "linear_pointwise",
                axis: "weight rank",
                expected: 2,
                found: tw.rank(),
            });
        }
        let (n, cin) = (tx.shape()[0], tx.shape()[1]);
        let cout = tw.shape()[1];
        if n == 0 {
            return Err(Error::Contract("linear_pointwise: empty input".into()));
        }
        if tw.shape()[0] != cin {
            return Err(Error::Dimension {
                op: "linear_pointwise",
                axis: "input channels (weight rows)",
                expected: cin,
                found: tw.shape()[0],
            });
        }
        if tb.shape() != [cout] {
            return Err(Error::Dimension {
                op: "linear_pointwise",
                axis: "output channels (bias)",
                expected: cout,
                found: tb.numel(),
            });
        }

        let out = affine(tx.data(), tw.data(), tb.data(), n, cin, cout);
        let out = Tensor::from_parts(vec![n, cout], out);
        Ok(self.push(
            "linear",
            out,
            &[x, weight, bias],
            Box::new(move |ctx| {
                let g = ctx.grad;
                let xd = ctx.input(0).data();
                let wd = ctx.input(1).data();
                let dx = ctx.needs(0).then(|| {
                    let mut dx = vec![0.0; n * cin];
                    for r in 0..n {
                        let grow = &g[r * cout..(r + 1) * cout];
                        let dxrow = &mut dx[r * cin..(r + 1) * cin];
                        for (i, d) in dxrow.iter_mut().enumerate() {
                            let wrow = &wd[i * cout..(i + 1) * cout];
                            *d = grow.iter().zip(wrow).map(|(a, b)| a * b).sum();
                        }
                    }
                    dx
                });
                let dw = ctx.needs(1).then(|| {
                    let mut dw = vec![0.0; cin * cout];
                    for r in 0..n {
                        let grow = &g[r * cout..(r + 1) * cout];
                        for i in 0..cin {
                            let xv = xd[r * cin + i];
                            if xv == 0.0 {
                                continue;
                            }
                            let dwrow = &mut dw[i * cout..(i + 1) * cout];
                            dwrow.iter_mut().zip(grow).for_each(|(d, gv)| *d += xv * gv);
                        }
                    }
                    dw
                });
                let db = ctx.needs(2).then(|| {
                    let mut db = vec![0.0; cout];
                    for grow in g.chunks_exact(cout) {
                        db.iter_mut().zip(grow).for_each(|(d, gv)| *d += gv);
                    }
                    db
                });
                vec![dx, dw, db]
            }),
        ))
    }
}

fn affine(
    x: &[Scalar],
    w: &[Scalar],
    b: &[Scalar],
    n: usize,
    cin: usize,
    cout: usize,
) -> Vec<Scalar> {
    let mut out = Vec::with_capacity(n * cout);
    for r in 0..n {
        out.extend_from_slice(b);
        let orow = &mut out[r * cout..(r + 1) * cout];
        for i in 0..cin {
            let xv = x[r * cin + i];
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[i * cout..(i + 1) * cout];
            orow.iter_mut().zip(wrow).for_each(|(o, wv)| *o += xv * wv);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Tensor, w: Tensor, b: Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (x, w, b) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.linear(x, w, b)?;
        Ok(g.value(y).clone())
    }

    #[test]
    fn identity_map() {
        let y = run(Tensor::eye(2), Tensor::eye(2), Tensor::zeros(&[2])).unwrap();
        assert_eq!(y, Tensor::eye(2));
    }

    #[test]
    fn hand_evaluated_affine() {
        let y = run(
            Tensor::from_rows(&[[1.0, 2.0]]).unwrap(),
            Tensor::from_rows(&[[1.0], [1.0]]).unwrap(),
            Tensor::from_vec(vec![3.0]),
        )
        .unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn zero_input_gives_bias_rows() {
        let w = Tensor::from_rows(&[[0.3, -1.0, 2.0], [4.0, 5.0, 6.0]]).unwrap();
        let y = run(Tensor::zeros(&[4, 2]), w, Tensor::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        for r in 0..4 {
            assert_eq!(y.row(r), &[1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn mismatched_weight_names_axis() {
        let err = run(Tensor::zeros(&[1, 3]), Tensor::zeros(&[2, 2]), Tensor::zeros(&[2]))
            .unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
        let err = run(Tensor::zeros(&[1, 2]), Tensor::zeros(&[2, 2]), Tensor::zeros(&[3]))
            .unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
    }
}
