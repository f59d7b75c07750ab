use super::graph::{Graph, Var};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn matrix_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::Dimension {
            op,
            axis: "rank",
            expected: 2,
            found: t.rank(),
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

impl Graph {
    /// Column-wise maximum of an `N × C` matrix, giving a `C` vector.
    /// Ties resolve to the lowest row index.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (n, c) = matrix_dims("max_rows", tx)?;
        if n == 0 {
            return Err(Error::Contract("max_rows over zero rows".into()));
        }
        let xd = tx.data();
        let mut best = xd[..c].to_vec();
        let mut arg = vec![0usize; c];
        for r in 1..n {
            for (j, v) in xd[r * c..(r + 1) * c].iter().enumerate() {
                if *v > best[j] {
                    best[j] = *v;
                    arg[j] = r;
                }
            }
        }
        Ok(self.push(
            "max_rows",
            Tensor::from_parts(vec![c], best),
            &[x],
            Box::new(move |ctx| {
                let mut dx = vec![0.0; n * c];
                for (j, (&r, g)) in arg.iter().zip(ctx.grad).enumerate() {
                    dx[r * c + j] = *g;
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Concatenate `N × Cᵢ` matrices along the channel axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_cols of nothing".into()));
        };
        let (n, _) = matrix_dims("concat_cols", self.value(first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pn, pc) = matrix_dims("concat_cols", self.value(p))?;
            if pn != n {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    axis: "rows",
                    expected: n,
                    found: pn,
                });
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(
            "concat_cols",
            Tensor::from_parts(vec![n, total], out),
            parts,
            Box::new(move |ctx| {
                let mut offset = 0;
                widths
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| {
                        let start = offset;
                        offset += w;
                        ctx.needs(k).then(|| {
                            let mut d = Vec::with_capacity(n * w);
                            for r in 0..n {
                                d.extend_from_slice(&ctx.grad[r * total + start..r * total + start + w]);
                            }
                            d
                        })
                    })
                    .collect()
            }),
        ))
    }

    /// Repeat a `C` vector as every row of an `N × C` matrix.
    pub fn broadcast_rows(&mut self, v: Var, n: usize) -> Result<Var> {
        let tv = self.value(v);
        if tv.rank() != 1 {
            return Err(Error::Dimension {
                op: "broadcast_rows",
                axis: "rank",
                expected: 1,
                found: tv.rank(),
            });
        }
        let c = tv.numel();
        let data: Vec<Scalar> = tv.data().iter().copied().cycle().take(n * c).collect();
        Ok(self.push(
            "broadcast_rows",
            Tensor::from_parts(vec![n, c], data),
            &[v],
            Box::new(move |ctx| {
                let mut d = vec![0.0; c];
                for row in ctx.grad.chunks_exact(c) {
                    d.iter_mut().zip(row).for_each(|(a, g)| *a += g);
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Join same-shape tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("stack of nothing".into()));
        };
        let shape = self.value(first).shape().to_vec();
        let len = self.value(first).numel();
        let mut out = Vec::with_capacity(len * parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.shape() != shape.as_slice() {
                return Err(Error::Dimension {
                    op: "stack",
                    axis: "numel",
                    expected: len,
                    found: t.numel(),
                });
            }
            out.extend_from_slice(t.data());
        }
        let mut dims = vec![parts.len()];
        dims.extend_from_slice(&shape);
        Ok(self.push(
            "stack",
            Tensor::from_parts(dims, out),
            parts,
            Box::new(move |ctx| {
                ctx.grad
                    .chunks_exact(len)
                    .enumerate()
                    .map(|(k, g)| ctx.needs(k).then(|| g.to_vec()))
                    .collect()
            }),
        ))
    }

    /// Slice `index` of the leading axis.
    pub fn unstack(&mut self, x: Var, index: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() < 1 || index >= tx.shape()[0] {
            return Err(Error::Contract(format!(
                "unstack index {index} out of range for shape {:?}",
                tx.shape()
            )));
        }
        let shape = tx.shape()[1..].to_vec();
        let len: usize = shape.iter().product();
        let total = tx.numel();
        let data = tx.data()[index * len..(index + 1) * len].to_vec();
        Ok(self.push(
            "unstack",
            Tensor::from_parts(shape, data),
            &[x],
            Box::new(move |ctx| {
                let mut d = vec![0.0; total];
                d[index * len..(index + 1) * len].copy_from_slice(ctx.grad);
                vec![Some(d)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_rows_routes_gradient_to_lowest_argmax() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::from_rows(&[[1.0, 5.0], [3.0, 5.0], [3.0, 0.0]]).unwrap());
        let m = g.max_rows(x).unwrap();
        assert_eq!(g.value(m).data(), &[3.0, 5.0]);
        let loss = g.sum(m);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_and_broadcast_shapes() {
        let mut g = Graph::new();
        let a = g.variable(Tensor::from_rows(&[[1.0], [2.0]]).unwrap());
        let v = g.variable(Tensor::from_vec(vec![7.0, 8.0]));
        let b = g.broadcast_rows(v, 2).unwrap();
        let c = g.concat_cols(&[b, a]).unwrap();
        assert_eq!(g.value(c).data(), &[7.0, 8.0, 1.0, 7.0, 8.0, 2.0]);
        let w = g.constant(Tensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap());
        let p = g.mul(c, w).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(v).unwrap().data(), &[5.0, 7.0]);
        assert_eq!(g.grad(a).unwrap().data(), &[3.0, 6.0]);
    }

    #[test]
    fn concat_row_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 1]));
        let b = g.constant(Tensor::zeros(&[3, 1]));
        assert!(g.concat_cols(&[a, b]).is_err());
    }

    #[test]
    fn stack_unstack_roundtrip_and_grads() {
        let mut g = Graph::new();
        let a = g.variable(Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
        let b = g.variable(Tensor::from_rows(&[[3.0, 4.0]]).unwrap());
        let s = g.stack(&[a, b]).unwrap();
        assert_eq!(g.value(s).shape(), &[2, 1, 2]);
        let back = g.unstack(s, 1).unwrap();
        assert_eq!(g.value(back), g.value(b));
        let w = g.constant(Tensor::from_rows(&[[5.0, 6.0]]).unwrap());
        let p = g.mul(back, w).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[5.0, 6.0]);
        assert!(g.unstack(s, 2).is_err());
        let c = g.constant(Tensor::zeros(&[2, 1]));
        assert!(g.stack(&[a, c]).is_err());
    }
}
