//! Dense 3D cross-correlation and its transpose on cubic grids.
//!
//! Grids are `C × r × r × r`, row-major with the last axis fastest. Both
//! directions are built from two primitives over a kernel laid out as
//! `[A][B][k][k][k]`:
//!
//! * `gather`: `out[a, j] += Σ_b Σ_t K[a, b, t] · src[b, j·s − p + t]`
//! * `scatter`: `out[b, i·s − p + t] += K[a, b, t] · src[a, i]`
//!
//! Convolution is `gather`; its input gradient is `scatter`. Transposed
//! convolution is `scatter`; its input gradient is `gather`.

use std::ops::Range;

use super::graph::{Graph, Var};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_res: usize,
    pub out_res: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Output resolution of a strided, padded cross-correlation.
pub fn conv_output_size(r: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || k == 0 {
        return Err(Error::Config("stride and kernel size must be positive".into()));
    }
    let span = (r + 2 * padding)
        .checked_sub(k)
        .ok_or_else(|| Error::Config(format!("kernel {k} larger than padded grid {}", r + 2 * padding)))?;
    if span % stride != 0 {
        return Err(Error::Config(format!(
            "output size ({r} + 2·{padding} − {k})/{stride} + 1 is not an integer"
        )));
    }
    Ok(span / stride + 1)
}

/// Output resolution of the transposed operator.
pub fn deconv_output_size(r: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || k == 0 || r == 0 {
        return Err(Error::Config("stride, kernel size and resolution must be positive".into()));
    }
    let full = (r - 1) * stride + k;
    match full.checked_sub(2 * padding) {
        Some(out) if out > 0 => Ok(out),
        _ => Err(Error::Config(format!(
            "transposed output size ({r} − 1)·{stride} − 2·{padding} + {k} is not positive"
        ))),
    }
}

/// Iteration indices `i < iter_len` with `0 ≤ i·s + t − p < target_len`.
fn span(t: usize, s: usize, p: usize, target_len: usize, iter_len: usize) -> Range<usize> {
    let lo = if p > t { (p - t).div_ceil(s) } else { 0 };
    if target_len + p < t + 1 {
        return 0..0;
    }
    let hi = ((target_len - 1 + p - t) / s + 1).min(iter_len);
    lo..hi.max(lo)
}

struct Dims {
    a: usize,
    b: usize,
    k: usize,
    stride: usize,
    padding: usize,
}

fn gather(d: &Dims, kernel: &[Scalar], src: &[Scalar], rs: usize, out: &mut [Scalar], ro: usize) {
    let (k, s, p) = (d.k, d.stride, d.padding);
    let (rs3, ro3) = (rs * rs * rs, ro * ro * ro);
    for a in 0..d.a {
        let oa = &mut out[a * ro3..(a + 1) * ro3];
        for b in 0..d.b {
            let sb = &src[b * rs3..(b + 1) * rs3];
            let kab = &kernel[(a * d.b + b) * k * k * k..][..k * k * k];
            for tz in 0..k {
                let zr = span(tz, s, p, rs, ro);
                for ty in 0..k {
                    let yr = span(ty, s, p, rs, ro);
                    for tx in 0..k {
                        let w = kab[(tz * k + ty) * k + tx];
                        if w == 0.0 {
                            continue;
                        }
                        let xr = span(tx, s, p, rs, ro);
                        if xr.is_empty() {
                            continue;
                        }
                        for oz in zr.clone() {
                            let iz = oz * s + tz - p;
                            for oy in yr.clone() {
                                let iy = oy * s + ty - p;
                                let orow = &mut oa[(oz * ro + oy) * ro..][..ro];
                                let irow = &sb[(iz * rs + iy) * rs..][..rs];
                                if s == 1 {
                                    let ix0 = xr.start + tx - p;
                                    let len = xr.len();
                                    orow[xr.clone()]
                                        .iter_mut()
                                        .zip(&irow[ix0..ix0 + len])
                                        .for_each(|(o, i)| *o += w * i);
                                } else {
                                    for ox in xr.clone() {
                                        orow[ox] += w * irow[ox * s + tx - p];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn scatter(d: &Dims, kernel: &[Scalar], src: &[Scalar], rs: usize, out: &mut [Scalar], ro: usize) {
    let (k, s, p) = (d.k, d.stride, d.padding);
    let (rs3, ro3) = (rs * rs * rs, ro * ro * ro);
    for a in 0..d.a {
        let sa = &src[a * rs3..(a + 1) * rs3];
        for b in 0..d.b {
            let ob = &mut out[b * ro3..(b + 1) * ro3];
            let kab = &kernel[(a * d.b + b) * k * k * k..][..k * k * k];
            for tz in 0..k {
                let zr = span(tz, s, p, ro, rs);
                for ty in 0..k {
                    let yr = span(ty, s, p, ro, rs);
                    for tx in 0..k {
                        let w = kab[(tz * k + ty) * k + tx];
                        if w == 0.0 {
                            continue;
                        }
                        let xr = span(tx, s, p, ro, rs);
                        if xr.is_empty() {
                            continue;
                        }
                        for iz in zr.clone() {
                            let oz = iz * s + tz - p;
                            for iy in yr.clone() {
                                let oy = iy * s + ty - p;
                                let orow = &mut ob[(oz * ro + oy) * ro..][..ro];
                                let irow = &sa[(iz * rs + iy) * rs..][..rs];
                                if s == 1 {
                                    let ox0 = xr.start + tx - p;
                                    let len = xr.len();
                                    orow[ox0..ox0 + len]
                                        .iter_mut()
                                        .zip(&irow[xr.clone()])
                                        .for_each(|(o, i)| *o += w * i);
                                } else {
                                    for ix in xr.clone() {
                                        orow[ix * s + tx - p] += w * irow[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `dK[a, b, t] = Σ_j ga[a, j] · xb[b, j·s − p + t]` where `ga` lives on the
/// gathered side (resolution `ra`) and `xb` on the scattered side (`rb`).
fn kernel_grad(d: &Dims, ga: &[Scalar], ra: usize, xb: &[Scalar], rb: usize) -> Vec<Scalar> {
    let (k, s, p) = (d.k, d.stride, d.padding);
    let (ra3, rb3, k3) = (ra * ra * ra, rb * rb * rb, k * k * k);
    let mut dk = vec![0.0; d.a * d.b * k3];
    for a in 0..d.a {
        let gaa = &ga[a * ra3..(a + 1) * ra3];
        for b in 0..d.b {
            let xbb = &xb[b * rb3..(b + 1) * rb3];
            let dkab = &mut dk[(a * d.b + b) * k3..][..k3];
            for tz in 0..k {
                let zr = span(tz, s, p, rb, ra);
                for ty in 0..k {
                    let yr = span(ty, s, p, rb, ra);
                    for tx in 0..k {
                        let xr = span(tx, s, p, rb, ra);
                        let mut acc = 0.0;
                        for jz in zr.clone() {
                            let iz = jz * s + tz - p;
                            for jy in yr.clone() {
                                let iy = jy * s + ty - p;
                                let grow = &gaa[(jz * ra + jy) * ra..][..ra];
                                let xrow = &xbb[(iz * rb + iy) * rb..][..rb];
                                if s == 1 {
                                    let ix0 = xr.start + tx - p;
                                    acc += grow[xr.clone()]
                                        .iter()
                                        .zip(&xrow[ix0..ix0 + xr.len()])
                                        .map(|(g, x)| g * x)
                                        .sum::<Scalar>();
                                } else {
                                    for jx in xr.clone() {
                                        acc += grow[jx] * xrow[jx * s + tx - p];
                                    }
                                }
                            }
                        }
                        dkab[(tz * k + ty) * k + tx] = acc;
                    }
                }
            }
        }
    }
    dk
}

fn channel_sums(g: &[Scalar], channels: usize) -> Vec<Scalar> {
    let per = g.len() / channels;
    g.chunks_exact(per).map(|c| c.iter().sum()).collect()
}

fn add_bias(out: &mut [Scalar], bias: &[Scalar]) {
    let per = out.len() / bias.len();
    for (chunk, b) in out.chunks_exact_mut(per).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn grid_res(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    let s = t.shape();
    if s.len() != 4 || s[1] != s[2] || s[2] != s[3] {
        return Err(Error::Contract(format!("{op}: expected a C×r×r×r grid, got {s:?}")));
    }
    Ok((s[0], s[1]))
}

fn kernel_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 5 || s[2] != s[3] || s[3] != s[4] {
        return Err(Error::Contract(format!("{op}: expected a kernel of rank 5 with cubic support, got {s:?}")));
    }
    Ok((s[0], s[1], s[2]))
}

fn check_bias(op: &'static str, bias: Option<&Tensor>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(Error::Dimension {
            op,
            axis: "output channels (bias)",
            expected: channels,
            found: b.numel(),
        }),
        _ => Ok(()),
    }
}

/// Validated conv3d geometry: `(cout, cin, geometry)`.
fn conv_setup(grid: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<(usize, usize, ConvGeometry)> {
    let (cin, r) = grid_res("conv3d", grid)?;
    let (cout, kcin, k) = kernel_dims("conv3d", kernel)?;
    if kcin != cin {
        return Err(Error::Dimension {
            op: "conv3d",
            axis: "input channels (kernel axis 1)",
            expected: cin,
            found: kcin,
        });
    }
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv3d kernel size must be odd, got {k}")));
    }
    check_bias("conv3d", bias, cout)?;
    let out_res = conv_output_size(r, k, stride, padding)?;
    Ok((cout, cin, ConvGeometry { in_res: r, out_res, kernel: k, stride, padding }))
}

fn deconv_setup(grid: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<(usize, usize, ConvGeometry)> {
    let (cin, r) = grid_res("deconv3d", grid)?;
    let (kcin, cout, k) = kernel_dims("deconv3d", kernel)?;
    if kcin != cin {
        return Err(Error::Dimension {
            op: "deconv3d",
            axis: "input channels (kernel axis 0)",
            expected: cin,
            found: kcin,
        });
    }
    check_bias("deconv3d", bias, cout)?;
    let out_res = deconv_output_size(r, k, stride, padding)?;
    Ok((cin, cout, ConvGeometry { in_res: r, out_res, kernel: k, stride, padding }))
}

/// Cross-correlation of a `Cin × r³` grid with a `Cout × Cin × k³` kernel.
pub fn conv3d_forward(grid: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    let (cout, cin, geo) = conv_setup(grid, kernel, bias, stride, padding)?;
    let ro = geo.out_res;
    let mut out = vec![0.0; cout * ro * ro * ro];
    let dims = Dims { a: cout, b: cin, k: geo.kernel, stride, padding };
    gather(&dims, kernel.data(), grid.data(), geo.in_res, &mut out, ro);
    if let Some(b) = bias {
        add_bias(&mut out, b.data());
    }
    Ok(Tensor::from_parts(vec![cout, ro, ro, ro], out))
}

/// Transposed cross-correlation of a `Cin × r³` grid with a `Cin × Cout × k³` kernel.
pub fn deconv3d_forward(grid: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    let (cin, cout, geo) = deconv_setup(grid, kernel, bias, stride, padding)?;
    let ro = geo.out_res;
    let mut out = vec![0.0; cout * ro * ro * ro];
    let dims = Dims { a: cin, b: cout, k: geo.kernel, stride, padding };
    scatter(&dims, kernel.data(), grid.data(), geo.in_res, &mut out, ro);
    if let Some(b) = bias {
        add_bias(&mut out, b.data());
    }
    Ok(Tensor::from_parts(vec![cout, ro, ro, ro], out))
}

/// Gradient of [`conv3d_forward`] with respect to its input grid.
pub fn conv3d_input_grad(grad_out: &Tensor, kernel: &Tensor, in_res: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let (cout, ro) = grid_res("conv3d_input_grad", grad_out)?;
    let (kcout, cin, k) = kernel_dims("conv3d_input_grad", kernel)?;
    if kcout != cout {
        return Err(Error::Dimension {
            op: "conv3d_input_grad",
            axis: "output channels (kernel axis 0)",
            expected: cout,
            found: kcout,
        });
    }
    let mut out = vec![0.0; cin * in_res * in_res * in_res];
    let dims = Dims { a: cout, b: cin, k, stride, padding };
    scatter(&dims, kernel.data(), grad_out.data(), ro, &mut out, in_res);
    Ok(Tensor::from_parts(vec![cin, in_res, in_res, in_res], out))
}

impl Graph {
    /// Strided, padded 3D cross-correlation with bias.
    pub fn conv3d(&mut self, grid: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (tg, tk, tb) = (self.value(grid), self.value(kernel), self.value(bias));
        let (cout, cin, geo) = conv_setup(tg, tk, Some(tb), stride, padding)?;
        let out = conv3d_forward(tg, tk, Some(tb), stride, padding)?;
        let dims = Dims { a: cout, b: cin, k: geo.kernel, stride, padding };
        Ok(self.push(
            "conv3d",
            out,
            &[grid, kernel, bias],
            Box::new(move |ctx| {
                let (ri, ro) = (geo.in_res, geo.out_res);
                let dgrid = ctx.needs(0).then(|| {
                    let mut d = vec![0.0; cin * ri * ri * ri];
                    scatter(&dims, ctx.input(1).data(), ctx.grad, ro, &mut d, ri);
                    d
                });
                let dkernel = ctx
                    .needs(1)
                    .then(|| kernel_grad(&dims, ctx.grad, ro, ctx.input(0).data(), ri));
                let dbias = ctx.needs(2).then(|| channel_sums(ctx.grad, cout));
                vec![dgrid, dkernel, dbias]
            }),
        ))
    }

    /// Transposed 3D cross-correlation (scatter-add of scaled kernel copies) with bias.
    pub fn deconv3d(&mut self, grid: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (tg, tk, tb) = (self.value(grid), self.value(kernel), self.value(bias));
        let (cin, cout, geo) = deconv_setup(tg, tk, Some(tb), stride, padding)?;
        let out = deconv3d_forward(tg, tk, Some(tb), stride, padding)?;
        let dims = Dims { a: cin, b: cout, k: geo.kernel, stride, padding };
        Ok(self.push(
            "deconv3d",
            out,
            &[grid, kernel, bias],
            Box::new(move |ctx| {
                let (ri, ro) = (geo.in_res, geo.out_res);
                let dgrid = ctx.needs(0).then(|| {
                    let mut d = vec![0.0; cin * ri * ri * ri];
                    gather(&dims, ctx.input(1).data(), ctx.grad, ro, &mut d, ri);
                    d
                });
                let dkernel = ctx
                    .needs(1)
                    .then(|| kernel_grad(&dims, ctx.input(0).data(), ri, ctx.grad, ro));
                let dbias = ctx.needs(2).then(|| channel_sums(ctx.grad, cout));
                vec![dgrid, dkernel, dbias]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct summation over every output cell, independent of `span`.
    fn conv_oracle(grid: &Tensor, kernel: &Tensor, s: usize, p: usize) -> Tensor {
        let (cin, r) = (grid.shape()[0], grid.shape()[1]);
        let (cout, k) = (kernel.shape()[0], kernel.shape()[2]);
        let ro = (r + 2 * p - k) / s + 1;
        let mut out = Tensor::zeros(&[cout, ro, ro, ro]);
        for o in 0..cout {
            for z in 0..ro {
                for y in 0..ro {
                    for x in 0..ro {
                        let mut acc = 0.0;
                        for c in 0..cin {
                            for tz in 0..k {
                                for ty in 0..k {
                                    for tx in 0..k {
                                        let iz = (z * s + tz) as isize - p as isize;
                                        let iy = (y * s + ty) as isize - p as isize;
                                        let ix = (x * s + tx) as isize - p as isize;
                                        let r = r as isize;
                                        if iz < 0 || iy < 0 || ix < 0 || iz >= r || iy >= r || ix >= r {
                                            continue;
                                        }
                                        let gi = ((c as isize * r + iz) * r + iy) * r + ix;
                                        let ki = (((o * cin + c) * k + tz) * k + ty) * k + tx;
                                        acc += kernel.data()[ki] * grid.data()[gi as usize];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((o * ro + z) * ro + y) * ro + x] = acc;
                    }
                }
            }
        }
        out
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel_k1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = random(&[2, 3, 3, 3], &mut rng);
        let mut kernel = Tensor::zeros(&[2, 2, 1, 1, 1]);
        kernel.data_mut()[0] = 1.0;
        kernel.data_mut()[3] = 1.0;
        assert_eq!(conv3d_forward(&grid, &kernel, None, 1, 0).unwrap(), grid);
        assert_eq!(deconv3d_forward(&grid, &kernel, None, 1, 0).unwrap(), grid);
    }

    #[test]
    fn delta_with_ones_kernel_fills_grid() {
        let mut grid = Tensor::zeros(&[1, 3, 3, 3]);
        grid.data_mut()[13] = 1.0;
        let kernel = Tensor::full(&[1, 1, 3, 3, 3], 1.0);
        let out = conv3d_forward(&grid, &kernel, None, 1, 1).unwrap();
        assert_eq!(out, conv_oracle(&grid, &kernel, 1, 1));
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_grid_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kernel = random(&[3, 2, 3, 3, 3], &mut rng);
        let out = conv3d_forward(&Tensor::zeros(&[2, 4, 4, 4]), &kernel, None, 1, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_deconv_spreads_kernel() {
        let grid = Tensor::full(&[1, 1, 1, 1], 1.0);
        let kernel = Tensor::full(&[1, 1, 2, 2, 2], 1.0);
        let out = deconv3d_forward(&grid, &kernel, Some(&Tensor::zeros(&[1])), 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn matches_oracle_over_geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(r, k, s, p) in &[(4, 3, 1, 1), (5, 3, 2, 1), (4, 1, 1, 0), (7, 3, 2, 0), (3, 5, 1, 2), (2, 3, 1, 1)] {
            let grid = random(&[2, r, r, r], &mut rng);
            let kernel = random(&[3, 2, k, k, k], &mut rng);
            let out = conv3d_forward(&grid, &kernel, None, s, p).unwrap();
            let oracle = conv_oracle(&grid, &kernel, s, p);
            assert!(out.max_abs_diff(&oracle) < 1e-12, "r={r} k={k} s={s} p={p}");
        }
    }

    #[test]
    fn geometry_errors() {
        assert!(matches!(conv_output_size(4, 3, 2, 0), Err(Error::Config(_))));
        assert_eq!(conv_output_size(5, 3, 2, 0).unwrap(), 2);
        assert!(conv_output_size(2, 5, 1, 0).is_err());
        assert!(deconv_output_size(1, 1, 1, 1).is_err());
        assert_eq!(deconv_output_size(4, 3, 2, 1).unwrap(), 7);
        let even = Tensor::zeros(&[1, 1, 2, 2, 2]);
        assert!(conv3d_forward(&Tensor::zeros(&[1, 4, 4, 4]), &even, None, 1, 0).is_err());
    }

    #[test]
    fn input_grad_is_transposed_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kernel = random(&[3, 2, 3, 3, 3], &mut rng);
        let g = random(&[3, 4, 4, 4], &mut rng);
        let a = conv3d_input_grad(&g, &kernel, 4, 1, 1).unwrap();
        let b = deconv3d_forward(&g, &kernel, None, 1, 1).unwrap();
        assert_eq!(a, b);
    }
}
