use pvdeconv::autodiff::gradcheck::{finite_diff_check, GradCheckConfig};
use pvdeconv::autodiff::{Graph, Mode, Tensor};
use pvdeconv::layers::FwdCtx;
use pvdeconv::model::{encode, init_params, reconstruct, reconstruct_batch, Model, ModelConfig};
use pvdeconv::params::{Bound, ParamKind, Parameters};
use pvdeconv::pointvoxel::{coords_to_tensor, Point, PointCloud};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Round-off allowance for results that are exact up to summation order.
const EXACT: f64 = if cfg!(feature = "f32") { 1e-5 } else { 1e-12 };

fn cloud(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()
}

fn embed(cfg: &ModelConfig, params: &Parameters, pts: &[Point]) -> (Tensor, Tensor) {
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, params, false);
    let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Eval, 1);
    let e = encode(&mut ctx, pts, cfg).unwrap();
    (g.value(e.global).clone(), g.value(e.per_point).clone())
}

/// Closed-form count of learnable scalars for a config, independent of the
/// initializer's bookkeeping.
fn count_by_formula(c: &ModelConfig) -> usize {
    let k3 = c.kernel_size.pow(3);
    let bn = |w: usize| 2 * w;
    let lin = |i: usize, o: usize| i * o + o;
    let unit = |i: usize, o: usize| i * o * k3 + o + bn(o) + lin(i, o) + bn(o);
    let mut total = 0;
    let mut cin = 3;
    for &(ch, blocks, _) in &c.encoder_blocks {
        for _ in 0..blocks {
            total += unit(cin, ch);
            cin = ch;
        }
    }
    total += lin(cin, c.global_width) + bn(c.global_width);
    let mut w = cin;
    for &m in &c.encoder_cloud_mlp {
        total += lin(w, m) + bn(m);
        w = m;
    }
    let mut cin = c.embedding_dim();
    for &(ch, blocks, _) in &c.decoder_blocks {
        for _ in 0..blocks {
            total += unit(cin, ch);
            cin = ch;
        }
    }
    total += lin(cin, c.decoder_width) + bn(c.decoder_width);
    let mut w = c.decoder_width;
    for &m in &c.decoder_fine_mlp {
        total += lin(w, m) + bn(m);
        w = m;
    }
    total + lin(w, 3)
}

#[test]
fn paper_parameter_count_is_frozen() {
    let cfg = ModelConfig::paper();
    let p = init_params(&cfg, 0).unwrap();
    assert_eq!(p.learnable_scalars(), 6_478_851);
    assert_eq!(p.learnable_scalars(), count_by_formula(&cfg));
    let toy = ModelConfig::toy();
    assert_eq!(init_params(&toy, 0).unwrap().learnable_scalars(), count_by_formula(&toy));
}

#[test]
fn paper_encoder_produces_1472_dim_embedding() {
    let cfg = ModelConfig::paper().with_points(64);
    let params = init_params(&cfg, 1).unwrap();
    let (global, per_point) = embed(&cfg, &params, &cloud(64, 2));
    assert_eq!(global.shape(), &[1024]);
    assert_eq!(per_point.shape(), &[64, 448]);
    assert_eq!(global.numel() + per_point.shape()[1], 1472);
}

#[test]
fn global_feature_is_permutation_invariant() {
    let cfg = ModelConfig::toy().with_points(200);
    let params = init_params(&cfg, 5).unwrap();
    let pts = cloud(200, 6);
    let mut order: Vec<usize> = (0..200).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    let shuffled: Vec<Point> = order.iter().map(|&i| pts[i]).collect();
    let (g0, p0) = embed(&cfg, &params, &pts);
    let (g1, p1) = embed(&cfg, &params, &shuffled);
    assert!(g0.max_abs_diff(&g1) <= 1e-6);
    for (row, &i) in order.iter().enumerate() {
        let d = p0.row(i).iter().zip(p1.row(row)).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max);
        assert!(d <= 1e-6);
    }
}

#[test]
fn duplicated_cloud_keeps_global_vector() {
    let pts = cloud(50, 8);
    let doubled: Vec<Point> = pts.iter().chain(&pts).copied().collect();
    let cfg = ModelConfig::toy().with_points(50);
    let params = init_params(&cfg, 9).unwrap();
    let (g0, _) = embed(&cfg, &params, &pts);
    let (g1, _) = embed(&cfg.clone().with_points(100), &params, &doubled);
    // Eval mode: voxel means and point features are unchanged by duplication.
    assert!(g0.max_abs_diff(&g1) as f64 <= EXACT);
}

#[test]
fn output_shape_matches_point_count() {
    for n in [512, 2500, 10_000] {
        let model = Model::new(ModelConfig::toy().with_points(n), 0).unwrap();
        let input = PointCloud::new(cloud(n, n as u64)).unwrap();
        let out = model.reconstruct(&input).unwrap();
        assert_eq!(out.len(), n);
    }
}

#[test]
fn zero_head_puts_every_point_at_origin() {
    let mut model = Model::new(ModelConfig::toy().with_points(40), 0).unwrap();
    for name in ["dec.head.weight", "dec.head.bias"] {
        model.params.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let out = model.reconstruct(&PointCloud::new(cloud(40, 1)).unwrap()).unwrap();
    assert!(out.coords().iter().all(|p| *p == [0.0; 3]));
}

#[test]
fn point_count_mismatch_is_contract_error() {
    let model = Model::new(ModelConfig::toy().with_points(40), 0).unwrap();
    let err = model.reconstruct(&PointCloud::new(cloud(41, 1)).unwrap()).unwrap_err();
    assert!(matches!(err, pvdeconv::Error::Contract(_)));
}

#[cfg(not(feature = "f32"))]
#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let cfg = ModelConfig::toy();
    let params = init_params(&cfg, 11).unwrap();
    let x = cloud(16, 12);
    let y = coords_to_tensor(&cloud(16, 13));
    let inputs: Vec<Tensor> = params
        .entries()
        .iter()
        .filter(|e| e.kind == ParamKind::Learnable)
        .map(|e| e.tensor.clone())
        .collect();
    let config = GradCheckConfig {
        max_coords_per_input: Some(6),
        skip_nonsmooth: true,
        // Central differences through the whole network carry about 1e-8 of
        // absolute round-off at this epsilon, so gradients below 1e-3 are
        // compared in absolute terms.
        abs_floor: 1e-3,
        seed: 3,
        ..GradCheckConfig::default()
    };
    let report = finite_diff_check(
        |g, vars| {
            let bound = Bound::with_vars(&params, vars)?;
            let mut ctx = FwdCtx::new(g, &bound, Mode::Train, 21);
            let out = reconstruct(&mut ctx, &x, &cfg)?;
            let target = ctx.g.constant(y.clone());
            Ok(ctx.g.chamfer(out, target, false)?.0)
        },
        &inputs,
        &config,
    )
    .unwrap();
    println!("{report:?}");
    assert!(report.passed, "{report:?}");
    assert!(report.nonsmooth_fraction() < 0.05, "{report:?}");
}

#[test]
fn batched_eval_matches_single_clouds() {
    let cfg = ModelConfig::toy().with_points(24);
    let model = Model::new(cfg.clone(), 4).unwrap();
    let clouds: Vec<Vec<Point>> = (0..3).map(|k| cloud(24, 40 + k)).collect();
    let refs: Vec<&[Point]> = clouds.iter().map(|c| c.as_slice()).collect();
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &model.params, false);
    let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Eval, 0);
    let outs = reconstruct_batch(&mut ctx, &refs, &cfg).unwrap();
    for (out, c) in outs.iter().zip(&clouds) {
        let single = model.reconstruct(&PointCloud::new(c.clone()).unwrap()).unwrap();
        assert_eq!(g.value(*out).data(), coords_to_tensor(single.coords()).data());
    }
}

#[test]
fn train_batch_norm_pools_the_batch() {
    let cfg = ModelConfig::toy().with_points(16);
    let params = init_params(&cfg, 5).unwrap();
    let (a, b) = (cloud(16, 50), cloud(16, 51));
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &params, false);
    let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Train, 0);
    reconstruct_batch(&mut ctx, &[&a, &b], &cfg).unwrap();
    let (_, stats) = ctx.observed.iter().find(|(p, _)| p == "enc.block0.mlp_bn").unwrap();
    // The first fine branch is a linear map of the raw coordinates, so its
    // pooled mean is the map applied to the mean of all 32 points.
    let w = params.get("enc.block0.mlp.weight").unwrap();
    let bias = params.get("enc.block0.mlp.bias").unwrap();
    let cout = w.shape()[1];
    let mut centroid = [0.0; 3];
    for p in a.iter().chain(&b) {
        (0..3).for_each(|i| centroid[i] += p[i] / 32.0);
    }
    for j in 0..cout {
        let want: f64 = bias.data()[j] as f64 + (0..3).map(|i| centroid[i] * w.data()[i * cout + j] as f64).sum::<f64>();
        assert!((stats.mean[j] as f64 - want).abs() < EXACT, "channel {j}");
    }
    let rs = |pts: &[Point]| {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &params, false);
        let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Train, 0);
        let out = reconstruct(&mut ctx, pts, &cfg).unwrap();
        g.value(out).clone()
    };
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &params, false);
    let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Train, 0);
    let alone = reconstruct_batch(&mut ctx, &[&a], &cfg).unwrap();
    assert_eq!(g.value(alone[0]), &rs(&a));
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &params, false);
    let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Train, 0);
    let pair = reconstruct_batch(&mut ctx, &[&a, &b], &cfg).unwrap();
    assert_ne!(g.value(pair[0]), &rs(&a));
}

#[cfg(not(feature = "f32"))]
#[test]
fn batched_gradients_match_finite_differences() {
    let cfg = ModelConfig::toy().with_points(12);
    let params = init_params(&cfg, 13).unwrap();
    let xs = [cloud(12, 60), cloud(12, 61)];
    let ys = [coords_to_tensor(&cloud(12, 62)), coords_to_tensor(&cloud(12, 63))];
    let inputs: Vec<Tensor> = params
        .entries()
        .iter()
        .filter(|e| e.kind == ParamKind::Learnable)
        .map(|e| e.tensor.clone())
        .collect();
    let config = GradCheckConfig {
        max_coords_per_input: Some(4),
        skip_nonsmooth: true,
        abs_floor: 1e-3,
        seed: 5,
        ..GradCheckConfig::default()
    };
    let report = finite_diff_check(
        |g, vars| {
            let bound = Bound::with_vars(&params, vars)?;
            let mut ctx = FwdCtx::new(g, &bound, Mode::Train, 9);
            let outs = reconstruct_batch(&mut ctx, &[&xs[0], &xs[1]], &cfg)?;
            let mut total = None;
            for (out, y) in outs.into_iter().zip(&ys) {
                let target = ctx.g.constant(y.clone());
                let l = ctx.g.chamfer(out, target, false)?.0;
                total = Some(match total {
                    Some(t) => ctx.g.add(t, l)?,
                    None => l,
                });
            }
            Ok(total.unwrap())
        },
        &inputs,
        &config,
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}
