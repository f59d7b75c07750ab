//! The point-voxel autoencoder: PVConv encoder to a global + per-point
//! embedding, PVDeConv decoder back to one output point per anchor.

use std::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Mode, Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::kv;
use crate::layers::FwdCtx;
use crate::params::{Bound, Parameters};
use crate::pointvoxel::{
    coords_to_tensor, init_block_params, pvconv_block, pvdeconv_block, tensor_to_coords, Direction, PVBlockConfig,
    Point, PointCloud,
};

/// `(channels, num_blocks, voxel_resolution)`.
pub type Triplet = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder_blocks: Vec<Triplet>,
    /// Width of the pointwise layer that is max-pooled into the global vector.
    pub global_width: usize,
    pub encoder_cloud_mlp: Vec<usize>,
    pub decoder_blocks: Vec<Triplet>,
    /// Width of the pointwise layer fusing the decoder stages.
    pub decoder_width: usize,
    pub decoder_fine_mlp: Vec<usize>,
    pub n_points: usize,
    pub kernel_size: usize,
    pub dropout_rate: Scalar,
}

impl ModelConfig {
    /// The full-size architecture at 10k points.
    pub fn paper() -> Self {
        ModelConfig {
            encoder_blocks: vec![(64, 1, 32), (64, 2, 16), (128, 1, 16)],
            global_width: 1024,
            encoder_cloud_mlp: vec![256, 128],
            decoder_blocks: vec![(128, 1, 16), (64, 2, 16), (64, 1, 32)],
            decoder_width: 128,
            decoder_fine_mlp: vec![256, 128],
            n_points: 10_000,
            kernel_size: 3,
            dropout_rate: 0.1,
        }
    }

    /// Reduced architecture for tests and CPU demos.
    pub fn toy() -> Self {
        ModelConfig {
            encoder_blocks: vec![(8, 1, 8), (8, 2, 4), (16, 1, 4)],
            global_width: 64,
            encoder_cloud_mlp: vec![32, 16],
            decoder_blocks: vec![(16, 1, 4), (8, 2, 4), (8, 1, 8)],
            decoder_width: 16,
            decoder_fine_mlp: vec![32, 16],
            n_points: 16,
            kernel_size: 3,
            dropout_rate: 0.1,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" | "default" => Ok(Self::paper()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown model preset {other:?} (paper, toy)"))),
        }
    }

    pub fn with_points(mut self, n: usize) -> Self {
        self.n_points = n;
        self
    }

    /// Global width plus per-point width.
    pub fn embedding_dim(&self) -> usize {
        self.global_width + self.per_point_dim()
    }

    /// First encoder stage channels plus every cloud-MLP layer.
    pub fn per_point_dim(&self) -> usize {
        self.encoder_blocks.first().map_or(0, |t| t.0) + self.encoder_cloud_mlp.iter().sum::<usize>()
    }

    fn block(&self, t: Triplet, direction: Direction) -> PVBlockConfig {
        PVBlockConfig {
            channels: t.0,
            num_blocks: t.1,
            voxel_resolution: t.2,
            kernel_size: self.kernel_size,
            dropout_rate: self.dropout_rate,
            direction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_blocks.is_empty() || self.decoder_blocks.is_empty() {
            return Err(Error::Config("encoder and decoder need at least one stage".into()));
        }
        if self.encoder_cloud_mlp.is_empty() {
            return Err(Error::Config("encoder cloud MLP needs at least one layer".into()));
        }
        for (name, v) in [
            ("global_width", self.global_width),
            ("decoder_width", self.decoder_width),
            ("n_points", self.n_points),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.encoder_cloud_mlp.contains(&0) || self.decoder_fine_mlp.contains(&0) {
            return Err(Error::Config("MLP widths must be positive".into()));
        }
        for &t in &self.encoder_blocks {
            self.block(t, Direction::Encode).validate()?;
        }
        for &t in &self.decoder_blocks {
            self.block(t, Direction::Decode).validate()?;
        }
        Ok(())
    }

    /// Apply one config-file entry. Returns `false` for keys this type does not own.
    pub fn apply(&mut self, e: &kv::Entry) -> Result<bool> {
        match e.key.as_str() {
            "encoder_blocks" => self.encoder_blocks = parse_triplets(e)?,
            "decoder_blocks" => self.decoder_blocks = parse_triplets(e)?,
            "global_width" => self.global_width = e.parse()?,
            "decoder_width" => self.decoder_width = e.parse()?,
            "encoder_cloud_mlp" => self.encoder_cloud_mlp = e.list()?,
            "decoder_fine_mlp" => self.decoder_fine_mlp = e.list()?,
            "n_points" => self.n_points = e.parse()?,
            "kernel_size" => self.kernel_size = e.parse()?,
            "dropout" => self.dropout_rate = e.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parse a complete model file on top of `base`. `preset = name` switches
    /// the base and must come first.
    pub fn parse(text: &str, base: ModelConfig) -> Result<Self> {
        let mut cfg = base;
        for (i, e) in kv::parse(text)?.iter().enumerate() {
            if e.key == "preset" {
                if i != 0 {
                    return Err(e.error("preset must be the first entry"));
                }
                cfg = Self::preset(&e.value).map_err(|err| e.error(err))?;
            } else if !cfg.apply(e)? {
                return Err(e.error("unknown model key"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let trip = |v: &[Triplet]| {
            v.iter()
                .map(|t| format!("({},{},{})", t.0, t.1, t.2))
                .collect::<Vec<_>>()
                .join(",")
        };
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "encoder_blocks = {}", trip(&self.encoder_blocks));
        let _ = writeln!(s, "global_width = {}", self.global_width);
        let _ = writeln!(s, "encoder_cloud_mlp = {}", list(&self.encoder_cloud_mlp));
        let _ = writeln!(s, "decoder_blocks = {}", trip(&self.decoder_blocks));
        let _ = writeln!(s, "decoder_width = {}", self.decoder_width);
        let _ = writeln!(s, "decoder_fine_mlp = {}", list(&self.decoder_fine_mlp));
        let _ = writeln!(s, "n_points = {}", self.n_points);
        let _ = writeln!(s, "kernel_size = {}", self.kernel_size);
        let _ = writeln!(s, "dropout = {}", self.dropout_rate);
        s
    }
}

/// `(c,b,r),(c,b,r),...`, whitespace allowed.
fn parse_triplets(e: &kv::Entry) -> Result<Vec<Triplet>> {
    let compact: String = e.value.chars().filter(|c| !c.is_whitespace()).collect();
    let inner = compact
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| e.error("expected (channels,blocks,resolution),..."))?;
    inner
        .split("),(")
        .map(|t| {
            let nums: Vec<usize> = t
                .split(',')
                .map(|x| x.parse().map_err(|_| e.error(format!("bad number {x:?}"))))
                .collect::<Result<_>>()?;
            match nums.as_slice() {
                [c, b, r] => Ok((*c, *b, *r)),
                _ => Err(e.error(format!("triplet needs three numbers, got {t:?}"))),
            }
        })
        .collect()
}

/// Deterministic parameter initialization.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Parameters> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Parameters::new();
    let mut cin = 3;
    let mut index = 0;
    for &t in &config.encoder_blocks {
        init_block_params(&mut p, &config.block(t, Direction::Encode), cin, "enc", index, &mut rng);
        cin = t.0;
        index += t.1;
    }
    let last = cin;
    p.init_linear("enc.global", last, config.global_width, &mut rng);
    p.init_bn("enc.global_bn", config.global_width);
    let mut c = last;
    for (j, &w) in config.encoder_cloud_mlp.iter().enumerate() {
        p.init_linear(&format!("enc.cloud{j}"), c, w, &mut rng);
        p.init_bn(&format!("enc.cloud{j}_bn"), w);
        c = w;
    }
    let mut cin = config.embedding_dim();
    let mut index = 0;
    for &t in &config.decoder_blocks {
        init_block_params(&mut p, &config.block(t, Direction::Decode), cin, "dec", index, &mut rng);
        cin = t.0;
        index += t.1;
    }
    p.init_linear("dec.fuse", cin, config.decoder_width, &mut rng);
    p.init_bn("dec.fuse_bn", config.decoder_width);
    let mut c = config.decoder_width;
    for (j, &w) in config.decoder_fine_mlp.iter().enumerate() {
        p.init_linear(&format!("dec.fine{j}"), c, w, &mut rng);
        p.init_bn(&format!("dec.fine{j}_bn"), w);
        c = w;
    }
    p.init_linear("dec.head", c, 3, &mut rng);
    Ok(p)
}

/// Encoder output as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    /// `global_width` vector.
    pub global: Var,
    /// `n × per_point_dim` matrix.
    pub per_point: Var,
}

fn check_count(config: &ModelConfig, n: usize, what: &str) -> Result<()> {
    if n != config.n_points {
        return Err(Error::Contract(format!(
            "{what} has {n} points but the model is configured for {}",
            config.n_points
        )));
    }
    Ok(())
}

pub fn encode(ctx: &mut FwdCtx<'_, '_>, coords: &[Point], config: &ModelConfig) -> Result<Embedding> {
    Ok(encode_batch(ctx, &[coords], config)?[0])
}

/// Encode a batch; train-mode batch norms pool statistics over all clouds.
pub fn encode_batch(ctx: &mut FwdCtx<'_, '_>, coords: &[&[Point]], config: &ModelConfig) -> Result<Vec<Embedding>> {
    for c in coords {
        check_count(config, c.len(), "input cloud")?;
    }
    let mut x: Vec<Var> = coords.iter().map(|c| ctx.g.constant(coords_to_tensor(c))).collect();
    let mut first = None;
    let mut index = 0;
    for &t in &config.encoder_blocks {
        x = pvconv_block(ctx, &x, coords, &config.block(t, Direction::Encode), index)?;
        index += t.1;
        first.get_or_insert_with(|| x.clone());
    }
    let g = ctx.linear(&x, "enc.global")?;
    let g = ctx.batch_norm(&g, "enc.global_bn", 1)?;
    let g = ctx.relu(&g);
    let global: Vec<Var> = g.iter().map(|&v| ctx.g.max_rows(v)).collect::<Result<_>>()?;
    let mut parts = vec![first.expect("at least one encoder stage")];
    let mut h = x;
    for j in 0..config.encoder_cloud_mlp.len() {
        h = ctx.shared_mlp(&h, &format!("enc.cloud{j}"))?;
        parts.push(h.clone());
    }
    (0..coords.len())
        .map(|k| {
            let cols: Vec<Var> = parts.iter().map(|p| p[k]).collect();
            Ok(Embedding {
                global: global[k],
                per_point: ctx.g.concat_cols(&cols)?,
            })
        })
        .collect()
}

/// Returns the `n × 3` predicted coordinates, one per anchor.
pub fn decode(ctx: &mut FwdCtx<'_, '_>, emb: &Embedding, anchors: &[Point], config: &ModelConfig) -> Result<Var> {
    Ok(decode_batch(ctx, std::slice::from_ref(emb), &[anchors], config)?[0])
}

pub fn decode_batch(
    ctx: &mut FwdCtx<'_, '_>,
    embs: &[Embedding],
    anchors: &[&[Point]],
    config: &ModelConfig,
) -> Result<Vec<Var>> {
    let mut x = Vec::with_capacity(embs.len());
    for (emb, a) in embs.iter().zip(anchors) {
        let n = ctx.g.value(emb.per_point).shape()[0];
        if a.len() != n {
            return Err(Error::Contract(format!(
                "decoder got {} anchors for an embedding of {n} points",
                a.len()
            )));
        }
        let global = ctx.g.broadcast_rows(emb.global, n)?;
        x.push(ctx.g.concat_cols(&[global, emb.per_point])?);
    }
    let mut index = 0;
    for &t in &config.decoder_blocks {
        x = pvdeconv_block(ctx, &x, anchors, &config.block(t, Direction::Decode), index)?;
        index += t.1;
    }
    x = ctx.shared_mlp(&x, "dec.fuse")?;
    for j in 0..config.decoder_fine_mlp.len() {
        x = ctx.shared_mlp(&x, &format!("dec.fine{j}"))?;
    }
    ctx.linear(&x, "dec.head")
}

/// Encode then decode with the input coordinates as anchors.
pub fn reconstruct(ctx: &mut FwdCtx<'_, '_>, coords: &[Point], config: &ModelConfig) -> Result<Var> {
    Ok(reconstruct_batch(ctx, &[coords], config)?[0])
}

pub fn reconstruct_batch(ctx: &mut FwdCtx<'_, '_>, coords: &[&[Point]], config: &ModelConfig) -> Result<Vec<Var>> {
    let embs = encode_batch(ctx, coords, config)?;
    decode_batch(ctx, &embs, coords, config)
}

/// Configuration plus parameters, with eval-mode conveniences.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Model { config, params })
    }

    /// Eval-mode reconstruction of one cloud.
    pub fn reconstruct(&self, cloud: &PointCloud) -> Result<PointCloud> {
        PointCloud::new(tensor_to_coords(&self.reconstruct_tensor(cloud.coords())?)?)
    }

    /// Eval-mode reconstruction as an `n × 3` tensor, without the finiteness
    /// check that building a [`PointCloud`] applies.
    pub fn reconstruct_tensor(&self, coords: &[Point]) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &self.params, false);
        let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Eval, 0);
        let out = reconstruct(&mut ctx, coords, &self.config)?;
        Ok(g.value(out).clone())
    }

    /// Eval-mode embedding as `(global, per_point)` tensors.
    pub fn embed(&self, cloud: &PointCloud) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, &self.params, false);
        let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Eval, 0);
        let emb = encode(&mut ctx, cloud.coords(), &self.config)?;
        Ok((g.value(emb.global).clone(), g.value(emb.per_point).clone()))
    }
}
