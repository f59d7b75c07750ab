use rand::Rng;

use super::{Direction, PVBlockConfig, Point};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::layers::FwdCtx;
use crate::params::Parameters;

/// Features produced by a block stage; coordinates are never touched.
pub type BlockOutput = Var;

fn unit_prefix(root: &str, index: usize) -> String {
    format!("{root}.block{index}")
}

/// Create parameters for every repetition of a stage whose units are named
/// `{root}.block{first_index}`, `{root}.block{first_index + 1}`, ...
pub fn init_block_params(
    params: &mut Parameters,
    config: &PVBlockConfig,
    in_channels: usize,
    root: &str,
    first_index: usize,
    rng: &mut impl Rng,
) {
    let k = config.kernel_size;
    let k3 = k * k * k;
    let c = config.channels;
    let mut cin = in_channels;
    for rep in 0..config.num_blocks {
        let prefix = unit_prefix(root, first_index + rep);
        match config.direction {
            Direction::Encode => {
                params.init_uniform(format!("{prefix}.conv.weight"), &[c, cin, k, k, k], cin * k3, c * k3, rng);
                params.insert(format!("{prefix}.conv.bias"), crate::params::ParamKind::Learnable, crate::autodiff::Tensor::zeros(&[c]));
                params.init_bn(&format!("{prefix}.conv_bn"), c);
            }
            Direction::Decode => {
                params.init_uniform(format!("{prefix}.deconv.weight"), &[cin, c, k, k, k], cin * k3, c * k3, rng);
                params.insert(format!("{prefix}.deconv.bias"), crate::params::ParamKind::Learnable, crate::autodiff::Tensor::zeros(&[c]));
                params.init_bn(&format!("{prefix}.deconv_bn"), c);
            }
        }
        params.init_linear(&format!("{prefix}.mlp"), cin, c, rng);
        params.init_bn(&format!("{prefix}.mlp_bn"), c);
        cin = c;
    }
}

fn check_direction(config: &PVBlockConfig, want: Direction) -> Result<()> {
    config.validate()?;
    if config.direction != want {
        return Err(Error::Contract(format!(
            "block configured for {:?} used as {:?}",
            config.direction, want
        )));
    }
    Ok(())
}

/// Point-voxel convolution stage.
///
/// Each unit fuses, by addition, a coarse branch
/// (voxelize → conv3d → batch norm → ReLU → devoxelize) with a fine branch
/// (shared linear → batch norm → ReLU).
pub fn pvconv_block(
    ctx: &mut FwdCtx<'_, '_>,
    features: &[Var],
    coords: &[&[Point]],
    config: &PVBlockConfig,
    first_index: usize,
) -> Result<Vec<BlockOutput>> {
    check_direction(config, Direction::Encode)?;
    check_batch(features, coords)?;
    let pad = config.kernel_size / 2;
    let mut x = features.to_vec();
    for rep in 0..config.num_blocks {
        let prefix = unit_prefix("enc", first_index + rep);
        let w = ctx.params.var(&format!("{prefix}.conv.weight"))?;
        let b = ctx.params.var(&format!("{prefix}.conv.bias"))?;
        let mut conv = Vec::with_capacity(x.len());
        for (&xi, c) in x.iter().zip(coords) {
            let (grid, _) = ctx.g.voxelize(xi, c, config.voxel_resolution)?;
            conv.push(ctx.g.conv3d(grid, w, b, 1, pad)?);
        }
        let conv = ctx.batch_norm(&conv, &format!("{prefix}.conv_bn"), 0)?;
        let conv = ctx.relu(&conv);
        let fine = ctx.shared_mlp(&x, &format!("{prefix}.mlp"))?;
        x = fuse(ctx, &conv, &fine, coords)?;
    }
    Ok(x)
}

fn check_batch(features: &[Var], coords: &[&[Point]]) -> Result<()> {
    if features.is_empty() || features.len() != coords.len() {
        return Err(Error::Contract(format!(
            "block got {} feature sets for {} coordinate sets",
            features.len(),
            coords.len()
        )));
    }
    Ok(())
}

/// Devoxelize each coarse grid and add it to the fine features.
fn fuse(ctx: &mut FwdCtx<'_, '_>, grids: &[Var], fine: &[Var], coords: &[&[Point]]) -> Result<Vec<Var>> {
    grids
        .iter()
        .zip(fine)
        .zip(coords)
        .map(|((&grid, &f), c)| {
            let coarse = ctx.g.devoxelize(grid, c)?;
            ctx.g.add(coarse, f)
        })
        .collect()
}

/// Point-voxel deconvolution stage.
///
/// Coarse branch: voxelize → transposed conv3d → dropout → batch norm →
/// ReLU → devoxelize. Fine branch: shared transposed MLP → batch norm → ReLU.
/// The point count never changes.
pub fn pvdeconv_block(
    ctx: &mut FwdCtx<'_, '_>,
    features: &[Var],
    coords: &[&[Point]],
    config: &PVBlockConfig,
    first_index: usize,
) -> Result<Vec<BlockOutput>> {
    check_direction(config, Direction::Decode)?;
    check_batch(features, coords)?;
    let pad = config.kernel_size / 2;
    let mut x = features.to_vec();
    for rep in 0..config.num_blocks {
        let prefix = unit_prefix("dec", first_index + rep);
        let w = ctx.params.var(&format!("{prefix}.deconv.weight"))?;
        let b = ctx.params.var(&format!("{prefix}.deconv.bias"))?;
        let mut up = Vec::with_capacity(x.len());
        for (&xi, c) in x.iter().zip(coords) {
            let (grid, _) = ctx.g.voxelize(xi, c, config.voxel_resolution)?;
            up.push(ctx.g.deconv3d(grid, w, b, 1, pad)?);
        }
        let up = ctx.dropout(&up, config.dropout_rate, &format!("{prefix}.dropout"))?;
        let up = ctx.batch_norm(&up, &format!("{prefix}.deconv_bn"), 0)?;
        let up = ctx.relu(&up);
        let fine = ctx.shared_mlp(&x, &format!("{prefix}.mlp"))?;
        x = fuse(ctx, &up, &fine, coords)?;
    }
    Ok(x)
}
