//! Dataset manifests, the training loop, checkpointing and evaluation.

mod adam;
mod data;
mod eval;
mod log;
mod manifest;

pub use adam::{Adam, AdamConfig};
pub use data::{epoch_batches, PairFactory, PairSample};
pub use eval::{evaluate, parse_eval_csv, EvalReport, EvalRow, Reconstructor, Summary, EVAL_CSV_HEADER};
pub use log::{parse_log, LogRow, TrainLog, LOG_HEADER};
pub use manifest::{split_dataset, Manifest, ManifestEntry, Split, MANIFEST_HEADER, MANIFEST_VERSION};

use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::autodiff::checkpoint::Checkpoint;
use crate::autodiff::{Graph, Mode, RunningStats, Scalar, Tensor, Var, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::kv;
use crate::layers::FwdCtx;
use crate::model::{init_params, reconstruct_batch, Model, ModelConfig};
use crate::params::{Bound, ParamKind, Parameters};
use crate::pointvoxel::{coords_to_tensor, tensor_to_coords, Point};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Only `constant` is implemented.
    pub lr_schedule: String,
    /// Validate every this many steps; 0 validates at the end of each epoch.
    pub eval_every: u64,
    pub seed: u64,
    /// Stop after this many optimizer steps in total.
    pub max_steps: Option<u64>,
    /// Epoch checkpoints retained besides `best` and `latest`.
    pub keep_last: usize,
    /// Batches prepared ahead of the optimizer.
    pub queue_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            adam: AdamConfig::default(),
            lr_schedule: "constant".into(),
            eval_every: 0,
            seed: 0,
            max_steps: None,
            keep_last: 3,
            queue_depth: 4,
        }
    }
}

impl TrainConfig {
    /// Full-scale values: 50 epochs at batch size 80.
    pub fn paper() -> Self {
        TrainConfig {
            batch_size: 80,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.queue_depth == 0 {
            return Err(Error::Config("epochs, batch_size and queue_depth must be at least 1".into()));
        }
        if self.lr_schedule != "constant" {
            return Err(Error::Config(format!("unsupported lr_schedule {:?} (constant)", self.lr_schedule)));
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0)
        {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, e: &kv::Entry) -> Result<bool> {
        match e.key.as_str() {
            "epochs" => self.epochs = e.parse()?,
            "batch_size" => self.batch_size = e.parse()?,
            "learning_rate" => self.adam.learning_rate = e.parse()?,
            "beta1" => self.adam.beta1 = e.parse()?,
            "beta2" => self.adam.beta2 = e.parse()?,
            "adam_eps" => self.adam.eps = e.parse()?,
            "lr_schedule" => self.lr_schedule = e.value.clone(),
            "eval_every" => self.eval_every = e.parse()?,
            "seed" => self.seed = e.parse()?,
            "max_steps" => {
                let v: u64 = e.parse()?;
                self.max_steps = (v > 0).then_some(v);
            }
            "keep_last" => self.keep_last = e.parse()?,
            "queue_depth" => self.queue_depth = e.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn parse(text: &str, base: TrainConfig) -> Result<Self> {
        let mut cfg = base;
        for e in kv::parse(text)? {
            if !cfg.apply(&e)? {
                return Err(e.error("unknown training key"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.adam.learning_rate);
        let _ = writeln!(s, "beta1 = {}", self.adam.beta1);
        let _ = writeln!(s, "beta2 = {}", self.adam.beta2);
        let _ = writeln!(s, "adam_eps = {}", self.adam.eps);
        let _ = writeln!(s, "lr_schedule = {}", self.lr_schedule);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "max_steps = {}", self.max_steps.unwrap_or(0));
        let _ = writeln!(s, "keep_last = {}", self.keep_last);
        let _ = writeln!(s, "queue_depth = {}", self.queue_depth);
        s
    }
}

/// Seed stream keys.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

pub const MODEL_CONFIG_FILE: &str = "model.cfg";
pub const TRAIN_CONFIG_FILE: &str = "train.cfg";
pub const LOG_FILE: &str = "train_log.csv";
pub const LATEST_CHECKPOINT: &str = "latest.pvdc";
pub const BEST_CHECKPOINT: &str = "best.pvdc";
pub const NONFINITE_DUMP: &str = "nonfinite_batch.txt";

fn epoch_checkpoint_name(epoch: u64) -> String {
    format!("epoch-{epoch:04}.pvdc")
}

/// Position of the loop and optimizer state that a checkpoint must capture.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Optimizer steps completed.
    pub step: u64,
    pub epoch: u64,
    /// Batches of `epoch` already consumed.
    pub batch_in_epoch: u64,
    pub params: Parameters,
    pub adam: Adam,
    pub best_val: f64,
    pub best_checkpoint: Option<PathBuf>,
    pub seed: u64,
}

/// u64 split into 16-bit limbs so it survives any scalar precision.
fn u64_tensor(v: u64) -> Tensor {
    Tensor::from_vec((0..4).map(|k| ((v >> (16 * k)) & 0xFFFF) as Scalar).collect())
}

fn tensor_u64(t: &Tensor, name: &str) -> Result<u64> {
    if t.numel() != 4 {
        return Err(Error::Contract(format!("checkpoint entry {name} is not a 4-limb integer")));
    }
    Ok(t.data().iter().enumerate().fold(0u64, |acc, (k, &v)| acc | ((v as u64) << (16 * k))))
}

impl TrainState {
    fn fresh(model: &ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        let params = init_params(model, derive_seed(cfg.seed, STREAM_INIT))?;
        let shapes: Vec<&[usize]> = learnable(&params).map(|e| e.tensor.shape()).collect();
        let adam = Adam::new(cfg.adam.clone(), &shapes);
        Ok(TrainState {
            step: 0,
            epoch: 0,
            batch_in_epoch: 0,
            params,
            adam,
            best_val: f64::INFINITY,
            best_checkpoint: None,
            seed: cfg.seed,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.params.to_checkpoint(&mut ck);
        for (i, e) in learnable(&self.params).enumerate() {
            ck.push(format!("adam.m.{}", e.name), self.adam.m[i].clone());
            ck.push(format!("adam.v.{}", e.name), self.adam.v[i].clone());
        }
        ck.push("state.step", u64_tensor(self.step));
        ck.push("state.epoch", u64_tensor(self.epoch));
        ck.push("state.batch_in_epoch", u64_tensor(self.batch_in_epoch));
        ck.push("state.adam_t", u64_tensor(self.adam.t));
        ck.push("state.seed", u64_tensor(self.seed));
        ck.push("state.best_val", Tensor::scalar(self.best_val as Scalar));
        ck
    }

    fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        let get = |name: &str| ck.get(name).ok_or_else(|| Error::Contract(format!("checkpoint lacks {name}")));
        let seed = tensor_u64(get("state.seed")?, "state.seed")?;
        if seed != self.seed {
            return Err(Error::Config(format!(
                "checkpoint was trained with seed {seed}, configuration says {}",
                self.seed
            )));
        }
        self.params.load_from(ck)?;
        let names: Vec<String> = learnable(&self.params).map(|e| e.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            self.adam.m[i] = get(&format!("adam.m.{name}"))?.clone();
            self.adam.v[i] = get(&format!("adam.v.{name}"))?.clone();
        }
        self.step = tensor_u64(get("state.step")?, "state.step")?;
        self.epoch = tensor_u64(get("state.epoch")?, "state.epoch")?;
        self.batch_in_epoch = tensor_u64(get("state.batch_in_epoch")?, "state.batch_in_epoch")?;
        self.adam.t = tensor_u64(get("state.adam_t")?, "state.adam_t")?;
        self.best_val = get("state.best_val")?.item() as f64;
        Ok(())
    }
}

fn learnable(p: &Parameters) -> impl Iterator<Item = &crate::params::ParamEntry> {
    p.entries().iter().filter(|e| e.kind == ParamKind::Learnable)
}

/// Load the model parameters from any training checkpoint.
pub fn load_model(config: ModelConfig, checkpoint: &Path) -> Result<Model> {
    let mut params = init_params(&config, 0)?;
    params.load_from(&Checkpoint::load(checkpoint)?)?;
    Ok(Model { config, params })
}

#[derive(Default)]
pub struct TrainOptions {
    /// Continue from `latest.pvdc` in the output directory.
    pub resume: bool,
    /// Checked after every step; when set, the loop saves and returns.
    pub stop: Option<Arc<AtomicBool>>,
    /// Called with every log row as it is written.
    pub on_row: Option<Box<dyn FnMut(&LogRow) + Send>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Every row of the log, including rows kept from before a resume.
    pub log: Vec<LogRow>,
    pub interrupted: bool,
}

struct StepResult {
    loss: f64,
    loss_raw: f64,
    grads: Vec<Option<Tensor>>,
    observed: Vec<(String, crate::autodiff::BatchNormStats)>,
}

/// Forward and backward for one batch on a single graph, so batch norms see
/// the statistics of the whole batch. The loss is the mean per-sample Chamfer.
fn batch_step(model: &ModelConfig, params: &Parameters, pairs: &[PairSample], seed: u64) -> Result<StepResult> {
    let mut g = Graph::new();
    g.set_finite_checks(true);
    let bound = Bound::bind(&mut g, params, true);
    let mut ctx = FwdCtx::new(&mut g, &bound, Mode::Train, seed);
    let inputs: Vec<&[Point]> = pairs.iter().map(|p| p.input.coords()).collect();
    let outs = reconstruct_batch(&mut ctx, &inputs, model)?;
    let observed = std::mem::take(&mut ctx.observed);
    if let Some(op) = g.first_nonfinite() {
        return Err(Error::Graph(format!("non-finite value first produced by {op}")));
    }
    let b = pairs.len() as Scalar;
    let mut total: Option<Var> = None;
    let mut loss_raw = 0.0;
    for (&out, p) in outs.iter().zip(pairs) {
        let target = g.constant(coords_to_tensor(p.target.coords()));
        let (l, res) = g.chamfer(out, target, true)?;
        loss_raw += res.value / b as f64;
        total = Some(match total {
            Some(t) => g.add(t, l)?,
            None => l,
        });
    }
    let loss = g.scale(total.expect("non-empty batch"), 1.0 / b);
    let value = g.value(loss).item() as f64;
    if !value.is_finite() || g.first_nonfinite().is_some() {
        return Err(Error::Graph(format!(
            "non-finite value first produced by {}",
            g.first_nonfinite().unwrap_or("chamfer")
        )));
    }
    g.backward(loss)?;
    let grads: Vec<Option<Tensor>> = bound.grads(&g);
    // Only learnable entries are optimized; keep their order.
    let grads = params
        .entries()
        .iter()
        .zip(grads)
        .filter(|(e, _)| e.kind == ParamKind::Learnable)
        .map(|(_, g)| g)
        .collect();
    Ok(StepResult {
        loss: value,
        loss_raw,
        grads,
        observed,
    })
}

/// Fold every observed batch statistic into the running stats.
fn update_running_stats(params: &mut Parameters, observed: &[(String, crate::autodiff::BatchNormStats)]) -> Result<()> {
    for (prefix, stats) in observed {
        let mut running: RunningStats = params.running_stats(prefix)?;
        running.update(stats, BN_MOMENTUM);
        params.set_running_stats(prefix, &running)?;
    }
    Ok(())
}

fn validation_loss(model: &ModelConfig, params: &Parameters, pairs: &[PairSample]) -> Result<f64> {
    let m = Model {
        config: model.clone(),
        params: params.clone(),
    };
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|p| {
            let out = m.reconstruct_tensor(p.input.coords())?;
            if !out.is_finite() {
                return Err(Error::Graph(format!("non-finite value in the reconstruction of {}", p.id)));
            }
            let r = crate::chamfer::chamfer_kdtree(&tensor_to_coords(&out)?, p.target.coords())?;
            Ok(r.normalized())
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Write the divergence dump and build the matching error.
fn diverged(out_dir: &Path, step: u64, ids: Vec<String>, msg: &str) -> Error {
    let dump = format!("step {step}\nbatch {}\n{msg}\n", ids.join("\n"));
    match crate::fsio::write_atomic(&out_dir.join(NONFINITE_DUMP), dump.as_bytes()) {
        Ok(()) => Error::NonFinite { step, batch_ids: ids },
        Err(e) => e,
    }
}

struct Batch {
    epoch: u64,
    index: u64,
    last_in_epoch: bool,
    pairs: Result<Vec<PairSample>>,
}

/// Train `model` on the manifest's train fold, validating on its val fold.
///
/// Writes `model.cfg`, `train.cfg`, `train_log.csv`, `latest.pvdc`,
/// `best.pvdc` and per-epoch checkpoints into `out_dir`.
pub fn train(
    manifest: &Manifest,
    model: &ModelConfig,
    cfg: &TrainConfig,
    out_dir: &Path,
    mut opts: TrainOptions,
) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    let train_fold = manifest.fold(Split::Train);
    let val_fold = manifest.fold(Split::Val);
    if train_fold.is_empty() || val_fold.is_empty() {
        return Err(Error::Config("training needs non-empty train and val folds".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    crate::fsio::write_atomic(&out_dir.join(MODEL_CONFIG_FILE), model.to_text().as_bytes())?;
    crate::fsio::write_atomic(&out_dir.join(TRAIN_CONFIG_FILE), cfg.to_text().as_bytes())?;

    let mut state = TrainState::fresh(model, cfg)?;
    if opts.resume {
        state.restore(&Checkpoint::load(&out_dir.join(LATEST_CHECKPOINT))?)?;
        if out_dir.join(BEST_CHECKPOINT).exists() {
            state.best_checkpoint = Some(out_dir.join(BEST_CHECKPOINT));
        }
    }
    let mut log = TrainLog::open(&out_dir.join(LOG_FILE), opts.resume.then_some(state.step))?;
    let clock = Instant::now();
    let wall_offset = log.last_wall_time();

    let factory = PairFactory::new(manifest, model.n_points);
    let val_pairs: Vec<PairSample> = val_fold.par_iter().map(|e| factory.pair(e)).collect::<Result<_>>()?;
    let shuffle_seed = derive_seed(cfg.seed, STREAM_SHUFFLE);
    let dropout_seed = derive_seed(cfg.seed, STREAM_DROPOUT);
    let max_steps = cfg.max_steps.unwrap_or(u64::MAX);
    let mut interrupted = false;

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel::<Batch>(cfg.queue_depth);
        let (start_epoch, start_batch) = (state.epoch, state.batch_in_epoch);
        let factory = &factory;
        let train_fold = &train_fold;
        scope.spawn(move || {
            for epoch in start_epoch..cfg.epochs {
                let batches = epoch_batches(train_fold.len(), cfg.batch_size, shuffle_seed, epoch);
                let skip = if epoch == start_epoch { start_batch as usize } else { 0 };
                let count = batches.len();
                for (index, positions) in batches.into_iter().enumerate().skip(skip) {
                    let pairs = positions.par_iter().map(|&p| factory.pair(train_fold[p])).collect();
                    let batch = Batch {
                        epoch,
                        index: index as u64,
                        last_in_epoch: index + 1 == count,
                        pairs,
                    };
                    if tx.send(batch).is_err() {
                        return;
                    }
                }
            }
        });

        for batch in rx {
            if state.step >= max_steps {
                break;
            }
            let pairs = batch.pairs?;
            let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
            let step_seed = derive_seed(dropout_seed, state.step);
            let result = match batch_step(model, &state.params, &pairs, step_seed) {
                Ok(r) => r,
                Err(Error::Graph(msg)) if msg.starts_with("non-finite") => {
                    return Err(diverged(out_dir, state.step, ids, &msg));
                }
                Err(e) => return Err(e),
            };
            let StepResult { loss, loss_raw, grads, observed } = result;
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(diverged(out_dir, state.step, ids, "non-finite gradient"));
            }
            {
                let mut targets: Vec<&mut Tensor> = state
                    .params
                    .entries_mut()
                    .iter_mut()
                    .filter(|e| e.kind == ParamKind::Learnable)
                    .map(|e| &mut e.tensor)
                    .collect();
                state.adam.step(&mut targets, &grads)?;
            }
            update_running_stats(&mut state.params, &observed)?;

            let logged_step = state.step;
            state.step += 1;
            state.batch_in_epoch = batch.index + 1;
            let epoch_done = batch.last_in_epoch;
            let eval_now = if cfg.eval_every > 0 {
                state.step % cfg.eval_every == 0
            } else {
                epoch_done
            };
            let val_loss = if eval_now {
                match validation_loss(model, &state.params, &val_pairs) {
                    Ok(v) => Some(v),
                    Err(Error::Graph(msg)) if msg.starts_with("non-finite") => {
                        return Err(diverged(out_dir, logged_step, ids, &msg));
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            if epoch_done {
                state.epoch = batch.epoch + 1;
                state.batch_in_epoch = 0;
            }
            if let Some(v) = val_loss {
                if v < state.best_val {
                    state.best_val = v;
                    let path = out_dir.join(BEST_CHECKPOINT);
                    state.to_checkpoint().save(&path)?;
                    state.best_checkpoint = Some(path);
                }
            }
            let row = LogRow {
                step: logged_step,
                epoch: batch.epoch,
                train_loss: loss,
                train_loss_raw: loss_raw,
                val_loss,
                wall_time: wall_offset + clock.elapsed().as_secs_f64(),
            };
            log.append(row.clone())?;
            if let Some(cb) = opts.on_row.as_mut() {
                cb(&row);
            }
            if epoch_done {
                let ck = state.to_checkpoint();
                ck.save(&out_dir.join(epoch_checkpoint_name(batch.epoch)))?;
                ck.save(&out_dir.join(LATEST_CHECKPOINT))?;
                prune_epoch_checkpoints(out_dir, batch.epoch, cfg.keep_last)?;
            }
            if opts.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst)) {
                interrupted = true;
                break;
            }
        }
        Ok(())
    })?;

    state.to_checkpoint().save(&out_dir.join(LATEST_CHECKPOINT))?;
    Ok(TrainOutcome {
        state,
        log: log.rows().to_vec(),
        interrupted,
    })
}

fn prune_epoch_checkpoints(dir: &Path, current: u64, keep: usize) -> Result<()> {
    if current < keep as u64 {
        return Ok(());
    }
    let old = dir.join(epoch_checkpoint_name(current - keep as u64));
    if old.exists() {
        std::fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_roundtrip() {
        let cfg = TrainConfig { max_steps: Some(7), seed: 99, ..TrainConfig::paper() };
        assert_eq!(TrainConfig::parse(&cfg.to_text(), TrainConfig::default()).unwrap(), cfg);
        assert!(TrainConfig::parse("lr_schedule = cosine\n", TrainConfig::default()).is_err());
        assert!(TrainConfig::parse("batch_size = 0\n", TrainConfig::default()).is_err());
        assert!(TrainConfig::parse("momentum = 0.9\n", TrainConfig::default()).is_err());
    }

    #[test]
    fn limb_encoding() {
        for v in [0, 1, 65_535, 65_536, u64::MAX, 0x0123_4567_89AB_CDEF] {
            assert_eq!(tensor_u64(&u64_tensor(v), "x").unwrap(), v);
        }
    }
}
