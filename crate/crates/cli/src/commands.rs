use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use pvdeconv::autodiff::checkpoint::Checkpoint;
use pvdeconv::chamfer::chamfer_kdtree;
use pvdeconv::corruption::{corrupt_cloud, corrupt_mesh, CorruptionSpec};
use pvdeconv::geometry::{
    encode_transform, encode_xyz, load_mesh, norm_sidecar, normalize_mesh, read_pvpc, sample_uniform, write_pvpc,
    MeshFormat,
};
use pvdeconv::kv;
use pvdeconv::model::{Model, ModelConfig};
use pvdeconv::pointvoxel::PointCloud;
use pvdeconv::report::Report;
use pvdeconv::rng::{derive_seed, hash_label};
use pvdeconv::trainer::{
    evaluate, load_model, parse_eval_csv, split_dataset, train, Manifest, ManifestEntry, Split, TrainConfig,
    TrainOptions, MODEL_CONFIG_FILE,
};

use crate::{Failure, Outcome};

type CmdResult = Result<Outcome, Failure>;

#[derive(Parser, Debug)]
#[command(name = "pvdc", version, about = "Point-voxel deconvolution autoencoder for point clouds")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample every mesh in a directory into normalized point-cloud files.
    Sample(SampleArgs),
    /// Apply scan-like corruption to a point cloud or mesh.
    Corrupt(CorruptArgs),
    /// Build a dataset manifest with train/val/test folds.
    Split(SplitArgs),
    /// Train an autoencoder on a manifest.
    Train(TrainArgs),
    /// Score a checkpoint on one fold of a manifest.
    Eval(EvalArgs),
    /// Write the embedding of one cloud.
    Embed(ModelIoArgs),
    /// Reconstruct one cloud and report its Chamfer distance to the input.
    Reconstruct(ModelIoArgs),
    /// Histogram and summary statistics of an eval CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    mesh_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct CorruptionFlags {
    /// Per-axis Gaussian noise standard deviation.
    #[arg(long, default_value_t = 0.03)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    holes: usize,
    #[arg(long, default_value_t = 0.05)]
    hole_radius: f64,
    #[arg(long, default_value_t = 0.5)]
    smooth_lambda: f64,
    #[arg(long, default_value_t = 0)]
    smooth_iters: usize,
}

impl CorruptionFlags {
    fn spec(&self, seed: u64) -> CorruptionSpec {
        CorruptionSpec {
            gaussian_sigma: self.sigma,
            hole_count: self.holes,
            hole_radius: self.hole_radius,
            smoothing_lambda: self.smooth_lambda,
            smoothing_iterations: self.smooth_iters,
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct CorruptArgs {
    /// A `.pvpc` cloud or an OBJ/PLY/STL mesh.
    #[arg(long)]
    input: PathBuf,
    /// Output cloud, `.pvpc` or `.xyz`.
    #[arg(long)]
    out: PathBuf,
    /// Also write the clean sample of a mesh input.
    #[arg(long)]
    clean_out: Option<PathBuf>,
    /// Points sampled from a mesh input.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    corruption: CorruptionFlags,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Files, directories, or `primitive:<name>` sources.
    #[arg(required = true)]
    sources: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train: f64,
    #[arg(long, default_value_t = 0.1)]
    val: f64,
    #[arg(long, default_value_t = 0.1)]
    test: f64,
    /// Corrupted copies per source, each with its own seed.
    #[arg(long, default_value_t = 1)]
    copies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    corruption: CorruptionFlags,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Model preset used as the base: paper or toy.
    #[arg(long, default_value = "paper")]
    preset: String,
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    lr_schedule: Option<String>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// 0 means no limit.
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    keep_last: Option<usize>,
    #[arg(long)]
    queue_depth: Option<usize>,
    /// Any model or training key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Per-model CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `model.cfg` next to the checkpoint.
    #[arg(long)]
    model_config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelIoArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input `.pvpc` cloud.
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `model.cfg` next to the checkpoint.
    #[arg(long)]
    model_config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    eval_csv: PathBuf,
    /// Output directory for histogram.svg, histogram.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "chamfer_normalized")]
    column: String,
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Sample(a) => sample(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Embed(a) => embed(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Report(a) => report(a),
    }
}

fn user(m: impl Into<String>) -> Failure {
    Failure::User(m.into())
}

fn print_config(title: &str, text: &str) {
    println!("# {title}");
    print!("{text}");
    println!();
}

fn kv_text(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let bytes = pvdeconv::fsio::read(path)?;
    String::from_utf8(bytes).map_err(|_| user(format!("{}: not UTF-8 text", path.display())))
}

fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), Failure> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pvpc") => Ok(write_pvpc(path, cloud)?),
        Some("xyz") => Ok(pvdeconv::fsio::write_atomic(path, encode_xyz(cloud).as_bytes())?),
        _ => Err(user(format!("{}: output must end in .pvpc or .xyz", path.display()))),
    }
}

fn is_mesh(path: &Path) -> bool {
    MeshFormat::from_path(path).is_ok()
}

fn is_cloud(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pvpc"))
}

fn sorted_files(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>, Failure> {
    let rd = std::fs::read_dir(dir).map_err(|e| user(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && keep(p))
        .collect();
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sample(a: SampleArgs) -> CmdResult {
    print_config(
        "sample",
        &kv_text(&[
            ("mesh_dir", a.mesh_dir.display().to_string()),
            ("out_dir", a.out_dir.display().to_string()),
            ("n", a.n.to_string()),
            ("seed", a.seed.to_string()),
        ]),
    );
    if a.n == 0 {
        return Err(user("--n must be at least 1"));
    }
    let meshes = sorted_files(&a.mesh_dir, is_mesh)?;
    if meshes.is_empty() {
        return Err(user(format!("{}: no OBJ, PLY or STL files", a.mesh_dir.display())));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| user(format!("{}: {e}", a.out_dir.display())))?;
    let mut outcome = Outcome::default();
    for path in meshes {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let result = (|| -> pvdeconv::Result<PathBuf> {
            let mesh = load_mesh(&path, MeshFormat::from_path(&path)?)?;
            let (mesh, transform) = normalize_mesh(&mesh)?;
            let cloud = sample_uniform(&mesh, a.n, derive_seed(a.seed, hash_label(&name)))?;
            let out = a.out_dir.join(format!("{}.pvpc", file_stem(&path)));
            write_pvpc(&out, &cloud)?;
            pvdeconv::fsio::write_atomic(&norm_sidecar(&out), encode_transform(&transform).as_bytes())?;
            Ok(out)
        })();
        match result {
            Ok(out) => println!("{name} -> {}", out.display()),
            Err(e) => {
                eprintln!("warning: skipping {name}: {e}");
                outcome.warnings += 1;
            }
        }
    }
    Ok(outcome)
}

fn corruption_text(c: &CorruptionFlags) -> Vec<(&'static str, String)> {
    vec![
        ("sigma", c.sigma.to_string()),
        ("holes", c.holes.to_string()),
        ("hole_radius", c.hole_radius.to_string()),
        ("smooth_lambda", c.smooth_lambda.to_string()),
        ("smooth_iters", c.smooth_iters.to_string()),
    ]
}

fn corrupt(a: CorruptArgs) -> CmdResult {
    let mut cfg = vec![
        ("input", a.input.display().to_string()),
        ("out", a.out.display().to_string()),
        ("n", a.n.to_string()),
        ("seed", a.seed.to_string()),
    ];
    cfg.extend(corruption_text(&a.corruption));
    print_config("corrupt", &kv_text(&cfg));
    let spec = a.corruption.spec(a.seed);
    let (clean, input) = if is_cloud(&a.input) {
        if spec.smoothing_iterations > 0 {
            return Err(user("mesh smoothing needs a mesh input"));
        }
        let cloud = read_pvpc(&a.input)?;
        let out = corrupt_cloud(&cloud, &spec)?;
        (cloud, out)
    } else {
        let mesh = load_mesh(&a.input, MeshFormat::from_path(&a.input)?)?;
        corrupt_mesh(&normalize_mesh(&mesh)?.0, a.n, &spec)?
    };
    write_cloud(&a.out, &input)?;
    if let Some(p) = &a.clean_out {
        write_cloud(p, &clean)?;
    }
    println!("wrote {} points to {}", input.len(), a.out.display());
    Ok(Outcome::default())
}

/// Path as stored in a manifest: relative to `base` when below it.
fn manifest_path(path: &Path, base: &Path) -> Result<String, Failure> {
    let full = path.canonicalize().map_err(|e| user(format!("{}: {e}", path.display())))?;
    let rel = full.strip_prefix(base).map(Path::to_path_buf).unwrap_or(full);
    rel.to_str()
        .map(str::to_string)
        .ok_or_else(|| user(format!("{}: path is not UTF-8", rel.display())))
}

fn split(a: SplitArgs) -> CmdResult {
    let mut cfg = vec![
        ("sources", a.sources.join(" ")),
        ("out", a.out.display().to_string()),
        ("train", a.train.to_string()),
        ("val", a.val.to_string()),
        ("test", a.test.to_string()),
        ("copies", a.copies.to_string()),
        ("seed", a.seed.to_string()),
    ];
    cfg.extend(corruption_text(&a.corruption));
    print_config("split", &kv_text(&cfg));
    if a.copies == 0 {
        return Err(user("--copies must be at least 1"));
    }
    let out_dir = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| user(format!("{}: {e}", out_dir.display())))?;
    let base = out_dir.canonicalize().map_err(|e| user(format!("{}: {e}", out_dir.display())))?;

    let mut sources: Vec<(String, String)> = Vec::new();
    for s in &a.sources {
        if let Some(name) = s.strip_prefix("primitive:") {
            pvdeconv::geometry::primitives::by_name(name)?;
            sources.push((name.to_string(), s.clone()));
            continue;
        }
        let p = Path::new(s);
        if p.is_dir() {
            for f in sorted_files(p, |f| is_mesh(f) || is_cloud(f))? {
                sources.push((file_stem(&f), manifest_path(&f, &base)?));
            }
        } else if p.is_file() {
            sources.push((file_stem(p), manifest_path(p, &base)?));
        } else {
            return Err(user(format!("{s}: no such file or directory")));
        }
    }
    if sources.is_empty() {
        return Err(user("no sources found"));
    }
    let mut entries = Vec::new();
    let mut used = std::collections::HashSet::new();
    for (stem, path) in &sources {
        for copy in 0..a.copies {
            let mut id = if a.copies > 1 { format!("{stem}-{copy}") } else { stem.clone() };
            let mut k = 1;
            while !used.insert(id.clone()) {
                id = format!("{stem}-{copy}.{k}");
                k += 1;
            }
            let spec = a.corruption.spec(derive_seed(a.seed, entries.len() as u64));
            spec.validate()?;
            entries.push(ManifestEntry {
                id,
                split: Split::Train,
                path: path.clone(),
                corruption: spec,
            });
        }
    }
    let entries = split_dataset(entries, [a.train, a.val, a.test], a.seed)?;
    let manifest = Manifest { entries, base_dir: base };
    manifest.save(&a.out)?;
    for s in [Split::Train, Split::Val, Split::Test] {
        println!("{}: {}", s.as_str(), manifest.fold(s).len());
    }
    Ok(Outcome::default())
}

/// Flags become `key = value` text applied after the config files.
fn train_overrides(a: &TrainArgs) -> Result<Vec<kv::Entry>, Failure> {
    let mut lines: Vec<String> = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            lines.push(format!("{k} = {v}"));
        }
    };
    push("n_points", a.n_points.map(|v| v.to_string()));
    push("dropout", a.dropout.map(|v| v.to_string()));
    push("epochs", a.epochs.map(|v| v.to_string()));
    push("batch_size", a.batch_size.map(|v| v.to_string()));
    push("learning_rate", a.learning_rate.map(|v| v.to_string()));
    push("beta1", a.beta1.map(|v| v.to_string()));
    push("beta2", a.beta2.map(|v| v.to_string()));
    push("adam_eps", a.adam_eps.map(|v| v.to_string()));
    push("lr_schedule", a.lr_schedule.clone());
    push("eval_every", a.eval_every.map(|v| v.to_string()));
    push("seed", a.seed.map(|v| v.to_string()));
    push("max_steps", a.max_steps.map(|v| v.to_string()));
    push("keep_last", a.keep_last.map(|v| v.to_string()));
    push("queue_depth", a.queue_depth.map(|v| v.to_string()));
    for s in &a.set {
        if !s.contains('=') {
            return Err(user(format!("--set expects KEY=VALUE, got {s:?}")));
        }
        lines.push(s.clone());
    }
    kv::parse(&lines.join("\n")).map_err(|e| user(format!("command-line overrides: {e}")))
}

fn resolve_train_configs(a: &TrainArgs) -> Result<(ModelConfig, TrainConfig), Failure> {
    let base = ModelConfig::preset(&a.preset)?;
    let mut model = match &a.model_config {
        Some(p) => ModelConfig::parse(&read_text(p)?, base).map_err(|e| user(format!("{}: {e}", p.display())))?,
        None => base,
    };
    let mut tc = match &a.train_config {
        Some(p) => TrainConfig::parse(&read_text(p)?, TrainConfig::default())
            .map_err(|e| user(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    for e in train_overrides(a)? {
        if !model.apply(&e)? && !tc.apply(&e)? {
            return Err(user(format!("unknown configuration key {:?}", e.key)));
        }
    }
    model.validate()?;
    tc.validate()?;
    Ok((model, tc))
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let (model, tc) = resolve_train_configs(&a)?;
    print_config("model", &model.to_text());
    print_config("training", &tc.to_text());
    let manifest = Manifest::load(&a.manifest)?;

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    // A second handler registration fails only inside tests that call run twice.
    let _ = ctrlc::set_handler(move || {
        eprintln!("interrupt received, saving checkpoint");
        flag.store(true, Ordering::SeqCst);
    });
    let opts = TrainOptions {
        resume: a.resume,
        stop: Some(stop),
        on_row: Some(Box::new(|row| {
            if row.val_loss.is_some() || row.step % 50 == 0 {
                let val = row.val_loss.map(|v| format!(" val {v:.6e}")).unwrap_or_default();
                println!("step {} epoch {} loss {:.6e}{val}", row.step, row.epoch, row.train_loss);
            }
        })),
    };
    let out = train(&manifest, &model, &tc, &a.out, opts)?;
    println!("steps completed: {}", out.state.step);
    if out.state.best_val.is_finite() {
        println!("best validation loss: {:.6e}", out.state.best_val);
    }
    if out.interrupted {
        eprintln!("warning: training interrupted; resume with --resume");
        return Ok(Outcome { warnings: 1 });
    }
    Ok(Outcome::default())
}

fn model_for(checkpoint: &Path, explicit: &Option<PathBuf>) -> Result<Model, Failure> {
    let cfg_path = match explicit {
        Some(p) => p.clone(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(MODEL_CONFIG_FILE),
    };
    let text = read_text(&cfg_path)?;
    let config =
        ModelConfig::parse(&text, ModelConfig::paper()).map_err(|e| user(format!("{}: {e}", cfg_path.display())))?;
    Ok(load_model(config, checkpoint)?)
}

fn eval(a: EvalArgs) -> CmdResult {
    print_config(
        "eval",
        &kv_text(&[
            ("checkpoint", a.checkpoint.display().to_string()),
            ("manifest", a.manifest.display().to_string()),
            ("split", a.split.clone()),
            ("out", a.out.display().to_string()),
        ]),
    );
    let split = Split::parse(&a.split).ok_or_else(|| user(format!("unknown split {:?}", a.split)))?;
    let model = model_for(&a.checkpoint, &a.model_config)?;
    let manifest = Manifest::load(&a.manifest)?;
    let report = evaluate(&manifest, split, model.config.n_points, &model)?;
    pvdeconv::fsio::write_atomic(&a.out, report.to_csv().as_bytes())?;
    for (label, s) in [("raw", report.raw_summary()), ("normalized", report.normalized_summary())] {
        if let Some(s) = s {
            println!("chamfer {label}: mean {:.6e} std {:.6e} (n = {})", s.mean, s.std, report.rows.len());
        }
    }
    for (id, why) in &report.missing {
        eprintln!("warning: {id} skipped: {why}");
    }
    Ok(Outcome {
        warnings: report.missing.len(),
    })
}

fn load_input(a: &ModelIoArgs, model: &Model) -> Result<PointCloud, Failure> {
    let cloud = read_pvpc(&a.cloud)?;
    if cloud.len() != model.config.n_points {
        return Err(user(format!(
            "{} has {} points but the model expects {}",
            a.cloud.display(),
            cloud.len(),
            model.config.n_points
        )));
    }
    Ok(cloud)
}

fn io_config(title: &str, a: &ModelIoArgs) {
    print_config(
        title,
        &kv_text(&[
            ("checkpoint", a.checkpoint.display().to_string()),
            ("cloud", a.cloud.display().to_string()),
            ("out", a.out.display().to_string()),
        ]),
    );
}

fn embed(a: ModelIoArgs) -> CmdResult {
    io_config("embed", &a);
    let model = model_for(&a.checkpoint, &a.model_config)?;
    let cloud = load_input(&a, &model)?;
    let (global, per_point) = model.embed(&cloud)?;
    println!("global {:?}, per_point {:?}", global.shape(), per_point.shape());
    let mut ck = Checkpoint::new();
    ck.push("global", global);
    ck.push("per_point", per_point);
    ck.save(&a.out)?;
    Ok(Outcome::default())
}

fn reconstruct(a: ModelIoArgs) -> CmdResult {
    io_config("reconstruct", &a);
    let model = model_for(&a.checkpoint, &a.model_config)?;
    let cloud = load_input(&a, &model)?;
    let out = model.reconstruct(&cloud)?;
    write_cloud(&a.out, &out)?;
    let r = chamfer_kdtree(out.coords(), cloud.coords())?;
    println!("chamfer raw {:.6e} normalized {:.6e}", r.value, r.normalized());
    Ok(Outcome::default())
}

fn report(a: ReportArgs) -> CmdResult {
    print_config(
        "report",
        &kv_text(&[
            ("eval_csv", a.eval_csv.display().to_string()),
            ("out", a.out.display().to_string()),
            ("column", a.column.clone()),
        ]),
    );
    let rows = parse_eval_csv(&read_text(&a.eval_csv)?, &a.column)?;
    if rows.is_empty() {
        return Err(user(format!("{}: no rows", a.eval_csv.display())));
    }
    let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let report = Report::new(&a.column, &values)?;
    std::fs::create_dir_all(&a.out).map_err(|e| user(format!("{}: {e}", a.out.display())))?;
    let write = |name: &str, text: String| pvdeconv::fsio::write_atomic(&a.out.join(name), text.as_bytes());
    write("histogram.svg", report.to_svg())?;
    write("histogram.csv", report.histogram.to_csv())?;
    write("summary.json", report.summary_json())?;
    print!("{}", report.summary_json());
    Ok(Outcome::default())
}
