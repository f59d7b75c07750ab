//! Dataset manifest: a versioned header line followed by one tab-separated
//! `key=value` record per entry.
//!
//! ```text
//! PVDC-MANIFEST 1
//! id=cube_0<TAB>split=train<TAB>path=primitive:cube<TAB>seed=17<TAB>sigma=0.03<TAB>holes=0<TAB>hole_radius=0.05<TAB>smooth_lambda=0.5<TAB>smooth_iters=0
//! ```
//!
//! `path` is a mesh file (`.obj`, `.ply`, `.stl`), a point-cloud file
//! (`.pvpc`) or `primitive:<name>`; relative paths resolve against the
//! manifest's directory. Lines starting with `#` and blank lines are skipped.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corruption::CorruptionSpec;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "PVDC-MANIFEST";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub path: String,
    pub corruption: CorruptionSpec,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory used to resolve relative entry paths.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn fold(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER} {MANIFEST_VERSION}\n");
        for e in &self.entries {
            let c = &e.corruption;
            let _ = writeln!(
                s,
                "id={}\tsplit={}\tpath={}\tseed={}\tsigma={}\tholes={}\thole_radius={}\tsmooth_lambda={}\tsmooth_iters={}",
                e.id,
                e.split.as_str(),
                e.path,
                c.seed,
                c.gaussian_sigma,
                c.hole_count,
                c.hole_radius,
                c.smoothing_lambda,
                c.smoothing_iterations
            );
        }
        s
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Manifest> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l.trim())
            .ok_or_else(|| Error::parse_line(1, "empty manifest"))?;
        let version = header
            .strip_prefix(MANIFEST_HEADER)
            .map(str::trim)
            .ok_or_else(|| Error::parse_line(1, format!("expected header '{MANIFEST_HEADER} {MANIFEST_VERSION}'")))?;
        if version != MANIFEST_VERSION.to_string() {
            return Err(Error::parse_line(1, format!("unsupported manifest version {version:?}")));
        }
        let mut entries = Vec::new();
        let mut ids = std::collections::HashSet::new();
        for (i, line) in lines {
            let ln = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let entry = parse_record(line, ln)?;
            if !ids.insert(entry.id.clone()) {
                return Err(Error::parse_line(ln, format!("duplicate id {}", entry.id)));
            }
            entries.push(entry);
        }
        Ok(Manifest {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let bytes = crate::fsio::read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::parse_offset(e.valid_up_to(), "invalid UTF-8"))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(text, base).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsio::write_atomic(path, self.to_text().as_bytes())
    }
}

fn parse_record(line: &str, ln: usize) -> Result<ManifestEntry> {
    let mut id = None;
    let mut split = None;
    let mut path = None;
    let mut c = CorruptionSpec::default();
    let mut seed = None;
    for field in line.split('\t') {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::parse_line(ln, format!("field {field:?} is not key=value")))?;
        let num = |what: &str| Error::parse_line(ln, format!("bad {what} value {v:?}"));
        match k {
            "id" => id = Some(v.to_string()),
            "split" => split = Some(Split::parse(v).ok_or_else(|| num("split"))?),
            "path" => path = Some(v.to_string()),
            "seed" => seed = Some(v.parse().map_err(|_| num("seed"))?),
            "sigma" => c.gaussian_sigma = v.parse().map_err(|_| num("sigma"))?,
            "holes" => c.hole_count = v.parse().map_err(|_| num("holes"))?,
            "hole_radius" => c.hole_radius = v.parse().map_err(|_| num("hole_radius"))?,
            "smooth_lambda" => c.smoothing_lambda = v.parse().map_err(|_| num("smooth_lambda"))?,
            "smooth_iters" => c.smoothing_iterations = v.parse().map_err(|_| num("smooth_iters"))?,
            other => return Err(Error::parse_line(ln, format!("unknown field {other:?}"))),
        }
    }
    let missing = |f: &str| Error::parse_line(ln, format!("record lacks {f}"));
    let id: String = id.ok_or_else(|| missing("id"))?;
    if id.is_empty() || id.contains([',', '"', '\n']) {
        return Err(Error::parse_line(ln, format!("invalid id {id:?}")));
    }
    c.seed = seed.ok_or_else(|| missing("seed"))?;
    c.validate().map_err(|e| Error::parse_line(ln, e.to_string()))?;
    Ok(ManifestEntry {
        id,
        split: split.ok_or_else(|| missing("split"))?,
        path: path.filter(|p| !p.is_empty()).ok_or_else(|| missing("path"))?,
        corruption: c,
    })
}

/// Deterministically shuffle and assign folds contiguously: validation and
/// test get `round(n·p)` entries (at least one each when their proportion is
/// positive), training gets the rest.
pub fn split_dataset(mut entries: Vec<ManifestEntry>, proportions: [f64; 3], seed: u64) -> Result<Vec<ManifestEntry>> {
    let total: f64 = proportions.iter().sum();
    if proportions.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split proportions {proportions:?} must be in [0,1] and sum to 1")));
    }
    let n = entries.len();
    let folds = proportions.iter().filter(|&&p| p > 0.0).count();
    if n < folds {
        return Err(Error::Config(format!("{n} entries cannot fill {folds} folds")));
    }
    let size = |p: f64| if p > 0.0 { ((n as f64 * p).round() as usize).max(1) } else { 0 };
    let (n_val, n_test) = (size(proportions[1]), size(proportions[2]));
    if n_val + n_test > n || (proportions[0] > 0.0 && n_val + n_test == n) {
        return Err(Error::Config(format!("{n} entries are too few for proportions {proportions:?}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n - n_val - n_test;
    for (pos, &i) in order.iter().enumerate() {
        entries[i].split = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(entries)
}
