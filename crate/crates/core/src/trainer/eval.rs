use std::fmt::Write;

use rayon::prelude::*;

use super::data::{PairFactory, PairSample};
use super::manifest::{Manifest, Split};
use crate::chamfer::chamfer_kdtree;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pointvoxel::PointCloud;

/// Anything that maps an input cloud to a reconstruction.
pub trait Reconstructor: Sync {
    fn reconstruct(&self, input: &PointCloud) -> Result<PointCloud>;
}

impl Reconstructor for Model {
    fn reconstruct(&self, input: &PointCloud) -> Result<PointCloud> {
        Model::reconstruct(self, input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    /// Sum of squared nearest-neighbour distances in both directions.
    pub raw: f64,
    /// Each direction averaged over its own points.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Summary {
            count: values.len(),
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Entries that could not be loaded, with the reason.
    pub missing: Vec<(String, String)>,
}

pub const EVAL_CSV_HEADER: &str = "id,chamfer_raw,chamfer_normalized";

impl EvalReport {
    pub fn raw_summary(&self) -> Option<Summary> {
        Summary::of(&self.rows.iter().map(|r| r.raw).collect::<Vec<_>>())
    }

    pub fn normalized_summary(&self) -> Option<Summary> {
        Summary::of(&self.rows.iter().map(|r| r.normalized).collect::<Vec<_>>())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{EVAL_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:e},{:e}", r.id, r.raw, r.normalized);
        }
        s
    }
}

/// Parse a per-model CSV. A header row is required; the `column` named
/// there is returned for every data row.
pub fn parse_eval_csv(text: &str, column: &str) -> Result<Vec<(String, f64)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse_line(1, "empty CSV"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let idx = cols
        .iter()
        .position(|c| *c == column)
        .ok_or_else(|| Error::parse_line(1, format!("no column {column:?} in header {header:?}")))?;
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::parse_line(
                    i + 1,
                    format!("expected {} fields, found {}", cols.len(), fields.len()),
                ));
            }
            let v: f64 = fields[idx]
                .parse()
                .map_err(|_| Error::parse_line(i + 1, format!("bad number {:?}", fields[idx])))?;
            if !v.is_finite() {
                return Err(Error::parse_line(i + 1, "non-finite value"));
            }
            Ok((fields[0].to_string(), v))
        })
        .collect()
}

pub(crate) fn score(model: &dyn Reconstructor, pair: &PairSample) -> Result<EvalRow> {
    let out = model.reconstruct(&pair.input)?;
    let r = chamfer_kdtree(out.coords(), pair.target.coords())?;
    Ok(EvalRow {
        id: pair.id.clone(),
        raw: r.value,
        normalized: r.normalized(),
    })
}

/// Eval-mode reconstruction of every entry of a fold. Entries whose source
/// cannot be loaded are listed in `missing` and skipped.
pub fn evaluate(manifest: &Manifest, split: Split, n_points: usize, model: &dyn Reconstructor) -> Result<EvalReport> {
    let fold = manifest.fold(split);
    if fold.is_empty() {
        return Err(Error::Contract(format!("the {} fold is empty", split.as_str())));
    }
    let factory = PairFactory::new(manifest, n_points);
    let results: Vec<Result<std::result::Result<EvalRow, (String, String)>>> = fold
        .par_iter()
        .map(|e| match factory.pair(e) {
            Ok(pair) => score(model, &pair).map(Ok),
            Err(err) => Ok(Err((e.id.clone(), err.to_string()))),
        })
        .collect();
    let mut report = EvalReport::default();
    for r in results {
        match r? {
            Ok(row) => report.rows.push(row),
            Err(missing) => report.missing.push(missing),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_statistics() {
        let s = Summary::of(&[1e-3, 2e-3, 3e-3]).unwrap();
        assert!((s.mean - 2e-3).abs() < 1e-15);
        assert!((s.std - 0.816_496_580_927_726e-3).abs() < 1e-15);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn csv_roundtrip() {
        let report = EvalReport {
            rows: vec![
                EvalRow { id: "a".into(), raw: 1.5, normalized: 0.25 },
                EvalRow { id: "b".into(), raw: 3e-7, normalized: 1e-9 },
            ],
            missing: vec![],
        };
        let parsed = parse_eval_csv(&report.to_csv(), "chamfer_normalized").unwrap();
        assert_eq!(parsed, vec![("a".to_string(), 0.25), ("b".to_string(), 1e-9)]);
        assert!(parse_eval_csv("id,x\na,1,2\n", "x").is_err());
        assert!(parse_eval_csv("", "x").is_err());
        assert!(parse_eval_csv("id,x\na,nan\n", "x").is_err());
    }
}
