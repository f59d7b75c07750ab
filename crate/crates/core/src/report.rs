//! Distance-distribution reports: histogram SVG, histogram CSV and a JSON summary.

use std::fmt::Write;

use serde_json::json;

use crate::error::{Error, Result};

pub const MIN_BINS: usize = 10;
const MAX_BINS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis bin count, never below [`MIN_BINS`]. A sample with a
/// single distinct value gets one bin.
pub fn freedman_diaconis_bins(values: &[f64]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if max == min {
        return 1;
    }
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if width <= 0.0 {
        return MIN_BINS;
    }
    (((max - min) / width).ceil() as usize).clamp(MIN_BINS, MAX_BINS)
}

impl Histogram {
    pub fn build(values: &[f64]) -> Result<Histogram> {
        if values.is_empty() {
            return Err(Error::Contract("histogram of no values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("histogram of non-finite values".into()));
        }
        let bins = freedman_diaconis_bins(values);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if max > min { (min, max) } else { (min - 0.5, min + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            // The last bin is closed on the right.
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{:e},{:e},{c}", self.edges[i], self.edges[i + 1]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub column: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub histogram: Histogram,
}

impl Report {
    pub fn new(column: &str, values: &[f64]) -> Result<Report> {
        let histogram = Histogram::build(values)?;
        let s = crate::trainer::Summary::of(values).expect("non-empty");
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Report {
            column: column.to_string(),
            count: values.len(),
            mean: s.mean,
            std: s.std,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            median: quantile(&sorted, 0.5),
            histogram,
        })
    }

    pub fn summary_json(&self) -> String {
        let v = json!({
            "column": self.column,
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "median": self.median,
            "bins": self.histogram.counts.len(),
        });
        serde_json::to_string_pretty(&v).expect("json") + "\n"
    }

    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const L: f64 = 60.0;
        const R: f64 = 20.0;
        const T: f64 = 50.0;
        const B: f64 = 60.0;
        let h = &self.histogram;
        let peak = *h.counts.iter().max().unwrap_or(&1) as f64;
        let (lo, hi) = (h.edges[0], h.edges[h.edges.len() - 1]);
        let x_of = |v: f64| L + (v - lo) / (hi - lo) * (W - L - R);
        let y_of = |c: f64| H - B - c / peak * (H - T - B);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{} (n = {}, mean = {:.4e}, std = {:.4e})</text>"#,
            W / 2.0,
            escape(&self.column),
            self.count,
            self.mean,
            self.std
        );
        for (i, &c) in h.counts.iter().enumerate() {
            let x0 = x_of(h.edges[i]);
            let x1 = x_of(h.edges[i + 1]);
            let y = y_of(c as f64);
            let _ = writeln!(
                s,
                r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#4a7fb5" stroke="white" stroke-width="0.5"/>"##,
                (x1 - x0).max(0.0),
                (H - B - y).max(0.0)
            );
        }
        let mx = x_of(self.mean.clamp(lo, hi));
        let _ = writeln!(
            s,
            r##"<line x1="{mx:.2}" y1="{T}" x2="{mx:.2}" y2="{}" stroke="#c0392b" stroke-dasharray="4 3"/>"##,
            H - B
        );
        let _ = writeln!(
            s,
            r#"<line x1="{L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
            H - B,
            W - R
        );
        let _ = writeln!(s, r#"<line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#, H - B);
        for (v, anchor) in [(lo, "start"), (hi, "end")] {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{v:.3e}</text>"#,
                x_of(v),
                H - B + 16.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{peak}</text>"#,
            L - 6.0,
            T + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">Chamfer distance</text>"#,
            W / 2.0,
            H - 16.0
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_values_summary() {
        let r = Report::new("chamfer_raw", &[1e-3, 2e-3, 3e-3]).unwrap();
        assert!((r.mean - 2e-3).abs() < 1e-15);
        assert_eq!(r.median, 2e-3);
        assert_eq!(r.histogram.counts.len(), MIN_BINS);
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), 3);
        let v: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
        assert!((v["mean"].as_f64().unwrap() - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn single_value_gives_one_bin() {
        let r = Report::new("x", &[4e-3]).unwrap();
        assert_eq!(r.histogram.counts, vec![1]);
        assert_eq!(r.std, 0.0);
        assert!(r.to_svg().ends_with("</svg>\n"));
        assert_eq!(Histogram::build(&[1.0, 1.0, 1.0]).unwrap().counts, vec![3]);
    }

    #[test]
    fn fd_bin_count_matches_hand_value() {
        // 1000 evenly spaced values on [0, 1): IQR ≈ 0.4995, width = 2·IQR/10,
        // so ceil(0.999 / 0.0999) = 11 bins.
        let v: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        assert_eq!(freedman_diaconis_bins(&v), 11);
        // Many values push past the floor.
        let v: Vec<f64> = (0..100_000).map(|i| i as f64).collect();
        assert_eq!(freedman_diaconis_bins(&v), 47);
    }

    #[test]
    fn max_value_lands_in_last_bin() {
        let h = Histogram::build(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(h.counts[0], 1);
        assert_eq!(*h.counts.last().unwrap(), 1);
        assert_eq!(h.edges.len(), h.counts.len() + 1);
    }

    #[test]
    fn empty_and_non_finite_rejected() {
        assert!(Report::new("x", &[]).is_err());
        assert!(Report::new("x", &[1.0, f64::NAN]).is_err());
    }
}
