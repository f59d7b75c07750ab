use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "step,epoch,train_loss,train_loss_raw,val_loss,wall_time";

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    /// Zero-based index of the optimizer step.
    pub step: u64,
    pub epoch: u64,
    /// Batch mean of the normalized Chamfer loss, before the update.
    pub train_loss: f64,
    pub train_loss_raw: f64,
    pub val_loss: Option<f64>,
    /// Seconds since the run started (continued across resumes).
    pub wall_time: f64,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let val = self.val_loss.map(|v| format!("{v:e}")).unwrap_or_default();
        format!(
            "{},{},{:e},{:e},{},{:.3}",
            self.step, self.epoch, self.train_loss, self.train_loss_raw, val, self.wall_time
        )
    }

    pub fn parse(line: &str, ln: usize) -> Result<LogRow> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::parse_line(ln, format!("expected 6 fields, found {}", f.len())));
        }
        let bad = |what: &str| Error::parse_line(ln, format!("bad {what}"));
        Ok(LogRow {
            step: f[0].parse().map_err(|_| bad("step"))?,
            epoch: f[1].parse().map_err(|_| bad("epoch"))?,
            train_loss: f[2].parse().map_err(|_| bad("train_loss"))?,
            train_loss_raw: f[3].parse().map_err(|_| bad("train_loss_raw"))?,
            val_loss: if f[4].is_empty() {
                None
            } else {
                Some(f[4].parse().map_err(|_| bad("val_loss"))?)
            },
            wall_time: f[5].parse().map_err(|_| bad("wall_time"))?,
        })
    }
}

pub fn parse_log(text: &str) -> Result<Vec<LogRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LOG_HEADER => {}
        _ => return Err(Error::parse_line(1, format!("expected header {LOG_HEADER:?}"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LogRow::parse(l, i + 1))
        .collect()
}

/// Append-only CSV training log.
pub struct TrainLog {
    path: PathBuf,
    rows: Vec<LogRow>,
}

impl TrainLog {
    /// Start a fresh log, or keep the rows of steps before `resume_step`.
    pub fn open(path: &Path, resume_step: Option<u64>) -> Result<TrainLog> {
        let rows = match resume_step {
            Some(k) if path.exists() => {
                let text = String::from_utf8_lossy(&crate::fsio::read(path)?).into_owned();
                parse_log(&text)?.into_iter().filter(|r| r.step < k).collect()
            }
            _ => Vec::new(),
        };
        let log = TrainLog { path: path.to_path_buf(), rows };
        log.rewrite()?;
        Ok(log)
    }

    fn rewrite(&self) -> Result<()> {
        let mut s = format!("{LOG_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.to_csv());
        }
        crate::fsio::write_atomic(&self.path, s.as_bytes())
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn last_wall_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.wall_time)
    }

    pub fn append(&mut self, row: LogRow) -> Result<()> {
        use std::io::Write as _;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{}", row.to_csv()).map_err(|e| Error::io(&self.path, e))?;
        self.rows.push(row);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_roundtrip() {
        let r = LogRow { step: 3, epoch: 1, train_loss: 0.125, train_loss_raw: 64.0, val_loss: Some(0.5), wall_time: 1.5 };
        assert_eq!(LogRow::parse(&r.to_csv(), 1).unwrap(), r);
        let r = LogRow { val_loss: None, ..r };
        assert_eq!(LogRow::parse(&r.to_csv(), 1).unwrap(), r);
    }

    #[test]
    fn resume_truncates_later_steps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let mut log = TrainLog::open(&path, None).unwrap();
        for step in 0..5 {
            log.append(LogRow { step, epoch: 0, train_loss: 1.0, train_loss_raw: 2.0, val_loss: None, wall_time: 0.0 })
                .unwrap();
        }
        let log = TrainLog::open(&path, Some(3)).unwrap();
        assert_eq!(log.rows().len(), 3);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(parse_log(&text).unwrap().len(), 3);
    }
}
