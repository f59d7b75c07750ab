//! Plain `key = value` text used by model and training config files.
//!
//! Grammar: one entry per line; `#` starts a comment; blank lines are
//! ignored; keys are `[A-Za-z0-9_.]+`; values are trimmed and may be empty
//! only if the caller accepts that. Later duplicates are an error.

use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::parse_line(line, format!("expected key = value, got {content:?}")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(Error::parse_line(line, format!("invalid key {key:?}")));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::parse_line(line, format!("duplicate key {key}")));
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

impl Entry {
    pub fn error(&self, message: impl std::fmt::Display) -> Error {
        Error::parse_line(self.line, format!("{}: {message}", self.key))
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse().map_err(|e| self.error(format!("{e} ({:?})", self.value)))
    }

    /// Comma-separated list; empty value is an empty list.
    pub fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.value.is_empty() {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|t| t.trim().parse().map_err(|e| self.error(format!("{e} ({t:?})"))))
            .collect()
    }

    pub fn bool(&self) -> Result<bool> {
        match self.value.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(self.error(format!("expected true or false, got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        let e = parse("# c\n a = 1 \n\nb=x,y # tail\nempty =\n").unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("a", "1", 2));
        assert_eq!(e[1].list::<String>().unwrap(), vec!["x", "y"]);
        assert!(e[2].list::<u32>().unwrap().is_empty());
    }

    #[test]
    fn errors_name_lines() {
        assert!(parse("a = 1\nnoequals\n").unwrap_err().to_string().contains("line 2"));
        assert!(parse("a = 1\na = 2\n").unwrap_err().to_string().contains("duplicate"));
        assert!(parse("a b = 1\n").is_err());
        let e = &parse("n = x\n").unwrap()[0];
        assert!(e.parse::<u32>().unwrap_err().to_string().contains("line 1"));
    }
}
