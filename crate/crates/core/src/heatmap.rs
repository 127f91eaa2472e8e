//! Plain-CSV heatmap files.
//!
//! ```text
//! # axis1=<name> axis2=<name> N=<frame length>[ key=value ...]
//! v00,v01,...
//! v10,v11,...
//! ```
//!
//! Rows run along `axis1`, columns along `axis2`. Extra `key=value` tokens
//! after `N` carry metadata such as the manifest hash.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{DdError, Result};
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub axis1: String,
    pub axis2: String,
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
    pub meta: Vec<(String, String)>,
}

impl Heatmap {
    pub fn new(axis1: &str, axis2: &str, n: usize, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(DdError::SizeMismatch { expected: rows * cols, got: values.len() });
        }
        if axis1.contains(char::is_whitespace) || axis2.contains(char::is_whitespace) {
            return Err(DdError::InvalidConfig("axis names must not contain whitespace".into()));
        }
        Ok(Self {
            axis1: axis1.to_string(),
            axis2: axis2.to_string(),
            n,
            rows,
            cols,
            values,
            meta: Vec::new(),
        })
    }

    pub fn magnitude(axis1: &str, axis2: &str, n: usize, m: &CMatrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        let values = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)].norm())
            .collect();
        Self::new(axis1, axis2, n, rows, cols, values)
    }

    pub fn phase(axis1: &str, axis2: &str, n: usize, m: &CMatrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        let values = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)].arg())
            .collect();
        Self::new(axis1, axis2, n, rows, cols, values)
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn header(&self) -> String {
        let mut h = format!("# axis1={} axis2={} N={}", self.axis1, self.axis2, self.n);
        for (k, v) in &self.meta {
            let _ = write!(h, " {k}={v}");
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in 0..self.rows {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| DdError::InvalidConfig("missing heatmap header".into()))?;
        let mut axis1 = None;
        let mut axis2 = None;
        let mut n = None;
        let mut meta = Vec::new();
        for token in header.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| DdError::InvalidConfig(format!("bad header token {token}")))?;
            match k {
                "axis1" => axis1 = Some(v.to_string()),
                "axis2" => axis2 = Some(v.to_string()),
                "N" => {
                    n = Some(v.parse().map_err(|_| DdError::InvalidConfig(format!("bad N {v}")))?)
                }
                _ => meta.push((k.to_string(), v.to_string())),
            }
        }
        let mut values = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for line in lines.filter(|l| !l.is_empty()) {
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| DdError::InvalidConfig(format!("bad value: {e}")))?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => return Err(DdError::SizeMismatch { expected: c, got: row.len() }),
                _ => {}
            }
            values.extend(row);
            rows += 1;
        }
        let missing = |what: &str| DdError::InvalidConfig(format!("header lacks {what}"));
        Ok(Self {
            axis1: axis1.ok_or_else(|| missing("axis1"))?,
            axis2: axis2.ok_or_else(|| missing("axis2"))?,
            n: n.ok_or_else(|| missing("N"))?,
            rows,
            cols: cols.unwrap_or(0),
            values,
            meta,
        })
    }
}
