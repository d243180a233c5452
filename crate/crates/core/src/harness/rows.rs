//! Per-replicate CSV rows.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "replicate_id,k,alpha,covered,sq_radius_raw,diameter_sq,u_at_hat,mu_used,est_sparsity,seed_used";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub replicate_id: u64,
    pub k: usize,
    pub alpha: f64,
    pub covered: bool,
    pub sq_radius_raw: f64,
    pub diameter_sq: f64,
    pub u_at_hat: f64,
    pub mu_used: f64,
    pub est_sparsity: usize,
    pub seed_used: u64,
}

impl ReplicateRow {
    /// Floats use Rust's shortest round-trip formatting.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.replicate_id,
            self.k,
            self.alpha,
            self.covered,
            self.sq_radius_raw,
            self.diameter_sq,
            self.u_at_hat,
            self.mu_used,
            self.est_sparsity,
            self.seed_used
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 10 {
            return Err(Error::config(
                "csv",
                format!("expected 10 fields, found {}", fields.len()),
            ));
        }
        fn get<T: std::str::FromStr>(name: &str, s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::config("csv", format!("bad `{name}` field `{s}`")))
        }
        Ok(Self {
            replicate_id: get("replicate_id", fields[0])?,
            k: get("k", fields[1])?,
            alpha: get("alpha", fields[2])?,
            covered: get("covered", fields[3])?,
            sq_radius_raw: get("sq_radius_raw", fields[4])?,
            diameter_sq: get("diameter_sq", fields[5])?,
            u_at_hat: get("u_at_hat", fields[6])?,
            mu_used: get("mu_used", fields[7])?,
            est_sparsity: get("est_sparsity", fields[8])?,
            seed_used: get("seed_used", fields[9])?,
        })
    }
}

pub fn rows_to_csv(rows: &[ReplicateRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_line());
    }
    out
}

pub fn parse_rows_csv(text: &str) -> Result<Vec<ReplicateRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(Error::config("csv", "missing or unexpected header")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(ReplicateRow::from_csv_line)
        .collect()
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ReplicateRow>> {
    parse_rows_csv(&std::fs::read_to_string(path)?)
}
