//! Per-slot metrics and their CSV form.
//!
//! Columns, in order: `t, policy, sweep, seed, utility, cost, reward,
//! cumulative_utility, fallback, sdp_gap, sdp_infeasibility, error`, then
//! `aoi_<j>` (edge age after the slot), `queue_<j>` (virtual queue after the
//! slot) and `aoi_max_<j>` for every service `j`. Floats carry nine
//! significant digits; a missing sweep value or certificate is an empty
//! field.

use std::io::{Read, Write};
use std::path::Path;

use crate::HarnessError;

pub const FIXED_COLUMNS: [&str; 12] = [
    "t",
    "policy",
    "sweep",
    "seed",
    "utility",
    "cost",
    "reward",
    "cumulative_utility",
    "fallback",
    "sdp_gap",
    "sdp_infeasibility",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub policy: String,
    pub sweep: Option<f64>,
    pub seed: u64,
    pub utility: f64,
    pub cost: f64,
    /// `-P2` of the executed decision.
    pub reward: f64,
    pub cumulative_utility: f64,
    /// The policy failed and the fixed fallback decided the slot.
    pub fallback: bool,
    pub sdp_gap: Option<f64>,
    pub sdp_infeasibility: Option<f64>,
    /// Empty unless the policy failed.
    pub error: String,
    pub aoi: Vec<f64>,
    pub queue: Vec<f64>,
    pub aoi_max: Vec<f64>,
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn header(services: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for prefix in ["aoi", "queue", "aoi_max"] {
        h.extend((0..services).map(|j| format!("{prefix}_{j}")));
    }
    h
}

impl MetricsRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.t.to_string(),
            self.policy.clone(),
            fmt_opt(self.sweep),
            self.seed.to_string(),
            fmt_float(self.utility),
            fmt_float(self.cost),
            fmt_float(self.reward),
            fmt_float(self.cumulative_utility),
            u8::from(self.fallback).to_string(),
            fmt_opt(self.sdp_gap),
            fmt_opt(self.sdp_infeasibility),
            self.error.clone(),
        ];
        for v in [&self.aoi, &self.queue, &self.aoi_max] {
            r.extend(v.iter().map(|&x| fmt_float(x)));
        }
        r
    }
}

pub fn write_rows(w: impl Write, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let services = rows.first().map_or(0, |r| r.aoi.len());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(services))?;
    for row in rows {
        out.write_record(row.record())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rows_to(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    write_rows(std::io::BufWriter::new(std::fs::File::create(path)?), rows)
}

/// Parses a metrics CSV; `source` names it in errors.
pub fn read_rows(r: impl Read, source: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let bad = |message: String| HarnessError::Malformed {
        path: source.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_reader(r);
    let head: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let services = head.iter().filter(|h| h.starts_with("queue_")).count();
    if head != header(services) {
        return Err(bad("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let float = |k: usize| -> Result<f64, HarnessError> {
            field(k)
                .parse::<f64>()
                .map_err(|_| bad(format!("line {line}: column `{}` is not a number", head[k])))
        };
        let opt = |k: usize| -> Result<Option<f64>, HarnessError> {
            if field(k).is_empty() {
                Ok(None)
            } else {
                float(k).map(Some)
            }
        };
        let int = |k: usize| -> Result<u64, HarnessError> {
            field(k)
                .parse::<u64>()
                .map_err(|_| bad(format!("line {line}: column `{}` is not an integer", head[k])))
        };
        let fallback = match field(8) {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("line {line}: fallback flag `{other}`"))),
        };
        let block = |start: usize| -> Result<Vec<f64>, HarnessError> { (start..start + services).map(float).collect() };
        let base = FIXED_COLUMNS.len();
        rows.push(MetricsRow {
            t: int(0)? as usize,
            policy: field(1).to_string(),
            sweep: opt(2)?,
            seed: int(3)?,
            utility: float(4)?,
            cost: float(5)?,
            reward: float(6)?,
            cumulative_utility: float(7)?,
            fallback,
            sdp_gap: opt(9)?,
            sdp_infeasibility: opt(10)?,
            error: field(11).to_string(),
            aoi: block(base)?,
            queue: block(base + services)?,
            aoi_max: block(base + 2 * services)?,
        });
    }
    Ok(rows)
}

pub fn read_rows_from(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    read_rows(std::fs::File::open(path)?, path)
}
