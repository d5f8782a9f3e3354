//! Per-epoch trace rows and their CSV / JSON encodings.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str =
    "epoch,passes,full_loss,grad_norm,dist_to_opt,aux_value,growth_ratio,tau,alpha_bar";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    /// Effective passes over the data so far.
    pub passes: f64,
    pub full_loss: f64,
    pub grad_norm: f64,
    pub dist_to_opt: Option<f64>,
    pub aux_value: Option<f64>,
    pub growth_ratio: Option<f64>,
    pub tau: Option<f64>,
    pub alpha_bar: Option<f64>,
}

impl TraceRecord {
    /// Comma-separated fields in header order; absent values are empty.
    pub fn csv_fields(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            fmt_f64(self.passes),
            fmt_f64(self.full_loss),
            fmt_f64(self.grad_norm),
            opt(self.dist_to_opt),
            opt(self.aux_value),
            opt(self.growth_ratio),
            opt(self.tau),
            opt(self.alpha_bar),
        )
    }

    /// Largest absolute difference over all numeric fields; `None` if the
    /// records disagree on epoch or on which fields are present.
    pub fn max_field_diff(&self, other: &TraceRecord) -> Option<f64> {
        if self.epoch != other.epoch {
            return None;
        }
        let pairs = [
            (Some(self.passes), Some(other.passes)),
            (Some(self.full_loss), Some(other.full_loss)),
            (Some(self.grad_norm), Some(other.grad_norm)),
            (self.dist_to_opt, other.dist_to_opt),
            (self.aux_value, other.aux_value),
            (self.growth_ratio, other.growth_ratio),
            (self.tau, other.tau),
            (self.alpha_bar, other.alpha_bar),
        ];
        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    if a != b {
                        worst = worst.max((a - b).abs());
                    }
                }
                _ => return None,
            }
        }
        Some(worst)
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}

pub fn write_csv<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_fields())?;
    }
    out.flush()?;
    Ok(())
}

/// Long format keyed by a leading `method` column.
pub fn write_csv_keyed<W: Write>(mut out: W, runs: &[(String, Vec<TraceRecord>)]) -> Result<()> {
    writeln!(out, "method,{CSV_HEADER}")?;
    for (name, records) in runs {
        for r in records {
            writeln!(out, "{name},{}", r.csv_fields())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// JSON array of records; absent values become `null`. Non-finite numbers
/// are written as the strings `"inf"`, `"-inf"` and `"nan"`.
pub fn write_json<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    let rows: Vec<serde_json::Value> = records.iter().map(record_json).collect();
    serde_json::to_writer_pretty(&mut out, &rows).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn write_json_keyed<W: Write>(mut out: W, runs: &[(String, Vec<TraceRecord>)]) -> Result<()> {
    let mut rows = Vec::new();
    for (name, records) in runs {
        for r in records {
            let mut v = record_json(r);
            v["method"] = serde_json::Value::String(name.clone());
            rows.push(v);
        }
    }
    serde_json::to_writer_pretty(&mut out, &rows).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn json_number(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::String(fmt_f64(v))
    }
}

fn record_json(r: &TraceRecord) -> serde_json::Value {
    let opt = |v: Option<f64>| v.map(json_number).unwrap_or(serde_json::Value::Null);
    serde_json::json!({
        "epoch": r.epoch,
        "passes": json_number(r.passes),
        "full_loss": json_number(r.full_loss),
        "grad_norm": json_number(r.grad_norm),
        "dist_to_opt": opt(r.dist_to_opt),
        "aux_value": opt(r.aux_value),
        "growth_ratio": opt(r.growth_ratio),
        "tau": opt(r.tau),
        "alpha_bar": opt(r.alpha_bar),
    })
}
