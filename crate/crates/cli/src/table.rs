//! `report`: merge run records into one plot-ready CSV table.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use sysid_core::io::fmt_f64;

use crate::config::SCHEMA_VERSION;
use crate::run::{RunEntry, RunRecord};

pub fn load_records(paths: &[PathBuf]) -> Result<Vec<RunRecord>> {
    if paths.is_empty() {
        bail!("no run records given");
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            let raw: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("{} is not JSON", p.display()))?;
            let version = raw.get("schema_version").and_then(|v| v.as_u64());
            if version != Some(SCHEMA_VERSION as u64) {
                bail!(
                    "{}: schema_version {:?} does not match {SCHEMA_VERSION}",
                    p.display(),
                    version
                );
            }
            serde_json::from_value(raw).with_context(|| format!("{} is not a run record", p.display()))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes one row per run, sorted by `gamma` ascending (runs without a
/// `gamma` first, ties in input order). Estimates appear row-major in
/// columns `a1, a2, ...`.
pub fn write_table<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut rows: Vec<&RunEntry> = records.iter().flat_map(|r| &r.runs).collect();
    rows.sort_by(|x, y| match (x.gamma, y.gamma) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(a), Some(b)) => a.total_cmp(&b),
    });
    let width = rows
        .iter()
        .map(|e| e.a.as_ref().map_or(0, |a| a.iter().map(Vec::len).sum()))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["method", "gamma", "mu", "rho", "error", "iterations", "residual", "termination"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=width).map(|k| format!("a{k}")));
    w.write_record(&header)?;
    for e in rows {
        let mut rec = vec![
            e.method.name().to_string(),
            opt(e.gamma),
            opt(e.mu),
            opt(e.rho),
            opt(e.error),
            e.iterations.map(|i| i.to_string()).unwrap_or_default(),
            opt(e.residual),
            e.termination
                .map(|t| serde_json::to_value(t).expect("enum serializes").as_str().unwrap_or_default().to_string())
                .unwrap_or_default(),
        ];
        let entries: Vec<f64> = e.a.iter().flatten().flatten().copied().collect();
        rec.extend((0..width).map(|k| entries.get(k).map(|&v| fmt_f64(v)).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
