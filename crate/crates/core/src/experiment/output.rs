use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{CellStatus, ResultsRecord, RunMetadata};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const METADATA_JSON: &str = "metadata.json";
pub const SUMMARY_TXT: &str = "summary.txt";

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn results_json(record: &ResultsRecord) -> Result<String> {
    Ok(serde_json::to_string_pretty(record)? + "\n")
}

/// One row per (entity, seed, metric); failed cells get a single row with
/// the error message.
pub fn results_csv(record: &ResultsRecord) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(["entity", "seed", "status", "metric", "value"]).map_err(err)?;
    for c in &record.cells {
        let seed = c.seed.to_string();
        match c.status {
            CellStatus::Ok => {
                let mut rows: Vec<(String, f64)> = c.metrics.iter().map(|(k, v)| (k.clone(), *v)).collect();
                if let Some(d) = &c.diagnosis {
                    rows.push(("rc_top_k".into(), d.rc_top_k));
                    rows.push(("hitrate".into(), d.hitrate));
                }
                for (k, v) in rows {
                    w.write_record([c.entity.as_str(), &seed, "ok", &k, &v.to_string()]).map_err(err)?;
                }
            }
            CellStatus::Failed => {
                let msg = c.error.clone().unwrap_or_default();
                w.write_record([c.entity.as_str(), &seed, "failed", "", &msg]).map_err(err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Fixed-width table of per-entity and overall means.
pub fn summary_table(record: &ResultsRecord) -> String {
    let agg = &record.aggregates;
    let metrics: Vec<&String> = agg.overall.keys().collect();
    let mut out = String::new();
    if let Some(name) = &record.name {
        let _ = writeln!(out, "experiment: {name}");
    }
    let _ = writeln!(out, "config digest: {}", record.config_digest);
    if let Some(v) = record.selected_neg_log_eps {
        let _ = writeln!(out, "tail-p -log10(eps): {v}");
    }
    let _ = writeln!(
        out,
        "cells: {} ok, {} failed",
        record.cells.len() - record.failed_cells(),
        record.failed_cells()
    );
    let width = agg.per_entity.keys().map(String::len).max().unwrap_or(0).max(7) + 2;
    let _ = write!(out, "{:<width$}", "entity");
    for m in &metrics {
        let _ = write!(out, "{:>11}", m);
    }
    out.push('\n');
    let row = |out: &mut String, label: &str, values: &std::collections::BTreeMap<String, f64>| {
        let _ = write!(out, "{label:<width$}");
        for m in &metrics {
            match values.get(*m) {
                Some(v) => {
                    let _ = write!(out, "{v:>11.4}");
                }
                None => {
                    let _ = write!(out, "{:>11}", "-");
                }
            }
        }
        out.push('\n');
    };
    for (e, values) in &agg.per_entity {
        row(&mut out, e, values);
    }
    row(&mut out, "overall", &agg.overall);
    for c in record.cells.iter().filter(|c| c.status == CellStatus::Failed) {
        let _ = writeln!(
            out,
            "failed: {} seed {}: {}",
            c.entity,
            c.seed,
            c.error.as_deref().unwrap_or("")
        );
    }
    out
}

/// Writes the results file for `format`, `summary.txt` and `metadata.json`.
/// Re-emitting the same record rewrites identical bytes.
pub fn emit_results(
    record: &ResultsRecord,
    metadata: Option<&RunMetadata>,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let (name, body) = match format {
        OutputFormat::Json => (RESULTS_JSON, results_json(record)?),
        OutputFormat::Csv => (RESULTS_CSV, results_csv(record)?),
    };
    let path = dir.join(name);
    write(&path, &body)?;
    written.push(path);
    let path = dir.join(SUMMARY_TXT);
    write(&path, &summary_table(record))?;
    written.push(path);
    if let Some(meta) = metadata {
        let path = dir.join(METADATA_JSON);
        write(&path, &(serde_json::to_string_pretty(meta)? + "\n"))?;
        written.push(path);
    }
    Ok(written)
}
