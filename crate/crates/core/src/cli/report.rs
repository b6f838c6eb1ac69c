use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::ops::geometry_config;
use super::{to_json, write_file, CliError, RunConfig, SCHEMA_VERSION};
use crate::geometry::{connection_at, cramer_rao_check, metric_at, GeometryConfig};
use crate::models::{catalogue, CatalogueEntry};
use crate::structure::{classify, ExponentialFamily, Status};
use crate::tensor::relative_deviation;

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub label: String,
    pub expected: String,
    pub matches_expected: bool,
    pub exponential_family: ExponentialFamily,
    pub hessian_structure: Status,
    pub condition4: Status,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportSummary {
    pub rows: Vec<SummaryRow>,
}

impl ReportSummary {
    pub fn to_csv(&self) -> String {
        let word = |v: &dyn erased::Word| v.word();
        let mut s = String::from("model,label,expected,matches_expected,exponential_family,hessian_structure,condition4\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.model,
                r.label,
                r.expected,
                r.matches_expected,
                word(&r.exponential_family),
                word(&r.hessian_structure),
                word(&r.condition4),
            ));
        }
        s
    }
}

mod erased {
    use serde::Serialize;

    /// Serialised string form of a unit enum.
    pub trait Word {
        fn word(&self) -> String;
    }

    impl<T: Serialize> Word for T {
        fn word(&self) -> String {
            match serde_json::to_value(self) {
                Ok(serde_json::Value::String(s)) => s,
                Ok(v) => v.to_string(),
                Err(_) => String::new(),
            }
        }
    }
}

fn max_opt(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.max(b)))
}

/// Oracle residuals over the grid; points failing Condition 4 are skipped.
fn oracle_residuals(entry: &CatalogueEntry, grid: &[Vec<f64>], gc: &GeometryConfig) -> Value {
    let model = entry.model.as_ref();
    let Some(oracle) = model.oracle() else {
        return Value::Null;
    };
    let (mut metric, mut connection) = (None, None);
    for p in grid {
        if let (Some(o), Ok(m)) = (oracle.metric(p), metric_at(model, p, gc)) {
            metric = max_opt(metric, relative_deviation(m.metric.as_slice(), o.as_slice(), f64::MIN_POSITIVE));
        }
        if let (Some(o), Ok(c)) = (oracle.connection(p), connection_at(model, p, gc)) {
            connection = max_opt(connection, c.connection.max_abs_diff(&o) / o.max_abs().max(1.0));
        }
    }
    json!({ "metric": metric, "connection": connection })
}

fn model_report(entry: &CatalogueEntry, cfg: &RunConfig) -> Result<(SummaryRow, Value), CliError> {
    let model = entry.model.as_ref();
    let gc = geometry_config(cfg);
    let grid = model.default_grid();
    let report = classify(model, &grid, &gc)?;
    let oracle = oracle_residuals(entry, &grid, &gc);
    let centre = model.chart().sample_centre();
    let cramer_rao = cramer_rao_check(model, &centre, 200, cfg.seed, &gc).ok();
    let row = SummaryRow {
        model: model.name().to_string(),
        label: report.label.clone(),
        expected: entry.expected_label.to_string(),
        matches_expected: report.label == entry.expected_label,
        exponential_family: report.exponential_family,
        hessian_structure: report.hessian_structure,
        condition4: report.condition4.status,
    };
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "model": model.name(),
        "op": "classify",
        "inputs": { "params": cfg.params, "seed": cfg.seed, "grid": grid },
        "results": report,
        "residuals": { "oracle": oracle, "cramer_rao": cramer_rao },
        "verdicts": {
            "label": row.label,
            "expected_label": row.expected,
            "matches_expected": row.matches_expected,
        },
        "tolerances": cfg.tolerances,
        "runtime_ms": Value::Null,
    });
    Ok((row, doc))
}

/// Classifies every catalogue model and writes `<model>.json`,
/// `summary.json` and `summary.csv` into `dir`.
pub fn report_all(dir: &Path, cfg: &RunConfig) -> Result<ReportSummary, CliError> {
    let entries = catalogue(&cfg.params)?;
    let results: Vec<(SummaryRow, Value)> = entries
        .par_iter()
        .map(|e| model_report(e, cfg))
        .collect::<Result<_, _>>()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut rows = Vec::with_capacity(results.len());
    for (row, doc) in results {
        write_file(&dir.join(format!("{}.json", row.model)), &to_json(&doc))?;
        rows.push(row);
    }
    let summary = ReportSummary { rows };
    write_file(&dir.join("summary.json"), &to_json(&summary))?;
    write_file(&dir.join("summary.csv"), &summary.to_csv())?;
    Ok(summary)
}
