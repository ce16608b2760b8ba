//! Result files: one CSV and one JSON per experiment plus `summary.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Check, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    /// `summary`, `row`, or an operation-specific tag such as `slope`.
    pub kind: String,
    pub metrics: BTreeMap<String, f64>,
    pub witness: Option<String>,
    pub pass: Option<bool>,
}

impl ResultRow {
    pub fn new(experiment: &str, kind: &str, metrics: &[(&str, f64)], witness: Option<String>) -> Self {
        Self {
            experiment: experiment.to_string(),
            kind: kind.to_string(),
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            witness,
            pass: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub metric: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub value: Option<f64>,
    pub pass: bool,
}

pub fn evaluate_checks(checks: &[Check], summary: &BTreeMap<String, f64>) -> Vec<CheckOutcome> {
    checks
        .iter()
        .map(|c| {
            let value = summary.get(&c.metric).copied();
            let pass = match value {
                Some(v) if v.is_finite() || v.is_infinite() => {
                    c.min.is_none_or(|m| v >= m) && c.max.is_none_or(|m| v <= m)
                }
                _ => false,
            };
            CheckOutcome {
                metric: c.metric.clone(),
                min: c.min,
                max: c.max,
                value,
                pass,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub id: String,
    pub operation: String,
    pub seed: Option<u64>,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub checks: Vec<CheckOutcome>,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub experiments: Vec<ExperimentSummary>,
    pub all_passed: bool,
}

impl RunSummary {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        match version {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => bail!(
                "schema version mismatch in {}: file has {v}, this build reads {SCHEMA_VERSION}",
                path.display()
            ),
            None => bail!("{} has no schema_version", path.display()),
        }
        serde_path_to_error::deserialize(value)
            .map_err(|e| anyhow::anyhow!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))
    }

    pub fn find(&self, id: &str) -> Result<&ExperimentSummary> {
        self.experiments.iter().find(|e| e.id == id).ok_or_else(|| {
            let ids: Vec<&str> = self.experiments.iter().map(|e| e.id.as_str()).collect();
            anyhow::anyhow!("no experiment `{id}`; available: {}", ids.join(", "))
        })
    }
}

pub fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// CSV with columns `experiment, kind, witness, pass` followed by the sorted
/// union of metric names; missing or non-finite metrics are empty cells
/// except infinities, which are written out.
pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let names: BTreeSet<&str> = rows
        .iter()
        .flat_map(|r| r.metrics.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header = vec!["experiment", "kind", "witness", "pass"];
    header.extend(names.iter().copied());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.experiment.clone(),
            r.kind.clone(),
            r.witness.clone().unwrap_or_default(),
            r.pass.map(|p| p.to_string()).unwrap_or_default(),
        ];
        for n in &names {
            rec.push(match r.metrics.get(*n) {
                Some(v) if !v.is_nan() => v.to_string(),
                _ => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Columns plotted for each operation, read from its `row` records.
pub fn plot_columns(operation: &str) -> Option<&'static [&'static str]> {
    Some(match operation {
        "exit_times" => &["center", "r", "E_tau", "phi", "ratio"],
        "ehr" => &["rho", "osc", "column_id"],
        "capacity" => &["center", "r", "capacity", "normalized"],
        "heat_kernel_diag" => &["x", "t", "p", "scaled"],
        "tail_sweep" => &["epsilon", "sup_inf_ratio", "tail", "c_hat"],
        "fk" => &["log_volume_ratio", "log_lambda_phi"],
        "pi" => &["center", "r", "C_PI"],
        "volume_doubling" => &["center", "r", "V_r", "V_2r"],
        "mc_exit" => &["exact", "mc_mean", "stderr"],
        _ => return None,
    })
}

/// Extracts the plot series of one experiment from its CSV.
pub fn plot_data(dir: &Path, id: &str) -> Result<String> {
    let summary = RunSummary::read(dir)?;
    let exp = summary.find(id)?;
    let Some(cols) = plot_columns(&exp.operation) else {
        bail!("experiment `{id}` ({}) has no plot series", exp.operation);
    };
    let path = dir.join(format!("{id}.csv"));
    let mut rd = csv::Reader::from_path(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = rd.headers()?.clone();
    let idx = |name: &str| header.iter().position(|h| h == name);
    let kind = idx("kind").context("csv has no kind column")?;
    let picks: Vec<usize> = cols
        .iter()
        .map(|c| idx(c).with_context(|| format!("{} has no column `{c}`", path.display())))
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(cols)?;
    for rec in rd.records() {
        let rec = rec?;
        if &rec[kind] == "row" {
            w.write_record(picks.iter().map(|&i| &rec[i]))?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Text table of a finished run with a fixed column order.
pub fn report(dir: &Path) -> Result<String> {
    let summary = RunSummary::read(dir)?;
    let mut out = String::new();
    out.push_str(&format!("{:<24} {:<18} {:<6} metrics\n", "experiment", "operation", "pass"));
    for e in &summary.experiments {
        let metrics: Vec<String> = e
            .metrics
            .iter()
            .map(|(k, v)| match v {
                Some(v) => format!("{k}={v:.6}"),
                None => format!("{k}=-"),
            })
            .collect();
        let status = if e.pass { "ok" } else { "FAIL" };
        out.push_str(&format!("{:<24} {:<18} {:<6} {}\n", e.id, e.operation, status, metrics.join(" ")));
        if let Some(err) = &e.error {
            out.push_str(&format!("{:<24} error: {err}\n", ""));
        }
        for c in e.checks.iter().filter(|c| !c.pass) {
            out.push_str(&format!(
                "{:<24} check {} = {:?} outside [{:?}, {:?}]\n",
                "", c.metric, c.value, c.min, c.max
            ));
        }
    }
    out.push_str(&format!("all passed: {}\n", summary.all_passed));
    Ok(out)
}
