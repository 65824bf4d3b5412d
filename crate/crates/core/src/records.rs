//! Per-iteration bias records and their on-disk forms.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::metrics::{MetricSpec, SourceSplitReport, SourceSplitResult};

/// Bias and quality of one feedback-loop iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRecord {
    pub iteration: usize,
    /// AIGC click share the iteration's model was evaluated at.
    pub p: f64,
    pub results: Vec<(MetricSpec, SourceSplitResult)>,
    /// NDCG@3 with both copies of the target relevant.
    pub ndcg3_overall: f64,
    /// Queries whose two target copies scored identically.
    pub ties: usize,
    /// Mean per-instance loss of the trained model on its training set.
    pub loss: LossBreakdown,
}

impl BiasRecord {
    pub fn new(iteration: usize, p: f64, report: &SourceSplitReport, loss: LossBreakdown) -> Self {
        BiasRecord {
            iteration,
            p,
            results: report.results.clone(),
            ndcg3_overall: report.overall_ndcg3,
            ties: report.ties,
            loss,
        }
    }

    pub fn get(&self, spec: MetricSpec) -> Option<&SourceSplitResult> {
        self.results.iter().find(|(s, _)| *s == spec).map(|(_, r)| r)
    }

    pub fn delta(&self, spec: MetricSpec) -> Option<f64> {
        self.get(spec).map(|r| r.relative_delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

/// One row of the flat report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub iteration: usize,
    pub p: f64,
    pub metric: String,
    pub k: usize,
    pub value_hgc: f64,
    pub value_aigc: f64,
    pub relative_delta: f64,
    pub ndcg3_overall: f64,
}

pub const CSV_HEADER: &str = "iteration,p,metric,k,value_hgc,value_aigc,relative_delta,ndcg3_overall";

pub fn report_rows(records: &[BiasRecord]) -> Vec<ReportRow> {
    records
        .iter()
        .flat_map(|r| {
            r.results.iter().map(move |(spec, res)| ReportRow {
                iteration: r.iteration,
                p: r.p,
                metric: spec.name().to_string(),
                k: spec.k,
                value_hgc: res.metric_hgc,
                value_aigc: res.metric_aigc,
                relative_delta: res.relative_delta,
                ndcg3_overall: r.ndcg3_overall,
            })
        })
        .collect()
}

pub fn render_csv(records: &[BiasRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in report_rows(records) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.iteration, row.p, row.metric, row.k, row.value_hgc, row.value_aigc, row.relative_delta, row.ndcg3_overall
        );
    }
    out
}

pub fn render_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

/// Iteration against relative delta, one column per metric.
pub fn render_plot_data(records: &[BiasRecord]) -> String {
    let specs: Vec<MetricSpec> = records
        .first()
        .map(|r| r.results.iter().map(|(s, _)| *s).collect())
        .unwrap_or_default();
    let mut out = String::from("iteration,p");
    for s in &specs {
        let _ = write!(out, ",{s}");
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{}", r.iteration, r.p);
        for s in &specs {
            let _ = write!(out, ",{}", r.delta(*s).unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// Write the flat report in `format` plus `plot_data.csv` into `dir`.
/// Returns the report path. Nothing is written for an empty record list.
pub fn emit_records(records: &[BiasRecord], format: RecordFormat, dir: &Path) -> Result<PathBuf> {
    if records.is_empty() {
        return Err(Error::Empty("record list"));
    }
    let (name, body) = match format {
        RecordFormat::Csv => ("records.csv", render_csv(records)),
        RecordFormat::Jsonl => ("records.jsonl", render_jsonl(&report_rows(records))?),
    };
    let plot = render_plot_data(records);
    let path = dir.join(name);
    fs::write(&path, body)?;
    fs::write(dir.join("plot_data.csv"), plot)?;
    Ok(path)
}

/// Full records, one JSON object per line.
pub fn write_bias_records(records: &[BiasRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("record list"));
    }
    fs::write(path, render_jsonl(records)?)?;
    Ok(())
}

pub fn read_bias_records(path: &Path) -> Result<Vec<BiasRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
