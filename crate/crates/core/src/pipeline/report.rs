use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::RunResult;
use crate::error::{Error, Result};
use crate::generate::TemplateId;
use crate::gnn::Arch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidParameter(format!("unknown report format `{other}`"))),
        }
    }
}

/// One seed of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub dataset: String,
    pub arch: Arch,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub delta: f64,
    pub k_mult: usize,
    pub template: TemplateId,
    pub without_edges: bool,
    pub seed: u64,
    pub accuracy: f64,
}

/// Mean and population standard deviation of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub arch: Arch,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub delta: f64,
    pub k_mult: usize,
    pub template: TemplateId,
    pub without_edges: bool,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// JSON report: the CSV's two sections plus the full results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub detail: Vec<DetailRow>,
    pub aggregate: Vec<AggregateRow>,
    pub results: Vec<RunResult>,
}

impl Report {
    pub fn from_results(results: &[RunResult]) -> Self {
        let mut detail = Vec::new();
        let mut aggregate = Vec::new();
        for r in results {
            for s in &r.runs {
                detail.push(DetailRow {
                    dataset: r.dataset.clone(),
                    arch: r.arch,
                    k: r.k_shot,
                    m: r.m_per_class,
                    delta: r.delta,
                    k_mult: r.top_k_multiplier,
                    template: r.template,
                    without_edges: r.without_edges,
                    seed: s.seed,
                    accuracy: s.accuracy,
                });
            }
            aggregate.push(AggregateRow {
                dataset: r.dataset.clone(),
                arch: r.arch,
                k: r.k_shot,
                m: r.m_per_class,
                delta: r.delta,
                k_mult: r.top_k_multiplier,
                template: r.template,
                without_edges: r.without_edges,
                mean: r.mean,
                std: r.std,
                runs: r.runs.len(),
            });
        }
        Self { detail, aggregate, results: results.to_vec() }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidParameter(format!("CSV write to {}: {other:?}", path.display())),
    }
}

/// Writes `results` as CSV (detail rows, a blank line, aggregate rows) or
/// as a JSON [`Report`].
pub fn emit_report(results: &[RunResult], format: ReportFormat, path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("no results to report".into()));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let report = Report::from_results(results);
    match format {
        ReportFormat::Json => {
            let mut body = serde_json::to_vec_pretty(&report)?;
            body.push(b'\n');
            std::fs::write(path, body).map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            for (i, section) in [0, 1].into_iter().enumerate() {
                if i > 0 {
                    buf.push(b'\n');
                }
                let mut w = csv::Writer::from_writer(&mut buf);
                if section == 0 {
                    report.detail.iter().try_for_each(|r| w.serialize(r)).map_err(|e| csv_error(path, e))?;
                } else {
                    report.aggregate.iter().try_for_each(|r| w.serialize(r)).map_err(|e| csv_error(path, e))?;
                }
                w.flush().map_err(|e| Error::io(path, e))?;
            }
            std::fs::write(path, buf).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_json_report(path: &Path) -> Result<Report> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&raw)?)
}
