use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{load_result, result_path, RunResult, Runner};
use crate::error::{Error, Result};
use crate::generate::TemplateId;

/// Value lists to sweep. Absent axes keep the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_shot: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_per_class: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k_multiplier: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<Vec<TemplateId>>,
}

impl SweepGrid {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&raw)?)
    }

    /// Cartesian product over the present axes, in the order
    /// K, M, delta, k multiplier, template (last varies fastest).
    pub fn expand(&self, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
        let axes = [
            self.k_shot.as_ref().map(Vec::len),
            self.m_per_class.as_ref().map(Vec::len),
            self.delta.as_ref().map(Vec::len),
            self.top_k_multiplier.as_ref().map(Vec::len),
            self.template.as_ref().map(Vec::len),
        ];
        if axes.iter().all(Option::is_none) || axes.iter().any(|a| *a == Some(0)) {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        let mut cells = vec![base.clone()];
        fn axis<V: Clone>(
            cells: Vec<ExperimentConfig>,
            values: &Option<Vec<V>>,
            set: impl Fn(&mut ExperimentConfig, V),
        ) -> Vec<ExperimentConfig> {
            let Some(values) = values else { return cells };
            cells
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(|v| {
                        let mut c = c.clone();
                        set(&mut c, v.clone());
                        c
                    }).collect::<Vec<_>>()
                })
                .collect()
        }
        cells = axis(cells, &self.k_shot, |c, v| c.k_shot = v);
        cells = axis(cells, &self.m_per_class, |c, v| c.m_per_class = v);
        cells = axis(cells, &self.delta, |c, v| c.delta = v);
        cells = axis(cells, &self.top_k_multiplier, |c, v| c.top_k_multiplier = v);
        cells = axis(cells, &self.template, |c, v| c.template = v);
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub config_hash: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// One result per successful cell, in grid order.
    pub results: Vec<RunResult>,
    pub failures: Vec<SweepFailure>,
    /// Cells run in this call.
    pub executed: usize,
    /// Cells whose stored result was reused.
    pub skipped: usize,
}

/// Runs every grid cell through `runner`.
///
/// With an artifacts directory, a cell whose result file exists is loaded
/// instead of executed. A failing cell is recorded and the sweep continues.
pub fn sweep(runner: &mut Runner, grid: &SweepGrid, base: &ExperimentConfig) -> Result<SweepOutcome> {
    let cells = grid.expand(base)?;
    let mut out = SweepOutcome::default();
    for cell in cells {
        let hash = cell.config_hash();
        if let Some(dir) = &cell.artifacts_dir {
            let path = result_path(dir, &hash);
            if path.exists() {
                out.results.push(load_result(&path)?);
                out.skipped += 1;
                continue;
            }
        }
        match runner.run_llm4ng(&cell) {
            Ok(r) => {
                out.results.push(r);
                out.executed += 1;
            }
            Err(e) => {
                log::error!("sweep cell {hash} failed: {e}");
                out.failures.push(SweepFailure { config_hash: hash, error: e.to_string() });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::DatasetConfig;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(DatasetConfig::in_dir("toy", "d"), 1)
    }

    #[test]
    fn delta_grid_has_eight_cells() {
        let grid = SweepGrid { delta: Some((1..=8).map(|i| i as f64 / 10.0).collect()), ..Default::default() };
        let cells = grid.expand(&base()).unwrap();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[7].delta, 0.8);
        assert!(cells.iter().all(|c| c.k_shot == 1));
    }

    #[test]
    fn product_order_varies_last_axis_fastest() {
        let grid = SweepGrid { k_shot: Some(vec![0, 1]), top_k_multiplier: Some(vec![1, 5, 10]), ..Default::default() };
        let cells: Vec<_> = grid.expand(&base()).unwrap().iter().map(|c| (c.k_shot, c.top_k_multiplier)).collect();
        assert_eq!(cells, vec![(0, 1), (0, 5), (0, 10), (1, 1), (1, 5), (1, 10)]);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(SweepGrid::default().expand(&base()).is_err());
        let grid = SweepGrid { delta: Some(vec![]), ..Default::default() };
        assert!(grid.expand(&base()).is_err());
    }
}
