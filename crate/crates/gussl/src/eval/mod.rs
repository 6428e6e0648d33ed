//! Metrics, protocol runners, and report emission.

mod plot;
mod protocols;
mod report;

pub use plot::{grouped_bar_chart_svg, line_chart_svg, LineSeries};
pub use protocols::{
    run_ablation_grid, run_efficacy_protocol, run_efficiency_protocol, AblationAxis,
    EfficacyOutcome, EfficiencyOutcome, ProtocolConfig,
};
pub use report::{emit_report, ReportBundle};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::scalar::Scalar;
use crate::train::Regime;

/// Fraction of masked nodes whose argmax logit matches the label. Ties
/// break toward the lowest class index.
pub fn accuracy<F: Scalar>(
    logits: &ArrayView2<F>,
    labels: &[usize],
    mask: &[usize],
) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::InvalidSpec("accuracy over an empty mask".into()));
    }
    if logits.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let mut correct = 0usize;
    for &i in mask {
        if i >= labels.len() {
            return Err(Error::InvalidSpec(format!("mask index {i} out of range")));
        }
        let row = logits.row(i);
        let mut best = 0usize;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

/// Sample standard deviation (n−1); zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Result of one (regime, graph) cell: the accuracy of each downstream
/// instance plus timing and config provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub regime: Regime,
    pub graph_id: String,
    pub seed: u64,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Median per-epoch wall seconds of the run that produced the backbone
    /// (pre-training for SSL/U-SSL, the supervised run itself).
    pub epoch_time_s: f64,
    pub config_fingerprint: String,
}

impl RunReport {
    pub fn new(
        run_id: impl Into<String>,
        regime: Regime,
        graph_id: impl Into<String>,
        seed: u64,
        accuracies: Vec<f64>,
        epoch_time_s: f64,
        config_fingerprint: impl Into<String>,
    ) -> Self {
        let mean = accuracies.iter().sum::<f64>() / accuracies.len().max(1) as f64;
        let std = sample_std(&accuracies);
        RunReport {
            run_id: run_id.into(),
            regime,
            graph_id: graph_id.into(),
            seed,
            accuracies,
            mean,
            std,
            epoch_time_s,
            config_fingerprint: config_fingerprint.into(),
        }
    }

    /// The stored mean/std must always be recomputable from the raw list.
    pub fn check_consistent(&self) -> Result<()> {
        let mean = self.accuracies.iter().sum::<f64>() / self.accuracies.len().max(1) as f64;
        let std = sample_std(&self.accuracies);
        if (mean - self.mean).abs() > 1e-12 || (std - self.std).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "report {} has stale mean/std",
                self.run_id
            )));
        }
        Ok(())
    }
}

/// One table cell: mean ± std, optionally annotated with the improvement
/// over the matching single-graph baseline (rendered in parentheses).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement: Option<f64>,
}

impl Cell {
    pub fn new(mean: f64, std: f64) -> Self {
        Cell {
            mean,
            std,
            improvement: None,
        }
    }

    pub fn with_improvement(mean: f64, std: f64, improvement: f64) -> Self {
        Cell {
            mean,
            std,
            improvement: Some(improvement),
        }
    }
}

/// A tabular comparison: one row per graph, one column per condition.
/// Mirrors the accuracy-table layout of the evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    /// Column names (by index into `columns`) that compete for boldface.
    pub bold_group: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub graph_id: String,
    pub cells: Vec<Cell>,
}

impl ComparisonTable {
    /// Markdown rendering; within `bold_group` columns the best mean per
    /// row is bold.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n", self.title);
        out.push_str("| Dataset |");
        for c in &self.columns {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|");
        for _ in &self.columns {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.graph_id));
            let best = self
                .bold_group
                .iter()
                .map(|&i| row.cells[i].mean)
                .fold(f64::NEG_INFINITY, f64::max);
            for (i, cell) in row.cells.iter().enumerate() {
                let mut text = format!("{:.3} ± {:.3}", cell.mean, cell.std);
                if let Some(imp) = cell.improvement {
                    text.push_str(&format!(" ({imp:+.3})"));
                }
                if self.bold_group.contains(&i) && cell.mean == best {
                    out.push_str(&format!(" **{text}** |"));
                } else {
                    out.push_str(&format!(" {text} |"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// CSV rendering with full-precision floats. An improvement column is
    /// emitted for every condition that carries annotations.
    pub fn to_csv(&self) -> String {
        let annotated: Vec<bool> = (0..self.columns.len())
            .map(|i| self.rows.iter().any(|r| r.cells[i].improvement.is_some()))
            .collect();
        let mut out = String::from("graph_id");
        for (c, &ann) in self.columns.iter().zip(&annotated) {
            out.push_str(&format!(",{c}_mean,{c}_std"));
            if ann {
                out.push_str(&format!(",{c}_improvement"));
            }
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.graph_id);
            for (cell, &ann) in row.cells.iter().zip(&annotated) {
                out.push_str(&format!(",{},{}", cell.mean, cell.std));
                if ann {
                    match cell.improvement {
                        Some(imp) => out.push_str(&format!(",{imp}")),
                        None => out.push(','),
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
