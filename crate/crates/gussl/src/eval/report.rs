//! Report emission: CSV rows per downstream instance, markdown/CSV tables,
//! and SVG plots. Data files are byte-identical across re-runs for the same
//! inputs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::LossHistory;

use super::plot::{grouped_bar_chart_svg, line_chart_svg, LineSeries};
use super::{ComparisonTable, RunReport};

/// Everything a protocol run wants on disk.
#[derive(Default)]
pub struct ReportBundle {
    pub reports: Vec<RunReport>,
    /// (slug, table); slug becomes the file stem.
    pub tables: Vec<(String, ComparisonTable)>,
    /// (run_id, history) for loss-curve plots.
    pub histories: Vec<(String, LossHistory)>,
}

/// One CSV row per downstream instance.
pub fn reports_to_csv(reports: &[RunReport]) -> String {
    let mut out =
        String::from("run_id,regime,graph_id,seed,accuracy,epoch_time_s,config_fingerprint\n");
    for r in reports {
        for acc in &r.accuracies {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.run_id, r.regime, r.graph_id, r.seed, acc, r.epoch_time_s, r.config_fingerprint
            ));
        }
    }
    out
}

/// Write the bundle under `out_dir`: `report.csv`, one `.md`/`.csv` pair
/// per table, a loss-curve SVG per history, and grouped accuracy bars for
/// the first table.
pub fn emit_report(bundle: &ReportBundle, out_dir: impl AsRef<Path>) -> Result<Vec<String>> {
    if bundle.reports.is_empty() && bundle.tables.is_empty() && bundle.histories.is_empty() {
        return Err(Error::InvalidSpec("nothing to report".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for r in &bundle.reports {
        r.check_consistent()?;
    }
    let mut written = Vec::new();
    let mut write = |name: &str, content: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        written.push(name.to_string());
        Ok(())
    };

    if !bundle.reports.is_empty() {
        write("report.csv", reports_to_csv(&bundle.reports))?;
    }
    for (slug, table) in &bundle.tables {
        write(&format!("{slug}.md"), table.to_markdown())?;
        write(&format!("{slug}.csv"), table.to_csv())?;
    }
    for (run_id, history) in &bundle.histories {
        let series: Vec<LineSeries> = history
            .graph_ids
            .iter()
            .enumerate()
            .map(|(gi, gid)| LineSeries {
                name: gid.clone(),
                points: history
                    .rows
                    .iter()
                    .map(|r| (r.epoch as f64, r.per_graph[gi]))
                    .collect(),
            })
            .collect();
        write(
            &format!("loss_{run_id}.svg"),
            line_chart_svg(&format!("training loss — {run_id}"), "epoch", "loss", &series),
        )?;
    }
    if let Some((slug, table)) = bundle.tables.first() {
        let groups: Vec<String> = table.rows.iter().map(|r| r.graph_id.clone()).collect();
        let series: Vec<(String, Vec<f64>)> = table
            .columns
            .iter()
            .enumerate()
            .map(|(ci, name)| {
                (
                    name.clone(),
                    table.rows.iter().map(|r| r.cells[ci].mean).collect(),
                )
            })
            .collect();
        write(
            &format!("{slug}_bars.svg"),
            grouped_bar_chart_svg("test accuracy", "accuracy", &groups, &series),
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Cell, TableRow};
    use crate::train::{EpochRecord, Regime};

    fn bundle() -> ReportBundle {
        let mut history = LossHistory::new(vec!["g0".into()]);
        history.push(EpochRecord {
            epoch: 0,
            per_graph: vec![0.69],
            total: 0.69,
            lr: 1e-3,
            wall_s: 0.1,
        });
        ReportBundle {
            reports: vec![RunReport::new(
                "r0",
                Regime::Finetune,
                "g0",
                1,
                vec![0.8, 0.82],
                0.05,
                "fp",
            )],
            tables: vec![(
                "accuracy".into(),
                ComparisonTable {
                    title: "Node classification accuracy".into(),
                    columns: vec!["Baseline".into(), "SSL".into()],
                    rows: vec![TableRow {
                        graph_id: "g0".into(),
                        cells: vec![Cell::new(0.9, 0.01), Cell::new(0.8, 0.02)],
                    }],
                    bold_group: vec![1],
                },
            )],
            histories: vec![("r0".into(), history)],
        }
    }

    #[test]
    fn emits_expected_files_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&bundle(), dir.path()).unwrap();
        assert!(files.contains(&"report.csv".to_string()));
        assert!(files.contains(&"accuracy.md".to_string()));
        assert!(files.contains(&"accuracy.csv".to_string()));
        assert!(files.contains(&"loss_r0.svg".to_string()));

        let first = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        emit_report(&bundle(), dir.path()).unwrap();
        let second = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(first, second);
        // one row per instance accuracy
        assert_eq!(first.lines().count(), 3);
    }

    #[test]
    fn csv_reparse_recovers_values_exactly() {
        let text = reports_to_csv(&bundle().reports);
        let line = text.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[4].parse::<f64>().unwrap(), 0.8);
    }

    #[test]
    fn empty_bundle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&ReportBundle::default(), dir.path()).is_err());
    }
}
