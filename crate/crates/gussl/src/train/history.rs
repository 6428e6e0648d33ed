//! Per-epoch loss records. Row 0 is a forward-only evaluation at the
//! initial parameters; rows 1..=epochs are training epochs. The `total`
//! column is the plain sum of the per-graph columns.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub per_graph: Vec<f64>,
    pub total: f64,
    pub lr: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub graph_ids: Vec<String>,
    pub rows: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn new(graph_ids: Vec<String>) -> Self {
        LossHistory {
            graph_ids,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EpochRecord) {
        debug_assert_eq!(record.per_graph.len(), self.graph_ids.len());
        self.rows.push(record);
    }

    /// Training rows only (excludes the initial evaluation row).
    pub fn training_rows(&self) -> &[EpochRecord] {
        if self.rows.first().is_some_and(|r| r.epoch == 0) {
            &self.rows[1..]
        } else {
            &self.rows
        }
    }

    pub fn initial(&self) -> Option<&EpochRecord> {
        self.rows.first().filter(|r| r.epoch == 0)
    }

    pub fn final_total(&self) -> Option<f64> {
        self.rows.last().map(|r| r.total)
    }

    /// Copy with wall times zeroed. Determinism contracts compare histories
    /// through this: losses and learning rates are computed, wall clock is
    /// measured.
    pub fn without_wall_times(&self) -> LossHistory {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.wall_s = 0.0;
        }
        out
    }

    /// Median wall time over the middle 80% of training epochs, suppressing
    /// warm-up and tail noise.
    pub fn median_epoch_seconds(&self) -> Option<f64> {
        let rows = self.training_rows();
        if rows.is_empty() {
            return None;
        }
        let skip = rows.len() / 10;
        let mid = &rows[skip..rows.len() - skip];
        let mut times: Vec<f64> = mid.iter().map(|r| r.wall_s).collect();
        times.sort_by(f64::total_cmp);
        Some(times[times.len() / 2])
    }

    /// Floats are printed in shortest round-trip form, so `from_csv` gives
    /// back bit-identical values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch");
        for gid in &self.graph_ids {
            out.push_str(&format!(",loss_{gid}"));
        }
        out.push_str(",total,lr,wall_seconds\n");
        for row in &self.rows {
            out.push_str(&format!("{}", row.epoch));
            for loss in &row.per_graph {
                out.push_str(&format!(",{loss}"));
            }
            out.push_str(&format!(",{},{},{}\n", row.total, row.lr, row.wall_s));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::ParseError {
            path: "<loss history csv>".into(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty csv".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[0] != "epoch" {
            return Err(parse_err(1, "unexpected header".into()));
        }
        let graph_ids: Vec<String> = cols[1..cols.len() - 3]
            .iter()
            .map(|c| {
                c.strip_prefix("loss_")
                    .map(str::to_string)
                    .ok_or_else(|| parse_err(1, format!("unexpected column `{c}`")))
            })
            .collect::<Result<_>>()?;
        let mut history = LossHistory::new(graph_ids);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != cols.len() {
                return Err(parse_err(idx + 1, "wrong cell count".into()));
            }
            let fval = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(idx + 1, format!("bad float `{s}`")))
            };
            let epoch = cells[0]
                .parse::<usize>()
                .map_err(|_| parse_err(idx + 1, format!("bad epoch `{}`", cells[0])))?;
            let per_graph: Vec<f64> = cells[1..cells.len() - 3]
                .iter()
                .map(|c| fval(c))
                .collect::<Result<_>>()?;
            let total = fval(cells[cells.len() - 3])?;
            let lr = fval(cells[cells.len() - 2])?;
            let wall_s = fval(cells[cells.len() - 1])?;
            history.push(EpochRecord {
                epoch,
                per_graph,
                total,
                lr,
                wall_s,
            });
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LossHistory {
        let mut h = LossHistory::new(vec!["a".into(), "b".into()]);
        h.push(EpochRecord {
            epoch: 0,
            per_graph: vec![0.6931471805599453, 0.7],
            total: 1.3931471805599453,
            lr: 1e-3,
            wall_s: 0.01,
        });
        h.push(EpochRecord {
            epoch: 1,
            per_graph: vec![0.5, 0.6],
            total: 1.1,
            lr: 1e-3,
            wall_s: 0.5,
        });
        h
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let h = sample();
        let parsed = LossHistory::from_csv(&h.to_csv()).unwrap();
        assert_eq!(h, parsed);
    }

    #[test]
    fn training_rows_skip_the_initial_eval() {
        let h = sample();
        assert_eq!(h.training_rows().len(), 1);
        assert_eq!(h.initial().unwrap().epoch, 0);
    }

    #[test]
    fn median_ignores_warmup_edges() {
        let mut h = LossHistory::new(vec!["a".into()]);
        for e in 0..=20 {
            h.push(EpochRecord {
                epoch: e,
                per_graph: vec![1.0],
                total: 1.0,
                lr: 1e-3,
                wall_s: if e == 1 { 100.0 } else { 1.0 },
            });
        }
        // the slow first epoch falls outside the middle 80%
        assert_eq!(h.median_epoch_seconds().unwrap(), 1.0);
    }
}
