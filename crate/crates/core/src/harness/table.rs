//! Result aggregation: per-(variant, drift ratio) rows of per-task
//! mean ± std accuracy over seeds, an average column, and epoch timing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::runner::{RunSummary, RunTiming};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    /// Sample (n−1) std; absent with fewer than 2 seeds.
    pub std: Option<f64>,
}

impl CellStats {
    fn over(values: &[f64]) -> CellStats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        });
        CellStats { mean, std }
    }

    fn render(&self) -> String {
        match self.std {
            Some(s) => format!("{:.4} ± {:.4}", self.mean, s),
            None => format!("{:.4} ± n/a", self.mean),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub variant: String,
    pub rho: f64,
    pub seeds: usize,
    /// Aligned with `ResultTable::task_names`.
    pub per_task: Vec<CellStats>,
    pub avg: CellStats,
    pub mean_epoch_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultTable {
    /// Alphabetical; the rendered column order.
    pub task_names: Vec<String>,
    /// Sorted by (variant, rho).
    pub rows: Vec<TableRow>,
}

impl ResultTable {
    pub fn from_runs(runs: &[(RunSummary, RunTiming)]) -> Result<ResultTable> {
        if runs.is_empty() {
            return Err(Error::InvalidArgument("no run results to tabulate".into()));
        }
        let mut task_names = runs[0].0.tasks.clone();
        task_names.sort();
        for (s, _) in runs {
            let mut names = s.tasks.clone();
            names.sort();
            if names != task_names {
                return Err(Error::InvalidArgument(format!(
                    "run {} covers tasks {:?}, expected {:?}",
                    s.run_id, names, task_names
                )));
            }
        }

        // (variant, rho bits) → member runs.
        let mut groups: BTreeMap<(String, u64), Vec<&(RunSummary, RunTiming)>> = BTreeMap::new();
        for run in runs {
            groups
                .entry((run.0.variant.clone(), run.0.rho.to_bits()))
                .or_default()
                .push(run);
        }

        let mut rows = Vec::with_capacity(groups.len());
        for ((variant, _), members) in groups {
            let rho = members[0].0.rho;
            let mut seeds: Vec<u64> = members.iter().map(|(s, _)| s.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            if seeds.len() != members.len() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate seed results for variant '{variant}' at rho {rho}"
                )));
            }
            let per_task: Vec<CellStats> = task_names
                .iter()
                .map(|name| {
                    let accs: Vec<f64> = members
                        .iter()
                        .map(|(s, _)| {
                            let idx = s.tasks.iter().position(|t| t == name).unwrap();
                            s.final_accuracy[idx]
                        })
                        .collect();
                    CellStats::over(&accs)
                })
                .collect();
            let per_seed_avg: Vec<f64> = members
                .iter()
                .map(|(s, _)| s.final_accuracy.iter().sum::<f64>() / s.final_accuracy.len() as f64)
                .collect();
            let mean_epoch_secs = members.iter().map(|(_, t)| t.mean_epoch_secs).sum::<f64>()
                / members.len() as f64;
            rows.push(TableRow {
                variant,
                rho,
                seeds: members.len(),
                per_task,
                avg: CellStats::over(&per_seed_avg),
                mean_epoch_secs,
            });
        }
        Ok(ResultTable { task_names, rows })
    }

    /// Tables-1–5-style Markdown: tasks alphabetically, then "avg.".
    pub fn render_markdown(&self) -> String {
        let mut out = String::from("| variant | rho |");
        for name in &self.task_names {
            out.push_str(&format!(" {name} |"));
        }
        out.push_str(" avg. | seeds | epoch_secs |\n|---|---:|");
        out.push_str(&"---:|".repeat(self.task_names.len()));
        out.push_str("---:|---:|---:|\n");
        for row in &self.rows {
            out.push_str(&format!("| {} | {} |", row.variant, row.rho));
            for cell in &row.per_task {
                out.push_str(&format!(" {} |", cell.render()));
            }
            out.push_str(&format!(
                " {} | {} | {:.4} |\n",
                row.avg.render(),
                row.seeds,
                row.mean_epoch_secs
            ));
        }
        out
    }

    /// Flat CSV: one row per (variant, rho, task) plus an "avg." row each.
    pub fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "rho", "task", "seeds", "mean_accuracy", "std_accuracy"])
            .map_err(csv_err)?;
        for row in &self.rows {
            let cells = row.per_task.iter().zip(&self.task_names);
            for (cell, name) in cells.chain(std::iter::once((&row.avg, &"avg.".to_string()))) {
                w.write_record([
                    row.variant.clone(),
                    row.rho.to_string(),
                    name.clone(),
                    row.seeds.to_string(),
                    cell.mean.to_string(),
                    cell.std.map(|s| s.to_string()).unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
        }
        finish(w)
    }

    /// Fig.-3-style sweep: average accuracy versus drift ratio, one series
    /// per variant. Present only when the grid swept ≥ 2 ratios.
    pub fn drift_sweep_csv(&self) -> Result<Option<String>> {
        let distinct: std::collections::BTreeSet<u64> =
            self.rows.iter().map(|r| r.rho.to_bits()).collect();
        if distinct.len() < 2 {
            return Ok(None);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "rho", "mean_avg_accuracy", "std_avg_accuracy"])
            .map_err(csv_err)?;
        for row in &self.rows {
            w.write_record([
                row.variant.clone(),
                row.rho.to_string(),
                row.avg.mean.to_string(),
                row.avg.std.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        finish(w).map(Some)
    }

    /// Fig.-2-style per-variant mean epoch seconds, with ratios against the
    /// vanilla baseline when it is present.
    pub fn timing_summary(&self) -> TimingSummary {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for row in &self.rows {
            let e = sums.entry(row.variant.clone()).or_insert((0.0, 0));
            e.0 += row.mean_epoch_secs;
            e.1 += 1;
        }
        let mean_epoch_secs: BTreeMap<String, f64> =
            sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
        let ratio_to_vanilla = mean_epoch_secs.get("vanilla").map(|&base| {
            mean_epoch_secs
                .iter()
                .map(|(k, &v)| (k.clone(), v / base))
                .collect()
        });
        TimingSummary { mean_epoch_secs, ratio_to_vanilla }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingSummary {
    pub mean_epoch_secs: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_to_vanilla: Option<BTreeMap<String, f64>>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("csv utf-8: {e}")))
}
