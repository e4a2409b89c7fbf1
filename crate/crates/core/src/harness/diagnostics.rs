//! Post-hoc run diagnostics: recomputes the label-divergence matrices from
//! stored class counts, reloads the final E matrix, and summarizes the α
//! trajectory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::divergence::{DiscreteDistribution, DivergenceReport};
use crate::error::{Error, Result};
use crate::harness::runner::{
    read_json, RunSummary, TaskClassCounts, ALPHA_TRAJECTORY_FILE, CLASS_COUNTS_FILE,
    E_MATRIX_FILE, SUMMARY_FILE,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaTrajectorySummary {
    pub epochs: usize,
    pub initial: Vec<Vec<f64>>,
    #[serde(rename = "final")]
    pub final_alpha: Vec<Vec<f64>>,
    /// max over (t,i) of |final − initial|.
    pub max_abs_change: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub run_id: String,
    pub tasks: Vec<String>,
    pub divergence: DivergenceReport,
    pub alpha: AlphaTrajectorySummary,
}

/// Builds the diagnostics report for one completed run directory.
pub fn diagnostics(run_dir: &Path) -> Result<DiagnosticsReport> {
    let required = [SUMMARY_FILE, CLASS_COUNTS_FILE, E_MATRIX_FILE, ALPHA_TRAJECTORY_FILE];
    let missing: Vec<_> = required
        .iter()
        .map(|f| run_dir.join(f))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }

    let summary: RunSummary = read_json(&run_dir.join(SUMMARY_FILE))?;
    let counts: Vec<TaskClassCounts> = read_json(&run_dir.join(CLASS_COUNTS_FILE))?;
    let dists: Vec<DiscreteDistribution> = counts
        .iter()
        .map(|c| DiscreteDistribution::from_counts(&c.counts))
        .collect::<Result<_>>()?;
    let mut divergence = DivergenceReport::from_label_distributions(&dists)?;
    let e: Vec<Vec<f64>> = read_json(&run_dir.join(E_MATRIX_FILE))?;
    let t = dists.len();
    if e.len() != t || e.iter().any(|row| row.len() != t) {
        return Err(Error::Data(format!(
            "{}: E matrix shape does not match {t} tasks",
            run_dir.join(E_MATRIX_FILE).display()
        )));
    }
    divergence.semantic_e = e;

    Ok(DiagnosticsReport {
        run_id: summary.run_id,
        tasks: counts.into_iter().map(|c| c.name).collect(),
        divergence,
        alpha: alpha_trajectory(&run_dir.join(ALPHA_TRAJECTORY_FILE), t)?,
    })
}

fn alpha_trajectory(path: &Path, t: usize) -> Result<AlphaTrajectorySummary> {
    let text = fs::read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut min_epoch = usize::MAX;
    let mut max_epoch = 0usize;
    let mut epochs = std::collections::BTreeSet::new();
    let mut initial = vec![vec![0.0; t]; t];
    let mut final_alpha = vec![vec![0.0; t]; t];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| {
                    Error::Data(format!("{}: row {line}: missing {name}", path.display()))
                })?
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("{}: row {line}: {name}: {e}", path.display())))
        };
        let epoch = parse(0, "epoch")? as usize;
        let row = parse(1, "t")? as usize;
        let col = parse(2, "i")? as usize;
        let value = parse(3, "value")?;
        if row >= t || col >= t {
            return Err(Error::Data(format!(
                "{}: row {line}: alpha index ({row},{col}) outside {t} tasks",
                path.display()
            )));
        }
        epochs.insert(epoch);
        if epoch <= min_epoch {
            min_epoch = epoch;
            initial[row][col] = value;
        }
        if epoch >= max_epoch {
            max_epoch = epoch;
            final_alpha[row][col] = value;
        }
    }
    if epochs.is_empty() {
        return Err(Error::Data(format!("{}: no alpha rows", path.display())));
    }
    let max_abs_change = initial
        .iter()
        .flatten()
        .zip(final_alpha.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(AlphaTrajectorySummary {
        epochs: epochs.len(),
        initial,
        final_alpha,
        max_abs_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DataBlock, ExperimentConfig, GridBlock, SyntheticSpec};
    use crate::harness::runner::{run_experiment, RUNS_DIR};
    use crate::trainer::{Mode, TrainConfig};

    fn run_small(
        out: std::path::PathBuf,
        num_tasks: usize,
        drift_classes: Option<Vec<Vec<usize>>>,
        drift_ratios: Vec<f64>,
    ) -> ExperimentConfig {
        let cfg = ExperimentConfig {
            data: DataBlock {
                synthetic: Some(SyntheticSpec {
                    num_tasks,
                    num_classes: 2,
                    dim: 3,
                    n_per_class: 8,
                    sigma_task: 0.0,
                    sigma: 0.5,
                    seed: 9,
                }),
                csv: None,
                drift_classes,
            },
            train: TrainConfig {
                epochs: 2,
                batch_size: 8,
                hidden_dims: vec![4],
                feature_dim: 3,
                ..TrainConfig::default()
            },
            grid: GridBlock {
                modes: vec![Mode::Smtl],
                ablations: vec![],
                seeds: vec![0],
                drift_ratios,
            },
            output_dir: out,
        };
        let dir = cfg.output_dir.parent().unwrap();
        std::fs::create_dir_all(dir).unwrap();
        let path = dir.join("cfg.json");
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        run_experiment(&path).unwrap();
        cfg
    }

    #[test]
    fn undrifted_symmetric_run_has_near_zero_label_js() {
        let tmp = tempfile::tempdir().unwrap();
        run_small(tmp.path().join("out"), 2, None, vec![0.0]);
        let report =
            diagnostics(&tmp.path().join("out").join(RUNS_DIR).join("smtl_rho0_seed0")).unwrap();
        for (i, row) in report.divergence.label_js.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!(*v < 0.01, "label_js[{i}][{j}] = {v}");
            }
        }
        assert_eq!(report.alpha.epochs, 2);
        for row in &report.alpha.final_alpha {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn drifted_run_has_larger_label_js_than_undrifted() {
        let tmp = tempfile::tempdir().unwrap();
        run_small(
            tmp.path().join("out"),
            2,
            Some(vec![vec![0], vec![1]]),
            vec![0.0, 0.8],
        );
        let runs = tmp.path().join("out").join(RUNS_DIR);
        let base = diagnostics(&runs.join("smtl_rho0_seed0")).unwrap();
        let drifted = diagnostics(&runs.join("smtl_rho0.8_seed0")).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                if i != j {
                    assert!(
                        drifted.divergence.label_js[i][j] > base.divergence.label_js[i][j],
                        "({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn single_task_run_yields_one_by_one_zero_matrices() {
        let tmp = tempfile::tempdir().unwrap();
        run_small(tmp.path().join("out"), 1, None, vec![0.0]);
        let report =
            diagnostics(&tmp.path().join("out").join(RUNS_DIR).join("smtl_rho0_seed0")).unwrap();
        assert_eq!(report.divergence.label_js, vec![vec![0.0]]);
        assert_eq!(report.divergence.tv, vec![vec![0.0]]);
        assert_eq!(report.divergence.semantic_e, vec![vec![0.0]]);
        assert_eq!(report.alpha.final_alpha, vec![vec![1.0]]);
    }

    #[test]
    fn missing_artifacts_are_listed() {
        let tmp = tempfile::tempdir().unwrap();
        match diagnostics(tmp.path()) {
            Err(Error::MissingArtifacts(files)) => assert_eq!(files.len(), 4),
            other => panic!("expected MissingArtifacts, got {other:?}"),
        }
    }
}
