//! Grid execution: runs every (variant, drift ratio, seed) cell, streams
//! per-epoch artifacts, and assembles the result table. Completed runs are
//! committed atomically by renaming their staging directory; a failed run
//! leaves its `.partial` directory behind for inspection.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::divergence::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::harness::config::{DataBlock, ExperimentConfig, RunSpec};
use crate::harness::table::ResultTable;
use crate::semantic::semantic_divergence_matrix;
use crate::trainer::{AblationFlags, MetricsRecord, Mode, TrainConfig, Trainer};

pub const CONFIG_COPY_FILE: &str = "config.json";
pub const RUNS_DIR: &str = "runs";
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ALPHA_TRAJECTORY_FILE: &str = "alpha_trajectory.csv";
pub const CLASS_COUNTS_FILE: &str = "class_counts.json";
pub const E_MATRIX_FILE: &str = "e_matrix.json";
pub const BANK_FILE: &str = "bank.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const RESULTS_MD_FILE: &str = "results.md";
pub const RESULTS_CSV_FILE: &str = "results.csv";
pub const DRIFT_SWEEP_FILE: &str = "drift_sweep.csv";
pub const TIMING_SUMMARY_FILE: &str = "timing_summary.json";

/// Per-run deterministic outcome; excludes timing so that re-runs reproduce
/// the file byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub variant: String,
    pub mode: Mode,
    pub ablation: AblationFlags,
    pub rho: f64,
    pub seed: u64,
    pub epochs: usize,
    pub tasks: Vec<String>,
    pub final_accuracy: Vec<f64>,
    pub final_train_losses: Vec<f64>,
    pub final_semantic_loss: f64,
    pub final_alpha: Vec<Vec<f64>>,
    pub label_js: Vec<Vec<f64>>,
}

/// Wall-clock side channel, kept out of [`RunSummary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTiming {
    pub epochs: usize,
    pub mean_epoch_secs: f64,
    pub total_train_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskClassCounts {
    pub name: String,
    pub counts: Vec<usize>,
}

/// Echo of everything that determined one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedRunConfig {
    pub run_id: String,
    pub variant: String,
    pub rho: f64,
    pub train: TrainConfig,
    pub data: DataBlock,
}

/// Executes the full grid from a config file and writes all artifacts under
/// the resolved output directory.
pub fn run_experiment(config_path: &Path) -> Result<ResultTable> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out = cfg.resolve_output_dir();
    fs::create_dir_all(out.join(RUNS_DIR))?;
    write_atomic(&out.join(CONFIG_COPY_FILE), &fs::read(config_path)?)?;

    let mut results = Vec::new();
    for spec in cfg.expand() {
        results.push(run_one(&cfg, spec, &out)?);
    }
    let table = ResultTable::from_runs(&results)?;
    write_table_files(&out, &table)?;
    Ok(table)
}

fn run_one(cfg: &ExperimentConfig, spec: RunSpec, out: &Path) -> Result<(RunSummary, RunTiming)> {
    let run_id = spec.id();
    let final_dir = out.join(RUNS_DIR).join(&run_id);
    let staging = out.join(RUNS_DIR).join(format!("{run_id}.partial"));
    for dir in [&staging, &final_dir] {
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(&staging)?;

    let train_cfg = TrainConfig {
        mode: spec.variant.mode,
        ablation: spec.variant.ablation,
        seed: spec.seed,
        ..cfg.train.clone()
    }
    .validated()?;
    write_json(&staging.join(RUN_CONFIG_FILE), &ResolvedRunConfig {
        run_id: run_id.clone(),
        variant: spec.variant.label(),
        rho: spec.rho,
        train: train_cfg.clone(),
        data: cfg.data.clone(),
    })?;

    let pairs = cfg.build_datasets(spec.rho)?;
    let names: Vec<String> = pairs.iter().map(|(tr, _)| tr.name.clone()).collect();
    let unique: BTreeSet<&String> = names.iter().collect();
    if unique.len() != names.len() {
        return Err(Error::Config(format!("duplicate task names: {names:?}")));
    }
    let counts: Vec<TaskClassCounts> = pairs
        .iter()
        .map(|(tr, _)| TaskClassCounts { name: tr.name.clone(), counts: tr.class_counts().to_vec() })
        .collect();
    write_json(&staging.join(CLASS_COUNTS_FILE), &counts)?;

    let (train, test): (Vec<TaskDataset>, Vec<TaskDataset>) = pairs.into_iter().unzip();
    let mut trainer = Trainer::new(train_cfg.clone(), train, test)?
        .with_checkpoint_dir(staging.join(CHECKPOINT_DIR));

    let mut metrics = csv::Writer::from_path(staging.join(METRICS_FILE))
        .map_err(|e| Error::Data(format!("{}: {e}", METRICS_FILE)))?;
    metrics
        .write_record(["epoch", "task", "train_loss", "test_accuracy", "semantic_loss", "wall_time_secs"])
        .map_err(csv_err)?;
    let mut alpha_log = csv::Writer::from_path(staging.join(ALPHA_TRAJECTORY_FILE))
        .map_err(|e| Error::Data(format!("{}: {e}", ALPHA_TRAJECTORY_FILE)))?;
    alpha_log.write_record(["epoch", "t", "i", "value"]).map_err(csv_err)?;

    let mut history: Vec<MetricsRecord> = Vec::with_capacity(train_cfg.epochs);
    for _ in 0..train_cfg.epochs {
        let rec = trainer.train_epoch()?;
        for (task, name) in names.iter().enumerate() {
            metrics
                .write_record([
                    rec.epoch.to_string(),
                    name.clone(),
                    rec.train_losses[task].to_string(),
                    rec.test_accuracy[task].to_string(),
                    rec.semantic_loss.to_string(),
                    rec.wall_time_secs.to_string(),
                ])
                .map_err(csv_err)?;
        }
        for (t, row) in rec.alpha.iter().enumerate() {
            for (i, value) in row.iter().enumerate() {
                alpha_log
                    .write_record([
                        rec.epoch.to_string(),
                        t.to_string(),
                        i.to_string(),
                        value.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
        }
        metrics.flush()?;
        alpha_log.flush()?;
        history.push(rec);
    }
    drop(metrics);
    drop(alpha_log);

    let dists: Vec<DiscreteDistribution> = counts
        .iter()
        .map(|c| DiscreteDistribution::from_counts(&c.counts))
        .collect::<Result<_>>()?;
    let e = semantic_divergence_matrix(trainer.bank(), &dists)?;
    write_json(&staging.join(E_MATRIX_FILE), &e)?;
    write_json(&staging.join(BANK_FILE), trainer.bank())?;

    let last = history.last().expect("epochs >= 1");
    let total: f64 = history.iter().map(|r| r.wall_time_secs).sum();
    let summary = RunSummary {
        run_id: run_id.clone(),
        variant: spec.variant.label(),
        mode: spec.variant.mode,
        ablation: spec.variant.ablation,
        rho: spec.rho,
        seed: spec.seed,
        epochs: history.len(),
        tasks: names,
        final_accuracy: last.test_accuracy.clone(),
        final_train_losses: last.train_losses.clone(),
        final_semantic_loss: last.semantic_loss,
        final_alpha: last.alpha.clone(),
        label_js: last.label_js.clone(),
    };
    let timing = RunTiming {
        epochs: history.len(),
        mean_epoch_secs: total / history.len() as f64,
        total_train_secs: total,
    };
    write_json(&staging.join(SUMMARY_FILE), &summary)?;
    write_json(&staging.join(TIMING_FILE), &timing)?;

    fs::rename(&staging, &final_dir)?;
    Ok((summary, timing))
}

/// Loads every completed run under `dir/runs`, sorted by run id.
pub fn load_results(dir: &Path) -> Result<Vec<(RunSummary, RunTiming)>> {
    let runs_dir = dir.join(RUNS_DIR);
    if !runs_dir.is_dir() {
        return Err(Error::MissingArtifacts(vec![runs_dir]));
    }
    let mut run_dirs: Vec<PathBuf> = fs::read_dir(&runs_dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy();
            p.is_dir() && !name.ends_with(".partial") && !name.ends_with(".tmp")
        })
        .collect();
    run_dirs.sort();
    let mut results = Vec::with_capacity(run_dirs.len());
    for run in run_dirs {
        results.push((
            read_json::<RunSummary>(&run.join(SUMMARY_FILE))?,
            read_json::<RunTiming>(&run.join(TIMING_FILE))?,
        ));
    }
    if results.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no completed runs under {}",
            runs_dir.display()
        )));
    }
    Ok(results)
}

/// Rebuilds the result table and its rendered files from stored run
/// artifacts; returns the table and its Markdown rendering.
pub fn render_results(dir: &Path) -> Result<(ResultTable, String)> {
    let table = ResultTable::from_runs(&load_results(dir)?)?;
    write_table_files(dir, &table)?;
    Ok((table.clone(), table.render_markdown()))
}

fn write_table_files(out: &Path, table: &ResultTable) -> Result<()> {
    write_atomic(&out.join(RESULTS_MD_FILE), table.render_markdown().as_bytes())?;
    write_atomic(&out.join(RESULTS_CSV_FILE), table.render_csv()?.as_bytes())?;
    if let Some(sweep) = table.drift_sweep_csv()? {
        write_atomic(&out.join(DRIFT_SWEEP_FILE), sweep.as_bytes())?;
    }
    write_json(&out.join(TIMING_SUMMARY_FILE), &table.timing_summary())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingArtifacts(vec![path.to_path_buf()]));
    }
    serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write: {e}"))
}
