//! Experiment configuration: one JSON document per experiment; the grid block
//! is expanded into runs by Cartesian product.

use std::collections::BTreeSet;
use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_drift, load_csv, make_synthetic_tasks, CsvSchema, DriftSpec, Split, TaskDataset,
};
use crate::error::{Error, Result};
use crate::trainer::{AblationFlags, Mode, TrainConfig};

/// Environment variable that re-roots relative `output_dir` values.
pub const OUTPUT_ROOT_ENV: &str = "SMTL_OUTPUT_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_tasks: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    #[serde(default)]
    pub sigma_task: f64,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvTaskSpec {
    pub train: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSpec {
    pub tasks: Vec<CsvTaskSpec>,
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvSpec>,
    /// Per-task class lists eligible for drift; the ratio comes from the
    /// grid's `drift_ratios`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_classes: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    /// Baseline/smtl rows, each run without ablations.
    pub modes: Vec<Mode>,
    /// Additional smtl rows, one per flag set.
    pub ablations: Vec<AblationFlags>,
    pub seeds: Vec<u64>,
    pub drift_ratios: Vec<f64>,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            modes: vec![Mode::Smtl],
            ablations: vec![],
            seeds: vec![0],
            drift_ratios: vec![0.0],
        }
    }
}

/// One grid row: a mode plus (for smtl) its ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub mode: Mode,
    #[serde(default)]
    pub ablation: AblationFlags,
}

impl Variant {
    pub fn label(&self) -> String {
        if self.mode == Mode::Smtl && self.ablation.any() {
            format!("smtl-{}", self.ablation.label())
        } else {
            self.mode.name().to_string()
        }
    }
}

/// One fully-resolved grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub variant: Variant,
    pub rho: f64,
    pub seed: u64,
}

impl RunSpec {
    /// Directory-safe unique id, e.g. `smtl-no_reweight_rho0.6_seed3`.
    pub fn id(&self) -> String {
        format!("{}_rho{}_seed{}", self.variant.label(), self.rho, self.seed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataBlock,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: GridBlock,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &str, detail: impl Into<String>) -> Error {
            Error::Config(format!("{field}: {}", detail.into()))
        }
        let (num_tasks, num_classes) = match (&self.data.synthetic, &self.data.csv) {
            (Some(s), None) => {
                for (name, v) in [
                    ("data.synthetic.num_tasks", s.num_tasks),
                    ("data.synthetic.num_classes", s.num_classes),
                    ("data.synthetic.dim", s.dim),
                    ("data.synthetic.n_per_class", s.n_per_class),
                ] {
                    if v == 0 {
                        return Err(bad(name, "must be >= 1"));
                    }
                }
                if !(s.sigma.is_finite() && s.sigma > 0.0) {
                    return Err(bad("data.synthetic.sigma", format!("must be > 0, got {}", s.sigma)));
                }
                if !(s.sigma_task.is_finite() && s.sigma_task >= 0.0) {
                    return Err(bad(
                        "data.synthetic.sigma_task",
                        format!("must be >= 0, got {}", s.sigma_task),
                    ));
                }
                (s.num_tasks, s.num_classes)
            }
            (None, Some(c)) => {
                if c.tasks.is_empty() {
                    return Err(bad("data.csv.tasks", "must list at least one task"));
                }
                if c.schema.num_classes == 0 {
                    return Err(bad("data.csv.schema.num_classes", "must be >= 1"));
                }
                if c.schema.feature_columns.is_empty() {
                    return Err(bad("data.csv.schema.feature_columns", "must be nonempty"));
                }
                (c.tasks.len(), c.schema.num_classes)
            }
            _ => {
                return Err(bad("data", "exactly one of 'synthetic' or 'csv' must be set"));
            }
        };

        if self.grid.seeds.is_empty() {
            return Err(bad("grid.seeds", "must be nonempty"));
        }
        let unique: BTreeSet<_> = self.grid.seeds.iter().collect();
        if unique.len() != self.grid.seeds.len() {
            return Err(bad("grid.seeds", "duplicate seeds"));
        }
        if self.grid.modes.is_empty() && self.grid.ablations.is_empty() {
            return Err(bad("grid", "modes and ablations are both empty"));
        }
        if self.grid.drift_ratios.is_empty() {
            return Err(bad("grid.drift_ratios", "must be nonempty (use [0.0] for no drift)"));
        }
        for &rho in &self.grid.drift_ratios {
            if !(0.0..1.0).contains(&rho) {
                return Err(bad("grid.drift_ratios", format!("ratio {rho} outside [0, 1)")));
            }
        }
        let bits: BTreeSet<u64> = self.grid.drift_ratios.iter().map(|r| r.to_bits()).collect();
        if bits.len() != self.grid.drift_ratios.len() {
            return Err(bad("grid.drift_ratios", "duplicate ratios"));
        }
        let labels: BTreeSet<String> = self.variants().iter().map(Variant::label).collect();
        if labels.len() != self.variants().len() {
            return Err(bad("grid", "duplicate mode/ablation rows"));
        }

        let needs_drift = self.grid.drift_ratios.iter().any(|&r| r > 0.0);
        match &self.data.drift_classes {
            Some(classes) => {
                // Validate structure with a representative nonzero ratio.
                let rho = if needs_drift { 0.5 } else { 0.0 };
                DriftSpec { classes: classes.clone(), rho }
                    .validate(num_tasks, num_classes)
                    .map_err(|e| bad("data.drift_classes", e.to_string()))?;
            }
            None if needs_drift => {
                return Err(bad(
                    "data.drift_classes",
                    "required when grid.drift_ratios contains nonzero ratios",
                ));
            }
            None => {}
        }

        self.train.clone().validated()?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(bad("output_dir", "must be nonempty"));
        }
        Ok(())
    }

    /// Grid rows in declaration order: plain modes first, then smtl
    /// ablations.
    pub fn variants(&self) -> Vec<Variant> {
        let mut v: Vec<Variant> = self
            .grid
            .modes
            .iter()
            .map(|&mode| Variant { mode, ablation: AblationFlags::default() })
            .collect();
        v.extend(self.grid.ablations.iter().map(|&ablation| Variant {
            mode: Mode::Smtl,
            ablation,
        }));
        v
    }

    /// Cartesian expansion: variants × drift ratios × seeds.
    pub fn expand(&self) -> Vec<RunSpec> {
        let mut runs = Vec::new();
        for variant in self.variants() {
            for &rho in &self.grid.drift_ratios {
                for &seed in &self.grid.seeds {
                    runs.push(RunSpec { variant, rho, seed });
                }
            }
        }
        runs
    }

    /// `output_dir`, re-rooted under `SMTL_OUTPUT_ROOT` when that is set and
    /// the configured path is relative.
    pub fn resolve_output_dir(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Materializes `(train, test)` per task for one drift ratio. Drift only
    /// ever touches training splits.
    pub fn build_datasets(&self, rho: f64) -> Result<Vec<(TaskDataset, TaskDataset)>> {
        let mut pairs = match (&self.data.synthetic, &self.data.csv) {
            (Some(s), None) => make_synthetic_tasks(
                s.num_tasks,
                s.num_classes,
                s.dim,
                s.n_per_class,
                s.sigma_task,
                s.sigma,
                s.seed,
            )?
            .into_iter()
            .map(|splits| (splits.train, splits.test))
            .collect::<Vec<_>>(),
            (None, Some(c)) => c
                .tasks
                .iter()
                .map(|t| {
                    Ok((
                        load_csv(&t.train, &c.schema, Split::Train)?,
                        load_csv(&t.test, &c.schema, Split::Test)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(Error::Config("data: exactly one source must be set".into())),
        };

        if rho > 0.0 {
            let classes = self.data.drift_classes.as_ref().ok_or_else(|| {
                Error::Config("data.drift_classes: required for nonzero drift".into())
            })?;
            let base = self.data.synthetic.as_ref().map_or(0, |s| s.seed);
            for (t, (train, _)) in pairs.iter_mut().enumerate() {
                if classes[t].is_empty() {
                    continue;
                }
                *train = apply_drift(train, &classes[t], rho, drift_seed(base, t, rho))?;
            }
        }
        Ok(pairs)
    }
}

/// Deterministic per-(task, ratio) drift stream, decorrelated from the data
/// seed.
fn drift_seed(base: u64, task: usize, rho: f64) -> u64 {
    base ^ rho.to_bits() ^ (task as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
