//! Task datasets: CSV IO, the synthetic multi-task generator, the
//! label-drift simulator, and synchronized mini-batch iteration.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::{empirical_label_distribution, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One task's examples for one split.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub name: String,
    pub split: Split,
    features: Tensor,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
}

impl TaskDataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        if let Some(v) = features.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value {v}")));
        }
        let mut class_counts = vec![0usize; num_classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::Data(format!(
                    "label {y} out of range for {num_classes} classes (row {i})"
                )));
            }
            class_counts[y] += 1;
        }
        Ok(TaskDataset {
            name: name.into(),
            split,
            features,
            labels,
            class_counts,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn label_distribution(&self) -> Result<DiscreteDistribution> {
        empirical_label_distribution(&self.labels, self.num_classes())
    }

    /// New dataset containing `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<TaskDataset> {
        let d = self.feature_dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.num_samples() {
                return Err(Error::InvalidArgument(format!("row {r} out of range")));
            }
            data.extend_from_slice(self.features.row(r));
            labels.push(self.labels[r]);
        }
        TaskDataset::new(
            self.name.clone(),
            self.split,
            Tensor::new([rows.len(), d], data)?,
            labels,
            self.num_classes(),
        )
    }
}

/// Column layout of a dataset CSV: named feature columns, one integer label
/// column, and the label range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub num_classes: usize,
}

impl CsvSchema {
    /// Conventional layout: features `f0..f{d-1}`, label column `label`.
    pub fn default_for(dim: usize, num_classes: usize) -> Self {
        CsvSchema {
            feature_columns: (0..dim).map(|i| format!("f{i}")).collect(),
            label_column: "label".into(),
            num_classes,
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema, split: Split) -> Result<TaskDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Data(format!("{}: {e}", path.display())),
        _ => Error::Data(format!("{}: {e}", path.display())),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "{}: column '{name}' not found in header",
                path.display()
            ))
        })
    };
    let feature_idx: Vec<usize> = schema
        .feature_columns
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;
    let label_idx = col_index(&schema.label_column)?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::Data(format!("{}: row {}: {e}", path.display(), row + 1))
        })?;
        for (&ci, cname) in feature_idx.iter().zip(&schema.feature_columns) {
            let cell = record.get(ci).ok_or_else(|| {
                Error::Data(format!(
                    "{}: row {}: missing column '{cname}'",
                    path.display(),
                    row + 1
                ))
            })?;
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}, column '{cname}': non-numeric value '{cell}'",
                    path.display(),
                    row + 1
                ))
            })?;
            data.push(v);
        }
        let cell = record.get(label_idx).ok_or_else(|| {
            Error::Data(format!(
                "{}: row {}: missing label column",
                path.display(),
                row + 1
            ))
        })?;
        let y: usize = cell.trim().parse().map_err(|_| {
            Error::Data(format!(
                "{}: row {}, column '{}': non-integer label '{cell}'",
                path.display(),
                row + 1,
                schema.label_column
            ))
        })?;
        labels.push(y);
    }
    let n = labels.len();
    let features = Tensor::new([n, schema.feature_columns.len()], data)?;
    TaskDataset::new(name, split, features, labels, schema.num_classes)
}

pub fn save_csv(dataset: &TaskDataset, path: &Path, schema: &CsvSchema) -> Result<()> {
    if schema.feature_columns.len() != dataset.feature_dim() {
        return Err(Error::Shape(format!(
            "schema has {} feature columns, dataset has {}",
            schema.feature_columns.len(),
            dataset.feature_dim()
        )));
    }
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut header = schema.feature_columns.clone();
    header.push(schema.label_column.clone());
    writer
        .write_record(&header)
        .map_err(|e| Error::Data(e.to_string()))?;
    for r in 0..dataset.num_samples() {
        let mut row: Vec<String> = dataset.features().row(r).iter().map(|v| format!("{v}")).collect();
        row.push(dataset.labels()[r].to_string());
        writer
            .write_record(&row)
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Train/val/test triple for one task.
#[derive(Debug, Clone)]
pub struct TaskSplits {
    pub train: TaskDataset,
    pub val: TaskDataset,
    pub test: TaskDataset,
}

/// Shared class anchors at pairwise distance ≥ 4σ (axis-aligned, scaled by
/// level so anchors never collide for any K and d).
fn class_anchors(k: usize, d: usize, sigma: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|ki| {
            let mut mu = vec![0.0; d];
            let axis = ki % d;
            let level = (ki / d + 1) as f64;
            mu[axis] = 4.0 * sigma * level;
            mu
        })
        .collect()
}

fn unit_offset(rng: &mut ChaCha8Rng, d: usize, norm: f64) -> Vec<f64> {
    if norm == 0.0 {
        return vec![0.0; d];
    }
    let raw: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let len: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len < 1e-12 {
        let mut v = vec![0.0; d];
        v[0] = norm;
        return v;
    }
    raw.into_iter().map(|v| v * norm / len).collect()
}

/// Gaussian multi-task fixture: class k of task t is drawn from
/// `N(μ_k + δ_{t,k}, σ²·I)` where ‖δ_{t,k}‖ = σ_task. Each split is balanced;
/// val holds ⌈n/5⌉ rows per class, train and test hold n.
pub fn make_synthetic_tasks(
    num_tasks: usize,
    num_classes: usize,
    dim: usize,
    n_per_class: usize,
    sigma_task: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<TaskSplits>> {
    if num_tasks == 0 || num_classes == 0 || dim == 0 || n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "tasks, classes, dim and n_per_class must all be >= 1".into(),
        ));
    }
    if !(sigma.is_finite() && sigma > 0.0) || !(sigma_task.is_finite() && sigma_task >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need sigma > 0 and sigma_task >= 0, got {sigma}, {sigma_task}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors = class_anchors(num_classes, dim, sigma);
    let offsets: Vec<Vec<Vec<f64>>> = (0..num_tasks)
        .map(|_| {
            (0..num_classes)
                .map(|_| unit_offset(&mut rng, dim, sigma_task))
                .collect()
        })
        .collect();

    let n_val = n_per_class.div_ceil(5);
    let mut out = Vec::with_capacity(num_tasks);
    for t in 0..num_tasks {
        let mut gen_split = |split: Split, per_class: usize| -> Result<TaskDataset> {
            let n = per_class * num_classes;
            let mut data = Vec::with_capacity(n * dim);
            let mut labels = Vec::with_capacity(n);
            for k in 0..num_classes {
                for _ in 0..per_class {
                    for j in 0..dim {
                        let noise: f64 = rng.sample(StandardNormal);
                        data.push(anchors[k][j] + offsets[t][k][j] + sigma * noise);
                    }
                    labels.push(k);
                }
            }
            TaskDataset::new(
                format!("task{t}"),
                split,
                Tensor::new([n, dim], data)?,
                labels,
                num_classes,
            )
        };
        let train = gen_split(Split::Train, n_per_class)?;
        let val = gen_split(Split::Val, n_val)?;
        let test = gen_split(Split::Test, n_per_class)?;
        out.push(TaskSplits { train, val, test });
    }
    Ok(out)
}

/// Which classes to subsample for each task, and by how much.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftSpec {
    /// classes[t] lists the class indices drifted for task t.
    pub classes: Vec<Vec<usize>>,
    /// Drop ratio ρ ∈ [0,1): each drifted class keeps ⌈(1−ρ)·n_k⌉ rows.
    pub rho: f64,
}

impl DriftSpec {
    pub fn validate(&self, num_tasks: usize, num_classes: usize) -> Result<()> {
        if self.classes.len() != num_tasks {
            return Err(Error::Config(format!(
                "drift spec covers {} tasks, experiment has {num_tasks}",
                self.classes.len()
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "drift rho must be in [0,1), got {}",
                self.rho
            )));
        }
        for (t, cs) in self.classes.iter().enumerate() {
            for &c in cs {
                if c >= num_classes {
                    return Err(Error::Config(format!(
                        "drift spec for task {t} names class {c}, but K = {num_classes}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn retained_count(n: usize, rho: f64) -> usize {
    // ⌈(1−ρ)·n⌉ with a guard against FP noise pushing exact integers up.
    (((1.0 - rho) * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Subsamples the listed classes at ratio `rho`, keeping survivors in their
/// original row order. Other classes are untouched; ρ=0 is the identity.
pub fn apply_drift(
    dataset: &TaskDataset,
    classes: &[usize],
    rho: f64,
    seed: u64,
) -> Result<TaskDataset> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "drift rho must be in [0,1), got {rho}"
        )));
    }
    for &c in classes {
        if c >= dataset.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "drift class {c} out of range for {} classes",
                dataset.num_classes()
            )));
        }
        if dataset.class_counts()[c] == 0 {
            return Err(Error::InvalidArgument(format!(
                "drift class {c} has no instances in '{}'",
                dataset.name
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; dataset.num_samples()];
    for &c in classes {
        let rows: Vec<usize> = (0..dataset.num_samples())
            .filter(|&r| dataset.labels()[r] == c)
            .collect();
        let retain = retained_count(rows.len(), rho);
        if retain >= rows.len() {
            continue;
        }
        let chosen = sample_indices(&mut rng, rows.len(), retain);
        let mut retained = vec![false; rows.len()];
        for i in chosen.iter() {
            retained[i] = true;
        }
        for (i, &r) in rows.iter().enumerate() {
            keep[r] = retained[i];
        }
    }
    let rows: Vec<usize> = (0..dataset.num_samples()).filter(|&r| keep[r]).collect();
    dataset.subset(&rows)
}

/// One synchronized mini-batch for one task.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

/// Per-epoch synchronized batch schedule: every step yields one same-size
/// batch per task; shorter tasks cycle their epoch permutation.
pub struct BatchIter<'a> {
    datasets: &'a [TaskDataset],
    perms: Vec<Vec<usize>>,
    batch_size: usize,
    steps: usize,
    step: usize,
    max_n: usize,
}

pub fn batch_iterator<'a>(
    datasets: &'a [TaskDataset],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<BatchIter<'a>> {
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("no datasets".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    if let Some(d) = datasets.iter().find(|d| d.num_samples() == 0) {
        return Err(Error::InvalidArgument(format!("task '{}' is empty", d.name)));
    }
    // One RNG per (seed, epoch); task permutations are drawn in task order.
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    let perms: Vec<Vec<usize>> = datasets
        .iter()
        .map(|d| {
            let mut idx: Vec<usize> = (0..d.num_samples()).collect();
            // Fisher-Yates, explicit for cross-version stability.
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            idx
        })
        .collect();
    let max_n = datasets.iter().map(|d| d.num_samples()).max().unwrap();
    let steps = max_n.div_ceil(batch_size);
    Ok(BatchIter {
        datasets,
        perms,
        batch_size,
        steps,
        step: 0,
        max_n,
    })
}

impl BatchIter<'_> {
    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Vec<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.step >= self.steps {
            return None;
        }
        let start = self.step * self.batch_size;
        let count = self.batch_size.min(self.max_n - start);
        let mut out = Vec::with_capacity(self.datasets.len());
        for (ds, perm) in self.datasets.iter().zip(&self.perms) {
            let d = ds.feature_dim();
            let mut data = Vec::with_capacity(count * d);
            let mut labels = Vec::with_capacity(count);
            for i in 0..count {
                let row = perm[(start + i) % perm.len()];
                data.extend_from_slice(ds.features().row(row));
                labels.push(ds.labels()[row]);
            }
            out.push(Batch {
                features: Tensor::new([count, d], data).expect("sized above"),
                labels,
            });
        }
        self.step += 1;
        Some(out)
    }
}
