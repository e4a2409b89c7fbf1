//! Global semantic matching: EMA centroid bank, the semantic alignment loss
//! L_S over task pairs, and the semantic divergence matrix E.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::divergence::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Exponentially-smoothed per-task per-class feature centroids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentroidBank {
    /// T×K×d.
    centroids: Vec<Vec<Vec<f64>>>,
    /// T×K; an uninitialized (t,k) entry is never read into a loss.
    initialized: Vec<Vec<bool>>,
    gamma: f64,
}

impl CentroidBank {
    pub fn new(num_tasks: usize, num_classes: usize, dim: usize, gamma: f64) -> Result<Self> {
        if num_tasks == 0 || num_classes == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "centroid bank needs tasks, classes and dim >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be in [0, 1], got {gamma}"
            )));
        }
        Ok(CentroidBank {
            centroids: vec![vec![vec![0.0; dim]; num_classes]; num_tasks],
            initialized: vec![vec![false; num_classes]; num_tasks],
            gamma,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.centroids.len()
    }

    pub fn num_classes(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn feature_dim(&self) -> usize {
        self.centroids[0][0].len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_initialized(&self, task: usize, class: usize) -> bool {
        self.initialized[task][class]
    }

    pub fn centroid(&self, task: usize, class: usize) -> Option<&[f64]> {
        self.initialized[task][class].then(|| self.centroids[task][class].as_slice())
    }

    /// Overwrites one centroid and marks it initialized (diagnostics and
    /// fixture setup).
    pub fn set_centroid(&mut self, task: usize, class: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "centroid has {} entries, bank dim is {}",
                values.len(),
                self.feature_dim()
            )));
        }
        self.centroids[task][class].copy_from_slice(values);
        self.initialized[task][class] = true;
        Ok(())
    }

    /// Moving-average update: initialized classes blend
    /// `γ·global + (1−γ)·batch`; first-seen classes copy the batch centroid;
    /// classes absent from the batch are untouched.
    pub fn update(&mut self, task: usize, batch: &BatchCentroids) -> Result<()> {
        if task >= self.num_tasks() {
            return Err(Error::InvalidArgument(format!("task {task} out of range")));
        }
        if batch.num_classes() != self.num_classes() || batch.dim() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "batch centroids are {}x{}, bank is {}x{}",
                batch.num_classes(),
                batch.dim(),
                self.num_classes(),
                self.feature_dim()
            )));
        }
        for k in 0..self.num_classes() {
            if !batch.present[k] {
                continue;
            }
            let target = &mut self.centroids[task][k];
            if self.initialized[task][k] {
                for (c, &b) in target.iter_mut().zip(&batch.means[k]) {
                    *c = self.gamma * *c + (1.0 - self.gamma) * b;
                }
            } else {
                target.copy_from_slice(&batch.means[k]);
                self.initialized[task][k] = true;
            }
        }
        Ok(())
    }
}

/// Per-class mean feature vectors of one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchCentroids {
    /// K×d; rows for absent classes are zero and masked out.
    pub means: Vec<Vec<f64>>,
    pub present: Vec<bool>,
    pub counts: Vec<usize>,
}

impl BatchCentroids {
    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }
}

/// Arithmetic mean of each class's feature rows.
pub fn batch_centroids(features: &Tensor, labels: &[usize], k: usize) -> Result<BatchCentroids> {
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let d = features.cols();
    let mut means = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {k} classes (row {r})"
            )));
        }
        counts[y] += 1;
        for (acc, &v) in means[y].iter_mut().zip(features.row(r)) {
            *acc += v;
        }
    }
    let present: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    for (mean, &c) in means.iter_mut().zip(&counts) {
        if c > 0 {
            mean.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    Ok(BatchCentroids {
        means,
        present,
        counts,
    })
}

/// L_S plus everything the training step needs to backpropagate it.
#[derive(Debug, Clone)]
pub struct SemanticLossResult {
    pub loss: f64,
    /// (task_i, task_j, class) → squared centroid distance, i < j.
    pub per_pair_per_class: BTreeMap<(usize, usize, usize), f64>,
    /// T×K×d gradient of the loss w.r.t. each task's *batch* centroids.
    pub centroid_grads: Vec<Vec<Vec<f64>>>,
    pub contributing_pairs: usize,
    /// Set when no task pair shared a participating class, so the loss is a
    /// vacuous zero.
    pub no_overlap: bool,
}

impl SemanticLossResult {
    /// Scatters the centroid gradient of task `task` back to its batch rows:
    /// row r with label y receives `centroid_grad[y] / count(y)`.
    pub fn feature_grads(&self, task: usize, labels: &[usize], dim: usize) -> Result<Tensor> {
        if task >= self.centroid_grads.len() {
            return Err(Error::InvalidArgument(format!("task {task} out of range")));
        }
        let grads = &self.centroid_grads[task];
        let k = grads.len();
        let mut counts = vec![0usize; k];
        for &y in labels {
            if y >= k {
                return Err(Error::InvalidArgument(format!(
                    "label {y} out of range for {k} classes"
                )));
            }
            counts[y] += 1;
        }
        let mut out = Tensor::zeros([labels.len(), dim]);
        for (r, &y) in labels.iter().enumerate() {
            let scale = 1.0 / counts[y] as f64;
            let row = &mut out.data_mut()[r * dim..(r + 1) * dim];
            for (o, &g) in row.iter_mut().zip(&grads[y]) {
                *o = g * scale;
            }
        }
        Ok(out)
    }
}

/// Evaluates L_S over all task pairs using *effective* centroids: for each
/// (task, class), the value the bank will hold after this step's update —
/// `γ·bank + (1−γ)·batch` when both exist, the batch centroid on first
/// initialization, or the stored bank value when the class is absent from the
/// batch. Gradients flow only through the batch contribution (the stored bank
/// is a constant), with factors 1−γ, 1 and 0 respectively.
pub fn semantic_loss(
    bank: &CentroidBank,
    batches: &[BatchCentroids],
) -> Result<SemanticLossResult> {
    let t = bank.num_tasks();
    if t < 2 {
        return Err(Error::InvalidArgument(
            "semantic loss needs at least two tasks".into(),
        ));
    }
    if batches.len() != t {
        return Err(Error::Shape(format!(
            "{} batch centroid sets for {t} tasks",
            batches.len()
        )));
    }
    let k = bank.num_classes();
    let d = bank.feature_dim();
    for (i, b) in batches.iter().enumerate() {
        if b.num_classes() != k || b.dim() != d {
            return Err(Error::Shape(format!(
                "task {i} batch centroids are {}x{}, bank is {k}x{d}",
                b.num_classes(),
                b.dim()
            )));
        }
    }

    // Effective centroid + gradient factor per (task, class); None where the
    // class neither appears in the batch nor exists in the bank.
    type Effective = Vec<Vec<Option<(Vec<f64>, f64)>>>;
    let mut effective: Effective = vec![vec![None; k]; t];
    for (ti, batch) in batches.iter().enumerate() {
        for ki in 0..k {
            let init = bank.is_initialized(ti, ki);
            effective[ti][ki] = match (batch.present[ki], init) {
                (true, true) => {
                    let g = bank.gamma();
                    let blended = bank.centroids[ti][ki]
                        .iter()
                        .zip(&batch.means[ki])
                        .map(|(&c, &b)| g * c + (1.0 - g) * b)
                        .collect();
                    Some((blended, 1.0 - g))
                }
                (true, false) => Some((batch.means[ki].clone(), 1.0)),
                (false, true) => Some((bank.centroids[ti][ki].clone(), 0.0)),
                (false, false) => None,
            };
        }
    }

    let mut per_pair_per_class = BTreeMap::new();
    let mut centroid_grads = vec![vec![vec![0.0; d]; k]; t];
    let mut total = 0.0;
    let mut contributing_pairs = 0;
    for i in 0..t {
        for j in (i + 1)..t {
            let mut pair_contributed = false;
            for ki in 0..k {
                let (Some((ci, fi)), Some((cj, fj))) = (&effective[i][ki], &effective[j][ki])
                else {
                    continue;
                };
                pair_contributed = true;
                let mut sq = 0.0;
                for ((&a, &b), idx) in ci.iter().zip(cj).zip(0..d) {
                    let diff = a - b;
                    sq += diff * diff;
                    centroid_grads[i][ki][idx] += 2.0 * diff * fi;
                    centroid_grads[j][ki][idx] -= 2.0 * diff * fj;
                }
                total += sq;
                per_pair_per_class.insert((i, j, ki), sq);
            }
            if pair_contributed {
                contributing_pairs += 1;
            }
        }
    }

    if contributing_pairs == 0 {
        return Ok(SemanticLossResult {
            loss: 0.0,
            per_pair_per_class,
            centroid_grads,
            contributing_pairs: 0,
            no_overlap: true,
        });
    }

    let norm = 1.0 / (k as f64 * contributing_pairs as f64);
    for task in &mut centroid_grads {
        for class in task {
            class.iter_mut().for_each(|g| *g *= norm);
        }
    }
    Ok(SemanticLossResult {
        loss: total * norm,
        per_pair_per_class,
        centroid_grads,
        contributing_pairs,
        no_overlap: false,
    })
}

/// E[t][i] = Σ_k ½(D̂_t(k) + D̂_i(k))·‖C_t^k − C_i^k‖² over mutually
/// initialized classes. Symmetric with a zero diagonal.
pub fn semantic_divergence_matrix(
    bank: &CentroidBank,
    label_dists: &[DiscreteDistribution],
) -> Result<Vec<Vec<f64>>> {
    let t = bank.num_tasks();
    if label_dists.len() != t {
        return Err(Error::Shape(format!(
            "{} label distributions for {t} tasks",
            label_dists.len()
        )));
    }
    let k = bank.num_classes();
    for (i, dist) in label_dists.iter().enumerate() {
        if dist.len() != k {
            return Err(Error::Shape(format!(
                "task {i} label distribution has {} classes, bank has {k}",
                dist.len()
            )));
        }
    }
    let mut e = vec![vec![0.0; t]; t];
    for i in 0..t {
        for j in (i + 1)..t {
            let mut acc = 0.0;
            for ki in 0..k {
                let (Some(ci), Some(cj)) = (bank.centroid(i, ki), bank.centroid(j, ki)) else {
                    continue;
                };
                let sq: f64 = ci.iter().zip(cj).map(|(a, b)| (a - b) * (a - b)).sum();
                let w = 0.5 * (label_dists[i].probs()[ki] + label_dists[j].probs()[ki]);
                acc += w * sq;
            }
            e[i][j] = acc;
            e[j][i] = acc;
        }
    }
    Ok(e)
}
