//! Class-balanced re-weighting: per-class β weights, the re-weighted
//! cross-entropy, and the α-weighted total classification loss.

use serde::{Deserialize, Serialize};

use crate::alpha::check_simplex;
use crate::error::{Error, Result};
use crate::nn::softmax_cross_entropy;
use crate::tensor::Tensor;

/// Per-class loss multipliers for one task. Present classes carry
/// `m / (K_present · count_k)` (inverse frequency, count-weighted mean 1);
/// absent classes carry 0 and must never appear in that task's batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaWeights {
    weights: Vec<f64>,
}

impl BetaWeights {
    pub fn compute(counts: &[usize]) -> Result<Self> {
        let m: usize = counts.iter().sum();
        if m == 0 {
            return Err(Error::InvalidArgument(
                "cannot compute class weights for an empty task".into(),
            ));
        }
        let k_present = counts.iter().filter(|&&c| c > 0).count();
        let weights = counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    0.0
                } else {
                    m as f64 / (k_present as f64 * c as f64)
                }
            })
            .collect();
        Ok(BetaWeights { weights })
    }

    /// β ≡ 1, used by the no-re-weighting ablation.
    pub fn uniform(k: usize) -> Self {
        BetaWeights {
            weights: vec![1.0; k],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, class: usize) -> f64 {
        self.weights[class]
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }
}

/// Mean over the batch of β(y_i)·CE_i with the gradient w.r.t. logits.
pub fn reweighted_loss(
    logits: &Tensor,
    labels: &[usize],
    beta: &BetaWeights,
) -> Result<(f64, Tensor)> {
    if logits.cols() != beta.num_classes() {
        return Err(Error::Shape(format!(
            "{} logit columns vs {} class weights",
            logits.cols(),
            beta.num_classes()
        )));
    }
    let mut sample_weights = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        if y >= beta.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes (row {i})",
                beta.num_classes()
            )));
        }
        let w = beta.get(y);
        if w == 0.0 {
            return Err(Error::Data(format!(
                "batch row {i} has label {y}, a class absent from this task's training data"
            )));
        }
        sample_weights.push(w);
    }
    softmax_cross_entropy(logits, labels, Some(&sample_weights))
}

/// Σ_i α_i · ε̂^β_i for one task's simplex row.
pub fn total_classification_loss(per_task_losses: &[f64], alpha_row: &[f64]) -> Result<f64> {
    if per_task_losses.len() != alpha_row.len() {
        return Err(Error::Shape(format!(
            "{} losses vs {} alpha entries",
            per_task_losses.len(),
            alpha_row.len()
        )));
    }
    check_simplex(alpha_row, 1e-6)?;
    Ok(per_task_losses
        .iter()
        .zip(alpha_row)
        .map(|(l, a)| a * l)
        .sum())
}
