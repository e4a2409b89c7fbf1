//! KL / Jensen-Shannon / total-variation divergences on finite discrete
//! distributions, all in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

/// Probability vector over K outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "distribution entries must be finite and >= 0, got {p}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "distribution sums to {sum}, expected 1 within {SUM_TOL}"
            )));
        }
        Ok(DiscreteDistribution { probs })
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidArgument(
                "cannot build a distribution from all-zero counts".into(),
            ));
        }
        DiscreteDistribution::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_lengths(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distributions have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Σ p_k ln(p_k/q_k) with the 0·ln(0/·)=0 convention; p_k>0 against q_k=0
/// saturates to +∞.
fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return f64::INFINITY;
        }
        acc += pk * (pk / qk).ln();
    }
    acc
}

pub fn kl(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_lengths(p, q)?;
    Ok(kl_raw(p.probs(), q.probs()))
}

/// ½[KL(p‖m) + KL(q‖m)] with m = ½(p+q); finite and in [0, ln 2].
pub fn js(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_lengths(p, q)?;
    let m: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    Ok(0.5 * (kl_raw(p.probs(), &m) + kl_raw(q.probs(), &m)))
}

/// ½ Σ |p_k − q_k|, in [0, 1].
pub fn tv(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_lengths(p, q)?;
    Ok(0.5
        * p.probs()
            .iter()
            .zip(q.probs())
            .map(|(&a, &b)| (a - b).abs())
            .sum::<f64>())
}

/// probs[k] = count(k) / len(labels).
pub fn empirical_label_distribution(labels: &[usize], k: usize) -> Result<DiscreteDistribution> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot estimate a label distribution from zero labels".into(),
        ));
    }
    let mut counts = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {k} classes (index {i})"
            )));
        }
        counts[y] += 1;
    }
    DiscreteDistribution::from_counts(&counts)
}

/// Pairwise divergence matrices surfaced by the diagnostics command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// T×T JS between task label distributions, nats.
    pub label_js: Vec<Vec<f64>>,
    /// T×T total variation between task label distributions.
    pub tv: Vec<Vec<f64>>,
    /// T×T label-marginal-weighted centroid distances, filled by the
    /// semantic module.
    #[serde(rename = "semantic_E")]
    pub semantic_e: Vec<Vec<f64>>,
}

impl DivergenceReport {
    /// Builds the label_js and tv matrices; `semantic_e` starts as zeros.
    pub fn from_label_distributions(dists: &[DiscreteDistribution]) -> Result<Self> {
        let t = dists.len();
        let mut label_js = vec![vec![0.0; t]; t];
        let mut tv_m = vec![vec![0.0; t]; t];
        for i in 0..t {
            for j in (i + 1)..t {
                let d_js = js(&dists[i], &dists[j])?;
                let d_tv = tv(&dists[i], &dists[j])?;
                label_js[i][j] = d_js;
                label_js[j][i] = d_js;
                tv_m[i][j] = d_tv;
                tv_m[j][i] = d_tv;
            }
        }
        Ok(DivergenceReport {
            label_js,
            tv: tv_m,
            semantic_e: vec![vec![0.0; t]; t],
        })
    }
}
