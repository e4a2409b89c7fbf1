//! Shared extractor + per-task heads.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_networks, save_networks};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNetwork, Param};
use crate::tensor::Tensor;

/// θ^f plus one classifier head per task. Every head maps the extractor's
/// feature space to the shared K logits.
#[derive(Debug, Clone)]
pub struct MultiTaskModel {
    pub extractor: DenseNetwork,
    pub heads: Vec<DenseNetwork>,
}

impl MultiTaskModel {
    /// Builds extractor `[input, hidden.., feature]` (activation throughout)
    /// and `num_tasks` heads `[feature, head_hidden.., num_classes]` with
    /// linear outputs, drawing parameters from `rng` in a fixed order.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        feature_dim: usize,
        head_hidden_dims: &[usize],
        num_tasks: usize,
        num_classes: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::InvalidArgument("model needs at least one task".into()));
        }
        let mut ex_dims = vec![input_dim];
        ex_dims.extend_from_slice(hidden_dims);
        ex_dims.push(feature_dim);
        let ex_acts = vec![activation; ex_dims.len() - 1];
        let extractor = DenseNetwork::new(&ex_dims, &ex_acts, rng)?;

        let mut head_dims = vec![feature_dim];
        head_dims.extend_from_slice(head_hidden_dims);
        head_dims.push(num_classes);
        let heads = (0..num_tasks)
            .map(|_| DenseNetwork::mlp(&head_dims, activation, rng))
            .collect::<Result<Vec<_>>>()?;
        let model = MultiTaskModel { extractor, heads };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::InvalidArgument("model has no heads".into()));
        }
        let feat = self.extractor.output_dim();
        let k = self.heads[0].output_dim();
        for (i, head) in self.heads.iter().enumerate() {
            if head.input_dim() != feat {
                return Err(Error::Shape(format!(
                    "head {i} expects {} features, extractor emits {feat}",
                    head.input_dim()
                )));
            }
            if head.output_dim() != k {
                return Err(Error::Shape(format!(
                    "head {i} has {} classes, head 0 has {k}",
                    head.output_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn num_classes(&self) -> usize {
        self.heads[0].output_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim()
    }

    /// Task t's logits for a feature batch (inference path).
    pub fn predict(&self, task: usize, x: &Tensor) -> Result<Tensor> {
        if task >= self.num_tasks() {
            return Err(Error::InvalidArgument(format!("task {task} out of range")));
        }
        let feats = self.extractor.forward(x)?;
        self.heads[task].forward(&feats)
    }

    pub fn params_mut(&mut self) -> Vec<Param<'_>> {
        let mut params = self.extractor.params_mut("extractor");
        for (i, head) in self.heads.iter_mut().enumerate() {
            params.extend(head.params_mut(&format!("head{i}")));
        }
        params
    }

    pub fn zero_grad(&mut self) {
        self.extractor.zero_grad();
        for head in &mut self.heads {
            head.zero_grad();
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let head_names: Vec<String> = (0..self.num_tasks()).map(|i| format!("head{i}")).collect();
        let mut named: Vec<(&str, &DenseNetwork)> = vec![("extractor", &self.extractor)];
        for (name, head) in head_names.iter().zip(&self.heads) {
            named.push((name.as_str(), head));
        }
        save_networks(dir, &named)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut nets = load_networks(dir)?;
        if nets.is_empty() || nets[0].0 != "extractor" {
            return Err(Error::Data(
                "checkpoint manifest must start with an 'extractor' network".into(),
            ));
        }
        let extractor = nets.remove(0).1;
        let mut heads = Vec::with_capacity(nets.len());
        for (i, (name, net)) in nets.into_iter().enumerate() {
            if name != format!("head{i}") {
                return Err(Error::Data(format!(
                    "checkpoint network '{name}' where 'head{i}' was expected"
                )));
            }
            heads.push(net);
        }
        let model = MultiTaskModel { extractor, heads };
        model.validate()?;
        Ok(model)
    }
}
