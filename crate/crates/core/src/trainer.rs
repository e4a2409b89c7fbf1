//! The alternating multi-task training loop: per-batch parameter updates on
//! the combined objective L_C + λ_S·L_S, per-epoch α refreshes, plus the
//! Vanilla/Weighted baselines and the ablation switches.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alpha::{update_alpha, AlphaMatrix, AlphaObjectiveInputs};
use crate::data::{batch_iterator, Batch, TaskDataset};
use crate::divergence::{DiscreteDistribution, DivergenceReport};
use crate::error::{Error, Result};
use crate::model::MultiTaskModel;
use crate::nn::{accuracy, Activation};
use crate::optim::{effective_lr, Adam, AdamConfig};
use crate::reweight::{reweighted_loss, BetaWeights};
use crate::semantic::{
    batch_centroids, semantic_divergence_matrix, semantic_loss, BatchCentroids, CentroidBank,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    Weighted,
    Smtl,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Weighted => "weighted",
            Mode::Smtl => "smtl",
        }
    }
}

/// Table-style ablation switches; only meaningful in smtl mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_reweight: bool,
    pub no_semantic: bool,
    pub no_alpha_opt: bool,
}

impl AblationFlags {
    pub fn any(self) -> bool {
        self.no_reweight || self.no_semantic || self.no_alpha_opt
    }

    pub fn label(self) -> String {
        if !self.any() {
            return "full".into();
        }
        let mut parts = Vec::new();
        if self.no_reweight {
            parts.push("no_reweight");
        }
        if self.no_semantic {
            parts.push("no_semantic");
        }
        if self.no_alpha_opt {
            parts.push("no_alpha_opt");
        }
        parts.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    /// Epoch interval between decay steps; 0 disables decay.
    pub lr_decay_interval: usize,
    pub weight_decay: f64,
    /// Centroid-bank EMA decay γ.
    pub gamma: f64,
    /// Weight on L_S in the combined objective.
    pub lambda_s: f64,
    /// Weight on the E matrix inside the α objective.
    pub lambda_e: f64,
    /// Coefficient of ‖α_t‖₂ in the α objective.
    pub reg: f64,
    pub mode: Mode,
    pub ablation: AblationFlags,
    pub seed: u64,
    /// Extractor hidden widths (features come after these).
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    /// Optional hidden widths inside each head.
    pub head_hidden_dims: Vec<usize>,
    pub activation: Activation,
    /// Fixed α rows for weighted mode / warm start for smtl; uniform when
    /// absent.
    pub initial_alpha: Option<Vec<Vec<f64>>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            lr_decay_factor: 0.95,
            lr_decay_interval: 5,
            weight_decay: 1e-4,
            gamma: 0.7,
            lambda_s: 1.0,
            lambda_e: 1.0,
            reg: 1.0,
            mode: Mode::Smtl,
            ablation: AblationFlags::default(),
            seed: 0,
            hidden_dims: vec![32],
            feature_dim: 16,
            head_hidden_dims: vec![],
            activation: Activation::Relu,
            initial_alpha: None,
        }
    }
}

impl TrainConfig {
    /// Range-checks every field and normalizes the mode/ablation combination
    /// (non-smtl modes ignore the ablation switches).
    pub fn validated(mut self) -> Result<Self> {
        fn bad(field: &str, detail: String) -> Error {
            Error::Config(format!("train.{field}: {detail}"))
        }
        if self.epochs == 0 {
            return Err(bad("epochs", "must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(bad("lr", format!("must be > 0, got {}", self.lr)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(bad(
                "lr_decay_factor",
                format!("must be in (0, 1], got {}", self.lr_decay_factor),
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(bad("weight_decay", format!("must be >= 0, got {}", self.weight_decay)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(bad("gamma", format!("must be in [0, 1], got {}", self.gamma)));
        }
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_e", self.lambda_e),
            ("reg", self.reg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.feature_dim == 0 {
            return Err(bad("feature_dim", "must be >= 1".into()));
        }
        if self.hidden_dims.iter().chain(&self.head_hidden_dims).any(|&d| d == 0) {
            return Err(bad("hidden_dims", "zero-width layer".into()));
        }
        if let Some(rows) = &self.initial_alpha {
            AlphaMatrix::from_rows(rows.clone())
                .map_err(|e| bad("initial_alpha", e.to_string()))?;
        }
        if self.mode != Mode::Smtl {
            self.ablation = AblationFlags::default();
        }
        Ok(self)
    }
}

/// Everything recorded about one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Per-task epoch-mean re-weighted losses ε̂^β_i.
    pub train_losses: Vec<f64>,
    /// Per-task test accuracy.
    pub test_accuracy: Vec<f64>,
    /// Epoch-mean L_S (0 outside smtl mode).
    pub semantic_loss: f64,
    /// α rows after this epoch's update.
    pub alpha: Vec<Vec<f64>>,
    /// Pairwise JS between task train label distributions.
    pub label_js: Vec<Vec<f64>>,
    pub wall_time_secs: f64,
}

struct StepEval {
    total: f64,
    task_losses: Vec<f64>,
    semantic: f64,
    centroids: Option<Vec<BatchCentroids>>,
}

pub struct Trainer {
    cfg: TrainConfig,
    model: MultiTaskModel,
    opt: Adam,
    alpha: AlphaMatrix,
    bank: CentroidBank,
    betas: Vec<BetaWeights>,
    label_js: Vec<Vec<f64>>,
    train: Vec<TaskDataset>,
    test: Vec<TaskDataset>,
    epoch: usize,
    checkpoint_dir: Option<PathBuf>,
    last_checkpoint: Option<PathBuf>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, train: Vec<TaskDataset>, test: Vec<TaskDataset>) -> Result<Self> {
        let cfg = cfg.validated()?;
        if train.is_empty() {
            return Err(Error::InvalidArgument("no training tasks".into()));
        }
        if train.len() != test.len() {
            return Err(Error::InvalidArgument(format!(
                "{} train tasks vs {} test tasks",
                train.len(),
                test.len()
            )));
        }
        let dim = train[0].feature_dim();
        let k = train[0].num_classes();
        for ds in train.iter().chain(&test) {
            if ds.num_samples() == 0 {
                return Err(Error::InvalidArgument(format!(
                    "dataset '{}' ({}) is empty",
                    ds.name,
                    ds.split.name()
                )));
            }
            if ds.feature_dim() != dim || ds.num_classes() != k {
                return Err(Error::Shape(format!(
                    "dataset '{}' is {}-dim/{} classes, expected {dim}/{k}",
                    ds.name,
                    ds.feature_dim(),
                    ds.num_classes()
                )));
            }
        }
        let t = train.len();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = MultiTaskModel::new(
            dim,
            &cfg.hidden_dims,
            cfg.feature_dim,
            &cfg.head_hidden_dims,
            t,
            k,
            cfg.activation,
            &mut rng,
        )?;
        let opt = Adam::new(AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        })?;
        let alpha = match (&cfg.initial_alpha, cfg.mode) {
            // Vanilla is defined as the uniform average regardless of config.
            (_, Mode::Vanilla) | (None, _) => AlphaMatrix::uniform(t)?,
            (Some(rows), _) => {
                let a = AlphaMatrix::from_rows(rows.clone())?;
                if a.num_tasks() != t {
                    return Err(Error::Config(format!(
                        "train.initial_alpha: {} rows for {t} tasks",
                        a.num_tasks()
                    )));
                }
                a
            }
        };
        let use_beta = cfg.mode == Mode::Smtl && !cfg.ablation.no_reweight;
        let betas = train
            .iter()
            .map(|ds| {
                if use_beta {
                    BetaWeights::compute(ds.class_counts())
                } else {
                    Ok(BetaWeights::uniform(k))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let dists: Vec<DiscreteDistribution> = train
            .iter()
            .map(|ds| ds.label_distribution())
            .collect::<Result<_>>()?;
        let label_js = DivergenceReport::from_label_distributions(&dists)?.label_js;
        let bank = CentroidBank::new(t, k, cfg.feature_dim, cfg.gamma)?;

        Ok(Trainer {
            cfg,
            model,
            opt,
            alpha,
            bank,
            betas,
            label_js,
            train,
            test,
            epoch: 0,
            checkpoint_dir: None,
            last_checkpoint: None,
        })
    }

    /// Enables per-epoch last-good checkpoints under `dir`.
    pub fn with_checkpoint_dir(mut self, dir: PathBuf) -> Self {
        self.checkpoint_dir = Some(dir);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &MultiTaskModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut MultiTaskModel {
        &mut self.model
    }

    pub fn alpha(&self) -> &AlphaMatrix {
        &self.alpha
    }

    pub fn bank(&self) -> &CentroidBank {
        &self.bank
    }

    pub fn betas(&self) -> &[BetaWeights] {
        &self.betas
    }

    pub fn label_js(&self) -> &[Vec<f64>] {
        &self.label_js
    }

    pub fn last_checkpoint(&self) -> Option<&PathBuf> {
        self.last_checkpoint.as_ref()
    }

    fn semantic_machinery(&self) -> bool {
        self.cfg.mode == Mode::Smtl && self.train.len() >= 2
    }

    fn lambda_s_eff(&self) -> f64 {
        if self.cfg.mode == Mode::Smtl && !self.cfg.ablation.no_semantic {
            self.cfg.lambda_s
        } else {
            0.0
        }
    }

    fn updates_alpha(&self) -> bool {
        self.cfg.mode == Mode::Smtl && !self.cfg.ablation.no_alpha_opt
    }

    fn shuffle_seed(&self) -> u64 {
        self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)
    }

    /// Combined objective on one synchronized batch set with all state
    /// (α, β, bank, parameters) frozen; no mutation.
    pub fn objective_on(&self, batches: &[Batch]) -> Result<f64> {
        let t = self.train.len();
        if batches.len() != t {
            return Err(Error::Shape(format!("{} batches for {t} tasks", batches.len())));
        }
        let weights = self.alpha.column_means();
        let mut feats = Vec::with_capacity(t);
        let mut lc = 0.0;
        for (i, b) in batches.iter().enumerate() {
            let f = self.model.extractor.forward(&b.features)?;
            let logits = self.model.heads[i].forward(&f)?;
            let (loss, _) = reweighted_loss(&logits, &b.labels, &self.betas[i])?;
            lc += weights[i] * loss;
            feats.push(f);
        }
        let mut total = lc;
        if self.semantic_machinery() && self.lambda_s_eff() != 0.0 {
            let cents = (0..t)
                .map(|i| batch_centroids(&feats[i], &batches[i].labels, self.model.num_classes()))
                .collect::<Result<Vec<_>>>()?;
            let res = semantic_loss(&self.bank, &cents)?;
            total += self.cfg.lambda_s * res.loss;
        }
        Ok(total)
    }

    /// One gradient evaluation: zeroes grads, backpropagates the combined
    /// objective, and returns the step's losses. The bank and optimizer are
    /// *not* touched, so repeated calls are idempotent on trainer state.
    pub fn accumulate_gradients_on(&mut self, batches: &[Batch]) -> Result<f64> {
        Ok(self.grad_step(batches)?.total)
    }

    fn grad_step(&mut self, batches: &[Batch]) -> Result<StepEval> {
        let t = self.train.len();
        if batches.len() != t {
            return Err(Error::Shape(format!("{} batches for {t} tasks", batches.len())));
        }
        let k = self.model.num_classes();
        let d = self.model.feature_dim();
        let weights = self.alpha.column_means();
        self.model.zero_grad();

        let mut feats = Vec::with_capacity(t);
        let mut caches = Vec::with_capacity(t);
        for b in batches {
            let (f, c) = self.model.extractor.forward_cached(&b.features)?;
            feats.push(f);
            caches.push(c);
        }

        let mut task_losses = Vec::with_capacity(t);
        let mut dfeats = Vec::with_capacity(t);
        for i in 0..t {
            let (logits, hcache) = self.model.heads[i].forward_cached(&feats[i])?;
            let (loss, mut dlogits) = reweighted_loss(&logits, &batches[i].labels, &self.betas[i])?;
            task_losses.push(loss);
            let w = weights[i];
            dlogits.data_mut().iter_mut().for_each(|g| *g *= w);
            dfeats.push(self.model.heads[i].backward(&hcache, &dlogits)?);
        }

        let mut semantic = 0.0;
        let mut centroids = None;
        if self.semantic_machinery() {
            let cents = (0..t)
                .map(|i| batch_centroids(&feats[i], &batches[i].labels, k))
                .collect::<Result<Vec<_>>>()?;
            let res = semantic_loss(&self.bank, &cents)?;
            semantic = res.loss;
            if self.lambda_s_eff() != 0.0 {
                for i in 0..t {
                    let g = res.feature_grads(i, &batches[i].labels, d)?;
                    for (a, b) in dfeats[i].data_mut().iter_mut().zip(g.data()) {
                        *a += self.cfg.lambda_s * b;
                    }
                }
            }
            centroids = Some(cents);
        }

        // Fixed task order keeps gradient accumulation deterministic.
        for i in 0..t {
            self.model.extractor.backward(&caches[i], &dfeats[i])?;
        }

        let lc: f64 = weights.iter().zip(&task_losses).map(|(w, l)| w * l).sum();
        Ok(StepEval {
            total: lc + self.lambda_s_eff() * semantic,
            task_losses,
            semantic,
            centroids,
        })
    }

    pub fn train_epoch(&mut self) -> Result<MetricsRecord> {
        let epoch = self.epoch;
        let t = self.train.len();
        let lr = effective_lr(
            self.cfg.lr,
            epoch,
            self.cfg.lr_decay_factor,
            self.cfg.lr_decay_interval,
        );
        let step_sets: Vec<Vec<Batch>> =
            batch_iterator(&self.train, self.cfg.batch_size, self.shuffle_seed(), epoch)?
                .collect();

        let start = Instant::now();
        let mut loss_sums = vec![0.0; t];
        let mut sem_sum = 0.0;
        for (step, batches) in step_sets.iter().enumerate() {
            let eval = self.grad_step(batches)?;
            if !eval.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    last_checkpoint: self.last_checkpoint.clone(),
                });
            }
            if let Some(cents) = &eval.centroids {
                for (i, c) in cents.iter().enumerate() {
                    self.bank.update(i, c)?;
                }
            }
            let mut params = self.model.params_mut();
            self.opt.step(&mut params, lr)?;
            for (sum, l) in loss_sums.iter_mut().zip(&eval.task_losses) {
                *sum += l;
            }
            sem_sum += eval.semantic;
        }
        let steps = step_sets.len() as f64;
        let train_losses: Vec<f64> = loss_sums.iter().map(|s| s / steps).collect();
        let semantic_mean = sem_sum / steps;

        if self.updates_alpha() {
            let dists: Vec<DiscreteDistribution> = self
                .train
                .iter()
                .map(|ds| ds.label_distribution())
                .collect::<Result<_>>()?;
            let e = semantic_divergence_matrix(&self.bank, &dists)?;
            let inputs =
                AlphaObjectiveInputs::new(train_losses.clone(), e, self.cfg.lambda_e, self.cfg.reg)?;
            self.alpha = update_alpha(&self.alpha, &inputs)?;
        }
        let wall_time_secs = start.elapsed().as_secs_f64();

        let test_accuracy = self.evaluate()?;
        if let Some(dir) = self.checkpoint_dir.clone() {
            let cp = dir.join("last_good");
            self.model.save(&cp)?;
            self.last_checkpoint = Some(cp);
        }
        self.epoch += 1;
        Ok(MetricsRecord {
            epoch,
            train_losses,
            test_accuracy,
            semantic_loss: semantic_mean,
            alpha: self.alpha.rows().to_vec(),
            label_js: self.label_js.clone(),
            wall_time_secs,
        })
    }

    /// Runs the configured number of epochs and returns the full history.
    pub fn fit(&mut self) -> Result<Vec<MetricsRecord>> {
        let mut history = Vec::with_capacity(self.cfg.epochs);
        while self.epoch < self.cfg.epochs {
            history.push(self.train_epoch()?);
        }
        Ok(history)
    }

    /// Per-task argmax accuracy on the held-out test split.
    pub fn evaluate(&self) -> Result<Vec<f64>> {
        self.test
            .iter()
            .enumerate()
            .map(|(i, ds)| {
                let logits = self.model.predict(i, ds.features())?;
                accuracy(&logits, ds.labels())
            })
            .collect()
    }
}
