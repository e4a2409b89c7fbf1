//! Dense feed-forward substrate: layers, forward/backward, softmax losses.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative evaluated at the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// `[fan_in, fan_out]`.
    pub weights: Tensor,
    /// `[1, fan_out]`.
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    /// Xavier-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        DenseLayer {
            weights: Tensor::new([fan_in, fan_out], data).expect("sized above"),
            bias: Tensor::zeros([1, fan_out]),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }
}

/// Intermediate activations retained by [`DenseNetwork::forward_cached`] for
/// the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `[fan_in, fan_out]` of every layer, used to verify the cache belongs
    /// to the network it is replayed through.
    layer_dims: Vec<[usize; 2]>,
    input: Tensor,
    /// Pre-activations per layer.
    pre: Vec<Tensor>,
    /// Post-activations per layer.
    post: Vec<Tensor>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    /// Output of the final layer.
    pub fn output(&self) -> &Tensor {
        self.post.last().unwrap_or(&self.input)
    }
}

/// A stack of dense layers. Gradients accumulate into each layer's tensors
/// until [`DenseNetwork::zero_grad`].
#[derive(Debug, Clone)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
}

impl DenseNetwork {
    /// `dims` lists layer widths (`[in, h1, ..., out]`); `activations` has one
    /// entry per layer.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "network needs at least input and output dims".into(),
            ));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} dims require {} activations, got {}",
                dims.len(),
                dims.len() - 1,
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| DenseLayer::new(w[0], w[1], a, rng))
            .collect();
        Ok(DenseNetwork { layers })
    }

    /// MLP with `activation` on every hidden layer and a linear output.
    pub fn mlp(dims: &[usize], hidden: Activation, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut acts = vec![hidden; dims.len().saturating_sub(1)];
        if let Some(last) = acts.last_mut() {
            *last = Activation::Identity;
        }
        DenseNetwork::new(dims, &acts, rng)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer fan_out {} feeds layer fan_in {}",
                    w[0].fan_out(),
                    w[1].fan_in()
                )));
            }
        }
        Ok(DenseNetwork { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    fn layer_dims(&self) -> Vec<[usize; 2]> {
        self.layers
            .iter()
            .map(|l| [l.fan_in(), l.fan_out()])
            .collect()
    }

    fn affine(x: &Tensor, layer: &DenseLayer) -> Result<Tensor> {
        let mut z = x.matmul(&layer.weights)?;
        let cols = z.cols();
        let b = layer.bias.data();
        for r in 0..z.rows() {
            let row = &mut z.data_mut()[r * cols..(r + 1) * cols];
            for (v, bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
        Ok(z)
    }

    /// Inference pass without retaining intermediates.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            let mut z = Self::affine(&a, layer)?;
            z.data_mut().iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that records pre/post activations for backprop.
    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            let z = Self::affine(&a, layer)?;
            let mut act = z.clone();
            act.data_mut().iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            pre.push(z);
            a = act.clone();
            post.push(act);
        }
        let cache = ForwardCache {
            layer_dims: self.layer_dims(),
            input: x.clone(),
            pre,
            post,
        };
        Ok((a, cache))
    }

    /// Backpropagates `grad_output` (dL/d output, already including any batch
    /// normalisation) through the cached pass. Parameter gradients are
    /// *accumulated*; the gradient w.r.t. the input batch is returned.
    pub fn backward(&mut self, cache: &ForwardCache, grad_output: &Tensor) -> Result<Tensor> {
        if cache.layer_dims != self.layer_dims() {
            return Err(Error::State(
                "forward cache does not match this network's layers".into(),
            ));
        }
        let out = cache.post.last().ok_or_else(|| {
            Error::State("forward cache holds no activations".into())
        })?;
        if grad_output.shape() != out.shape() {
            return Err(Error::Shape(format!(
                "grad_output {}x{} vs cached output {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                out.rows(),
                out.cols()
            )));
        }

        let mut grad_a = grad_output.clone();
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            let z = &cache.pre[l];
            // dZ = dA ⊙ f'(z)
            let mut dz = grad_a;
            for (g, &zv) in dz.data_mut().iter_mut().zip(z.data()) {
                *g *= layer.activation.derivative(zv);
            }
            let a_prev = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            let dw = a_prev.transpose().matmul(&dz)?;
            layer.weights.accumulate_grad(dw.data())?;
            let mut db = vec![0.0; layer.fan_out()];
            for r in 0..dz.rows() {
                for (acc, v) in db.iter_mut().zip(dz.row(r)) {
                    *acc += v;
                }
            }
            layer.bias.accumulate_grad(&db)?;
            grad_a = dz.matmul(&layer.weights.transpose())?;
        }
        Ok(grad_a)
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.weights.zero_grad();
            layer.bias.zero_grad();
        }
    }

    /// Named parameters in a stable order. `prefix` scopes the names, e.g.
    /// `extractor.layer0.weights`.
    pub fn params_mut(&mut self, prefix: &str) -> Vec<Param<'_>> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push(Param {
                name: format!("{prefix}.layer{i}.weights"),
                tensor: &mut layer.weights,
                weight_decay: true,
            });
            out.push(Param {
                name: format!("{prefix}.layer{i}.bias"),
                tensor: &mut layer.bias,
                weight_decay: false,
            });
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.fan_in() * l.fan_out() + l.fan_out())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("empty input batch".into()));
        }
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

/// A named, mutably borrowed parameter tensor handed to the optimizer.
pub struct Param<'a> {
    pub name: String,
    pub tensor: &'a mut Tensor,
    /// Decoupled weight decay applies only where this is set (weights, not
    /// biases).
    pub weight_decay: bool,
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Mean cross-entropy over the batch with optional per-sample weights:
/// `L = (1/m) Σ_i w_i · CE_i`. Returns the loss and `dL/dlogits`.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    sample_weights: Option<&[f64]>,
) -> Result<(f64, Tensor)> {
    let (m, k) = (logits.rows(), logits.cols());
    if m == 0 {
        return Err(Error::InvalidArgument("empty logits batch".into()));
    }
    if labels.len() != m {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            m
        )));
    }
    if let Some(w) = sample_weights {
        if w.len() != m {
            return Err(Error::Shape(format!("{} weights for {} rows", w.len(), m)));
        }
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros([m, k]);
    let mut ls = vec![0.0; k];
    for i in 0..m {
        let y = labels[i];
        if y >= k {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {k} classes (row {i})"
            )));
        }
        let w = sample_weights.map_or(1.0, |ws| ws[i]);
        log_softmax_row(logits.row(i), &mut ls);
        loss += -w * ls[y];
        let scale = w / m as f64;
        let row = &mut grad.data_mut()[i * k..(i + 1) * k];
        for (j, g) in row.iter_mut().enumerate() {
            let p = ls[j].exp();
            *g = scale * (p - if j == y { 1.0 } else { 0.0 });
        }
    }
    Ok((loss / m as f64, grad))
}

/// Argmax per row; ties resolve to the lowest index.
pub fn predict_classes(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation batch".into()));
    }
    let pred = predict_classes(logits);
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}
