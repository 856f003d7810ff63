//! Mean-field Gaussian Bayesian dense network (Bayes-by-backprop).
//!
//! Every weight and bias carries a posterior `N(μ, σ²)` with
//! `σ = ln(1 + e^ρ)`, and the prior is `N(0, 1)`. Training minimises
//!
//! ```text
//! loss = mean NLL(w) + β · KL(q ‖ p) / batches_per_epoch,   w = μ + σ ⊙ ε
//! ```
//!
//! with one reparameterised draw of `ε` per mini-batch. Predictions average
//! the softmax outputs of several independent weight draws.

use std::ops::ControlFlow;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, Split};
use crate::nn::{
    backward, batch_loss, epoch_batches, glorot_matrix, nll_and_accuracy, probabilities, softplus,
    streams, Activation, Dataset, DenseLayer, DenseNet, GaussianSource, LossKind, Matrix,
    NetworkSpec, SeedStream,
};
use crate::qt::logistic;

/// Initial `ρ` of every posterior; `σ = ln(1 + e^{-3}) ≈ 0.0486`.
pub const DEFAULT_RHO_INIT: f64 = -3.0;

/// One variational weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianWeight {
    pub mu: f64,
    pub rho: f64,
}

impl GaussianWeight {
    pub fn sigma(&self) -> f64 {
        softplus(self.rho)
    }

    pub fn sample(&self, eps: f64) -> f64 {
        self.mu + self.sigma() * eps
    }

    pub fn kl(&self) -> f64 {
        kl_gaussian(self.mu, self.rho)
    }
}

/// `KL(N(μ, σ²) ‖ N(0, 1)) = (μ² + σ² − 1 − ln σ²)/2` with `σ = ln(1 + e^ρ)`.
pub fn kl_gaussian(mu: f64, rho: f64) -> f64 {
    let sigma = softplus(rho);
    0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * sigma.ln())
}

/// `(∂KL/∂μ, ∂KL/∂ρ)`.
fn kl_grad(mu: f64, rho: f64) -> (f64, f64) {
    let sigma = softplus(rho);
    (mu, (sigma - 1.0 / sigma) * logistic(rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesLayer {
    pub w_mu: Matrix,
    pub w_rho: Matrix,
    pub b_mu: Vec<f64>,
    pub b_rho: Vec<f64>,
    pub activation: Activation,
}

/// Standard-normal noise for one layer, same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNoise {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl BayesLayer {
    pub fn input_dim(&self) -> usize {
        self.w_mu.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_mu.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w_mu.len() + self.b_mu.len()
    }

    /// Draws `ε` for every weight (row-major) and then every bias.
    pub fn draw_noise(&self, src: &mut impl GaussianSource) -> LayerNoise {
        let (r, c) = self.w_mu.shape();
        let w: Vec<f64> = (0..r * c).map(|_| src.gaussian()).collect();
        let b: Vec<f64> = (0..r).map(|_| src.gaussian()).collect();
        LayerNoise {
            weights: Matrix::from_vec(r, c, w).expect("shape"),
            bias: b,
        }
    }

    /// Concrete layer `w = μ + ln(1 + e^ρ)·ε` for the given noise.
    pub fn realise(&self, noise: &LayerNoise) -> DenseLayer {
        let w: Vec<f64> = self
            .w_mu
            .data()
            .iter()
            .zip(self.w_rho.data())
            .zip(noise.weights.data())
            .map(|((&m, &r), &e)| m + softplus(r) * e)
            .collect();
        let b: Vec<f64> = self
            .b_mu
            .iter()
            .zip(&self.b_rho)
            .zip(&noise.bias)
            .map(|((&m, &r), &e)| m + softplus(r) * e)
            .collect();
        DenseLayer {
            weights: Matrix::from_vec(self.w_mu.rows(), self.w_mu.cols(), w).expect("shape"),
            bias: b,
            activation: self.activation,
        }
    }

    /// One reparameterised sample of this layer.
    pub fn sample_weights(&self, src: &mut impl GaussianSource) -> DenseLayer {
        self.realise(&self.draw_noise(src))
    }

    pub fn kl(&self) -> f64 {
        let w: f64 = self
            .w_mu
            .data()
            .iter()
            .zip(self.w_rho.data())
            .map(|(&m, &r)| kl_gaussian(m, r))
            .sum();
        let b: f64 = self
            .b_mu
            .iter()
            .zip(&self.b_rho)
            .map(|(&m, &r)| kl_gaussian(m, r))
            .sum();
        w + b
    }
}

/// Free-function form of [`BayesLayer::sample_weights`].
pub fn sample_weights(layer: &BayesLayer, src: &mut impl GaussianSource) -> DenseLayer {
    layer.sample_weights(src)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesNet {
    pub layers: Vec<BayesLayer>,
    pub loss: LossKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesLayerGrads {
    pub w_mu: Matrix,
    pub w_rho: Matrix,
    pub b_mu: Vec<f64>,
    pub b_rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesGradients {
    pub layers: Vec<BayesLayerGrads>,
}

impl BayesGradients {
    /// Flattened per layer as `w_mu, w_rho, b_mu, b_rho`, matching
    /// [`BayesNet::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w_mu.data());
            out.extend_from_slice(l.w_rho.data());
            out.extend_from_slice(&l.b_mu);
            out.extend_from_slice(&l.b_rho);
        }
        out
    }
}

impl BayesNet {
    /// `μ` drawn exactly as [`DenseNet::init`] would draw the weights from
    /// the same stream; every `ρ` set to `rho_init`; bias means zero.
    pub fn init(spec: &NetworkSpec, stream: &mut SeedStream, rho_init: f64) -> Result<Self> {
        spec.validate()?;
        if !rho_init.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rho_init must be finite, got {rho_init}"
            )));
        }
        let layers = (0..spec.num_layers())
            .map(|i| {
                let (input, output) = (spec.sizes[i], spec.sizes[i + 1]);
                BayesLayer {
                    w_mu: glorot_matrix(output, input, stream),
                    w_rho: Matrix::filled(output, input, rho_init),
                    b_mu: vec![0.0; output],
                    b_rho: vec![rho_init; output],
                    activation: spec.activation(i),
                }
            })
            .collect();
        Ok(Self {
            layers,
            loss: spec.loss,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, BayesLayer::output_dim)
    }

    /// Number of weights and biases (each has a `μ` and a `ρ`).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(BayesLayer::param_count).sum()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(BayesLayer::output_dim));
        sizes
    }

    /// Network with every weight at its posterior mean.
    pub fn mean_net(&self) -> DenseNet {
        DenseNet {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weights: l.w_mu.clone(),
                    bias: l.b_mu.clone(),
                    activation: l.activation,
                })
                .collect(),
            loss: self.loss,
        }
    }

    pub fn draw_noise(&self, src: &mut impl GaussianSource) -> Vec<LayerNoise> {
        self.layers.iter().map(|l| l.draw_noise(src)).collect()
    }

    pub fn realise(&self, noise: &[LayerNoise]) -> DenseNet {
        DenseNet {
            layers: self
                .layers
                .iter()
                .zip(noise)
                .map(|(l, n)| l.realise(n))
                .collect(),
            loss: self.loss,
        }
    }

    pub fn sample(&self, src: &mut impl GaussianSource) -> DenseNet {
        let noise = self.draw_noise(src);
        self.realise(&noise)
    }

    pub fn kl(&self) -> f64 {
        self.layers.iter().map(BayesLayer::kl).sum()
    }

    /// All `μ`/`ρ` arrays flattened per layer as `w_mu, w_rho, b_mu, b_rho`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w_mu.data());
            out.extend_from_slice(l.w_rho.data());
            out.extend_from_slice(&l.b_mu);
            out.extend_from_slice(&l.b_rho);
        }
        out
    }

    /// Inverse of [`BayesNet::flat_params`] for a net of the same shape.
    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let expected = 2 * self.param_count();
        if values.len() != expected {
            return Err(Error::shape(format!("{expected} parameters"), values.len()));
        }
        let mut rest = values;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head
        };
        for l in &mut self.layers {
            let n = l.w_mu.len();
            l.w_mu.data_mut().copy_from_slice(take(n));
            l.w_rho.data_mut().copy_from_slice(take(n));
            let m = l.b_mu.len();
            l.b_mu.copy_from_slice(take(m));
            l.b_rho.copy_from_slice(take(m));
        }
        Ok(())
    }

    pub fn apply_gradients(&mut self, grads: &BayesGradients, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            crate::nn::sgd_update(l.w_mu.data_mut(), g.w_mu.data(), lr);
            crate::nn::sgd_update(l.w_rho.data_mut(), g.w_rho.data(), lr);
            crate::nn::sgd_update(&mut l.b_mu, &g.b_mu, lr);
            crate::nn::sgd_update(&mut l.b_rho, &g.b_rho, lr);
        }
    }
}

/// ELBO loss for a fixed noise draw, and its gradient with respect to every
/// `μ` and `ρ`. `batches_per_epoch` spreads the KL term over an epoch.
pub fn elbo_loss_with_noise(
    net: &BayesNet,
    batch: &Dataset,
    noise: &[LayerNoise],
    beta: f64,
    batches_per_epoch: usize,
) -> Result<(f64, BayesGradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument(
            "ELBO needs a non-empty batch".into(),
        ));
    }
    if noise.len() != net.layers.len() {
        return Err(Error::shape(
            format!("noise for {} layers", net.layers.len()),
            noise.len(),
        ));
    }
    let sampled = net.realise(noise);
    let cache = sampled.forward(&batch.inputs)?;
    let (nll, grad_out) = batch_loss(net.loss, &cache.logits, &batch.labels)?;
    let wg = backward(&sampled, &cache, &grad_out)?;

    let kl_scale = beta / batches_per_epoch.max(1) as f64;
    let mut kl_total = 0.0;
    let mut layers = Vec::with_capacity(net.layers.len());
    for ((l, n), g) in net.layers.iter().zip(noise).zip(&wg.layers) {
        let mut w_mu = Matrix::zeros(l.w_mu.rows(), l.w_mu.cols());
        let mut w_rho = w_mu.clone();
        reparam_grads(
            l.w_mu.data(),
            l.w_rho.data(),
            n.weights.data(),
            g.weights.data(),
            kl_scale,
            w_mu.data_mut(),
            w_rho.data_mut(),
            &mut kl_total,
        );
        let mut b_mu = vec![0.0; l.b_mu.len()];
        let mut b_rho = vec![0.0; l.b_mu.len()];
        reparam_grads(
            &l.b_mu,
            &l.b_rho,
            &n.bias,
            &g.bias,
            kl_scale,
            &mut b_mu,
            &mut b_rho,
            &mut kl_total,
        );
        layers.push(BayesLayerGrads {
            w_mu,
            w_rho,
            b_mu,
            b_rho,
        });
    }
    Ok((nll + kl_scale * kl_total, BayesGradients { layers }))
}

// ∂w/∂μ = 1, ∂w/∂ρ = ε·logistic(ρ)
#[allow(clippy::too_many_arguments)]
fn reparam_grads(
    mu: &[f64],
    rho: &[f64],
    eps: &[f64],
    gw: &[f64],
    kl_scale: f64,
    out_mu: &mut [f64],
    out_rho: &mut [f64],
    kl_total: &mut f64,
) {
    for i in 0..mu.len() {
        let dsig = logistic(rho[i]);
        out_mu[i] = gw[i];
        out_rho[i] = gw[i] * eps[i] * dsig;
        if kl_scale != 0.0 {
            let (km, kr) = kl_grad(mu[i], rho[i]);
            out_mu[i] += kl_scale * km;
            out_rho[i] += kl_scale * kr;
            *kl_total += kl_gaussian(mu[i], rho[i]);
        }
    }
}

/// ELBO loss with one fresh noise draw from `stream`.
pub fn elbo_loss(
    net: &BayesNet,
    batch: &Dataset,
    stream: &mut SeedStream,
    beta: f64,
    batches_per_epoch: usize,
) -> Result<(f64, BayesGradients)> {
    let noise = net.draw_noise(stream);
    elbo_loss_with_noise(net, batch, &noise, beta, batches_per_epoch)
}

/// Monte-Carlo predictive distribution: the mean of the class probabilities
/// of `n_samples` weight draws. Draw `s` uses `stream.child(s)`, and the
/// mean is accumulated in sample order, so the result does not depend on
/// how many rayon workers evaluate the draws.
pub fn predict_mc(
    net: &BayesNet,
    inputs: &Matrix,
    n_samples: usize,
    stream: &SeedStream,
) -> Result<Matrix> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let per_sample: Vec<Matrix> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let sampled = net.sample(&mut stream.child(s as u64));
            let cache = sampled.forward(inputs)?;
            Ok(probabilities(net.loss, &cache.logits))
        })
        .collect::<Result<_>>()?;
    let mut mean = Matrix::zeros(per_sample[0].rows(), per_sample[0].cols());
    for p in &per_sample {
        mean.add_scaled(1.0, p);
    }
    mean.scale(1.0 / n_samples as f64);
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnnConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub mc_samples: usize,
    pub beta: f64,
    pub rho_init: f64,
    /// Written into every [`MetricsRecord`].
    pub model_name: String,
}

impl Default for BnnConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            lr: 0.05,
            batch: 32,
            mc_samples: 10,
            beta: 1.0,
            rho_init: DEFAULT_RHO_INIT,
            model_name: "qt-bnn".into(),
        }
    }
}

impl BnnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.batch == 0 || self.mc_samples == 0 {
            return Err(Error::InvalidArgument(
                "batch and mc_samples must be at least 1".into(),
            ));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Build a Bayesian network from `spec` and train it; see [`fit_bnn`].
pub fn train_bnn(
    spec: &NetworkSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &BnnConfig,
    seed: u64,
) -> Result<(BayesNet, Vec<MetricsRecord>)> {
    cfg.validate()?;
    let mut net = BayesNet::init(
        spec,
        &mut SeedStream::new(seed, streams::INIT),
        cfg.rho_init,
    )?;
    let records = fit_bnn(&mut net, train, test, cfg, seed, |_| {
        ControlFlow::Continue(())
    })?;
    Ok((net, records))
}

/// Shuffled mini-batch ELBO SGD. After each epoch the train (and test) sets
/// are scored with [`predict_mc`]; `observer` sees that epoch's records and
/// may stop training early.
pub fn fit_bnn(
    net: &mut BayesNet,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &BnnConfig,
    seed: u64,
    mut observer: impl FnMut(&[MetricsRecord]) -> ControlFlow<()>,
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let start = Instant::now();
    let mut shuffle = SeedStream::new(seed, streams::SHUFFLE);
    let mut noise = SeedStream::new(seed, streams::NOISE);
    let eval = SeedStream::new(seed, streams::EVAL);
    let batches_per_epoch = train.len().div_ceil(cfg.batch);
    let mut records = Vec::with_capacity(2 * cfg.epochs);

    for epoch in 1..=cfg.epochs {
        for idx in epoch_batches(train.len(), cfg.batch, &mut shuffle) {
            let batch = train.subset(&idx);
            let (_, grads) = elbo_loss(net, &batch, &mut noise, cfg.beta, batches_per_epoch)?;
            net.apply_gradients(&grads, cfg.lr);
        }
        let epoch_stream = eval.child(epoch as u64);
        let first = records.len();
        for (split, data) in [(Split::Train, Some(train)), (Split::Test, test)] {
            let Some(data) = data else { continue };
            let proba = predict_mc(net, &data.inputs, cfg.mc_samples, &epoch_stream)?;
            let stats = nll_and_accuracy(&proba, &data.labels)?;
            records.push(MetricsRecord {
                epoch,
                split,
                loss: stats.loss,
                accuracy: stats.accuracy,
                model: cfg.model_name.clone(),
                seed,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }
        if observer(&records[first..]).is_break() {
            break;
        }
    }
    Ok(records)
}
