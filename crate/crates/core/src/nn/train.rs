use super::dense::DenseNet;
use super::matrix::Matrix;
use super::rng::{streams, SeedStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(
                format!("{} labels", inputs.rows()),
                labels.len(),
            ));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// `max label + 1`, at least 2.
    pub fn num_classes(&self) -> usize {
        self.labels
            .iter()
            .copied()
            .max()
            .map_or(2, |m| (m + 1).max(2))
    }
}

/// Loss and accuracy of one pass over a data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mini-batches of one epoch: a Fisher–Yates permutation of `0..n` cut into
/// consecutive chunks of `batch`.
pub fn epoch_batches(n: usize, batch: usize, shuffle: &mut SeedStream) -> Vec<Vec<usize>> {
    shuffle
        .permutation(n)
        .chunks(batch.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Mean negative log-probability of the true class, and accuracy, of a
/// probability matrix (one row per example).
pub fn nll_and_accuracy(proba: &Matrix, labels: &[usize]) -> Result<EvalStats> {
    if proba.rows() != labels.len() {
        return Err(Error::shape(
            format!("{} labels", proba.rows()),
            labels.len(),
        ));
    }
    if labels.is_empty() {
        return Ok(EvalStats {
            loss: 0.0,
            accuracy: 0.0,
        });
    }
    let mut nll = 0.0;
    let mut correct = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        let row = proba.row(r);
        if y >= row.len() {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        nll -= row[y].max(f64::MIN_POSITIVE).ln();
        if argmax(row) == y {
            correct += 1;
        }
    }
    let n = labels.len() as f64;
    Ok(EvalStats {
        loss: nll / n,
        accuracy: correct as f64 / n,
    })
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(net: &DenseNet, inputs: &Matrix, labels: &[usize]) -> Result<EvalStats> {
    nll_and_accuracy(&net.predict_proba(inputs)?, labels)
}

/// Plain mini-batch SGD. Batch order comes from the run's shuffle stream;
/// the returned statistics are evaluated on the full set after each epoch.
pub fn train_dense(
    net: &mut DenseNet,
    inputs: &Matrix,
    labels: &[usize],
    cfg: &SgdConfig,
    seed: u64,
) -> Result<Vec<EvalStats>> {
    cfg.validate()?;
    if inputs.rows() == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut shuffle = SeedStream::new(seed, streams::SHUFFLE);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for idx in epoch_batches(inputs.rows(), cfg.batch, &mut shuffle) {
            let x = inputs.select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (_, grads) = net.loss_and_grad(&x, &y)?;
            net.apply_gradients(&grads, cfg.lr);
        }
        history.push(evaluate(net, inputs, labels)?);
    }
    Ok(history)
}
