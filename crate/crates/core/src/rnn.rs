//! Elman recurrent classifier with a logistic head on the last hidden state.
//!
//! ```text
//! h₀ = 0
//! hₜ = act(W_xh · emb[xₜ] + W_hh · hₜ₋₁ + b_h)
//! p  = logistic(head · h_T + c)
//! ```
//!
//! Trained one sequence at a time by backpropagation through time with the
//! global gradient norm clipped to [`CLIP_NORM`].

use std::ops::ControlFlow;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, Split};
use crate::nn::{
    axpy, dot, glorot_matrix, logistic_loss, sgd_update, streams, Activation, Matrix, SeedStream,
};
use crate::qt::logistic;

pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_HIDDEN: usize = 32;
pub const CLIP_NORM: f64 = 5.0;

/// Token ids with a binary sentiment label (1 = positive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RnnSpec {
    /// Rows of the embedding table, including the out-of-vocabulary row 0.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl RnnSpec {
    pub fn new(vocab_size: usize, activation: Activation) -> Self {
        Self {
            vocab_size,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden: DEFAULT_HIDDEN,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument(
                "vocabulary, embedding and hidden sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCell {
    /// `vocab × d_emb`
    pub embedding: Matrix,
    /// `h × d_emb`
    pub w_xh: Matrix,
    /// `h × h`
    pub w_hh: Matrix,
    pub b_h: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
    pub activation: Activation,
}

/// Forward-pass values kept for BPTT.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnOutput {
    /// `h₁ … h_T`
    pub hidden: Vec<Vec<f64>>,
    /// Local activation derivatives at each step.
    pub derivs: Vec<Vec<f64>>,
    pub logit: f64,
    /// `logistic(logit)`, kept strictly inside `(0, 1)`.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnGradients {
    pub embedding: Matrix,
    pub w_xh: Matrix,
    pub w_hh: Matrix,
    pub b_h: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl RnnGradients {
    fn zeros_like(cell: &RecurrentCell) -> Self {
        Self {
            embedding: Matrix::zeros(cell.embedding.rows(), cell.embedding.cols()),
            w_xh: Matrix::zeros(cell.w_xh.rows(), cell.w_xh.cols()),
            w_hh: Matrix::zeros(cell.w_hh.rows(), cell.w_hh.cols()),
            b_h: vec![0.0; cell.b_h.len()],
            head_w: vec![0.0; cell.head_w.len()],
            head_b: 0.0,
        }
    }

    /// Declaration order: embedding, W_xh, W_hh, b_h, head weights, head bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.embedding.data());
        out.extend_from_slice(self.w_xh.data());
        out.extend_from_slice(self.w_hh.data());
        out.extend_from_slice(&self.b_h);
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.embedding.scale(s);
        self.w_xh.scale(s);
        self.w_hh.scale(s);
        self.b_h.iter_mut().for_each(|g| *g *= s);
        self.head_w.iter_mut().for_each(|g| *g *= s);
        self.head_b *= s;
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

impl RecurrentCell {
    /// Glorot-uniform embedding, `W_xh`, `W_hh` and head (drawn in that
    /// order); biases zero.
    pub fn init(spec: &RnnSpec, stream: &mut SeedStream) -> Result<Self> {
        spec.validate()?;
        let embedding = glorot_matrix(spec.vocab_size, spec.embed_dim, stream);
        let w_xh = glorot_matrix(spec.hidden, spec.embed_dim, stream);
        let w_hh = glorot_matrix(spec.hidden, spec.hidden, stream);
        let head = glorot_matrix(1, spec.hidden, stream);
        Ok(Self {
            embedding,
            w_xh,
            w_hh,
            b_h: vec![0.0; spec.hidden],
            head_w: head.into_vec(),
            head_b: 0.0,
            activation: spec.activation,
        })
    }

    pub fn zeros(spec: &RnnSpec) -> Self {
        Self {
            embedding: Matrix::zeros(spec.vocab_size, spec.embed_dim),
            w_xh: Matrix::zeros(spec.hidden, spec.embed_dim),
            w_hh: Matrix::zeros(spec.hidden, spec.hidden),
            b_h: vec![0.0; spec.hidden],
            head_w: vec![0.0; spec.hidden],
            head_b: 0.0,
            activation: spec.activation,
        }
    }

    pub fn spec(&self) -> RnnSpec {
        RnnSpec {
            vocab_size: self.embedding.rows(),
            embed_dim: self.embedding.cols(),
            hidden: self.w_hh.rows(),
            activation: self.activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.embedding.len()
            + self.w_xh.len()
            + self.w_hh.len()
            + self.b_h.len()
            + self.head_w.len()
            + 1
    }

    /// Same order as [`RnnGradients::flatten`].
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.embedding.data());
        out.extend_from_slice(self.w_xh.data());
        out.extend_from_slice(self.w_hh.data());
        out.extend_from_slice(&self.b_h);
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::shape(
                format!("{} parameters", self.param_count()),
                values.len(),
            ));
        }
        let mut rest = values;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head
        };
        let n = self.embedding.len();
        self.embedding.data_mut().copy_from_slice(take(n));
        let n = self.w_xh.len();
        self.w_xh.data_mut().copy_from_slice(take(n));
        let n = self.w_hh.len();
        self.w_hh.data_mut().copy_from_slice(take(n));
        let n = self.b_h.len();
        self.b_h.copy_from_slice(take(n));
        let n = self.head_w.len();
        self.head_w.copy_from_slice(take(n));
        self.head_b = take(1)[0];
        Ok(())
    }

    pub fn apply_gradients(&mut self, g: &RnnGradients, lr: f64) {
        sgd_update(self.embedding.data_mut(), g.embedding.data(), lr);
        sgd_update(self.w_xh.data_mut(), g.w_xh.data(), lr);
        sgd_update(self.w_hh.data_mut(), g.w_hh.data(), lr);
        sgd_update(&mut self.b_h, &g.b_h, lr);
        sgd_update(&mut self.head_w, &g.head_w, lr);
        self.head_b -= lr * g.head_b;
    }
}

pub fn rnn_forward(cell: &RecurrentCell, seq: &TokenSequence) -> Result<RnnOutput> {
    if seq.ids.is_empty() {
        return Err(Error::Domain("empty token sequence".into()));
    }
    let vocab = cell.embedding.rows();
    if let Some(&bad) = seq.ids.iter().find(|&&id| id >= vocab) {
        return Err(Error::Domain(format!(
            "token id {bad} outside vocabulary of {vocab}"
        )));
    }
    let h_dim = cell.w_hh.rows();
    let mut hidden = Vec::with_capacity(seq.ids.len());
    let mut derivs = Vec::with_capacity(seq.ids.len());
    let mut prev = vec![0.0; h_dim];
    for &id in &seq.ids {
        let e = cell.embedding.row(id);
        let mut pre = cell.b_h.clone();
        for (j, p) in pre.iter_mut().enumerate() {
            *p += dot(cell.w_xh.row(j), e) + dot(cell.w_hh.row(j), &prev);
        }
        let mut act = vec![0.0; h_dim];
        let mut d = vec![0.0; h_dim];
        cell.activation.apply_into(&pre, &mut act, &mut d)?;
        prev = act.clone();
        hidden.push(act);
        derivs.push(d);
    }
    let logit = dot(&cell.head_w, &prev) + cell.head_b;
    let p = logistic(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    Ok(RnnOutput {
        hidden,
        derivs,
        logit,
        p,
    })
}

/// Binary cross-entropy and exact gradients, without clipping.
pub fn bptt_unclipped(cell: &RecurrentCell, seq: &TokenSequence) -> Result<(f64, RnnGradients)> {
    if seq.label > 1 {
        return Err(Error::InvalidArgument(format!(
            "binary label expected, got {}",
            seq.label
        )));
    }
    let out = rnn_forward(cell, seq)?;
    let (loss, dlogit) = logistic_loss(out.logit, seq.label);
    let mut g = RnnGradients::zeros_like(cell);
    let t_len = seq.ids.len();
    let h_dim = cell.w_hh.rows();

    g.head_b = dlogit;
    axpy(dlogit, &out.hidden[t_len - 1], &mut g.head_w);
    let mut dh: Vec<f64> = cell.head_w.iter().map(|w| w * dlogit).collect();
    let zeros = vec![0.0; h_dim];

    for t in (0..t_len).rev() {
        let dz: Vec<f64> = dh.iter().zip(&out.derivs[t]).map(|(a, b)| a * b).collect();
        let h_prev = if t == 0 { &zeros } else { &out.hidden[t - 1] };
        let id = seq.ids[t];
        g.w_xh.rank1_acc(1.0, &dz, cell.embedding.row(id));
        g.w_hh.rank1_acc(1.0, &dz, h_prev);
        axpy(1.0, &dz, &mut g.b_h);
        cell.w_xh
            .matvec_transposed_acc(&dz, g.embedding.row_mut(id));
        let mut next = vec![0.0; h_dim];
        cell.w_hh.matvec_transposed_acc(&dz, &mut next);
        dh = next;
    }
    Ok((loss, g))
}

/// [`bptt_unclipped`] followed by clipping to a global norm of [`CLIP_NORM`].
pub fn bptt(cell: &RecurrentCell, seq: &TokenSequence) -> Result<(f64, RnnGradients)> {
    let (loss, mut g) = bptt_unclipped(cell, seq)?;
    g.clip_global_norm(CLIP_NORM);
    Ok((loss, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnConfig {
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub model_name: String,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.05,
            clip_norm: CLIP_NORM,
            model_name: "qt-rnn".into(),
        }
    }
}

/// Mean BCE and accuracy (`logit > 0` predicts positive) over `seqs`.
pub fn evaluate_rnn(cell: &RecurrentCell, seqs: &[TokenSequence]) -> Result<(f64, f64)> {
    if seqs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in seqs {
        let out = rnn_forward(cell, s)?;
        loss += logistic_loss(out.logit, s.label).0;
        if usize::from(out.logit > 0.0) == s.label {
            correct += 1;
        }
    }
    let n = seqs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

pub fn train_rnn(
    spec: &RnnSpec,
    train: &[TokenSequence],
    test: &[TokenSequence],
    cfg: &RnnConfig,
    seed: u64,
) -> Result<(RecurrentCell, Vec<MetricsRecord>)> {
    let mut cell = RecurrentCell::init(spec, &mut SeedStream::new(seed, streams::INIT))?;
    let records = fit_rnn(&mut cell, train, test, cfg, seed, |_| {
        ControlFlow::Continue(())
    })?;
    Ok((cell, records))
}

/// Per-epoch shuffled SGD over single sequences. `observer` sees each
/// epoch's train/test records and may stop early.
pub fn fit_rnn(
    cell: &mut RecurrentCell,
    train: &[TokenSequence],
    test: &[TokenSequence],
    cfg: &RnnConfig,
    seed: u64,
    mut observer: impl FnMut(&[MetricsRecord]) -> ControlFlow<()>,
) -> Result<Vec<MetricsRecord>> {
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lr must be positive, got {}",
            cfg.lr
        )));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let start = Instant::now();
    let mut shuffle = SeedStream::new(seed, streams::SHUFFLE);
    let mut records = Vec::with_capacity(2 * cfg.epochs);
    for epoch in 1..=cfg.epochs {
        for i in shuffle.permutation(train.len()) {
            let (_, mut g) = bptt_unclipped(cell, &train[i])?;
            g.clip_global_norm(cfg.clip_norm);
            cell.apply_gradients(&g, cfg.lr);
        }
        let first = records.len();
        for (split, seqs) in [(Split::Train, train), (Split::Test, test)] {
            if split == Split::Test && seqs.is_empty() {
                continue;
            }
            let (loss, accuracy) = evaluate_rnn(cell, seqs)?;
            records.push(MetricsRecord {
                epoch,
                split,
                loss,
                accuracy,
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
