use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use qtnn_core::bnn::{fit_bnn, predict_mc, BayesNet, BnnConfig, DEFAULT_RHO_INIT};
use qtnn_core::checkpoint::{read_checkpoint, write_checkpoint, Model, ModelKind};
use qtnn_core::data::{
    gen_phrases, load_cifar_binary, split_indices, synth_vehicle_images, LabeledImageSet, Lexicon,
    PhraseSet, Vocabulary,
};
use qtnn_core::metrics::{write_csv, MetricsRecord, Split};
use qtnn_core::nn::{nll_and_accuracy, streams, Dataset, LossKind, NetworkSpec};
use qtnn_core::rnn::{
    evaluate_rnn, fit_rnn, RecurrentCell, RnnConfig, RnnSpec, TokenSequence, DEFAULT_EMBED_DIM,
};
use qtnn_core::SeedStream;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.qtnn";

/// Settings that are not part of the experiment config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop once an epoch's train accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    /// Replaces the built-in lexicon when generating phrases.
    pub lexicon: Option<Lexicon>,
}

/// Image data split into train and test parts.
#[derive(Debug, Clone)]
pub struct ImageData {
    pub train: LabeledImageSet,
    pub test: LabeledImageSet,
}

#[derive(Debug, Clone)]
pub struct PhraseData {
    pub vocab: Vocabulary,
    pub train: PhraseSet,
    pub test: PhraseSet,
}

impl PhraseData {
    pub fn sequences(&self) -> (Vec<TokenSequence>, Vec<TokenSequence>) {
        (
            self.vocab.sequences(&self.train),
            self.vocab.sequences(&self.test),
        )
    }
}

#[derive(Debug, Clone)]
pub enum Prepared {
    Images(ImageData),
    Phrases(PhraseData),
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Full (unsplit) image set named by the config.
pub fn load_images(cfg: &ExperimentConfig) -> CliResult<LabeledImageSet> {
    match &cfg.data {
        DataSource::Synthetic { count } => Ok(synth_vehicle_images(
            *count,
            &SeedStream::new(cfg.seed, streams::DATA),
        )),
        DataSource::Path(p) => Ok(load_cifar_binary(&read_file(p)?)?),
    }
}

/// Full (unsplit) phrase corpus named by the config.
pub fn load_phrases(cfg: &ExperimentConfig, lexicon: Option<&Lexicon>) -> CliResult<PhraseSet> {
    match &cfg.data {
        DataSource::Synthetic { .. } => {
            let default = Lexicon::military();
            let lex = lexicon.unwrap_or(&default);
            Ok(gen_phrases(
                lex,
                &mut SeedStream::new(cfg.seed, streams::DATA),
            ))
        }
        DataSource::Path(p) => {
            let bytes = read_file(p)?;
            let text = String::from_utf8(bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            Ok(PhraseSet::parse(&text)?)
        }
    }
}

/// Loads the configured data and splits it. The vocabulary of a phrase
/// corpus is built from its training part.
pub fn prepare_data(cfg: &ExperimentConfig, lexicon: Option<&Lexicon>) -> CliResult<Prepared> {
    let mut split = SeedStream::new(cfg.seed, streams::SPLIT);
    if cfg.model.is_bnn() {
        let all = load_images(cfg)?;
        let labels: Vec<usize> = all.labels.iter().map(|&l| usize::from(l)).collect();
        let (tr, te) = split_indices(&labels, cfg.split_fraction, &mut split)
            .map_err(|e| CliError::Data(e.to_string()))?;
        Ok(Prepared::Images(ImageData {
            train: all.subset(&tr),
            test: all.subset(&te),
        }))
    } else {
        let all = load_phrases(cfg, lexicon)?;
        let (tr, te) = split_indices(&all.labels, cfg.split_fraction, &mut split)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let train = all.subset(&tr);
        let test = all.subset(&te);
        let vocab = Vocabulary::build(&train);
        if let Some(i) = train
            .phrases
            .iter()
            .position(|p| vocab.encode(p).is_empty())
        {
            return Err(CliError::Data(format!("training phrase {i} has no tokens")));
        }
        if let Some(i) = test.phrases.iter().position(|p| vocab.encode(p).is_empty()) {
            return Err(CliError::Data(format!("test phrase {i} has no tokens")));
        }
        Ok(Prepared::Phrases(PhraseData { vocab, train, test }))
    }
}

pub fn bnn_config(cfg: &ExperimentConfig) -> BnnConfig {
    BnnConfig {
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch: cfg.batch,
        mc_samples: cfg.mc_samples,
        beta: cfg.beta,
        rho_init: DEFAULT_RHO_INIT,
        model_name: cfg.model.name().into(),
    }
}

pub fn rnn_config(cfg: &ExperimentConfig) -> RnnConfig {
    RnnConfig {
        epochs: cfg.epochs,
        lr: cfg.lr,
        model_name: cfg.model.name().into(),
        ..RnnConfig::default()
    }
}

pub fn bnn_spec(cfg: &ExperimentConfig, train: &Dataset) -> CliResult<NetworkSpec> {
    Ok(NetworkSpec::new(
        train.inputs.cols(),
        &[cfg.hidden],
        train.num_classes(),
        cfg.activation(),
        LossKind::SoftmaxCrossEntropy,
    )?)
}

pub fn rnn_spec(cfg: &ExperimentConfig, vocab: &Vocabulary) -> RnnSpec {
    RnnSpec {
        vocab_size: vocab.table_size(),
        embed_dim: DEFAULT_EMBED_DIM,
        hidden: cfg.hidden,
        activation: cfg.activation(),
    }
}

/// Output of one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
    pub model: Model,
}

impl RunSummary {
    pub fn epochs_run(&self) -> usize {
        self.records.last().map_or(0, |r| r.epoch)
    }
}

fn stop_rule(threshold: Option<f64>) -> impl FnMut(&[MetricsRecord]) -> ControlFlow<()> {
    move |epoch| match threshold {
        Some(t)
            if epoch
                .iter()
                .any(|r| r.split == Split::Train && r.accuracy >= t) =>
        {
            ControlFlow::Break(())
        }
        _ => ControlFlow::Continue(()),
    }
}

/// Trains the configured model without touching the file system.
pub fn train_model(
    cfg: &ExperimentConfig,
    data: &Prepared,
    opts: &RunOptions,
) -> CliResult<RunSummary> {
    let mut init = SeedStream::new(cfg.seed, streams::INIT);
    match data {
        Prepared::Images(d) => {
            let train = d.train.to_dataset();
            let test = d.test.to_dataset();
            let spec = bnn_spec(cfg, &train)?;
            let bcfg = bnn_config(cfg);
            let mut net = BayesNet::init(&spec, &mut init, bcfg.rho_init)?;
            let records = fit_bnn(
                &mut net,
                &train,
                Some(&test),
                &bcfg,
                cfg.seed,
                stop_rule(opts.stop_at_train_accuracy),
            )?;
            Ok(RunSummary {
                records,
                model: Model::Bnn(net),
            })
        }
        Prepared::Phrases(d) => {
            let (train, test) = d.sequences();
            let mut cell = RecurrentCell::init(&rnn_spec(cfg, &d.vocab), &mut init)?;
            let records = fit_rnn(
                &mut cell,
                &train,
                &test,
                &rnn_config(cfg),
                cfg.seed,
                stop_rule(opts.stop_at_train_accuracy),
            )?;
            Ok(RunSummary {
                records,
                model: Model::Rnn(cell),
            })
        }
    }
}

/// Writes `metrics.csv` and `model.qtnn` for a finished run into `out_dir`.
pub fn write_run(out_dir: &Path, summary: &RunSummary) -> CliResult<()> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut csv = Vec::new();
    write_csv(&mut csv, &summary.records)
        .map_err(|e| CliError::io(out_dir.join(METRICS_FILE), e))?;
    write_file(&out_dir.join(METRICS_FILE), &csv)?;
    write_file(
        &out_dir.join(CHECKPOINT_FILE),
        &write_checkpoint(&summary.model),
    )
}

/// Trains the configured model and writes `metrics.csv` and `model.qtnn`
/// into `out_dir`, which is created if missing.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> CliResult<RunSummary> {
    let data = prepare_data(cfg, opts.lexicon.as_ref())?;
    let summary = train_model(cfg, &data, opts)?;
    write_run(out_dir, &summary)?;
    Ok(summary)
}

/// Runs the configured model into `out_dir/<model>/` and its ReLU
/// counterpart into `out_dir/<baseline>/` under the same seed, data and
/// settings. When the primary run stops early, the baseline runs for the
/// same number of epochs so both curves cover the same range.
pub fn run_comparison(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> CliResult<(RunSummary, RunSummary)> {
    let data = prepare_data(cfg, opts.lexicon.as_ref())?;
    let primary = train_model(cfg, &data, opts)?;
    write_run(&out_dir.join(cfg.model.name()), &primary)?;
    let mut base_cfg = cfg.baseline();
    if opts.stop_at_train_accuracy.is_some() {
        base_cfg.epochs = primary.epochs_run();
    }
    let base_opts = RunOptions {
        stop_at_train_accuracy: None,
        lexicon: opts.lexicon.clone(),
    };
    let baseline = train_model(&base_cfg, &data, &base_opts)?;
    write_run(&out_dir.join(base_cfg.model.name()), &baseline)?;
    Ok((primary, baseline))
}

pub fn load_model(path: &Path, cfg: &ExperimentConfig) -> CliResult<Model> {
    Ok(read_checkpoint(&read_file(path)?, cfg.energy_map.build())?)
}

fn check_kind(model: &Model, cfg: &ExperimentConfig) -> CliResult<()> {
    let wanted = if cfg.model.is_bnn() {
        ModelKind::Bnn
    } else {
        ModelKind::Rnn
    };
    if model.kind() != wanted {
        return Err(CliError::Data(format!(
            "checkpoint holds a {} model but the config describes {}",
            model.kind(),
            cfg.model
        )));
    }
    Ok(())
}

/// Loss and accuracy of a model on one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEval {
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

/// Evaluates `model` on the train and test parts of the configured data.
/// Bayesian predictions average `mc_samples` draws from the evaluation stream.
pub fn evaluate_model(
    model: &Model,
    cfg: &ExperimentConfig,
    data: &Prepared,
) -> CliResult<Vec<SplitEval>> {
    check_kind(model, cfg)?;
    let mut out = Vec::new();
    match (model, data) {
        (Model::Bnn(net), Prepared::Images(d)) => {
            let stream = SeedStream::new(cfg.seed, streams::EVAL).child(0);
            for (split, set) in [(Split::Train, &d.train), (Split::Test, &d.test)] {
                let ds = set.to_dataset();
                let proba = predict_mc(net, &ds.inputs, cfg.mc_samples, &stream)?;
                let s = nll_and_accuracy(&proba, &ds.labels)?;
                out.push(SplitEval {
                    split,
                    loss: s.loss,
                    accuracy: s.accuracy,
                });
            }
        }
        (Model::Rnn(cell), Prepared::Phrases(d)) => {
            if cell.embedding.rows() != d.vocab.table_size() {
                return Err(CliError::Data(format!(
                    "checkpoint vocabulary has {} rows, data needs {}",
                    cell.embedding.rows(),
                    d.vocab.table_size()
                )));
            }
            let (train, test) = d.sequences();
            for (split, seqs) in [(Split::Train, &train), (Split::Test, &test)] {
                let (loss, accuracy) = evaluate_rnn(cell, seqs)?;
                out.push(SplitEval {
                    split,
                    loss,
                    accuracy,
                });
            }
        }
        _ => unreachable!("kind checked above"),
    }
    Ok(out)
}

/// Reads a checkpoint and evaluates it against the configured data.
pub fn evaluate_checkpoint(
    path: &Path,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> CliResult<Vec<SplitEval>> {
    let model = load_model(path, cfg)?;
    check_kind(&model, cfg)?;
    let data = prepare_data(cfg, opts.lexicon.as_ref())?;
    evaluate_model(&model, cfg, &data)
}

/// Writes the configured (unsplit) data set to `path`: CIFAR binary for bnn
/// models, a `label<TAB>phrase` file for rnn models. Returns the item count.
pub fn generate_data(
    cfg: &ExperimentConfig,
    path: &Path,
    lexicon: Option<&Lexicon>,
) -> CliResult<usize> {
    if cfg.model.is_bnn() {
        let set = load_images(cfg)?;
        write_file(path, &qtnn_core::data::write_cifar_binary(&set))?;
        Ok(set.len())
    } else {
        let set = load_phrases(cfg, lexicon)?;
        write_file(path, set.to_text().as_bytes())?;
        Ok(set.len())
    }
}
