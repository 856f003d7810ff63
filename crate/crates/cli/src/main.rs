use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtnn_cli::config::{parse_config_with, parse_pairs};
use qtnn_cli::experiment::{self, Prepared};
use qtnn_cli::tools;
use qtnn_cli::{CliError, CliResult, ExperimentConfig, RunOptions};
use qtnn_core::checkpoint::Model;
use qtnn_core::data::Lexicon;
use qtnn_core::Barrier;

/// Quantum-tunnelling network experiments.
///
/// Settings are resolved in increasing precedence: built-in defaults, the
/// `--config` file, `--set key=value` pairs in order, then dedicated flags
/// such as `--seed`. Concurrent runs must use distinct output directories.
#[derive(Parser)]
#[command(name = "qtnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// `key=value` experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Model: qt-bnn, relu-bnn, qt-rnn or relu-rnn.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Data file: CIFAR binary for bnn models, `label<TAB>phrase` lines for rnn.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl ConfigArgs {
    fn pairs(&self) -> CliResult<Vec<(String, String)>> {
        let mut pairs = match &self.config {
            Some(p) => parse_pairs(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
            None => Vec::new(),
        };
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("model", self.model.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            (
                "data.path",
                self.data.as_ref().map(|p| p.display().to_string()),
            ),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        }
        Ok(pairs)
    }

    fn resolve(&self) -> CliResult<ExperimentConfig> {
        parse_config_with("", &self.pairs()?)
    }
}

#[derive(Args, Clone, Default)]
struct LexiconArg {
    /// Lexicon file with `[positive]` and `[negative]` sections.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

impl LexiconArg {
    fn load(&self) -> CliResult<Option<Lexicon>> {
        self.lexicon
            .as_ref()
            .map(|p| {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Lexicon::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
            })
            .transpose()
    }
}

#[derive(Args, Clone)]
struct BarrierArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Barrier height V₀.
    #[arg(long)]
    v0: Option<f64>,
    /// Barrier width a.
    #[arg(long)]
    a: Option<f64>,
}

impl BarrierArgs {
    fn barrier(&self) -> CliResult<Barrier> {
        let pairs = self.cfg.pairs()?;
        let lookup = |key: &str| -> CliResult<Option<f64>> {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| {
                    v.parse()
                        .map_err(|_| CliError::Config(format!("invalid value {v:?} for {key}")))
                })
                .transpose()
        };
        let h = self.v0.or(lookup("barrier.height")?).unwrap_or(1.0);
        let w = self.a.or(lookup("barrier.width")?).unwrap_or(1.0);
        Barrier::new(h, w).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured data set: CIFAR binary images or a phrase file.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        lexicon: LexiconArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and write metrics.csv and model.qtnn.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        lexicon: LexiconArg,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also train the ReLU counterpart; results go to <out-dir>/<model>/.
        #[arg(long)]
        baseline: bool,
        /// Stop once train accuracy reaches this value.
        #[arg(long, value_name = "ACCURACY")]
        stop_at_accuracy: Option<f64>,
    },
    /// Report train and test loss and accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        lexicon: LexiconArg,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Tabulate E, T(E) and dT/dE as CSV.
    ActivationTable {
        #[command(flatten)]
        barrier: BarrierArgs,
        #[arg(long)]
        e_min: f64,
        #[arg(long)]
        e_max: f64,
        #[arg(long, default_value_t = 256)]
        steps: usize,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the bound levels of the matching square well.
    BoundStates {
        #[command(flatten)]
        barrier: BarrierArgs,
    },
    /// Export misclassified test images as PPM files with an index.csv.
    DumpMisclassified {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { cfg, lexicon, out } => {
            let cfg = cfg.resolve()?;
            let n = experiment::generate_data(&cfg, &out, lexicon.load()?.as_ref())?;
            eprintln!("wrote {n} items to {}", out.display());
        }
        Command::Train {
            cfg,
            lexicon,
            out_dir,
            baseline,
            stop_at_accuracy,
        } => {
            let cfg = cfg.resolve()?;
            let opts = RunOptions {
                stop_at_train_accuracy: stop_at_accuracy,
                lexicon: lexicon.load()?,
            };
            if baseline {
                let (a, b) = experiment::run_comparison(&cfg, &out_dir, &opts)?;
                eprintln!(
                    "{}: {} epochs, {}: {} epochs",
                    cfg.model,
                    a.epochs_run(),
                    cfg.model.baseline(),
                    b.epochs_run()
                );
            } else {
                let s = experiment::run_experiment(&cfg, &out_dir, &opts)?;
                eprintln!("{}: {} epochs", cfg.model, s.epochs_run());
            }
        }
        Command::Eval {
            cfg,
            lexicon,
            checkpoint,
        } => {
            let cfg = cfg.resolve()?;
            let opts = RunOptions {
                lexicon: lexicon.load()?,
                ..RunOptions::default()
            };
            println!("split,loss,accuracy");
            for e in experiment::evaluate_checkpoint(&checkpoint, &cfg, &opts)? {
                println!("{},{},{}", e.split, e.loss, e.accuracy);
            }
        }
        Command::ActivationTable {
            barrier,
            e_min,
            e_max,
            steps,
            out,
        } => {
            let rows = tools::activation_table(&barrier.barrier()?, e_min, e_max, steps)?;
            write_or_print(out.as_deref(), &tools::activation_table_csv(&rows))?;
        }
        Command::BoundStates { barrier } => {
            print!("{}", tools::bound_states_table(&barrier.barrier()?));
        }
        Command::DumpMisclassified {
            cfg,
            checkpoint,
            out_dir,
        } => {
            let cfg = cfg.resolve()?;
            let net = match experiment::load_model(&checkpoint, &cfg)? {
                Model::Bnn(net) => net,
                Model::Rnn(_) => {
                    return Err(CliError::Data(
                        "dump-misclassified needs a bnn checkpoint of an image model".into(),
                    ))
                }
            };
            let test = test_images(&cfg)?;
            let n = tools::dump_misclassified(&net, &test, cfg.mc_samples, cfg.seed, &out_dir)?;
            println!("{n}");
        }
    }
    Ok(())
}

fn test_images(cfg: &ExperimentConfig) -> CliResult<qtnn_core::data::LabeledImageSet> {
    if !cfg.model.is_bnn() {
        return Err(CliError::Config(format!(
            "{} is not an image model",
            cfg.model
        )));
    }
    match experiment::prepare_data(cfg, None)? {
        Prepared::Images(d) => Ok(d.test),
        Prepared::Phrases(_) => unreachable!("bnn configs prepare images"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qtnn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
