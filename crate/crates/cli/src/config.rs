//! Flat `key=value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are skipped.
//! Recognised keys:
//!
//! | key | default |
//! |-----|---------|
//! | `model` | required: `qt-bnn`, `relu-bnn`, `qt-rnn`, `relu-rnn` |
//! | `barrier.height`, `barrier.width` | 1, 1 (QT models only) |
//! | `energy_map` | `smooth` (QT models only; or `clamp`) |
//! | `hidden` | 64 (bnn), 32 (rnn) |
//! | `epochs` | 400 (bnn), 500 (rnn) |
//! | `lr` | 0.05 |
//! | `batch` | 32 (bnn only) |
//! | `mc_samples` | 10 (bnn only) |
//! | `beta` | 1 (bnn only) |
//! | `seed` | 42 |
//! | `data.path` | none: CIFAR binary (bnn) or phrase file (rnn) |
//! | `data.synthetic.count` | 2500 (bnn only) |
//! | `split.fraction` | 0.8 |

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use qtnn_core::{Activation, Barrier, EnergyMap};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    QtBnn,
    ReluBnn,
    QtRnn,
    ReluRnn,
}

impl ModelChoice {
    pub fn is_qt(self) -> bool {
        matches!(self, ModelChoice::QtBnn | ModelChoice::QtRnn)
    }

    pub fn is_bnn(self) -> bool {
        matches!(self, ModelChoice::QtBnn | ModelChoice::ReluBnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::QtBnn => "qt-bnn",
            ModelChoice::ReluBnn => "relu-bnn",
            ModelChoice::QtRnn => "qt-rnn",
            ModelChoice::ReluRnn => "relu-rnn",
        }
    }

    /// The classical model of the same family.
    pub fn baseline(self) -> Self {
        if self.is_bnn() {
            ModelChoice::ReluBnn
        } else {
            ModelChoice::ReluRnn
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "qt-bnn" => Ok(ModelChoice::QtBnn),
            "relu-bnn" => Ok(ModelChoice::ReluBnn),
            "qt-rnn" => Ok(ModelChoice::QtRnn),
            "relu-rnn" => Ok(ModelChoice::ReluRnn),
            other => Err(format!(
                "unknown model {other:?} (expected qt-bnn, relu-bnn, qt-rnn or relu-rnn)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyMapChoice {
    Smooth,
    Clamp,
}

impl EnergyMapChoice {
    pub fn build(self) -> EnergyMap {
        match self {
            EnergyMapChoice::Smooth => EnergyMap::default(),
            EnergyMapChoice::Clamp => EnergyMap::clamp(),
        }
    }
}

impl FromStr for EnergyMapChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "smooth" => Ok(EnergyMapChoice::Smooth),
            "clamp" => Ok(EnergyMapChoice::Clamp),
            other => Err(format!(
                "unknown energy map {other:?} (expected smooth or clamp)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { count: usize },
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    pub barrier: Barrier,
    pub energy_map: EnergyMapChoice,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub mc_samples: usize,
    pub beta: f64,
    pub seed: u64,
    pub data: DataSource,
    pub split_fraction: f64,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SYNTHETIC_COUNT: usize = 2500;

const KEYS: &[&str] = &[
    "model",
    "barrier.height",
    "barrier.width",
    "energy_map",
    "hidden",
    "epochs",
    "lr",
    "batch",
    "mc_samples",
    "beta",
    "seed",
    "data.path",
    "data.synthetic.count",
    "split.fraction",
];
const QT_ONLY: &[&str] = &["barrier.height", "barrier.width", "energy_map"];
const BNN_ONLY: &[&str] = &["batch", "mc_samples", "beta", "data.synthetic.count"];

impl ExperimentConfig {
    pub fn activation(&self) -> Activation {
        if self.model.is_qt() {
            Activation::Qt {
                barrier: self.barrier,
                map: self.energy_map.build(),
            }
        } else {
            Activation::Relu
        }
    }

    /// The same run with the classical activation.
    pub fn baseline(&self) -> Self {
        Self {
            model: self.model.baseline(),
            ..self.clone()
        }
    }

    /// Canonical `key=value` text that parses back to this config.
    pub fn to_text(&self) -> String {
        let mut lines = vec![format!("model={}", self.model)];
        if self.model.is_qt() {
            lines.push(format!("barrier.height={}", self.barrier.height()));
            lines.push(format!("barrier.width={}", self.barrier.width()));
            lines.push(format!(
                "energy_map={}",
                match self.energy_map {
                    EnergyMapChoice::Smooth => "smooth",
                    EnergyMapChoice::Clamp => "clamp",
                }
            ));
        }
        lines.push(format!("hidden={}", self.hidden));
        lines.push(format!("epochs={}", self.epochs));
        lines.push(format!("lr={}", self.lr));
        if self.model.is_bnn() {
            lines.push(format!("batch={}", self.batch));
            lines.push(format!("mc_samples={}", self.mc_samples));
            lines.push(format!("beta={}", self.beta));
        }
        lines.push(format!("seed={}", self.seed));
        match &self.data {
            DataSource::Path(p) => lines.push(format!("data.path={}", p.display())),
            DataSource::Synthetic { count } if self.model.is_bnn() => {
                lines.push(format!("data.synthetic.count={count}"))
            }
            DataSource::Synthetic { .. } => {}
        }
        lines.push(format!("split.fraction={}", self.split_fraction));
        lines.join("\n") + "\n"
    }
}

/// Splits config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key=value, got {line:?}", n + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", n + 1)));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    build_config(&parse_pairs(text)?)
}

/// Parses `text`, then applies `overrides` in order; later values win.
pub fn parse_config_with(
    text: &str,
    overrides: &[(String, String)],
) -> CliResult<ExperimentConfig> {
    let mut pairs = parse_pairs(text)?;
    pairs.extend_from_slice(overrides);
    build_config(&pairs)
}

fn value<T: FromStr>(key: &str, raw: &str) -> CliResult<T>
where
    T::Err: fmt::Display,
{
    raw.parse()
        .map_err(|e| CliError::Config(format!("invalid value {raw:?} for {key}: {e}")))
}

fn positive_count(key: &str, raw: &str) -> CliResult<usize> {
    let n: usize = value(key, raw)?;
    if n == 0 {
        return Err(CliError::Config(format!("{key} must be at least 1")));
    }
    Ok(n)
}

pub fn build_config(pairs: &[(String, String)]) -> CliResult<ExperimentConfig> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in pairs {
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Config(format!("unknown key {k:?}")));
        }
        map.insert(k, v);
    }
    let model: ModelChoice = match map.get("model") {
        Some(raw) => raw.parse().map_err(CliError::Config)?,
        None => return Err(CliError::Config("missing required key \"model\"".into())),
    };
    if !model.is_qt() {
        if let Some(k) = QT_ONLY.iter().find(|k| map.contains_key(*k)) {
            return Err(CliError::Config(format!(
                "{k} is only valid for qt models, not {model}"
            )));
        }
    }
    if !model.is_bnn() {
        if let Some(k) = BNN_ONLY.iter().find(|k| map.contains_key(*k)) {
            return Err(CliError::Config(format!(
                "{k} is only valid for bnn models, not {model}"
            )));
        }
    }

    let get = |k: &str| map.get(k).copied();
    let height = get("barrier.height")
        .map(|v| value::<f64>("barrier.height", v))
        .transpose()?
        .unwrap_or(1.0);
    let width = get("barrier.width")
        .map(|v| value::<f64>("barrier.width", v))
        .transpose()?
        .unwrap_or(1.0);
    let barrier = Barrier::new(height, width).map_err(|e| CliError::Config(e.to_string()))?;
    let energy_map = get("energy_map")
        .map(str::parse)
        .transpose()
        .map_err(CliError::Config)?
        .unwrap_or(EnergyMapChoice::Smooth);

    let hidden = get("hidden")
        .map(|v| positive_count("hidden", v))
        .transpose()?
        .unwrap_or(if model.is_bnn() {
            64
        } else {
            qtnn_core::rnn::DEFAULT_HIDDEN
        });
    let epochs = get("epochs")
        .map(|v| value::<usize>("epochs", v))
        .transpose()?
        .unwrap_or(if model.is_bnn() { 400 } else { 500 });
    let lr = get("lr")
        .map(|v| value::<f64>("lr", v))
        .transpose()?
        .unwrap_or(0.05);
    if !(lr.is_finite() && lr > 0.0) {
        return Err(CliError::Config(format!("lr must be positive, got {lr}")));
    }
    let batch = get("batch")
        .map(|v| positive_count("batch", v))
        .transpose()?
        .unwrap_or(32);
    let mc_samples = get("mc_samples")
        .map(|v| positive_count("mc_samples", v))
        .transpose()?
        .unwrap_or(10);
    let beta = get("beta")
        .map(|v| value::<f64>("beta", v))
        .transpose()?
        .unwrap_or(1.0);
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(CliError::Config(format!(
            "beta must be non-negative, got {beta}"
        )));
    }
    let seed = get("seed")
        .map(|v| value::<u64>("seed", v))
        .transpose()?
        .unwrap_or(DEFAULT_SEED);
    let data = match (get("data.path"), get("data.synthetic.count")) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "data.path and data.synthetic.count are mutually exclusive".into(),
            ))
        }
        (Some(""), None) => return Err(CliError::Config("data.path is empty".into())),
        (Some(p), None) => DataSource::Path(PathBuf::from(p)),
        (None, Some(c)) => DataSource::Synthetic {
            count: positive_count("data.synthetic.count", c)?,
        },
        (None, None) => DataSource::Synthetic {
            count: DEFAULT_SYNTHETIC_COUNT,
        },
    };
    let split_fraction = get("split.fraction")
        .map(|v| value::<f64>("split.fraction", v))
        .transpose()?
        .unwrap_or(0.8);
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(CliError::Config(format!(
            "split.fraction must lie in (0, 1), got {split_fraction}"
        )));
    }

    Ok(ExperimentConfig {
        model,
        barrier,
        energy_map,
        hidden,
        epochs,
        lr,
        batch,
        mc_samples,
        beta,
        seed,
        data,
        split_fraction,
    })
}
