//! Binary model checkpoints.
//!
//! ```text
//! QTNN1\n
//! kind=<bnn|rnn> layers=<comma sizes> activation=<qt|relu> v0=<f> a=<f>\n
//! <parameters as little-endian f64>
//! ```
//!
//! Bayesian nets store `w_mu, w_rho, b_mu, b_rho` per layer; recurrent cells
//! store embedding, `W_xh`, `W_hh`, `b_h`, head weights and head bias, with
//! `layers=<vocab rows>,<embed dim>,<hidden>,1`. ReLU models write `v0=0 a=0`.
//! The energy map is not recorded and must be supplied when reading.

use std::fmt;

use crate::bnn::BayesNet;
use crate::error::{Error, Result};
use crate::nn::{Activation, LossKind, NetworkSpec, SeedStream};
use crate::qt::{Barrier, EnergyMap};
use crate::rnn::{RecurrentCell, RnnSpec};

pub const MAGIC: &[u8] = b"QTNN1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Bnn,
    Rnn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Bnn => "bnn",
            ModelKind::Rnn => "rnn",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Bnn(BayesNet),
    Rnn(RecurrentCell),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Bnn(_) => ModelKind::Bnn,
            Model::Rnn(_) => ModelKind::Rnn,
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Model::Bnn(net) => net.layers[0].activation,
            Model::Rnn(cell) => cell.activation,
        }
    }

    fn layers(&self) -> Vec<usize> {
        match self {
            Model::Bnn(net) => net.layer_sizes(),
            Model::Rnn(cell) => {
                let s = cell.spec();
                vec![s.vocab_size, s.embed_dim, s.hidden, 1]
            }
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Model::Bnn(net) => net.flat_params(),
            Model::Rnn(cell) => cell.flat_params(),
        }
    }
}

/// Parsed header line.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub kind: ModelKind,
    pub layers: Vec<usize>,
    /// `None` for ReLU models.
    pub barrier: Option<Barrier>,
}

pub fn write_checkpoint(model: &Model) -> Vec<u8> {
    let (act, v0, a) = match model.activation() {
        Activation::Qt { barrier, .. } => ("qt", barrier.height(), barrier.width()),
        _ => ("relu", 0.0, 0.0),
    };
    let layers: Vec<String> = model.layers().iter().map(usize::to_string).collect();
    let header = format!(
        "kind={} layers={} activation={act} v0={v0} a={a}\n",
        model.kind(),
        layers.join(",")
    );
    let params = model.params();
    let mut out = Vec::with_capacity(MAGIC.len() + header.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(header.as_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

/// Reads the magic and header line. Returns the header and the offset of the
/// first parameter byte.
pub fn read_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if !bytes.starts_with(MAGIC) {
        return Err(format_err(0, "missing QTNN1 magic"));
    }
    let start = MAGIC.len();
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| start + p)
        .ok_or_else(|| format_err(start, "unterminated header line"))?;
    let line = std::str::from_utf8(&bytes[start..end])
        .map_err(|_| format_err(start, "header is not UTF-8"))?;
    let mut fields = std::collections::BTreeMap::new();
    for item in line.split_whitespace() {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| format_err(start, format!("malformed header field {item:?}")))?;
        fields.insert(k, v);
    }
    let field = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| format_err(start, format!("header lacks {k}")))
    };
    let kind = match field("kind")? {
        "bnn" => ModelKind::Bnn,
        "rnn" => ModelKind::Rnn,
        other => return Err(format_err(start, format!("unknown kind {other:?}"))),
    };
    let layers = field("layers")?
        .split(',')
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| format_err(start, format!("bad layer sizes: {e}")))?;
    let float = |k: &str| -> Result<f64> {
        field(k)?
            .parse()
            .map_err(|e| format_err(start, format!("bad {k}: {e}")))
    };
    let barrier = match field("activation")? {
        "qt" => Some(
            Barrier::new(float("v0")?, float("a")?)
                .map_err(|e| format_err(start, e.to_string()))?,
        ),
        "relu" => None,
        other => return Err(format_err(start, format!("unknown activation {other:?}"))),
    };
    Ok((
        Header {
            kind,
            layers,
            barrier,
        },
        end + 1,
    ))
}

/// Rebuilds a model. QT models use `map` as their energy map.
pub fn read_checkpoint(bytes: &[u8], map: EnergyMap) -> Result<Model> {
    let (header, body) = read_header(bytes)?;
    let activation = match header.barrier {
        Some(barrier) => Activation::Qt { barrier, map },
        None => Activation::Relu,
    };
    let mut model = match header.kind {
        ModelKind::Bnn => {
            let l = &header.layers;
            if l.len() < 3 {
                return Err(format_err(
                    MAGIC.len(),
                    "a bnn needs at least three layer sizes",
                ));
            }
            let spec = NetworkSpec::new(
                l[0],
                &l[1..l.len() - 1],
                l[l.len() - 1],
                activation,
                LossKind::SoftmaxCrossEntropy,
            )?;
            Model::Bnn(BayesNet::init(&spec, &mut SeedStream::new(0, 0), 0.0)?)
        }
        ModelKind::Rnn => {
            let l = &header.layers;
            if l.len() != 4 || l[3] != 1 {
                return Err(format_err(
                    MAGIC.len(),
                    "an rnn header lists vocab,embed,hidden,1",
                ));
            }
            let spec = RnnSpec {
                vocab_size: l[0],
                embed_dim: l[1],
                hidden: l[2],
                activation,
            };
            spec.validate()?;
            Model::Rnn(RecurrentCell::zeros(&spec))
        }
    };
    let payload = &bytes[body..];
    let expected = model.params().len();
    if payload.len() != 8 * expected {
        return Err(format_err(
            body,
            format!(
                "expected {} parameter bytes, found {}",
                8 * expected,
                payload.len()
            ),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    match &mut model {
        Model::Bnn(net) => net.set_flat_params(&values)?,
        Model::Rnn(cell) => cell.set_flat_params(&values)?,
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rnn_round_trip() {
        let spec = RnnSpec::new(7, Activation::qt_default());
        let cell = RecurrentCell::init(&spec, &mut SeedStream::new(9, 1)).unwrap();
        let bytes = write_checkpoint(&Model::Rnn(cell.clone()));
        assert!(bytes.starts_with(b"QTNN1\nkind=rnn layers=7,16,32,1 activation=qt v0=1 a=1\n"));
        assert_eq!(
            read_checkpoint(&bytes, EnergyMap::default()).unwrap(),
            Model::Rnn(cell)
        );
    }

    #[test]
    fn bnn_round_trip_relu() {
        let spec =
            NetworkSpec::new(5, &[4], 2, Activation::Relu, LossKind::SoftmaxCrossEntropy).unwrap();
        let net = BayesNet::init(&spec, &mut SeedStream::new(3, 1), -3.0).unwrap();
        let bytes = write_checkpoint(&Model::Bnn(net.clone()));
        assert!(bytes.starts_with(b"QTNN1\nkind=bnn layers=5,4,2 activation=relu v0=0 a=0\n"));
        assert_eq!(
            read_checkpoint(&bytes, EnergyMap::default()).unwrap(),
            Model::Bnn(net)
        );
    }

    #[test]
    fn truncated_payload_rejected() {
        let spec = RnnSpec::new(3, Activation::Relu);
        let mut bytes = write_checkpoint(&Model::Rnn(RecurrentCell::zeros(&spec)));
        bytes.pop();
        assert!(matches!(
            read_checkpoint(&bytes, EnergyMap::default()),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            read_checkpoint(b"QTNN2\n", EnergyMap::default()),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
