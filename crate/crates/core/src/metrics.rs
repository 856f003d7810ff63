use std::fmt;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub model: String,
    pub seed: u64,
    /// Milliseconds since the start of the run. Not covered by determinism.
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "epoch,split,loss,accuracy,model,seed,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.split, self.loss, self.accuracy, self.model, self.seed, self.wall_ms
        )
    }
}

pub fn write_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> io::Result<()> {
    writeln!(out, "{}", MetricsRecord::CSV_HEADER)?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Highest accuracy recorded for `split`, with the epoch where it first occurred.
pub fn best_accuracy(records: &[MetricsRecord], split: Split) -> Option<(usize, f64)> {
    records
        .iter()
        .filter(|r| r.split == split)
        .fold(None, |best, r| match best {
            Some((_, acc)) if acc >= r.accuracy => best,
            _ => Some((r.epoch, r.accuracy)),
        })
}

/// First epoch at which `split` accuracy reaches `threshold`.
pub fn first_epoch_reaching(
    records: &[MetricsRecord],
    split: Split,
    threshold: f64,
) -> Option<usize> {
    records
        .iter()
        .find(|r| r.split == split && r.accuracy >= threshold)
        .map(|r| r.epoch)
}
