//! Central-difference gradient checking for [`DenseNet`].

use super::dense::{Activation, DenseNet, Gradients, ParamLocation};
use super::matrix::Matrix;
use super::rng::SeedStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Above this many parameters a seeded random subset of this size is checked.
    pub max_params: usize,
    pub seed: u64,
    /// Examples with a ReLU pre-activation closer than this to the kink are
    /// dropped from the batch.
    pub kink_margin: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_params: 1000,
            seed: 0x5eed,
            kink_margin: 1e-6,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub location: Option<ParamLocation>,
    pub checked: usize,
    pub excluded_examples: usize,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn gradient_check(
    net: &DenseNet,
    batch: &Matrix,
    labels: &[usize],
    tolerance: f64,
) -> Result<GradCheckReport> {
    gradient_check_with(
        net,
        batch,
        labels,
        tolerance,
        &GradCheckOptions::default(),
        |n, x, y| Ok(n.loss_and_grad(x, y)?.1),
    )
}

/// Like [`gradient_check`] but with a caller-supplied analytic gradient.
pub fn gradient_check_with(
    net: &DenseNet,
    batch: &Matrix,
    labels: &[usize],
    tolerance: f64,
    opts: &GradCheckOptions,
    analytic: impl FnOnce(&DenseNet, &Matrix, &[usize]) -> Result<Gradients>,
) -> Result<GradCheckReport> {
    if batch.rows() == 0 {
        return Err(Error::InvalidArgument(
            "gradient check needs a non-empty batch".into(),
        ));
    }
    let keep = away_from_kinks(net, batch, opts.kink_margin)?;
    if keep.is_empty() {
        return Err(Error::InvalidArgument(
            "every example sits on a ReLU kink".into(),
        ));
    }
    let excluded = batch.rows() - keep.len();
    let x = batch.select_rows(&keep);
    let y: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();

    let grads = analytic(net, &x, &y)?;
    let total = net.param_count();
    let indices: Vec<usize> = if total > opts.max_params {
        let mut s = SeedStream::new(opts.seed, 0);
        let mut p = s.permutation(total);
        p.truncate(opts.max_params);
        p.sort_unstable();
        p
    } else {
        (0..total).collect()
    };

    let mut probe = net.clone();
    let mut grads = grads;
    let mut worst = 0.0;
    let mut location = None;
    for &flat in &indices {
        let loc = net.locate(flat).expect("index in range");
        let orig = *probe.param_mut(loc);
        *probe.param_mut(loc) = orig + opts.step;
        let up = probe.loss(&x, &y)?;
        *probe.param_mut(loc) = orig - opts.step;
        let down = probe.loss(&x, &y)?;
        *probe.param_mut(loc) = orig;
        let numeric = (up - down) / (2.0 * opts.step);
        let err = relative_error(*grads.get_mut(loc), numeric, opts.floor);
        if err > worst || location.is_none() {
            worst = err;
            location = Some(loc);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        location,
        checked: indices.len(),
        excluded_examples: excluded,
        passed: worst < tolerance,
    })
}

fn away_from_kinks(net: &DenseNet, batch: &Matrix, margin: f64) -> Result<Vec<usize>> {
    let has_relu = net.layers.iter().any(|l| l.activation == Activation::Relu);
    if !has_relu {
        return Ok((0..batch.rows()).collect());
    }
    let cache = net.forward(batch)?;
    Ok((0..batch.rows())
        .filter(|&r| {
            net.layers.iter().enumerate().all(|(i, l)| {
                l.activation != Activation::Relu
                    || cache.pre[i].row(r).iter().all(|p| p.abs() >= margin)
            })
        })
        .collect())
}
