use std::ops::ControlFlow;

use proptest::prelude::*;
use qtnn_core::bnn::{kl_gaussian, predict_mc, train_bnn, BayesNet, BnnConfig};
use qtnn_core::metrics::{MetricsRecord, Split};
use qtnn_core::nn::{
    streams, train_dense, Dataset, DenseNet, LossKind, Matrix, NetworkSpec, SeedStream, SgdConfig,
};
use qtnn_core::rnn::{
    fit_rnn, rnn_forward, train_rnn, RecurrentCell, RnnConfig, RnnSpec, TokenSequence,
};
use qtnn_core::Activation;

fn blobs(seed: u64, n: usize, dim: usize, classes: usize) -> Dataset {
    let mut s = SeedStream::new(seed, 31);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| s.uniform_range(-1.5, 1.5)).collect())
        .collect();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = i % classes;
        data.extend(centres[y].iter().map(|c| c + 0.4 * s.gaussian()));
        labels.push(y);
    }
    Dataset::new(Matrix::from_vec(n, dim, data).unwrap(), labels).unwrap()
}

fn without_timing(records: &[MetricsRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| {
            MetricsRecord {
                wall_ms: 0,
                ..r.clone()
            }
            .csv_row()
        })
        .collect()
}

/// With a vanishing posterior width and no KL pressure, Bayesian training is
/// plain SGD on the means.
#[test]
fn degenerate_posterior_tracks_deterministic_training() {
    let data = blobs(1, 48, 4, 3);
    let seed = 17;
    for act in [Activation::qt_default(), Activation::Relu] {
        let spec = NetworkSpec::new(4, &[6], 3, act, LossKind::SoftmaxCrossEntropy).unwrap();
        let cfg = BnnConfig {
            epochs: 25,
            lr: 0.1,
            batch: 8,
            mc_samples: 3,
            beta: 0.0,
            rho_init: -40.0,
            model_name: "qt-bnn".into(),
        };
        let (_, records) = train_bnn(&spec, &data, None, &cfg, seed).unwrap();

        let mut dense = DenseNet::init(&spec, &mut SeedStream::new(seed, streams::INIT)).unwrap();
        let sgd = SgdConfig {
            epochs: cfg.epochs,
            lr: cfg.lr,
            batch: cfg.batch,
        };
        let history = train_dense(&mut dense, &data.inputs, &data.labels, &sgd, seed).unwrap();

        assert_eq!(records.len(), history.len());
        for (r, h) in records.iter().zip(&history) {
            assert!(
                (r.loss - h.loss).abs() < 1e-6,
                "{} epoch {}: {} vs {}",
                act.name(),
                r.epoch,
                r.loss,
                h.loss
            );
        }
    }
}

#[test]
fn bnn_training_is_reproducible() {
    let data = blobs(2, 40, 5, 2);
    let spec = NetworkSpec::new(
        5,
        &[8],
        2,
        Activation::qt_default(),
        LossKind::SoftmaxCrossEntropy,
    )
    .unwrap();
    let cfg = BnnConfig {
        epochs: 6,
        batch: 8,
        ..BnnConfig::default()
    };
    let (a, ra) = train_bnn(&spec, &data, Some(&data), &cfg, 5).unwrap();
    let (b, rb) = train_bnn(&spec, &data, Some(&data), &cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(without_timing(&ra), without_timing(&rb));
    assert_eq!(ra.len(), 12);
    assert!(ra.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    assert!(ra.windows(2).all(|w| w[0].epoch <= w[1].epoch));
}

fn small_bnn(seed: u64) -> (BayesNet, Matrix) {
    let spec = NetworkSpec::new(
        3,
        &[5],
        3,
        Activation::qt_default(),
        LossKind::SoftmaxCrossEntropy,
    )
    .unwrap();
    let mut net = BayesNet::init(&spec, &mut SeedStream::new(seed, streams::INIT), -1.0).unwrap();
    for l in &mut net.layers {
        l.w_mu.scale(2.0);
    }
    let x = blobs(seed, 7, 3, 3).inputs;
    (net, x)
}

#[test]
fn mc_prediction_is_thread_count_invariant() {
    let (net, x) = small_bnn(3);
    let stream = SeedStream::new(9, streams::EVAL);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| predict_mc(&net, &x, 37, &stream).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 8] {
        assert_eq!(run(threads), one, "{threads} threads");
    }
    for r in 0..one.rows() {
        assert!((one.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

/// Variance of the MC average across independent calls falls as 1/n.
#[test]
fn mc_variance_falls_inversely_with_samples() {
    let (net, x) = small_bnn(4);
    let x = x.select_rows(&[0]);
    let sizes = [1usize, 2, 4, 8, 16, 32, 64];
    let repeats = 400;
    let mut points = Vec::new();
    for &n in &sizes {
        let draws: Vec<f64> = (0..repeats)
            .map(|k| {
                predict_mc(&net, &x, n, &SeedStream::new(1000 + k, streams::EVAL))
                    .unwrap()
                    .get(0, 0)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / repeats as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
        points.push(((n as f64).ln(), var.ln()));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.0).abs() <= 0.2, "log-log slope {slope}");
}

proptest! {
    #[test]
    fn kl_is_non_negative(mu in -10.0f64..10.0, rho in -20.0f64..20.0) {
        prop_assert!(kl_gaussian(mu, rho) >= 0.0);
    }

    #[test]
    fn kl_vanishes_only_at_the_prior(mu in -3.0f64..3.0, rho in -5.0f64..5.0) {
        let prior_rho = (std::f64::consts::E - 1.0).ln();
        prop_assume!(mu.abs() > 1e-3 || (rho - prior_rho).abs() > 1e-3);
        prop_assert!(kl_gaussian(mu, rho) > 0.0);
        prop_assert!(kl_gaussian(0.0, prior_rho).abs() < 1e-15);
    }

    #[test]
    fn qt_hidden_states_are_probabilities(seed in any::<u64>(), ids in prop::collection::vec(0usize..9, 1..12)) {
        let spec = RnnSpec::new(9, Activation::qt_default());
        let mut cell = RecurrentCell::init(&spec, &mut SeedStream::new(seed, streams::INIT)).unwrap();
        cell.w_hh.scale(4.0);
        let out = rnn_forward(&cell, &TokenSequence { ids, label: 0 }).unwrap();
        prop_assert!(out.hidden.iter().flatten().all(|h| (0.0..=1.0).contains(h)));
        prop_assert!(out.p > 0.0 && out.p < 1.0);
    }

    #[test]
    fn rnn_output_strictly_inside_unit_interval(bias in -1e6f64..1e6) {
        let spec = RnnSpec::new(4, Activation::Relu);
        let mut cell = RecurrentCell::zeros(&spec);
        cell.head_b = bias;
        let out = rnn_forward(&cell, &TokenSequence { ids: vec![1, 2], label: 1 }).unwrap();
        prop_assert!(out.p > 0.0 && out.p < 1.0);
    }
}

fn toy_sequences() -> Vec<TokenSequence> {
    (0..24)
        .map(|i| {
            let label = i % 2;
            TokenSequence {
                ids: vec![1 + i % 3, 4 + label, 6 + (i / 2) % 2],
                label,
            }
        })
        .collect()
}

#[test]
fn rnn_training_is_reproducible_and_learns() {
    let seqs = toy_sequences();
    let spec = RnnSpec::new(8, Activation::qt_default());
    let cfg = RnnConfig {
        epochs: 60,
        ..RnnConfig::default()
    };
    let (a, ra) = train_rnn(&spec, &seqs, &seqs[..6], &cfg, 3).unwrap();
    let (b, rb) = train_rnn(&spec, &seqs, &seqs[..6], &cfg, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(without_timing(&ra), without_timing(&rb));
    let last_train = ra.iter().rev().find(|r| r.split == Split::Train).unwrap();
    assert_eq!(last_train.accuracy, 1.0);
}

#[test]
fn rnn_zero_epochs_keeps_initial_cell() {
    let seqs = toy_sequences();
    let spec = RnnSpec::new(8, Activation::Relu);
    let mut cell = RecurrentCell::init(&spec, &mut SeedStream::new(1, streams::INIT)).unwrap();
    let before = cell.clone();
    let cfg = RnnConfig {
        epochs: 0,
        ..RnnConfig::default()
    };
    let records = fit_rnn(
        &mut cell,
        &seqs,
        &[],
        &cfg,
        1,
        |_| ControlFlow::Continue(()),
    )
    .unwrap();
    assert!(records.is_empty());
    assert_eq!(cell, before);
}
