mod support;

use qtnn_core::bnn::{elbo_loss_with_noise, BayesNet};
use qtnn_core::nn::{
    gradient_check, logistic_loss, streams, Dataset, DenseNet, LossKind, Matrix, NetworkSpec,
    SeedStream,
};
use qtnn_core::rnn::{
    bptt, bptt_unclipped, rnn_forward, RecurrentCell, RnnSpec, TokenSequence, CLIP_NORM,
    DEFAULT_EMBED_DIM,
};
use qtnn_core::{Activation, Barrier, EnergyMap};
use support::max_fd_error;

const TOL: f64 = 1e-4;

fn unit_batch(s: &mut SeedStream, n: usize, dim: usize, classes: usize) -> (Matrix, Vec<usize>) {
    let data = (0..n * dim).map(|_| s.uniform_range(-1.0, 1.0)).collect();
    let labels = (0..n).map(|_| s.below(classes)).collect();
    (Matrix::from_vec(n, dim, data).unwrap(), labels)
}

fn activations() -> Vec<Activation> {
    vec![
        Activation::qt_default(),
        Activation::Qt {
            barrier: Barrier::new(2.0, 0.5).unwrap(),
            map: EnergyMap::clamp(),
        },
        Activation::Qt {
            barrier: Barrier::new(0.5, 2.0).unwrap(),
            map: EnergyMap::smooth(0.5).unwrap(),
        },
        Activation::Relu,
        Activation::Identity,
    ]
}

#[test]
fn dense_six_four_three_two_nets() {
    for act in activations() {
        for seed in 0..5 {
            let spec = NetworkSpec::new(6, &[4, 3], 2, act, LossKind::SoftmaxCrossEntropy).unwrap();
            let net = DenseNet::init(&spec, &mut SeedStream::new(seed, streams::INIT)).unwrap();
            let (x, y) = unit_batch(&mut SeedStream::new(seed, 99), 8, 6, 2);
            let report = gradient_check(&net, &x, &y, TOL).unwrap();
            assert!(report.passed, "{} seed {seed}: {report:?}", act.name());
            if matches!(act, Activation::Identity) {
                assert!(report.max_rel_error < 1e-7, "{report:?}");
            }
        }
    }
}

#[test]
fn dense_logistic_head() {
    for act in [Activation::qt_default(), Activation::Relu] {
        let spec = NetworkSpec::new(5, &[7], 1, act, LossKind::Logistic).unwrap();
        let net = DenseNet::init(&spec, &mut SeedStream::new(3, streams::INIT)).unwrap();
        let (x, y) = unit_batch(&mut SeedStream::new(4, 99), 10, 5, 2);
        let report = gradient_check(&net, &x, &y, TOL).unwrap();
        assert!(report.passed, "{report:?}");
    }
}

/// One SGD step with a tiny learning rate never increases the batch loss.
#[test]
fn small_step_does_not_increase_loss() {
    for trial in 0..100u64 {
        let act = if trial % 2 == 0 {
            Activation::qt_default()
        } else {
            Activation::Relu
        };
        let spec = NetworkSpec::new(4, &[5], 3, act, LossKind::SoftmaxCrossEntropy).unwrap();
        let mut net = DenseNet::init(&spec, &mut SeedStream::new(trial, streams::INIT)).unwrap();
        let (x, y) = unit_batch(&mut SeedStream::new(trial, 7), 6, 4, 3);
        let (before, g) = net.loss_and_grad(&x, &y).unwrap();
        net.apply_gradients(&g, 1e-4);
        let after = net.loss(&x, &y).unwrap();
        assert!(after <= before, "trial {trial}: {before} -> {after}");
    }
}

#[test]
fn bnn_elbo_with_frozen_noise() {
    for (seed, act) in activations().into_iter().enumerate() {
        let seed = seed as u64;
        let spec = NetworkSpec::new(5, &[4], 3, act, LossKind::SoftmaxCrossEntropy).unwrap();
        let mut net =
            BayesNet::init(&spec, &mut SeedStream::new(seed, streams::INIT), -1.5).unwrap();
        // Spread ρ so the σ-gradient is exercised away from one value.
        let mut s = SeedStream::new(seed, 5);
        for l in &mut net.layers {
            l.w_rho
                .data_mut()
                .iter_mut()
                .for_each(|r| *r = s.uniform_range(-3.0, 0.5));
            l.b_rho
                .iter_mut()
                .for_each(|r| *r = s.uniform_range(-3.0, 0.5));
            l.b_mu
                .iter_mut()
                .for_each(|m| *m = s.uniform_range(-0.3, 0.3));
        }
        let (x, y) = unit_batch(&mut SeedStream::new(seed, 11), 6, 5, 3);
        let batch = Dataset::new(x, y).unwrap();
        let noise = net.draw_noise(&mut SeedStream::new(seed, streams::NOISE));
        for beta in [0.0, 1.0] {
            let (_, grads) = elbo_loss_with_noise(&net, &batch, &noise, beta, 4).unwrap();
            let params = net.flat_params();
            let loss_at = |p: &[f64]| {
                let mut probe = net.clone();
                probe.set_flat_params(p).unwrap();
                elbo_loss_with_noise(&probe, &batch, &noise, beta, 4)
                    .unwrap()
                    .0
            };
            let (err, at) = max_fd_error(loss_at, &params, &grads.flatten(), 1e-5, 1e-6);
            assert!(err < TOL, "{} β={beta}: {err:e} at {at}", act.name());
        }
    }
}

fn random_sequence(s: &mut SeedStream, vocab: usize, len: usize) -> TokenSequence {
    TokenSequence {
        ids: (0..len).map(|_| s.below(vocab)).collect(),
        label: s.below(2),
    }
}

fn bce(cell: &RecurrentCell, seq: &TokenSequence) -> f64 {
    logistic_loss(rnn_forward(cell, seq).unwrap().logit, seq.label).0
}

/// Twenty seeded random cells with vocabulary 12, hidden size 8 and a
/// length-5 sequence. Biases and head are randomised too.
#[test]
fn rnn_bptt_matches_finite_differences() {
    for seed in 0..20u64 {
        let act = if seed % 4 == 3 {
            Activation::Qt {
                barrier: Barrier::new(2.0, 0.7).unwrap(),
                map: EnergyMap::clamp(),
            }
        } else {
            Activation::qt_default()
        };
        let spec = RnnSpec {
            vocab_size: 12,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden: 8,
            activation: act,
        };
        let mut cell =
            RecurrentCell::init(&spec, &mut SeedStream::new(seed, streams::INIT)).unwrap();
        let mut s = SeedStream::new(seed, 13);
        cell.b_h
            .iter_mut()
            .for_each(|b| *b = s.uniform_range(-0.5, 0.5));
        cell.head_b = s.uniform_range(-0.5, 0.5);
        let seq = random_sequence(&mut s, 12, 5);

        let (_, raw) = bptt_unclipped(&cell, &seq).unwrap();
        let (_, clipped) = bptt(&cell, &seq).unwrap();
        assert!(
            raw.norm() < CLIP_NORM,
            "seed {seed}: clipping would distort the check"
        );
        assert_eq!(raw, clipped);

        let params = cell.flat_params();
        let loss_at = |p: &[f64]| {
            let mut probe = cell.clone();
            probe.set_flat_params(p).unwrap();
            bce(&probe, &seq)
        };
        let (err, at) = max_fd_error(loss_at, &params, &clipped.flatten(), 1e-5, 1e-6);
        assert!(err < TOL, "seed {seed}: {err:e} at parameter {at}");
    }
}

#[test]
fn rnn_relu_bptt_matches_finite_differences() {
    let spec = RnnSpec {
        vocab_size: 12,
        embed_dim: DEFAULT_EMBED_DIM,
        hidden: 8,
        activation: Activation::Relu,
    };
    let cell = RecurrentCell::init(&spec, &mut SeedStream::new(5, streams::INIT)).unwrap();
    let seq = random_sequence(&mut SeedStream::new(5, 13), 12, 5);
    let (_, g) = bptt_unclipped(&cell, &seq).unwrap();
    let loss_at = |p: &[f64]| {
        let mut probe = cell.clone();
        probe.set_flat_params(p).unwrap();
        bce(&probe, &seq)
    };
    let (err, _) = max_fd_error(loss_at, &cell.flat_params(), &g.flatten(), 1e-5, 1e-6);
    assert!(err < TOL, "{err:e}");
}
