use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use qtnn_core::bnn::{elbo_loss, predict_mc, BayesNet};
use qtnn_core::data::{gen_phrases, synth_vehicle_images, Lexicon, Vocabulary};
use qtnn_core::nn::{streams, Dataset, DenseNet, LossKind, NetworkSpec};
use qtnn_core::qt::{bound_state_energies, qt_activate, transmission_with_grad};
use qtnn_core::rnn::{bptt, RecurrentCell, RnnSpec};
use qtnn_core::{Activation, Barrier, EnergyMap, SeedStream};

fn activation(c: &mut Criterion) {
    let barrier = Barrier::default();
    let map = EnergyMap::default();
    let xs: Vec<f64> = (0..4096).map(|i| -6.0 + 12.0 * i as f64 / 4095.0).collect();
    c.bench_function("transmission_with_grad", |b| {
        b.iter(|| transmission_with_grad(black_box(0.73), &barrier))
    });
    c.bench_function("qt_activate_4096", |b| {
        b.iter(|| qt_activate(black_box(&xs), &barrier, &map))
    });
    let deep = Barrier::new(1e6, 1.0).unwrap();
    c.bench_function("bound_states_v0_1e6", |b| {
        b.iter(|| bound_state_energies(black_box(&deep)))
    });
}

fn image_batch(n: usize) -> Dataset {
    synth_vehicle_images(n, &SeedStream::new(1, streams::DATA)).to_dataset()
}

fn networks(c: &mut Criterion) {
    let batch = image_batch(32);
    let spec = NetworkSpec::new(
        3072,
        &[64],
        2,
        Activation::qt_default(),
        LossKind::SoftmaxCrossEntropy,
    )
    .unwrap();
    let dense = DenseNet::init(&spec, &mut SeedStream::new(1, streams::INIT)).unwrap();
    c.bench_function("dense_qt_loss_and_grad_b32", |b| {
        b.iter(|| dense.loss_and_grad(&batch.inputs, &batch.labels).unwrap())
    });

    let bnn = BayesNet::init(&spec, &mut SeedStream::new(1, streams::INIT), -3.0).unwrap();
    c.bench_function("bnn_elbo_step_b32", |b| {
        b.iter_batched(
            || SeedStream::new(2, streams::NOISE),
            |mut noise| elbo_loss(&bnn, &batch, &mut noise, 1.0, 63).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let eval = image_batch(100);
    c.bench_function("bnn_predict_mc10_n100", |b| {
        b.iter(|| predict_mc(&bnn, &eval.inputs, 10, &SeedStream::new(3, streams::EVAL)).unwrap())
    });

    let phrases = gen_phrases(&Lexicon::military(), &mut SeedStream::new(1, streams::DATA));
    let vocab = Vocabulary::build(&phrases);
    let seqs = vocab.sequences(&phrases);
    let cell = RecurrentCell::init(
        &RnnSpec::new(vocab.table_size(), Activation::qt_default()),
        &mut SeedStream::new(1, streams::INIT),
    )
    .unwrap();
    c.bench_function("rnn_bptt_one_phrase", |b| {
        b.iter(|| bptt(&cell, black_box(&seqs[0])).unwrap())
    });
}

fn data(c: &mut Criterion) {
    c.bench_function("synth_vehicle_images_100", |b| {
        b.iter(|| synth_vehicle_images(100, &SeedStream::new(black_box(5), streams::DATA)))
    });
}

criterion_group!(benches, activation, networks, data);
criterion_main!(benches);
