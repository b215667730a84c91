use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slu_core::audio::{mix_at_snr, AudioClip, FrontendConfig};
use slu_core::metrics::{align, slots_edit_f1, SlotMatchMode};
use slu_core::model::synth::synthetic_corpus;
use slu_core::model::{
    crf_forward_log_z, crf_viterbi, prepare_examples, CrfParams, JointModel, ModelConfig, Objective,
};

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("w{}", rng.gen_range(0..20))).collect()
}

fn tags(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| ["O", "O", "B-toloc", "I-toloc", "B-date"][rng.gen_range(0..5)].to_string())
        .collect()
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = words(&mut rng, 40);
    let b = words(&mut rng, 40);
    c.bench_function("align 40x40", |bn| bn.iter(|| align(black_box(&a), black_box(&b))));

    let corpus: Vec<_> = (0..500)
        .map(|_| {
            let n = rng.gen_range(4..15);
            let m = rng.gen_range(4..15);
            (
                (words(&mut rng, n), tags(&mut rng, n)),
                (words(&mut rng, m), tags(&mut rng, m)),
            )
        })
        .collect();
    let refs: Vec<_> = corpus.iter().map(|(r, _)| (&r.0[..], &r.1[..])).collect();
    let hyps: Vec<_> = corpus.iter().map(|(_, h)| (&h.0[..], &h.1[..])).collect();
    c.bench_function("slots edit F1 500 utterances", |bn| {
        bn.iter(|| slots_edit_f1(black_box(&refs), black_box(&hyps), SlotMatchMode::WordAndLabel).unwrap())
    });
}

fn bench_crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = |r, k| Array2::from_shape_simple_fn((r, k), || rng.gen_range(-1.0..1.0));
    let e = m(30, 9);
    let crf = CrfParams {
        transitions: m(9, 9),
        start: m(1, 9),
        end: m(1, 9),
    };
    c.bench_function("crf log Z 30x9", |bn| {
        bn.iter(|| crf_forward_log_z(black_box(&e), &crf).unwrap())
    });
    c.bench_function("crf viterbi 30x9", |bn| {
        bn.iter(|| crf_viterbi(black_box(&e), &crf).unwrap())
    });
}

fn bench_mix(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let clean = AudioClip::new((0..48_000).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000).unwrap();
    let noise = AudioClip::new((0..20_000).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000).unwrap();
    c.bench_function("mix 3 s at 10 dB", |bn| {
        bn.iter(|| mix_at_snr(&clean, &noise, 10.0, 123).unwrap())
    });
}

fn bench_model(c: &mut Criterion) {
    let corpus = synthetic_corpus(4, 0, &FrontendConfig::default()).unwrap();
    let model = JointModel::for_manifest(
        ModelConfig::default(),
        corpus.asr_vocab.clone(),
        corpus.nlu_vocab.clone(),
        &corpus.manifest,
        0,
    )
    .unwrap();
    let examples = prepare_examples(&model, &corpus.manifest).unwrap();
    let words = corpus.manifest.records[0].words.clone();
    c.bench_function("tokenize utterance", |bn| {
        bn.iter(|| model.nlu_vocab.tokenize(black_box(&words)).unwrap())
    });
    c.bench_function("joint gradients", |bn| {
        bn.iter_batched(
            || &examples[0],
            |ex| model.gradients(ex, Objective::Slu).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let raw = model.features(corpus.manifest.records[0].samples.as_ref().unwrap());
    c.bench_function("two-step decode beam 5", |bn| {
        bn.iter(|| model.decode_two_step(&raw, 5, 32).unwrap())
    });
}

criterion_group!(benches, bench_metrics, bench_crf, bench_mix, bench_model);
criterion_main!(benches);
