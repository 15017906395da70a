use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentimark::evaluation::spearman;
use sentimark::objectives::{sentence_objective, HyperParams, LossSelection, QuadEmbeddings};
use sentimark::{Encoder, EncoderConfig};

fn encoder_passes(c: &mut Criterion) {
    let enc = Encoder::new(EncoderConfig::desk(512)).unwrap();
    let ids: Vec<usize> = (0..24).map(|i| 4 + (i * 37) % 500).collect();
    c.bench_function("desk_forward_24_tokens", |b| b.iter(|| enc.forward(&ids).unwrap()));
    c.bench_function("desk_forward_backward_24_tokens", |b| {
        b.iter_batched(
            || enc.params().zeros_like(),
            |mut g| {
                let t = enc.forward(&ids).unwrap();
                let dh = Array2::ones(t.hidden.raw_dim());
                enc.backward(&t, &dh, &mut g);
                g
            },
            BatchSize::LargeInput,
        )
    });
}

fn losses(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut block = || Array2::from_shape_fn((64, 128), |_| rng.random_range(-1.0..1.0));
    let emb = QuadEmbeddings {
        p: block(),
        p_plus: block(),
        n: block(),
        n_plus: block(),
    };
    let hp = HyperParams::default();
    let sel = LossSelection::default();
    c.bench_function("sentence_objective_batch64_dim128", |b| b.iter(|| sentence_objective(&emb, &hp, &sel).unwrap()));
}

fn rank_correlation(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let ys: Vec<f64> = (0..10_000).map(|_| f64::from(rng.random_range(0..2u8))).collect();
    c.bench_function("spearman_10k_binary_labels", |b| b.iter(|| spearman(&xs, &ys).unwrap()));
}

criterion_group!(benches, encoder_passes, losses, rank_correlation);
criterion_main!(benches);
