use std::hint::black_box;

use cbl_bench::{batch, examples, params, vector};
use cbl_core::compose::compose_with;
use cbl_core::compose::hrr::{circ_conv_direct, circ_conv_fft};
use cbl_core::scenegen::{phrase_universe, DatasetKind};
use cbl_core::train::{batch_loss, Scorer, SoftmaxForm};
use cbl_core::ModelKind;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn circular_convolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("circ_conv");
    for dim in [32usize, 64, 256, 768] {
        let (a, b) = (vector(dim, 1), vector(dim, 2));
        g.bench_with_input(BenchmarkId::new("direct", dim), &dim, |bench, _| {
            bench.iter(|| circ_conv_direct(black_box(&a), black_box(&b)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("fft", dim), &dim, |bench, _| {
            bench.iter(|| circ_conv_fft(black_box(&a), black_box(&b)).unwrap())
        });
    }
    g.finish();
}

fn composition(c: &mut Criterion) {
    let mut g = c.benchmark_group("compose");
    for kind in [DatasetKind::Single, DatasetKind::Relational] {
        let phrase = phrase_universe(kind)[0];
        for model in ModelKind::ALL {
            let p = params(model, kind, 256);
            g.bench_function(BenchmarkId::new(model.name(), kind.name()), |bench| {
                bench.iter(|| compose_with(black_box(&p), black_box(&phrase)).unwrap())
            });
        }
    }
    g.finish();
}

fn training_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("batch_loss");
    g.sample_size(20);
    let kind = DatasetKind::Relational;
    let (bank, rows) = batch(kind, 256, 32);
    let ex = examples(&bank, &rows);
    let scorer = Scorer::default();
    for model in ModelKind::ALL {
        let p = params(model, kind, 256);
        g.bench_function(model.name(), |bench| {
            bench.iter(|| batch_loss(black_box(&p), &ex, &scorer, SoftmaxForm::Standard, 1e-5).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, circular_convolution, composition, training_step);
criterion_main!(benches);
