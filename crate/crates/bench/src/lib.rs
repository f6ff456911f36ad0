//! Fixtures shared by the benchmarks.

use cbl_core::embed::{Embedding, ImageBank};
use cbl_core::gradcheck::random_params;
use cbl_core::rng::stream;
use cbl_core::scenegen::{phrase_universe, DatasetKind, Phrase};
use cbl_core::train::TrainExample;
use cbl_core::{ComposerParams, ModelKind};
use rand::Rng;

/// Random unit-variance vector.
pub fn vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut r = stream(seed, 0);
    (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn params(model: ModelKind, kind: DatasetKind, dim: usize) -> ComposerParams {
    random_params(model, kind, dim, 7).expect("valid model/kind")
}

/// `n` images keyed `img-<i>`, each paired with a phrase and four negatives.
pub fn batch(kind: DatasetKind, dim: usize, n: usize) -> (ImageBank, Vec<(String, Phrase, Vec<Phrase>)>) {
    let universe = phrase_universe(kind);
    let mut r = stream(11, 0);
    let mut bank = ImageBank::new();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("img-{i}");
        bank.insert(id.clone(), Embedding(vector(dim, i as u64)));
        let pick = |r: &mut rand_chacha::ChaCha8Rng| universe[r.random_range(0..universe.len())];
        let positive = pick(&mut r);
        let negatives = (0..4).map(|_| pick(&mut r)).filter(|p| *p != positive).collect();
        rows.push((id, positive, negatives));
    }
    (bank, rows)
}

/// Borrows a batch built by [`batch`] as training examples.
pub fn examples<'a>(bank: &'a ImageBank, rows: &[(String, Phrase, Vec<Phrase>)]) -> Vec<TrainExample<'a>> {
    rows.iter()
        .map(|(id, p, n)| TrainExample {
            image: &bank[id],
            positive: *p,
            negatives: n.clone(),
        })
        .collect()
}
