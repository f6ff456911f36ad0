//! Central finite-difference checks of the analytic gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compose::{backward, compose_with, init_params, ComposerParams, ModelKind};
use crate::embed::Embedding;
use crate::error::Result;
use crate::linalg;
use crate::rng;
use crate::scenegen::{phrase_universe, DatasetKind, Phrase, Vocabulary};
use crate::train::{batch_loss, Scorer, SoftmaxForm, TrainExample};

pub const STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub model: ModelKind,
    pub dataset: DatasetKind,
    pub dim: usize,
    pub trials: usize,
    pub compose_error: f64,
    pub loss_error: f64,
}

/// `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Parameters with every entry drawn from `N(0, 1/d)`.
pub fn random_params(model: ModelKind, kind: DatasetKind, dim: usize, seed: u64) -> Result<ComposerParams> {
    let mut p = init_params(model, &Vocabulary::for_kind(kind), dim, seed)?;
    let n = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
    let mut r = rng::stream(seed, 1);
    p.values_mut().iter_mut().for_each(|v| *v = n.sample(&mut r));
    Ok(p)
}

fn random_vec<R: Rng>(r: &mut R, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
    (0..dim).map(|_| n.sample(r)).collect()
}

/// Central differences of `f` at every parameter.
pub fn numeric_gradient<F>(params: &ComposerParams, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&ComposerParams) -> Result<f64>,
{
    let mut p = params.clone();
    let mut out = vec![0.0; p.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let orig = p.values()[i];
        p.values_mut()[i] = orig + STEP;
        let up = f(&p)?;
        p.values_mut()[i] = orig - STEP;
        let down = f(&p)?;
        p.values_mut()[i] = orig;
        *slot = (up - down) / (2.0 * STEP);
    }
    Ok(out)
}

/// Worst relative error of `∂(u · compose(phrase)) / ∂θ` over random
/// (parameters, phrase, upstream) triples.
pub fn check_compose(model: ModelKind, kind: DatasetKind, dim: usize, trials: usize, seed: u64) -> Result<f64> {
    let universe = phrase_universe(kind);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut r = rng::stream(rng::derive(seed, "compose-check"), t as u64);
        let params = random_params(model, kind, dim, r.random())?;
        let phrase = universe[r.random_range(0..universe.len())];
        let u = random_vec(&mut r, dim);
        let analytic = backward(model, &phrase, &params, &u)?;
        let numeric = numeric_gradient(&params, |p| Ok(linalg::dot(&u, compose_with(p, &phrase)?.as_slice())))?;
        worst = worst.max(relative_error(analytic.values(), &numeric));
    }
    Ok(worst)
}

/// Worst relative error of the full batch loss gradient (softmax plus
/// weight penalty) over random batches of two examples with four negatives.
#[allow(clippy::too_many_arguments)]
pub fn check_loss(
    model: ModelKind,
    kind: DatasetKind,
    dim: usize,
    trials: usize,
    seed: u64,
    scorer: &Scorer,
    form: SoftmaxForm,
    weight_decay: f64,
) -> Result<f64> {
    let universe = phrase_universe(kind);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut r = rng::stream(rng::derive(seed, "loss-check"), t as u64);
        let params = random_params(model, kind, dim, r.random())?;
        let images: Vec<Embedding> = (0..2).map(|_| Embedding(random_vec(&mut r, dim))).collect();
        let batch: Vec<TrainExample<'_>> = images
            .iter()
            .map(|image| {
                let mut picks: Vec<Phrase> = universe.clone();
                for i in 0..5 {
                    let j = r.random_range(i..picks.len());
                    picks.swap(i, j);
                }
                TrainExample {
                    image,
                    positive: picks[0],
                    negatives: picks[1..5].to_vec(),
                }
            })
            .collect();
        let (_, analytic) = batch_loss(&params, &batch, scorer, form, weight_decay)?;
        let numeric = numeric_gradient(&params, |p| Ok(batch_loss(p, &batch, scorer, form, weight_decay)?.0))?;
        worst = worst.max(relative_error(analytic.values(), &numeric));
    }
    Ok(worst)
}

/// Runs both checks for one model with the default scorer.
pub fn gradcheck(model: ModelKind, kind: DatasetKind, dim: usize, trials: usize, seed: u64) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        model,
        dataset: kind,
        dim,
        trials,
        compose_error: check_compose(model, kind, dim, trials, seed)?,
        loss_error: check_loss(model, kind, dim, trials, seed, &Scorer::default(), SoftmaxForm::Standard, 1e-2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 2.0], &[1.0, 2.2]) - 0.2 / 2.2).abs() < 1e-12);
    }

    #[test]
    fn small_gradcheck_passes_for_every_model() {
        for model in ModelKind::ALL {
            for kind in [DatasetKind::Single, DatasetKind::Relational] {
                let rep = gradcheck(model, kind, 8, 3, 11).unwrap();
                assert!(rep.compose_error < 1e-5, "{model} {kind:?}: {}", rep.compose_error);
                assert!(rep.loss_error < 1e-5, "{model} {kind:?}: {}", rep.loss_error);
            }
        }
    }
}
