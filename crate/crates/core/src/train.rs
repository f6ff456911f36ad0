//! Contrastive training of composition parameters against frozen image
//! embeddings, plus multi-seed runs with validation checkpoint selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{backward_into, compose_with, init_params, ComposerParams, Gradients, ModelKind};
use crate::embed::{normalize, Embedding, ImageBank};
use crate::error::{Error, Result};
use crate::eval::{self, evaluate_split, mean_stderr, score_examples, ErrorTaxonomy, TiePolicy};
use crate::linalg;
use crate::rng;
use crate::scenegen::{relation_holds, DatasetKind, DatasetManifest, Example, Phrase, Split, Vocabulary};

pub const DEFAULT_LEARNING_RATE: f64 = 5e-4;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-5;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EPOCHS: usize = 20;
pub const DEFAULT_SEEDS: usize = 5;
pub const DEFAULT_LOGIT_SCALE: f64 = 10.0;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Which training classes serve as negatives for an example. Classes that
/// truly describe the example's scene are never negatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Negatives {
    #[default]
    All,
    /// `n` negatives drawn afresh every epoch.
    Sampled(usize),
}

impl fmt::Display for Negatives {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Negatives::All => f.write_str("all"),
            Negatives::Sampled(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Negatives {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Negatives::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Negatives::Sampled(n)),
            _ => Err(Error::Config(format!("negatives must be `all` or a positive count, got `{s}`"))),
        }
    }
}

crate::serde_via_str!(Negatives);

/// Loss form. `Standard` is softmax cross-entropy over the positive and its
/// negatives; `Printed` evaluates `-log(exp(l_pos) / exp(l_pos + Σ l_neg))`
/// literally, which collapses to `Σ l_neg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SoftmaxForm {
    #[default]
    Standard,
    Printed,
}

impl fmt::Display for SoftmaxForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SoftmaxForm::Standard => "standard",
            SoftmaxForm::Printed => "printed",
        })
    }
}

impl FromStr for SoftmaxForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(SoftmaxForm::Standard),
            "printed" => Ok(SoftmaxForm::Printed),
            _ => Err(Error::Config(format!("unknown softmax form `{s}`"))),
        }
    }
}

crate::serde_via_str!(SoftmaxForm);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives: Negatives,
    pub seeds: usize,
    /// Cosine scores scaled by `logit_scale`; raw dot products otherwise.
    pub normalize_scores: bool,
    pub logit_scale: f64,
    pub softmax: SoftmaxForm,
    pub tie_policy: TiePolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            negatives: Negatives::All,
            seeds: DEFAULT_SEEDS,
            normalize_scores: true,
            logit_scale: DEFAULT_LOGIT_SCALE,
            softmax: SoftmaxForm::Standard,
            tie_policy: TiePolicy::LowestIndex,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.epochs == 0 {
            return bad("epoch count must be positive");
        }
        if self.seeds == 0 {
            return bad("seed count must be positive");
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return bad("logit scale must be positive");
        }
        Ok(())
    }

    pub fn scorer(&self) -> Scorer {
        Scorer {
            normalize: self.normalize_scores,
            logit_scale: self.logit_scale,
        }
    }
}

/// Image-phrase compatibility: `logit_scale · cos(x, t)` when normalizing,
/// `x · t` otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scorer {
    pub normalize: bool,
    pub logit_scale: f64,
}

impl Default for Scorer {
    fn default() -> Self {
        TrainConfig::default().scorer()
    }
}

impl Scorer {
    pub fn prepare_image(&self, x: &Embedding) -> Result<Embedding> {
        if self.normalize {
            normalize(x)
        } else {
            Ok(x.clone())
        }
    }

    /// Pre-normalized and pre-scaled phrase, for repeated dot products.
    pub fn prepare_phrase(&self, t: &Embedding) -> Result<Embedding> {
        if self.normalize {
            let mut v = normalize(t)?;
            v.0.iter_mut().for_each(|c| *c *= self.logit_scale);
            Ok(v)
        } else {
            Ok(t.clone())
        }
    }

    /// Score of a prepared image against a prepared phrase.
    pub fn score_prepared(&self, image: &Embedding, phrase: &Embedding) -> f64 {
        linalg::dot(image.as_slice(), phrase.as_slice())
    }

    pub fn score(&self, image: &Embedding, phrase: &Embedding) -> Result<f64> {
        if image.dim() != phrase.dim() {
            return Err(Error::Domain(format!(
                "image dimension {} vs phrase dimension {}",
                image.dim(),
                phrase.dim()
            )));
        }
        Ok(self.score_prepared(&self.prepare_image(image)?, &self.prepare_phrase(phrase)?))
    }

    /// Score and its gradient with respect to the raw phrase vector `t`,
    /// given a prepared image.
    fn score_grad(&self, image: &[f64], t: &[f64]) -> Result<(f64, Vec<f64>)> {
        if !self.normalize {
            return Ok((linalg::dot(image, t), image.to_vec()));
        }
        let n = linalg::norm(t);
        if n == 0.0 {
            return Err(Error::Domain("zero phrase embedding under cosine scoring".into()));
        }
        let cos = linalg::dot(image, t) / n;
        let k = self.logit_scale / n;
        let g = image.iter().zip(t).map(|(x, ti)| k * (x - cos * ti / n)).collect();
        Ok((self.logit_scale * cos, g))
    }
}

/// One training example: an image, its true phrase and the negatives it is
/// contrasted with.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample<'a> {
    pub image: &'a Embedding,
    pub positive: Phrase,
    pub negatives: Vec<Phrase>,
}

/// Loss of one example given its candidate scores (positive first), and
/// `∂loss / ∂score`.
fn example_loss(scores: &[f64], form: SoftmaxForm) -> (f64, Vec<f64>) {
    match form {
        SoftmaxForm::Standard => {
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            let loss = m + z.ln() - scores[0];
            let mut g: Vec<f64> = exps.iter().map(|e| e / z).collect();
            g[0] -= 1.0;
            (loss, g)
        }
        SoftmaxForm::Printed => {
            let loss = scores[1..].iter().sum();
            let mut g = vec![1.0; scores.len()];
            g[0] = 0.0;
            (loss, g)
        }
    }
}

/// Loss of a single example, without the weight penalty.
pub fn loss_example(params: &ComposerParams, ex: &TrainExample<'_>, scorer: &Scorer, form: SoftmaxForm) -> Result<f64> {
    let image = scorer.prepare_image(ex.image)?;
    let scores = std::iter::once(&ex.positive)
        .chain(&ex.negatives)
        .map(|p| Ok(scorer.score_grad(image.as_slice(), compose_with(params, p)?.as_slice())?.0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(example_loss(&scores, form).0)
}

/// Mean loss over a batch plus `λ Σ ‖θ‖²` over every parameter array the
/// batch touches, with the matching gradient.
///
/// Each distinct phrase is composed once and back-propagated once with its
/// accumulated upstream gradient.
pub fn batch_loss(
    params: &ComposerParams,
    batch: &[TrainExample<'_>],
    scorer: &Scorer,
    form: SoftmaxForm,
    weight_decay: f64,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(params);
    let loss = batch_loss_into(params, batch, scorer, form, weight_decay, &mut grads)?;
    Ok((loss, grads))
}

/// [`batch_loss`] writing into a reused gradient buffer.
fn batch_loss_into(
    params: &ComposerParams,
    batch: &[TrainExample<'_>],
    scorer: &Scorer,
    form: SoftmaxForm,
    weight_decay: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    grads.reset(params);
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut index: BTreeMap<Phrase, usize> = BTreeMap::new();
    let mut phrases = Vec::new();
    for ex in batch {
        for p in std::iter::once(&ex.positive).chain(&ex.negatives) {
            index.entry(*p).or_insert_with(|| {
                phrases.push(*p);
                phrases.len() - 1
            });
        }
    }
    let composed = phrases
        .iter()
        .map(|p| compose_with(params, p))
        .collect::<Result<Vec<_>>>()?;

    let d = params.dim();
    let scale = 1.0 / batch.len() as f64;
    let mut upstream = vec![vec![0.0; d]; phrases.len()];
    let mut total = 0.0;
    for ex in batch {
        let image = scorer.prepare_image(ex.image)?;
        if image.dim() != d {
            return Err(Error::Domain(format!("image dimension {} vs model dimension {d}", image.dim())));
        }
        let slots: Vec<usize> = std::iter::once(&ex.positive)
            .chain(&ex.negatives)
            .map(|p| index[p])
            .collect();
        let (scores, grads): (Vec<f64>, Vec<Vec<f64>>) = slots
            .iter()
            .map(|&j| scorer.score_grad(image.as_slice(), composed[j].as_slice()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let (loss, dl) = example_loss(&scores, form);
        total += scale * loss;
        for ((&j, g), w) in slots.iter().zip(&grads).zip(&dl) {
            if *w != 0.0 {
                linalg::axpy(&mut upstream[j], scale * w, g);
            }
        }
    }

    for (p, u) in phrases.iter().zip(&upstream) {
        backward_into(params, p, u, grads)?;
    }
    if weight_decay > 0.0 {
        let touched: Vec<usize> = grads
            .touched_mask()
            .iter()
            .enumerate()
            .filter(|(_, t)| **t)
            .map(|(i, _)| i)
            .collect();
        for i in touched {
            let range = params.slot_range(i);
            let theta = &params.values()[range.clone()];
            total += weight_decay * linalg::dot(theta, theta);
            linalg::axpy(&mut grads.values_mut()[range], 2.0 * weight_decay, theta);
        }
    }
    Ok(total)
}

/// Adam over a flat parameter buffer.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Adam {
        Adam {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-indexed.
    pub epoch: usize,
    pub train_loss: f64,
    /// Fractions in `[0, 1]`.
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy,validation_accuracy\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.validation_accuracy
            ));
        }
        out
    }
}

/// Epoch (1-indexed) with the best validation accuracy; ties go to the
/// earliest.
pub fn select_checkpoint(history: &TrainHistory) -> Result<usize> {
    let mut best: Option<&EpochRecord> = None;
    for r in &history.records {
        if best.is_none_or(|b| r.validation_accuracy > b.validation_accuracy) {
            best = Some(r);
        }
    }
    best.map(|r| r.epoch)
        .ok_or_else(|| Error::Contract("empty training history".into()))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_params: ComposerParams,
    /// Parameters at the selected epoch.
    pub best_params: ComposerParams,
    pub selected_epoch: usize,
    pub history: TrainHistory,
}

struct Prepared<'a> {
    example: &'a Example,
    image: &'a Embedding,
    pool: Vec<Phrase>,
}

fn image_of<'a>(images: &'a ImageBank, ex: &Example) -> Result<&'a Embedding> {
    images
        .get(&ex.id)
        .ok_or_else(|| Error::Contract(format!("no image embedding for `{}`", ex.id)))
}

fn accuracy(params: &ComposerParams, examples: &[Example], images: &ImageBank, cfg: &TrainConfig) -> Result<f64> {
    let scored = score_examples(params, examples, images, &cfg.scorer())?;
    Ok(evaluate_split(&scored, cfg.tie_policy)?.accuracy)
}

/// Trains one model with one seed, evaluating after every epoch and keeping
/// the parameters of the epoch chosen by [`select_checkpoint`].
pub fn train_model(
    model: ModelKind,
    manifest: &DatasetManifest,
    images: &ImageBank,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train = &manifest.split(Split::Train);
    if train.examples.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let vocab = Vocabulary::for_kind(manifest.kind);
    let classes: Vec<Phrase> = train.classes.clone();
    if classes.iter().any(|p| p.words().iter().any(|w| !vocab.words().contains(w))) {
        return Err(Error::Config("training classes fall outside the model vocabulary".into()));
    }
    let dim = image_of(images, &train.examples[0])?.dim();
    let mut params = init_params(model, &vocab, dim, rng::derive(seed, "init"))?;

    let prepared = train
        .examples
        .iter()
        .map(|ex| {
            Ok(Prepared {
                example: ex,
                image: image_of(images, ex)?,
                pool: classes
                    .iter()
                    .filter(|c| **c != ex.true_phrase && !relation_holds(&ex.scene, c))
                    .copied()
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let validation = &manifest.split(Split::Validation).examples;
    let scorer = cfg.scorer();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ComposerParams)> = None;
    let mut grads = Gradients::zeros_like(&params);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let epoch_seed = rng::derive(seed, "epochs");

    for epoch in 1..=cfg.epochs {
        let mut r = rng::stream(epoch_seed, epoch as u64);
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainExample<'_>> = chunk
                .iter()
                .map(|&i| {
                    let p = &prepared[i];
                    let negatives = match cfg.negatives {
                        Negatives::All => p.pool.clone(),
                        Negatives::Sampled(n) => p.pool.choose_multiple(&mut r, n).copied().collect(),
                    };
                    TrainExample {
                        image: p.image,
                        positive: p.example.true_phrase,
                        negatives,
                    }
                })
                .collect();
            let loss = batch_loss_into(&params, &batch, &scorer, cfg.softmax, cfg.weight_decay, &mut grads)?;
            loss_sum += loss * chunk.len() as f64;
            adam.step(params.values_mut(), grads.values());
        }
        if !params.all_finite() {
            return Err(Error::Domain(format!("parameters diverged in epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / prepared.len() as f64,
            train_accuracy: accuracy(&params, &train.examples, images, cfg)?,
            validation_accuracy: accuracy(&params, validation, images, cfg)?,
        };
        if best.as_ref().is_none_or(|b| record.validation_accuracy > b.0) {
            best = Some((record.validation_accuracy, epoch, params.clone()));
        }
        history.records.push(record);
    }
    let (_, selected_epoch, best_params) = best.expect("at least one epoch");
    debug_assert_eq!(select_checkpoint(&history).ok(), Some(selected_epoch));
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        selected_epoch,
        history,
    })
}

/// Per-split values, percentages unless noted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitValues {
    pub train: f64,
    pub validation: f64,
    pub generalization: f64,
}

impl SplitValues {
    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Generalization => self.generalization,
        }
    }

    fn set(&mut self, split: Split, v: f64) {
        match split {
            Split::Train => self.train = v,
            Split::Validation => self.validation = v,
            Split::Generalization => self.generalization = v,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let (mean, stderr) = mean_stderr(values);
        Stat { mean, stderr }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub train: Stat,
    pub validation: Stat,
    pub generalization: Stat,
}

impl SplitStats {
    pub fn get(&self, split: Split) -> Stat {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Generalization => self.generalization,
        }
    }

    fn of(values: &[SplitValues]) -> SplitStats {
        let col = |s: Split| Stat::of(&values.iter().map(|v| v.get(s)).collect::<Vec<_>>());
        SplitStats {
            train: col(Split::Train),
            validation: col(Split::Validation),
            generalization: col(Split::Generalization),
        }
    }
}

/// Calibrated-stacking outcome for one seed (percentages).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub gamma: f64,
    pub harmonic_mean: f64,
    pub seen_accuracy: f64,
    pub unseen_accuracy: f64,
    pub generalization_before: f64,
    pub generalization_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    /// 1-based seed index.
    pub seed: usize,
    pub selected_epoch: usize,
    pub history: TrainHistory,
    /// Accuracy under the configured tie policy.
    pub accuracy: SplitValues,
    pub adversarial_accuracy: SplitValues,
    /// Fractions of examples whose top score was tied.
    pub tie_rate: SplitValues,
    /// Errors on the generalization split.
    pub taxonomy: ErrorTaxonomy,
    pub calibration: Option<CalibrationOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: ModelKind,
    pub dataset: DatasetKind,
    pub tie_policy: TiePolicy,
    pub accuracy: SplitStats,
    pub adversarial_accuracy: SplitStats,
    pub seeds: Vec<SeedResult>,
}

impl RunSummary {
    /// Mean and standard error of each taxonomy class, over the seeds that
    /// made at least one error. `None` when no seed erred.
    pub fn taxonomy_stats(&self) -> Option<Vec<Stat>> {
        let per_seed: Vec<Vec<f64>> = self.seeds.iter().filter_map(|s| s.taxonomy.percentages()).collect();
        let width = per_seed.first()?.len();
        Some(
            (0..width)
                .map(|i| Stat::of(&per_seed.iter().map(|v| v[i]).collect::<Vec<_>>()))
                .collect(),
        )
    }

    pub fn calibration_stats(&self) -> Option<(Stat, Stat, Stat)> {
        let cal: Vec<&CalibrationOutcome> = self.seeds.iter().filter_map(|s| s.calibration.as_ref()).collect();
        if cal.is_empty() {
            return None;
        }
        let col = |f: fn(&CalibrationOutcome) -> f64| Stat::of(&cal.iter().map(|c| f(c)).collect::<Vec<_>>());
        Some((
            col(|c| c.gamma),
            col(|c| c.generalization_before),
            col(|c| c.generalization_after),
        ))
    }
}

/// A finished multi-seed run with the selected parameters of every seed.
#[derive(Clone, Debug)]
pub struct SeedsOutcome {
    pub summary: RunSummary,
    pub checkpoints: Vec<ComposerParams>,
}

/// Training seed for 1-based seed index `k` under `base_seed`.
pub fn seed_for(base_seed: u64, k: usize) -> u64 {
    rng::derive(base_seed, &format!("seed-{k}"))
}

fn evaluate_seed(
    params: &ComposerParams,
    manifest: &DatasetManifest,
    images: &ImageBank,
    cfg: &TrainConfig,
    seen_holdout: Option<&[Example]>,
) -> Result<(SplitValues, SplitValues, SplitValues, ErrorTaxonomy, Option<CalibrationOutcome>)> {
    let scorer = cfg.scorer();
    let mut acc = SplitValues::default();
    let mut adv = SplitValues::default();
    let mut ties = SplitValues::default();
    let mut taxonomy = None;
    let mut unseen_val = Vec::new();
    let mut gen_preds = Vec::new();
    for split in Split::ALL {
        let scored = score_examples(params, &manifest.split(split).examples, images, &scorer)?;
        let main = evaluate_split(&scored, cfg.tie_policy)?;
        let adversarial = evaluate_split(&scored, TiePolicy::Adversarial)?;
        acc.set(split, 100.0 * main.accuracy);
        adv.set(split, 100.0 * adversarial.accuracy);
        ties.set(split, main.tie_rate());
        match split {
            Split::Validation => unseen_val = main.predictions,
            Split::Generalization => {
                taxonomy = Some(eval::taxonomy(manifest.kind, &main.predictions)?);
                gen_preds = main.predictions;
            }
            Split::Train => {}
        }
    }
    let calibration = match seen_holdout {
        Some(holdout) => {
            let seen_classes: BTreeSet<Phrase> = manifest.split(Split::Train).classes.iter().copied().collect();
            let seen = evaluate_split(&score_examples(params, holdout, images, &scorer)?, cfg.tie_policy)?;
            let result = eval::calibrate(&seen.predictions, &unseen_val, &seen_classes)?;
            let after = eval::apply_calibration(&gen_preds, result.gamma, &seen_classes);
            let after_acc = after.iter().filter(|p| p.correct()).count() as f64 / after.len().max(1) as f64;
            Some(CalibrationOutcome {
                gamma: result.gamma,
                harmonic_mean: 100.0 * result.harmonic_mean,
                seen_accuracy: 100.0 * result.seen_accuracy,
                unseen_accuracy: 100.0 * result.unseen_accuracy,
                generalization_before: acc.generalization,
                generalization_after: 100.0 * after_acc,
            })
        }
        None => None,
    };
    Ok((acc, adv, ties, taxonomy.expect("generalization split evaluated"), calibration))
}

/// Trains `cfg.seeds` independent seeds in parallel, evaluates each at its
/// selected epoch and aggregates mean and standard error.
///
/// With `seen_holdout`, each seed is also calibrated: the holdout (seen
/// classes) and the validation split (unseen classes) pick the coefficient
/// that is then applied to the generalization split.
pub fn run_seeds(
    model: ModelKind,
    manifest: &DatasetManifest,
    images: &ImageBank,
    cfg: &TrainConfig,
    base_seed: u64,
    seen_holdout: Option<&[Example]>,
) -> Result<SeedsOutcome> {
    cfg.validate()?;
    let runs = (1..=cfg.seeds)
        .into_par_iter()
        .map(|k| {
            let out = train_model(model, manifest, images, cfg, seed_for(base_seed, k))?;
            let (accuracy, adversarial_accuracy, tie_rate, taxonomy, calibration) =
                evaluate_seed(&out.best_params, manifest, images, cfg, seen_holdout)?;
            Ok((
                SeedResult {
                    seed: k,
                    selected_epoch: out.selected_epoch,
                    history: out.history,
                    accuracy,
                    adversarial_accuracy,
                    tie_rate,
                    taxonomy,
                    calibration,
                },
                out.best_params,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (seeds, checkpoints): (Vec<SeedResult>, Vec<ComposerParams>) = runs.into_iter().unzip();
    let acc: Vec<SplitValues> = seeds.iter().map(|s| s.accuracy).collect();
    let adv: Vec<SplitValues> = seeds.iter().map(|s| s.adversarial_accuracy).collect();
    Ok(SeedsOutcome {
        summary: RunSummary {
            model,
            dataset: manifest.kind,
            tie_policy: cfg.tie_policy,
            accuracy: SplitStats::of(&acc),
            adversarial_accuracy: SplitStats::of(&adv),
            seeds,
        },
        checkpoints,
    })
}

/// Moves a random `fraction` of the training examples into a seen-class
/// holdout. Classes stay as they were.
pub fn split_seen_holdout(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<(DatasetManifest, Vec<Example>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction must lie in (0, 1), got {fraction}")));
    }
    let train = manifest.split(Split::Train);
    let n = train.examples.len();
    let k = ((n as f64) * fraction).round() as usize;
    if k == 0 || k == n {
        return Err(Error::Config("training split too small for a seen-class holdout".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(rng::derive(seed, "holdout"), 0));
    let held: BTreeSet<usize> = idx[..k].iter().copied().collect();
    let mut reduced = manifest.clone();
    let mut holdout = Vec::with_capacity(k);
    let train_mut = reduced
        .splits
        .iter_mut()
        .find(|s| s.split == Split::Train)
        .expect("manifest has a training split");
    train_mut.examples = train
        .examples
        .iter()
        .enumerate()
        .filter_map(|(i, ex)| {
            if held.contains(&i) {
                holdout.push(ex.clone());
                None
            } else {
                Some(ex.clone())
            }
        })
        .collect();
    Ok((reduced, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::FrozenEncoder;
    use crate::embed::EncoderKind;
    use crate::scenegen::{build_dataset, SplitCounts};

    fn tiny(kind: DatasetKind) -> (DatasetManifest, ImageBank) {
        let m = build_dataset(kind, SplitCounts::per_class(kind, 4), 3).unwrap();
        let enc = FrozenEncoder::build(&EncoderKind::Structured, 32, 0.05, 16, 1).unwrap();
        let bank = enc.embed_manifest(&m, 2).unwrap();
        (m, bank)
    }

    #[test]
    fn cross_entropy_of_uniform_scores() {
        let (l, g) = example_loss(&[1.0; 5], SoftmaxForm::Standard);
        assert!((l - 5f64.ln()).abs() < 1e-12);
        assert!((g[0] + 0.8).abs() < 1e-12);
        assert!(g[1..].iter().all(|x| (x - 0.2).abs() < 1e-12));
    }

    #[test]
    fn printed_form_reduces_to_negative_sum() {
        let scores = [2.0, 0.5, -1.0, 0.25];
        let (l, _) = example_loss(&scores, SoftmaxForm::Printed);
        let literal = -((2.0f64).exp() / (2.0 + 0.5 - 1.0 + 0.25f64).exp()).ln();
        assert!((l - literal).abs() < 1e-12);
    }

    #[test]
    fn scorer_is_cosine_times_scale() {
        let s = Scorer::default();
        let x = Embedding(vec![3.0, 0.0]);
        let t = Embedding(vec![1.0, 1.0]);
        assert!((s.score(&x, &t).unwrap() - 10.0 / 2f64.sqrt()).abs() < 1e-12);
        let raw = Scorer {
            normalize: false,
            logit_scale: 10.0,
        };
        assert_eq!(raw.score(&x, &t).unwrap(), 3.0);
        assert!(s.score(&x, &Embedding(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn checkpoint_selection_prefers_earliest_best() {
        let h = TrainHistory {
            records: [0.2, 0.5, 0.5, 0.1]
                .iter()
                .enumerate()
                .map(|(i, v)| EpochRecord {
                    epoch: i + 1,
                    train_loss: 0.0,
                    train_accuracy: 0.0,
                    validation_accuracy: *v,
                })
                .collect(),
        };
        assert_eq!(select_checkpoint(&h).unwrap(), 2);
        assert!(select_checkpoint(&TrainHistory::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().unwrap_err().is_config());
        assert!("0".parse::<Negatives>().is_err());
        assert_eq!("8".parse::<Negatives>().unwrap(), Negatives::Sampled(8));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0, -1.0];
        let mut a = Adam::new(2, 0.1);
        a.step(&mut p, &[0.5, -2.0]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let (m, bank) = tiny(DatasetKind::Single);
        let cfg = TrainConfig {
            epochs: 3,
            seeds: 1,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let a = train_model(ModelKind::Add, &m, &bank, &cfg, 7).unwrap();
        let b = train_model(ModelKind::Add, &m, &bank, &cfg, 7).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_params, b.best_params);
        let h = &a.history.records;
        assert!(h.last().unwrap().train_loss < h[0].train_loss);
    }

    #[test]
    fn holdout_partitions_training_examples() {
        let (m, _) = tiny(DatasetKind::Single);
        let n = m.split(Split::Train).examples.len();
        let (reduced, held) = split_seen_holdout(&m, 0.1, 1).unwrap();
        assert_eq!(reduced.split(Split::Train).examples.len() + held.len(), n);
        assert_eq!(held.len(), (n as f64 * 0.1).round() as usize);
    }
}
