//! Top-1 accuracy over five-candidate sets, error taxonomies, and
//! calibrated stacking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{compose_with, ComposerParams};
use crate::embed::{Embedding, ImageBank};
use crate::error::{Error, Result};
use crate::rng;
use crate::scenegen::{DatasetKind, Example, Phrase, Shape, DISTRACTORS};
use crate::train::Scorer;

/// Scores within this distance of the maximum count as tied.
pub const TIE_EPS: f64 = 1e-9;
pub const CANDIDATES: usize = DISTRACTORS + 1;
/// Points in the calibration grid, `-l_max ..= l_max` in steps of `l_max / 100`.
pub const CALIBRATION_GRID: usize = 201;

/// How to break exact score ties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// First tied candidate in list order (the true label is listed first).
    #[default]
    LowestIndex,
    /// A tied distractor always wins over the true label.
    Adversarial,
    /// Uniform among tied candidates, seeded per example id.
    Random(u64),
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TiePolicy::LowestIndex => f.write_str("lowest_index"),
            TiePolicy::Adversarial => f.write_str("adversarial"),
            TiePolicy::Random(s) => write!(f, "random:{s}"),
        }
    }
}

impl FromStr for TiePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest_index" | "lowest-index" => Ok(TiePolicy::LowestIndex),
            "adversarial" => Ok(TiePolicy::Adversarial),
            "random" => Ok(TiePolicy::Random(0)),
            _ => s
                .strip_prefix("random:")
                .and_then(|v| v.parse().ok())
                .map(TiePolicy::Random)
                .ok_or_else(|| Error::Config(format!("unknown tie policy `{s}`"))),
        }
    }
}

crate::serde_via_str!(TiePolicy);

/// Candidate scores for one example, true label at `true_index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub id: String,
    pub candidates: Vec<Phrase>,
    pub scores: Vec<f64>,
    pub true_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub candidates: Vec<Phrase>,
    pub scores: Vec<f64>,
    pub true_index: usize,
    pub predicted: usize,
    /// Top score reached by at least two candidates.
    pub tie: bool,
    pub policy: TiePolicy,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.predicted == self.true_index
    }

    pub fn true_phrase(&self) -> Phrase {
        self.candidates[self.true_index]
    }

    pub fn predicted_phrase(&self) -> Phrase {
        self.candidates[self.predicted]
    }

    fn as_scores(&self) -> CandidateScores {
        CandidateScores {
            id: self.id.clone(),
            candidates: self.candidates.clone(),
            scores: self.scores.clone(),
            true_index: self.true_index,
        }
    }
}

/// Picks the winning candidate and reports whether the top score was tied.
pub fn resolve(scores: &[f64], true_index: usize, policy: TiePolicy, id: &str) -> (usize, bool) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= max - TIE_EPS).collect();
    let tie = tied.len() >= 2;
    let pick = match policy {
        TiePolicy::LowestIndex => tied[0],
        TiePolicy::Adversarial => tied.iter().copied().find(|&i| i != true_index).unwrap_or(tied[0]),
        TiePolicy::Random(seed) => {
            if tie {
                let mut r = rng::stream(seed, rng::fnv1a(id.as_bytes()));
                tied[r.random_range(0..tied.len())]
            } else {
                tied[0]
            }
        }
    };
    (pick, tie)
}

fn predict(s: &CandidateScores, policy: TiePolicy) -> Result<Prediction> {
    if s.candidates.len() != CANDIDATES || s.scores.len() != CANDIDATES {
        return Err(Error::Contract(format!(
            "example `{}` has {} candidates, expected {CANDIDATES}",
            s.id,
            s.candidates.len()
        )));
    }
    if s.true_index >= CANDIDATES {
        return Err(Error::Contract(format!("example `{}` has no true candidate", s.id)));
    }
    let (predicted, tie) = resolve(&s.scores, s.true_index, policy, &s.id);
    Ok(Prediction {
        id: s.id.clone(),
        candidates: s.candidates.clone(),
        scores: s.scores.clone(),
        true_index: s.true_index,
        predicted,
        tie,
        policy,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    /// Fraction in `[0, 1]`; zero for an empty split.
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

impl SplitEval {
    pub fn tie_rate(&self) -> f64 {
        fraction(self.predictions.iter().filter(|p| p.tie).count(), self.predictions.len())
    }
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn accuracy_of(preds: &[Prediction]) -> f64 {
    fraction(preds.iter().filter(|p| p.correct()).count(), preds.len())
}

/// Resolves every example's argmax under `policy` and reports accuracy.
pub fn evaluate_split(scored: &[CandidateScores], policy: TiePolicy) -> Result<SplitEval> {
    let predictions = scored
        .iter()
        .map(|s| predict(s, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitEval {
        accuracy: accuracy_of(&predictions),
        predictions,
    })
}

/// Scores each example's five candidates. Phrase embeddings are composed
/// once per distinct phrase.
pub fn score_examples(
    params: &ComposerParams,
    examples: &[Example],
    images: &ImageBank,
    scorer: &Scorer,
) -> Result<Vec<CandidateScores>> {
    let phrases: BTreeSet<Phrase> = examples.iter().flat_map(|e| e.candidates()).collect();
    let composed = phrases
        .into_iter()
        .map(|p| Ok((p, scorer.prepare_phrase(&compose_with(params, &p)?)?)))
        .collect::<Result<BTreeMap<Phrase, Embedding>>>()?;
    examples
        .par_iter()
        .map(|ex| {
            let image = images
                .get(&ex.id)
                .ok_or_else(|| Error::Contract(format!("no image embedding for `{}`", ex.id)))?;
            let image = scorer.prepare_image(image)?;
            let candidates = ex.candidates().to_vec();
            let scores = candidates
                .iter()
                .map(|p| scorer.score_prepared(&image, &composed[p]))
                .collect();
            Ok(CandidateScores {
                id: ex.id.clone(),
                candidates,
                scores,
                true_index: 0,
            })
        })
        .collect()
}

/// Error classes for adjective-noun predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AdjNounError {
    /// Wrong adjective, right noun.
    Adj,
    /// Right adjective, wrong noun.
    Noun,
    Both,
}

/// Slot of a wrong relational prediction relative to the true `aRb`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationalError {
    /// Arguments swapped.
    BRA,
    /// Opposite relation.
    ASB,
    /// Object replaced by the third shape.
    ARC,
    /// Subject replaced by the third shape.
    CRB,
}

pub fn classify_error_adjnoun(predicted: &Phrase, truth: &Phrase) -> Result<AdjNounError> {
    let (
        Phrase::AdjNoun {
            adjective: pa,
            noun: pn,
        },
        Phrase::AdjNoun {
            adjective: ta,
            noun: tn,
        },
    ) = (*predicted, *truth)
    else {
        return Err(Error::Contract("adjective-noun taxonomy needs adjective-noun phrases".into()));
    };
    match (pa == ta, pn == tn) {
        (true, true) => Err(Error::Contract(format!("`{predicted}` is the correct label"))),
        (false, true) => Ok(AdjNounError::Adj),
        (true, false) => Ok(AdjNounError::Noun),
        (false, false) => Ok(AdjNounError::Both),
    }
}

pub fn classify_error_relational(
    predicted: &Phrase,
    truth: &Phrase,
    candidates: &[Phrase],
) -> Result<RelationalError> {
    if !candidates.contains(predicted) {
        return Err(Error::Contract(format!("`{predicted}` is not a candidate")));
    }
    if predicted == truth {
        return Err(Error::Contract(format!("`{predicted}` is the correct label")));
    }
    let (
        Phrase::Rel {
            subject: a,
            relation: r,
            object: b,
        },
        Phrase::Rel {
            subject: ps,
            relation: pr,
            object: po,
        },
    ) = (*truth, *predicted)
    else {
        return Err(Error::Contract("relational taxonomy needs relational phrases".into()));
    };
    let c = Shape::third(a, b);
    match (ps, pr, po) {
        (s, rr, o) if s == b && rr == r && o == a => Ok(RelationalError::BRA),
        (s, rr, o) if s == a && rr == r.opposite() && o == b => Ok(RelationalError::ASB),
        (s, rr, o) if s == a && rr == r && o == c => Ok(RelationalError::ARC),
        (s, rr, o) if s == c && rr == r && o == b => Ok(RelationalError::CRB),
        _ => Err(Error::Contract(format!(
            "`{predicted}` is not a structural distractor of `{truth}`"
        ))),
    }
}

/// Error counts by class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ErrorTaxonomy {
    AdjNoun { adj: usize, noun: usize, both: usize },
    Relational { bra: usize, asb: usize, arc: usize, crb: usize },
}

impl ErrorTaxonomy {
    pub fn counts(&self) -> Vec<usize> {
        match *self {
            ErrorTaxonomy::AdjNoun { adj, noun, both } => vec![adj, noun, both],
            ErrorTaxonomy::Relational { bra, asb, arc, crb } => vec![bra, asb, arc, crb],
        }
    }

    pub fn labels(&self) -> &'static [&'static str] {
        match self {
            ErrorTaxonomy::AdjNoun { .. } => &["Adj", "Noun", "Both"],
            ErrorTaxonomy::Relational { .. } => &["bRa", "aSb", "aRc", "cRb"],
        }
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }

    /// Percentages over errors; `None` when there are no errors.
    pub fn percentages(&self) -> Option<Vec<f64>> {
        let total = self.total();
        (total > 0).then(|| {
            self.counts()
                .iter()
                .map(|c| 100.0 * *c as f64 / total as f64)
                .collect()
        })
    }
}

/// Tallies the errors among `predictions`.
pub fn taxonomy(kind: DatasetKind, predictions: &[Prediction]) -> Result<ErrorTaxonomy> {
    let mut tax = match kind {
        DatasetKind::Single | DatasetKind::Two => ErrorTaxonomy::AdjNoun { adj: 0, noun: 0, both: 0 },
        DatasetKind::Relational => ErrorTaxonomy::Relational {
            bra: 0,
            asb: 0,
            arc: 0,
            crb: 0,
        },
    };
    for p in predictions.iter().filter(|p| !p.correct()) {
        let (pred, truth) = (p.predicted_phrase(), p.true_phrase());
        match &mut tax {
            ErrorTaxonomy::AdjNoun { adj, noun, both } => match classify_error_adjnoun(&pred, &truth)? {
                AdjNounError::Adj => *adj += 1,
                AdjNounError::Noun => *noun += 1,
                AdjNounError::Both => *both += 1,
            },
            ErrorTaxonomy::Relational { bra, asb, arc, crb } => {
                match classify_error_relational(&pred, &truth, &p.candidates)? {
                    RelationalError::BRA => *bra += 1,
                    RelationalError::ASB => *asb += 1,
                    RelationalError::ARC => *arc += 1,
                    RelationalError::CRB => *crb += 1,
                }
            }
        }
    }
    Ok(tax)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub gamma: f64,
    pub seen_accuracy: f64,
    pub unseen_accuracy: f64,
    pub harmonic_mean: f64,
    pub grid: Vec<f64>,
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Subtracts `gamma` from every seen-class candidate score and re-resolves
/// the argmax. Unseen scores are left untouched.
pub fn apply_calibration(
    predictions: &[Prediction],
    gamma: f64,
    seen_classes: &BTreeSet<Phrase>,
) -> Vec<Prediction> {
    predictions
        .iter()
        .map(|p| {
            let mut s = p.as_scores();
            for (phrase, score) in s.candidates.iter().zip(s.scores.iter_mut()) {
                if seen_classes.contains(phrase) {
                    *score -= gamma;
                }
            }
            let (predicted, tie) = resolve(&s.scores, s.true_index, p.policy, &s.id);
            Prediction {
                scores: s.scores,
                predicted,
                tie,
                ..p.clone()
            }
        })
        .collect()
}

/// The calibration grid for a largest observed score `l_max`.
pub fn calibration_grid(l_max: f64) -> Vec<f64> {
    let half = (CALIBRATION_GRID / 2) as f64;
    (0..CALIBRATION_GRID)
        .map(|i| l_max * (i as f64 - half) / half)
        .collect()
}

/// Searches the grid for the coefficient with the best harmonic mean of
/// seen and unseen accuracy. Ties go to the smallest `|γ|`, then the
/// smallest `γ`.
pub fn calibrate(
    seen: &[Prediction],
    unseen: &[Prediction],
    seen_classes: &BTreeSet<Phrase>,
) -> Result<CalibrationResult> {
    if seen.is_empty() || unseen.is_empty() {
        return Err(Error::Contract("calibration needs seen and unseen predictions".into()));
    }
    let l_max = seen
        .iter()
        .chain(unseen)
        .flat_map(|p| p.scores.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let grid = if l_max == 0.0 {
        vec![0.0; CALIBRATION_GRID]
    } else {
        calibration_grid(l_max)
    };
    let evaluated: Vec<(f64, f64, f64, f64)> = grid
        .par_iter()
        .map(|&g| {
            let s = accuracy_of(&apply_calibration(seen, g, seen_classes));
            let u = accuracy_of(&apply_calibration(unseen, g, seen_classes));
            (g, s, u, harmonic_mean(s, u))
        })
        .collect();
    let mut best = evaluated[0];
    for &cand in &evaluated[1..] {
        let better = cand.3 > best.3
            || (cand.3 == best.3
                && (cand.0.abs() < best.0.abs() || (cand.0.abs() == best.0.abs() && cand.0 < best.0)));
        if better {
            best = cand;
        }
    }
    Ok(CalibrationResult {
        gamma: best.0,
        seen_accuracy: best.1,
        unseen_accuracy: best.2,
        harmonic_mean: best.3,
        grid,
    })
}

/// Mean and standard error (sample standard deviation over `√k`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, var.sqrt() / (k as f64).sqrt())
}
