//! Grounded-composition lab: synthetic scene datasets, frozen image
//! encoders, five compositional phrase models, contrastive training and
//! candidate-ranking evaluation.

/// Serializes a type through its `Display` / `FromStr` pair.
#[macro_export]
#[doc(hidden)]
macro_rules! serde_via_str {
    ($t:ty) => {
        impl serde::Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> serde::Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

pub mod compose;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod scenegen;
pub mod train;

pub use compose::{compose, init_params, param_count, ComposerParams, Gradients, ModelKind, ParamKey};
pub use embed::{Embedding, EncoderKind, FrozenEncoder, ImageBank};
pub use error::{Error, Result};
pub use eval::{CandidateScores, ErrorTaxonomy, Prediction, SplitEval, TiePolicy};
pub use experiment::{run_experiment, ExperimentConfig};
pub use scenegen::{
    build_dataset, DatasetKind, DatasetManifest, Example, Phrase, Scene, SceneObject, Split, SplitCounts,
    Vocabulary,
};
pub use train::{RunSummary, Scorer, TrainConfig};
