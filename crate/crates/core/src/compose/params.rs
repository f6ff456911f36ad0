use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scenegen::{DatasetKind, Vocabulary, Word};

/// Standard deviation of the noise added to identity when initializing
/// type-logical matrices.
pub const MATRIX_INIT_STD: f64 = 0.02;
pub const CHECKPOINT_VERSION: u32 = 1;

/// The five composition models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Add,
    Mult,
    Conv,
    /// Type-logical: functional words are matrices acting on noun vectors.
    TL,
    /// Role-filler: superposition of `filler ⊛ role` bindings.
    RF,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Add,
        ModelKind::Mult,
        ModelKind::Conv,
        ModelKind::TL,
        ModelKind::RF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Add => "Add",
            ModelKind::Mult => "Mult",
            ModelKind::Conv => "Conv",
            ModelKind::TL => "TL",
            ModelKind::RF => "RF",
        }
    }

    /// True for the order-insensitive models.
    pub fn is_commutative(self) -> bool {
        matches!(self, ModelKind::Add | ModelKind::Mult | ModelKind::Conv)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

crate::serde_via_str!(ModelKind);

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

/// Structural roles of the role-filler model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Adjective,
    Noun,
    Subject,
    Relation,
    Object,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Adjective => "adjective",
            Role::Noun => "noun",
            Role::Subject => "subject",
            Role::Relation => "relation",
            Role::Object => "object",
        }
    }
}

/// Identifies one learnable array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKey {
    Vector(Word),
    /// `d x d`, row-major.
    Matrix(Word),
    Role(Role),
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKey::Vector(w) => write!(f, "vector:{w}"),
            ParamKey::Matrix(w) => write!(f, "matrix:{w}"),
            ParamKey::Role(r) => write!(f, "role:{}", r.name()),
        }
    }
}

fn parse_word(s: &str) -> Result<Word> {
    if let Ok(c) = s.parse() {
        return Ok(Word::Color(c));
    }
    if let Ok(sh) = s.parse() {
        return Ok(Word::Shape(sh));
    }
    s.parse().map(Word::Relation)
}

impl FromStr for ParamKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, name) = s
            .split_once(':')
            .ok_or_else(|| Error::Vocabulary(format!("bad parameter key `{s}`")))?;
        match kind {
            "vector" => Ok(ParamKey::Vector(parse_word(name)?)),
            "matrix" => Ok(ParamKey::Matrix(parse_word(name)?)),
            "role" => [Role::Adjective, Role::Noun, Role::Subject, Role::Relation, Role::Object]
                .into_iter()
                .find(|r| r.name() == name)
                .map(ParamKey::Role)
                .ok_or_else(|| Error::Vocabulary(format!("unknown role `{name}`"))),
            _ => Err(Error::Vocabulary(format!("bad parameter key `{s}`"))),
        }
    }
}

/// The parameter arrays a model needs for a vocabulary, in storage order.
pub fn param_keys(model: ModelKind, vocab: &Vocabulary) -> Vec<ParamKey> {
    let words = vocab.words();
    let mut keys: Vec<ParamKey> = match model {
        ModelKind::Add | ModelKind::Mult | ModelKind::Conv | ModelKind::RF => {
            words.iter().map(|w| ParamKey::Vector(*w)).collect()
        }
        ModelKind::TL => words
            .iter()
            .map(|w| match w {
                Word::Shape(_) => ParamKey::Vector(*w),
                Word::Color(_) | Word::Relation(_) => ParamKey::Matrix(*w),
            })
            .collect(),
    };
    if model == ModelKind::RF {
        if !vocab.adjectives.is_empty() {
            keys.extend([ParamKey::Role(Role::Adjective), ParamKey::Role(Role::Noun)]);
        }
        if !vocab.relations.is_empty() {
            keys.extend([
                ParamKey::Role(Role::Subject),
                ParamKey::Role(Role::Relation),
                ParamKey::Role(Role::Object),
            ]);
        }
    }
    keys
}

fn key_len(key: ParamKey, dim: usize) -> usize {
    match key {
        ParamKey::Matrix(_) => dim * dim,
        ParamKey::Vector(_) | ParamKey::Role(_) => dim,
    }
}

/// Number of learnable scalars of `model` on a dataset kind at dimension `dim`.
pub fn param_count(model: ModelKind, kind: DatasetKind, dim: usize) -> u64 {
    param_keys(model, &Vocabulary::for_kind(kind))
        .into_iter()
        .map(|k| key_len(k, dim) as u64)
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    key: ParamKey,
    offset: usize,
    len: usize,
}

/// Learnable parameters of one composition model, stored as one flat
/// buffer with a key index.
#[derive(Clone, Debug, PartialEq)]
pub struct ComposerParams {
    model: ModelKind,
    dim: usize,
    vocabulary: Vocabulary,
    slots: Vec<Slot>,
    index: BTreeMap<ParamKey, usize>,
    values: Vec<f64>,
}

impl ComposerParams {
    fn layout(model: ModelKind, vocabulary: Vocabulary, dim: usize) -> Result<ComposerParams> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if vocabulary.is_empty() {
            return Err(Error::Config("empty vocabulary".into()));
        }
        let mut slots = Vec::new();
        let mut index = BTreeMap::new();
        let mut offset = 0;
        for key in param_keys(model, &vocabulary) {
            let len = key_len(key, dim);
            index.insert(key, slots.len());
            slots.push(Slot { key, offset, len });
            offset += len;
        }
        Ok(ComposerParams {
            model,
            dim,
            vocabulary,
            slots,
            index,
            values: vec![0.0; offset],
        })
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        self.slots.iter().map(|s| s.key)
    }

    /// Total learnable scalars.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn slot_index(&self, key: ParamKey) -> Result<usize> {
        self.index
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Vocabulary(format!("model {} has no parameter `{key}`", self.model)))
    }

    pub(crate) fn slot_range(&self, slot: usize) -> std::ops::Range<usize> {
        let s = &self.slots[slot];
        s.offset..s.offset + s.len
    }

    pub fn get(&self, key: ParamKey) -> Result<&[f64]> {
        let i = self.slot_index(key)?;
        Ok(&self.values[self.slot_range(i)])
    }

    pub fn get_mut(&mut self, key: ParamKey) -> Result<&mut [f64]> {
        let i = self.slot_index(key)?;
        let r = self.slot_range(i);
        Ok(&mut self.values[r])
    }

    pub fn set(&mut self, key: ParamKey, values: &[f64]) -> Result<()> {
        let slot = self.get_mut(key)?;
        if slot.len() != values.len() {
            return Err(Error::Domain(format!(
                "`{key}` holds {} values, got {}",
                slot.len(),
                values.len()
            )));
        }
        slot.copy_from_slice(values);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Writes a JSON checkpoint. Floats are printed in shortest round-trip
    /// form, so reading it back is lossless.
    pub fn write_checkpoint<W: Write>(&self, w: W) -> Result<()> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            model: self.model,
            dim: self.dim,
            vocabulary: self.vocabulary.clone(),
            params: self
                .slots
                .iter()
                .map(|s| CheckpointEntry {
                    key: s.key.to_string(),
                    values: self.values[s.offset..s.offset + s.len].to_vec(),
                })
                .collect(),
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<ComposerParams> {
        let file: CheckpointFile = serde_json::from_reader(r)?;
        if file.format_version != CHECKPOINT_VERSION {
            return Err(Error::format(1, format!("unsupported checkpoint version {}", file.format_version)));
        }
        let mut params = ComposerParams::layout(file.model, file.vocabulary, file.dim)?;
        if file.params.len() != params.slots.len() {
            return Err(Error::format(1, "checkpoint parameter list does not match the model layout"));
        }
        for entry in file.params {
            let key: ParamKey = entry.key.parse()?;
            if entry.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(1, format!("non-finite value in `{key}`")));
            }
            params.set(key, &entry.values)?;
        }
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    key: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model: ModelKind,
    dim: usize,
    vocabulary: Vocabulary,
    params: Vec<CheckpointEntry>,
}

/// Random initialization: vectors `N(0, 1/d)` per component; type-logical
/// matrices identity plus `N(0, MATRIX_INIT_STD²)` per entry. Each array
/// draws from its own stream of `seed`.
pub fn init_params(model: ModelKind, vocabulary: &Vocabulary, dim: usize, seed: u64) -> Result<ComposerParams> {
    let mut params = ComposerParams::layout(model, vocabulary.clone(), dim)?;
    let vec_normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
    let mat_normal = Normal::new(0.0, MATRIX_INIT_STD).expect("valid std");
    for i in 0..params.slots.len() {
        let mut rng = rng::stream(seed, i as u64);
        let key = params.slots[i].key;
        let range = params.slot_range(i);
        let slot = &mut params.values[range];
        match key {
            ParamKey::Matrix(_) => {
                for (j, v) in slot.iter_mut().enumerate() {
                    let diag = if j / dim == j % dim { 1.0 } else { 0.0 };
                    *v = diag + mat_normal.sample(&mut rng);
                }
            }
            ParamKey::Vector(_) | ParamKey::Role(_) => {
                for v in slot.iter_mut() {
                    *v = vec_normal.sample(&mut rng);
                }
            }
        }
    }
    Ok(params)
}

/// Gradient buffer congruent with a [`ComposerParams`]; remembers which
/// arrays received any contribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    values: Vec<f64>,
    touched: Vec<bool>,
}

impl Gradients {
    pub fn zeros_like(params: &ComposerParams) -> Gradients {
        Gradients {
            values: vec![0.0; params.values.len()],
            touched: vec![false; params.slots.len()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_touched(&self, params: &ComposerParams, key: ParamKey) -> bool {
        params.slot_index(key).map(|i| self.touched[i]).unwrap_or(false)
    }

    /// Keys that received a contribution, in storage order.
    pub fn touched_keys<'a>(&'a self, params: &'a ComposerParams) -> impl Iterator<Item = ParamKey> + 'a {
        params
            .slots
            .iter()
            .zip(&self.touched)
            .filter(|(_, t)| **t)
            .map(|(s, _)| s.key)
    }

    pub fn get<'a>(&'a self, params: &ComposerParams, key: ParamKey) -> Result<&'a [f64]> {
        let i = params.slot_index(key)?;
        Ok(&self.values[params.slot_range(i)])
    }

    /// Mutable view of one array; marks it touched.
    pub(crate) fn slot_mut(&mut self, params: &ComposerParams, key: ParamKey) -> Result<&mut [f64]> {
        let i = params.slot_index(key)?;
        self.touched[i] = true;
        Ok(&mut self.values[params.slot_range(i)])
    }

    /// Zeroes the touched arrays and clears their marks, keeping the buffer.
    pub(crate) fn reset(&mut self, params: &ComposerParams) {
        for (i, t) in self.touched.iter_mut().enumerate() {
            if *t {
                self.values[params.slot_range(i)].fill(0.0);
                *t = false;
            }
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn touched_mask(&self) -> &[bool] {
        &self.touched
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_six_counts() {
        let two = DatasetKind::Single;
        let rel = DatasetKind::Relational;
        for m in [ModelKind::Add, ModelKind::Mult, ModelKind::Conv] {
            assert_eq!(param_count(m, two, 768), 8448);
            assert_eq!(param_count(m, DatasetKind::Two, 768), 8448);
            assert_eq!(param_count(m, rel, 768), 5376);
        }
        assert_eq!(param_count(ModelKind::RF, two, 768), 9984);
        assert_eq!(param_count(ModelKind::RF, rel, 768), 7680);
        assert_eq!(param_count(ModelKind::TL, two, 768), 8 * 768 * 768 + 3 * 768);
        assert_eq!(param_count(ModelKind::TL, two, 768), 4_720_896);
        assert_eq!(param_count(ModelKind::TL, rel, 768), 2_361_600);
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let vocab = Vocabulary::for_kind(DatasetKind::Single);
        let a = init_params(ModelKind::Add, &vocab, 768, 3).unwrap();
        let b = init_params(ModelKind::Add, &vocab, 768, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.keys().count(), 11);
        assert_eq!(a.len() as u64, param_count(ModelKind::Add, DatasetKind::Single, 768));
        assert_ne!(a, init_params(ModelKind::Add, &vocab, 768, 4).unwrap());
        assert!(init_params(ModelKind::Add, &vocab, 0, 3).unwrap_err().is_config());
    }

    #[test]
    fn checkpoint_is_lossless() {
        let vocab = Vocabulary::for_kind(DatasetKind::Relational);
        for m in ModelKind::ALL {
            let p = init_params(m, &vocab, 8, 17).unwrap();
            let mut buf = Vec::new();
            p.write_checkpoint(&mut buf).unwrap();
            assert_eq!(ComposerParams::read_checkpoint(buf.as_slice()).unwrap(), p);
        }
    }

    #[test]
    fn keys_round_trip_through_text() {
        let vocab = Vocabulary::for_kind(DatasetKind::Relational);
        for k in param_keys(ModelKind::RF, &vocab).into_iter().chain(param_keys(ModelKind::TL, &vocab)) {
            assert_eq!(k.to_string().parse::<ParamKey>().unwrap(), k);
        }
    }

    #[test]
    fn model_names_parse() {
        assert_eq!("tl".parse::<ModelKind>().unwrap(), ModelKind::TL);
        assert_eq!("Conv".parse::<ModelKind>().unwrap(), ModelKind::Conv);
        assert!("rnn".parse::<ModelKind>().is_err());
    }
}
