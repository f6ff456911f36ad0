//! Scene and phrase data model, plus procedural generation of the three
//! grounded-composition datasets (single-object, two-object, relational).
//!
//! Scenes are abstract specifications: each object carries a shape, a color,
//! a lateral coordinate `x`, a depth coordinate `z` and a radius. Smaller `z`
//! is closer to the viewer, so "s front-of o" holds when `z_s + TAU <= z_o`.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Margin (scene units) a coordinate gap must reach for a relation to hold.
pub const TAU: f64 = 0.5;
/// Coordinates live in `[-COORD_LIMIT, COORD_LIMIT]`.
pub const COORD_LIMIT: f64 = 3.0;
pub const SIZE_MIN: f64 = 0.3;
pub const SIZE_MAX: f64 = 0.7;
/// Rejection-sampling budget per scene.
pub const MAX_ATTEMPTS: usize = 1000;
pub const DISTRACTORS: usize = 4;
/// Version tag written into manifest headers.
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cube,
    Sphere,
    Cylinder,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Cube, Shape::Sphere, Shape::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Cube => "cube",
            Shape::Sphere => "sphere",
            Shape::Cylinder => "cylinder",
        }
    }

    /// The shape that is neither `a` nor `b`. Requires `a != b`.
    pub fn third(a: Shape, b: Shape) -> Shape {
        debug_assert_ne!(a, b);
        *Shape::ALL
            .iter()
            .find(|s| **s != a && **s != b)
            .expect("three shapes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Gray,
    Yellow,
    Brown,
    Green,
    Purple,
    Red,
    Cyan,
}

impl Color {
    pub const ALL: [Color; 8] = [
        Color::Blue,
        Color::Gray,
        Color::Yellow,
        Color::Brown,
        Color::Green,
        Color::Purple,
        Color::Red,
        Color::Cyan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Blue => "blue",
            Color::Gray => "gray",
            Color::Yellow => "yellow",
            Color::Brown => "brown",
            Color::Green => "green",
            Color::Purple => "purple",
            Color::Red => "red",
            Color::Cyan => "cyan",
        }
    }

    /// Display color used by the rasterizer, RGB in `[0, 1]`.
    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Blue => [0.16, 0.29, 0.84],
            Color::Gray => [0.34, 0.34, 0.34],
            Color::Yellow => [1.0, 0.93, 0.2],
            Color::Brown => [0.51, 0.29, 0.1],
            Color::Green => [0.11, 0.41, 0.08],
            Color::Purple => [0.51, 0.15, 0.75],
            Color::Red => [0.68, 0.14, 0.14],
            Color::Cyan => [0.16, 0.82, 0.82],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Lateral,
    Depth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Left,
    Right,
    Front,
    Behind,
}

impl RelationKind {
    pub const ALL: [RelationKind; 4] = [
        RelationKind::Left,
        RelationKind::Right,
        RelationKind::Front,
        RelationKind::Behind,
    ];

    pub fn opposite(self) -> RelationKind {
        match self {
            RelationKind::Left => RelationKind::Right,
            RelationKind::Right => RelationKind::Left,
            RelationKind::Front => RelationKind::Behind,
            RelationKind::Behind => RelationKind::Front,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            RelationKind::Left | RelationKind::Right => Axis::Lateral,
            RelationKind::Front | RelationKind::Behind => Axis::Depth,
        }
    }

    /// Label token, e.g. `left-of`.
    pub fn word(self) -> &'static str {
        match self {
            RelationKind::Left => "left-of",
            RelationKind::Right => "right-of",
            RelationKind::Front => "front-of",
            RelationKind::Behind => "behind",
        }
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Vocabulary(format!("unknown shape `{s}`")))
    }
}

impl FromStr for Color {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Color::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Vocabulary(format!("unknown color `{s}`")))
    }
}

impl FromStr for RelationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left-of" | "left" => Ok(RelationKind::Left),
            "right-of" | "right" => Ok(RelationKind::Right),
            "front-of" | "front" | "in-front-of" => Ok(RelationKind::Front),
            "behind" => Ok(RelationKind::Behind),
            _ => Err(Error::Vocabulary(format!("unknown relation `{s}`"))),
        }
    }
}

/// A single vocabulary item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "category", content = "word")]
pub enum Word {
    Color(Color),
    Shape(Shape),
    Relation(RelationKind),
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Color(c) => f.write_str(c.name()),
            Word::Shape(s) => f.write_str(s.name()),
            Word::Relation(r) => f.write_str(r.word()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub x: f64,
    pub z: f64,
    pub size: f64,
}

impl SceneObject {
    fn overlaps(&self, other: &SceneObject) -> bool {
        let d = ((self.x - other.x).powi(2) + (self.z - other.z).powi(2)).sqrt();
        d <= self.size + other.size
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Checks object count, coordinate ranges, and the two-object rules
    /// (distinct shapes, distinct colors, no overlap).
    pub fn validate(&self) -> Result<()> {
        let n = self.objects.len();
        if !(1..=2).contains(&n) {
            return Err(Error::Contract(format!("scene has {n} objects")));
        }
        for o in &self.objects {
            let in_range = |v: f64| (-COORD_LIMIT..=COORD_LIMIT).contains(&v);
            if !in_range(o.x) || !in_range(o.z) || !(SIZE_MIN..=SIZE_MAX).contains(&o.size) {
                return Err(Error::Contract(format!("object out of range: {o:?}")));
            }
        }
        if let [a, b] = self.objects.as_slice() {
            if a.shape == b.shape || a.color == b.color {
                return Err(Error::Contract("two-object scene repeats a shape or color".into()));
            }
            if a.overlaps(b) {
                return Err(Error::Contract("objects overlap".into()));
            }
        }
        Ok(())
    }

    fn find_shape(&self, shape: Shape) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.shape == shape)
    }
}

/// The unit of classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phrase {
    AdjNoun {
        adjective: Color,
        noun: Shape,
    },
    Rel {
        subject: Shape,
        relation: RelationKind,
        object: Shape,
    },
}

impl Phrase {
    pub fn adj_noun(adjective: Color, noun: Shape) -> Phrase {
        Phrase::AdjNoun { adjective, noun }
    }

    /// Relational phrase; subject and object must differ.
    pub fn rel(subject: Shape, relation: RelationKind, object: Shape) -> Result<Phrase> {
        if subject == object {
            return Err(Error::Contract(format!(
                "relational phrase needs distinct shapes, got {}",
                subject.name()
            )));
        }
        Ok(Phrase::Rel {
            subject,
            relation,
            object,
        })
    }

    pub fn is_relational(&self) -> bool {
        matches!(self, Phrase::Rel { .. })
    }

    pub fn words(&self) -> Vec<Word> {
        match *self {
            Phrase::AdjNoun { adjective, noun } => vec![Word::Color(adjective), Word::Shape(noun)],
            Phrase::Rel {
                subject,
                relation,
                object,
            } => vec![
                Word::Shape(subject),
                Word::Relation(relation),
                Word::Shape(object),
            ],
        }
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phrase::AdjNoun { adjective, noun } => write!(f, "{} {}", adjective.name(), noun.name()),
            Phrase::Rel {
                subject,
                relation,
                object,
            } => write!(f, "{} {} {}", subject.name(), relation.word(), object.name()),
        }
    }
}

impl FromStr for Phrase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        match tokens.as_slice() {
            [a, n] => Ok(Phrase::adj_noun(a.parse()?, n.parse()?)),
            [s, r, o] => Phrase::rel(s.parse()?, r.parse()?, o.parse()?),
            _ => Err(Error::Vocabulary(format!("cannot parse phrase `{s}`"))),
        }
    }
}

impl Serialize for Phrase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Phrase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Generalization,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Generalization];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Generalization => "generalization",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Single,
    Two,
    Relational,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Single => "single",
            DatasetKind::Two => "two",
            DatasetKind::Relational => "relational",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(DatasetKind::Single),
            "two" => Ok(DatasetKind::Two),
            "relational" => Ok(DatasetKind::Relational),
            _ => Err(Error::Config(format!("unknown dataset kind `{s}`"))),
        }
    }
}

/// Words by syntactic category for one dataset kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub adjectives: Vec<Color>,
    pub nouns: Vec<Shape>,
    pub relations: Vec<RelationKind>,
}

impl Vocabulary {
    pub fn for_kind(kind: DatasetKind) -> Vocabulary {
        match kind {
            DatasetKind::Single | DatasetKind::Two => Vocabulary {
                adjectives: Color::ALL.to_vec(),
                nouns: Shape::ALL.to_vec(),
                relations: Vec::new(),
            },
            DatasetKind::Relational => Vocabulary {
                adjectives: Vec::new(),
                nouns: Shape::ALL.to_vec(),
                relations: RelationKind::ALL.to_vec(),
            },
        }
    }

    pub fn words(&self) -> Vec<Word> {
        self.adjectives
            .iter()
            .map(|c| Word::Color(*c))
            .chain(self.nouns.iter().map(|s| Word::Shape(*s)))
            .chain(self.relations.iter().map(|r| Word::Relation(*r)))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.adjectives.is_empty() && self.nouns.is_empty() && self.relations.is_empty()
    }
}

/// All 24 labels of a dataset kind.
pub fn phrase_universe(kind: DatasetKind) -> Vec<Phrase> {
    match kind {
        DatasetKind::Single | DatasetKind::Two => Color::ALL
            .iter()
            .flat_map(|c| Shape::ALL.iter().map(move |s| Phrase::adj_noun(*c, *s)))
            .collect(),
        DatasetKind::Relational => {
            let mut out = Vec::with_capacity(24);
            for s in Shape::ALL {
                for r in RelationKind::ALL {
                    for o in Shape::ALL {
                        if s != o {
                            out.push(Phrase::Rel {
                                subject: s,
                                relation: r,
                                object: o,
                            });
                        }
                    }
                }
            }
            out
        }
    }
}

/// Fixed class membership of each split.
pub fn split_classes(kind: DatasetKind, split: Split) -> Vec<Phrase> {
    use Color::*;
    use RelationKind::*;
    use Shape::*;
    let held_out: Vec<Phrase> = match kind {
        DatasetKind::Single | DatasetKind::Two => {
            let validation = vec![Phrase::adj_noun(Brown, Cube), Phrase::adj_noun(Green, Cylinder)];
            let generalization = vec![
                Phrase::adj_noun(Green, Cube),
                Phrase::adj_noun(Purple, Cube),
                Phrase::adj_noun(Red, Cube),
                Phrase::adj_noun(Cyan, Cube),
                Phrase::adj_noun(Blue, Cylinder),
                Phrase::adj_noun(Gray, Cylinder),
                Phrase::adj_noun(Yellow, Cylinder),
                Phrase::adj_noun(Brown, Cylinder),
            ];
            match split {
                Split::Validation => return validation,
                Split::Generalization => return generalization,
                Split::Train => validation.into_iter().chain(generalization).collect(),
            }
        }
        DatasetKind::Relational => {
            let rel = |s, r, o| Phrase::Rel {
                subject: s,
                relation: r,
                object: o,
            };
            let validation = vec![rel(Cube, Front, Sphere), rel(Sphere, Behind, Cube)];
            let generalization = vec![rel(Cylinder, Front, Cube), rel(Cube, Behind, Cylinder)];
            match split {
                Split::Validation => return validation,
                Split::Generalization => return generalization,
                Split::Train => validation.into_iter().chain(generalization).collect(),
            }
        }
    };
    phrase_universe(kind)
        .into_iter()
        .filter(|p| !held_out.contains(p))
        .collect()
}

/// Truth oracle: does `phrase` describe `scene`?
///
/// A relation needs its coordinate gap to reach `TAU`; shapes missing from
/// the scene simply make the phrase false.
pub fn relation_holds(scene: &Scene, phrase: &Phrase) -> bool {
    match *phrase {
        Phrase::AdjNoun { adjective, noun } => scene
            .objects
            .iter()
            .any(|o| o.color == adjective && o.shape == noun),
        Phrase::Rel {
            subject,
            relation,
            object,
        } => {
            if subject == object {
                return false;
            }
            let (Some(s), Some(o)) = (scene.find_shape(subject), scene.find_shape(object)) else {
                return false;
            };
            match relation {
                RelationKind::Left => s.x + TAU <= o.x,
                RelationKind::Right => o.x + TAU <= s.x,
                RelationKind::Front => s.z + TAU <= o.z,
                RelationKind::Behind => o.z + TAU <= s.z,
            }
        }
    }
}

/// True when a two-object scene is separated by at least `TAU` along exactly
/// one axis, so a single relation pair describes it.
pub fn relational_exclusive(scene: &Scene) -> bool {
    match scene.objects.as_slice() {
        [a, b] => {
            let lateral = (a.x - b.x).abs() >= TAU;
            let depth = (a.z - b.z).abs() >= TAU;
            lateral != depth
        }
        _ => false,
    }
}

/// What a scene must depict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SceneClass {
    /// One object.
    Single(Phrase),
    /// Two objects, each described by its own adjective-noun phrase.
    Pair(Phrase, Phrase),
    /// Two objects in the given relation.
    Relation(Phrase),
}

fn attributes(p: &Phrase) -> Result<(Color, Shape)> {
    match *p {
        Phrase::AdjNoun { adjective, noun } => Ok((adjective, noun)),
        Phrase::Rel { .. } => Err(Error::Contract(format!("expected adjective-noun phrase, got `{p}`"))),
    }
}

fn random_object<R: Rng + ?Sized>(rng: &mut R, color: Color, shape: Shape) -> SceneObject {
    SceneObject {
        shape,
        color,
        x: rng.random_range(-COORD_LIMIT..=COORD_LIMIT),
        z: rng.random_range(-COORD_LIMIT..=COORD_LIMIT),
        size: rng.random_range(SIZE_MIN..=SIZE_MAX),
    }
}

/// Samples a scene depicting `class`, rejection-sampling until every scene
/// constraint holds.
pub fn sample_scene<R: Rng + ?Sized>(class: &SceneClass, rng: &mut R) -> Result<Scene> {
    match *class {
        SceneClass::Single(p) => {
            let (c, s) = attributes(&p)?;
            Ok(Scene {
                objects: vec![random_object(rng, c, s)],
            })
        }
        SceneClass::Pair(p, q) => {
            let (c1, s1) = attributes(&p)?;
            let (c2, s2) = attributes(&q)?;
            if c1 == c2 || s1 == s2 {
                return Err(Error::Contract(format!("pair `{p}` / `{q}` shares a color or shape")));
            }
            for _ in 0..MAX_ATTEMPTS {
                let scene = Scene {
                    objects: vec![random_object(rng, c1, s1), random_object(rng, c2, s2)],
                };
                if scene.validate().is_ok() {
                    return Ok(scene);
                }
            }
            Err(Error::Generation(format!("no valid scene for `{p}` + `{q}`")))
        }
        SceneClass::Relation(p) => {
            let Phrase::Rel {
                subject,
                relation,
                object,
            } = p
            else {
                return Err(Error::Contract(format!("expected relational phrase, got `{p}`")));
            };
            let c1 = *Color::ALL.choose(rng).expect("colors");
            let c2 = loop {
                let c = *Color::ALL.choose(rng).expect("colors");
                if c != c1 {
                    break c;
                }
            };
            for _ in 0..MAX_ATTEMPTS {
                let a = random_object(rng, c1, subject);
                let mut b = random_object(rng, c2, object);
                // Pin the off-axis gap inside the margin.
                let offset = rng.random_range(-TAU..TAU);
                match relation.axis() {
                    Axis::Lateral => b.z = a.z + offset,
                    Axis::Depth => b.x = a.x + offset,
                }
                let scene = Scene {
                    objects: vec![a, b],
                };
                if scene.validate().is_ok()
                    && relational_exclusive(&scene)
                    && relation_holds(&scene, &p)
                {
                    return Ok(scene);
                }
            }
            Err(Error::Generation(format!("no valid scene for `{p}`")))
        }
    }
}

/// Builds the four distractors for `true_phrase`.
///
/// * single: four distinct labels from the other 23 combinations;
/// * two-object: both attribute swaps with `partner`, plus two labels drawn
///   from the combinations that describe neither object nor a swap;
/// * relational: exactly `[bRa, aSb, aRc, cRb]` for true `aRb`.
pub fn make_distractors<R: Rng + ?Sized>(
    kind: DatasetKind,
    true_phrase: &Phrase,
    partner: Option<&Phrase>,
    rng: &mut R,
) -> Result<[Phrase; DISTRACTORS]> {
    match kind {
        DatasetKind::Single => {
            attributes(true_phrase)?;
            let pool: Vec<Phrase> = phrase_universe(kind)
                .into_iter()
                .filter(|p| p != true_phrase)
                .collect();
            let picked: Vec<Phrase> = pool.choose_multiple(rng, DISTRACTORS).copied().collect();
            Ok(picked.try_into().expect("four picks"))
        }
        DatasetKind::Two => {
            let (c1, s1) = attributes(true_phrase)?;
            let partner =
                partner.ok_or_else(|| Error::Contract("two-object distractors need the partner".into()))?;
            let (c2, s2) = attributes(partner)?;
            let hard = [Phrase::adj_noun(c1, s2), Phrase::adj_noun(c2, s1)];
            let excluded = [*true_phrase, *partner, hard[0], hard[1]];
            let pool: Vec<Phrase> = phrase_universe(kind)
                .into_iter()
                .filter(|p| !excluded.contains(p))
                .collect();
            let mut picked = pool.choose_multiple(rng, 2).copied();
            Ok([
                hard[0],
                hard[1],
                picked.next().expect("pool"),
                picked.next().expect("pool"),
            ])
        }
        DatasetKind::Relational => {
            let Phrase::Rel {
                subject: a,
                relation: r,
                object: b,
            } = *true_phrase
            else {
                return Err(Error::Contract(format!("expected relational phrase, got `{true_phrase}`")));
            };
            let c = Shape::third(a, b);
            let s = r.opposite();
            let rel = |subject, relation, object| Phrase::Rel {
                subject,
                relation,
                object,
            };
            Ok([rel(b, r, a), rel(a, s, b), rel(a, r, c), rel(c, r, b)])
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub split: Split,
    pub scene: Scene,
    pub true_phrase: Phrase,
    pub distractors: [Phrase; DISTRACTORS],
}

impl Example {
    /// True label first, then the distractors in stored order.
    pub fn candidates(&self) -> [Phrase; DISTRACTORS + 1] {
        let d = &self.distractors;
        [self.true_phrase, d[0], d[1], d[2], d[3]]
    }
}

/// Requested example counts per split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub generalization: usize,
}

impl SplitCounts {
    /// Dataset sizes of the original benchmark.
    pub fn defaults(kind: DatasetKind) -> SplitCounts {
        match kind {
            DatasetKind::Single => SplitCounts {
                train: 5598,
                validation: 799,
                generalization: 3195,
            },
            DatasetKind::Two => SplitCounts {
                train: 20000,
                validation: 20000,
                generalization: 20000,
            },
            DatasetKind::Relational => SplitCounts {
                train: 40000,
                validation: 20000,
                generalization: 20000,
            },
        }
    }

    pub fn uniform(n: usize) -> SplitCounts {
        SplitCounts {
            train: n,
            validation: n,
            generalization: n,
        }
    }

    /// `n` examples for every class of every split.
    pub fn per_class(kind: DatasetKind, n: usize) -> SplitCounts {
        SplitCounts {
            train: n * split_classes(kind, Split::Train).len(),
            validation: n * split_classes(kind, Split::Validation).len(),
            generalization: n * split_classes(kind, Split::Generalization).len(),
        }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Generalization => self.generalization,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitData {
    pub split: Split,
    pub classes: Vec<Phrase>,
    pub examples: Vec<Example>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub seed: u64,
    pub tau: f64,
    /// Train, validation, generalization, in that order.
    pub splits: Vec<SplitData>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> &SplitData {
        self.splits
            .iter()
            .find(|s| s.split == split)
            .expect("manifest holds all three splits")
    }

    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.splits.iter().flat_map(|s| s.examples.iter())
    }

    pub fn len(&self) -> usize {
        self.splits.iter().map(|s| s.examples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the header line followed by one record per example.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = ManifestHeader {
            schema: MANIFEST_SCHEMA,
            kind: self.kind,
            seed: self.seed,
            tau: self.tau,
            classes: SplitClasses {
                train: self.split(Split::Train).classes.clone(),
                validation: self.split(Split::Validation).classes.clone(),
                generalization: self.split(Split::Generalization).classes.clone(),
            },
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for ex in self.examples() {
            let record = ManifestRecord {
                id: ex.id.clone(),
                split: ex.split,
                kind: self.kind,
                scene: ex.scene.clone(),
                label: ex.true_phrase,
                distractors: ex.distractors.to_vec(),
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<DatasetManifest> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::format(1, "empty manifest"))?;
        let header: ManifestHeader =
            serde_json::from_str(&first?).map_err(|e| Error::format(1, e.to_string()))?;
        if header.schema != MANIFEST_SCHEMA {
            return Err(Error::format(1, format!("unsupported schema {}", header.schema)));
        }
        let mut splits: Vec<SplitData> = [
            (Split::Train, header.classes.train),
            (Split::Validation, header.classes.validation),
            (Split::Generalization, header.classes.generalization),
        ]
        .into_iter()
        .map(|(split, classes)| SplitData {
            split,
            classes,
            examples: Vec::new(),
        })
        .collect();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| Error::format(i + 1, e.to_string()))?;
            if rec.kind != header.kind {
                return Err(Error::format(i + 1, "record kind differs from header"));
            }
            let distractors: [Phrase; DISTRACTORS] = rec
                .distractors
                .try_into()
                .map_err(|_| Error::format(i + 1, "expected exactly 4 distractors"))?;
            let slot = splits
                .iter_mut()
                .find(|s| s.split == rec.split)
                .expect("all splits present");
            slot.examples.push(Example {
                id: rec.id,
                split: rec.split,
                scene: rec.scene,
                true_phrase: rec.label,
                distractors,
            });
        }
        Ok(DatasetManifest {
            kind: header.kind,
            seed: header.seed,
            tau: header.tau,
            splits,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SplitClasses {
    train: Vec<Phrase>,
    validation: Vec<Phrase>,
    generalization: Vec<Phrase>,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    schema: u32,
    kind: DatasetKind,
    seed: u64,
    tau: f64,
    classes: SplitClasses,
}

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    split: Split,
    kind: DatasetKind,
    scene: Scene,
    label: Phrase,
    distractors: Vec<Phrase>,
}

/// Partners for a two-object example: same-split classes with a different
/// shape and a different color.
fn partner_pool(classes: &[Phrase], p: &Phrase) -> Vec<Phrase> {
    let Phrase::AdjNoun { adjective, noun } = *p else {
        return Vec::new();
    };
    classes
        .iter()
        .filter(|q| match q {
            Phrase::AdjNoun {
                adjective: c,
                noun: s,
            } => *c != adjective && *s != noun,
            _ => false,
        })
        .copied()
        .collect()
}

fn generate_example(
    kind: DatasetKind,
    split: Split,
    classes: &[Phrase],
    class: Phrase,
    seed: u64,
    index: u64,
) -> Result<Example> {
    let mut rng = rng::stream(seed, index);
    let (scene_class, partner) = match kind {
        DatasetKind::Single => (SceneClass::Single(class), None),
        DatasetKind::Two => {
            let pool = partner_pool(classes, &class);
            let partner = *pool.choose(&mut rng).ok_or_else(|| {
                Error::Generation(format!("no partner class for `{class}` in {}", split.name()))
            })?;
            (SceneClass::Pair(class, partner), Some(partner))
        }
        DatasetKind::Relational => (SceneClass::Relation(class), None),
    };
    let scene = sample_scene(&scene_class, &mut rng)?;
    let distractors = make_distractors(kind, &class, partner.as_ref(), &mut rng)?;
    Ok(Example {
        id: format!("{}-{index:06}", kind.name()),
        split,
        scene,
        true_phrase: class,
        distractors,
    })
}

/// Generates a dataset. Examples are spread round-robin over each split's
/// classes; example `i` (counted across train, validation, generalization)
/// draws from its own random stream, so the result depends only on
/// `(kind, counts, seed)`.
pub fn build_dataset(kind: DatasetKind, counts: SplitCounts, seed: u64) -> Result<DatasetManifest> {
    let mut splits = Vec::with_capacity(3);
    let mut offset = 0u64;
    for split in Split::ALL {
        let classes = split_classes(kind, split);
        let n = counts.get(split);
        let examples = (0..n)
            .into_par_iter()
            .map(|j| {
                let class = classes[j % classes.len()];
                generate_example(kind, split, &classes, class, seed, offset + j as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        offset += n as u64;
        splits.push(SplitData {
            split,
            classes,
            examples,
        });
    }
    Ok(DatasetManifest {
        kind,
        seed,
        tau: TAU,
        splits,
    })
}

/// Checks the split-disjointness and word-coverage invariants of a manifest.
pub fn check_class_splits(manifest: &DatasetManifest) -> Result<()> {
    let sets: Vec<BTreeSet<Phrase>> = manifest
        .splits
        .iter()
        .map(|s| s.classes.iter().copied().collect())
        .collect();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if !sets[i].is_disjoint(&sets[j]) {
                return Err(Error::Contract("split class lists overlap".into()));
            }
        }
    }
    let train_words: BTreeSet<Word> = manifest
        .split(Split::Train)
        .classes
        .iter()
        .flat_map(|p| p.words())
        .collect();
    for w in Vocabulary::for_kind(manifest.kind).words() {
        if !train_words.contains(&w) {
            return Err(Error::Contract(format!("word `{w}` never appears in training")));
        }
    }
    Ok(())
}
