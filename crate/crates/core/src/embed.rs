//! Frozen image embeddings.
//!
//! Three oracle encoders stand in for a pretrained image tower:
//!
//! * [`encode_bag`] sums concept vectors per object. It is blind to which
//!   color belongs to which shape and to where anything is.
//! * [`encode_structured`] binds color to shape and shape to positional rank
//!   roles with circular convolution, so attribute swaps and reversed
//!   relations change the embedding.
//! * [`RasterEncoder`] paints silhouettes on a small canvas and projects the
//!   pixels with a fixed random matrix.
//!
//! Embeddings computed elsewhere enter through the text interchange format
//! handled by [`import_embeddings`] / [`export_embeddings`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::compose::hrr::circ_conv;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;
use crate::scenegen::{Color, DatasetManifest, Example, RelationKind, Scene, Shape, TAU};

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_NOISE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn zeros(dim: usize) -> Embedding {
        Embedding(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        linalg::cosine(&self.0, &other.0)
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(v: Vec<f64>) -> Self {
        Embedding(v)
    }
}

/// `v / ||v||`. The zero vector has no direction and is rejected.
pub fn normalize(v: &Embedding) -> Result<Embedding> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Domain(format!("cannot normalize vector with norm {n}")));
    }
    Ok(Embedding(v.0.iter().map(|x| x / n).collect()))
}

/// Positional rank of an object within a two-object scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RankRole {
    Leftmost,
    Rightmost,
    Frontmost,
    Backmost,
}

impl RankRole {
    pub const ALL: [RankRole; 4] = [
        RankRole::Leftmost,
        RankRole::Rightmost,
        RankRole::Frontmost,
        RankRole::Backmost,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Concept {
    Shape(Shape),
    Color(Color),
    Relation(RelationKind),
    Rank(RankRole),
}

impl Concept {
    /// Every concept, in the order vectors are drawn.
    pub fn all() -> Vec<Concept> {
        Shape::ALL
            .iter()
            .map(|s| Concept::Shape(*s))
            .chain(Color::ALL.iter().map(|c| Concept::Color(*c)))
            .chain(RelationKind::ALL.iter().map(|r| Concept::Relation(*r)))
            .chain(RankRole::ALL.iter().map(|r| Concept::Rank(*r)))
            .collect()
    }
}

/// Fixed unit vectors for every concept, drawn i.i.d. `N(0, 1/d)` and then
/// normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptTable {
    dim: usize,
    seed: u64,
    vectors: BTreeMap<Concept, Embedding>,
}

impl ConceptTable {
    pub fn new(seed: u64, dim: usize) -> Result<ConceptTable> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
        let vectors = Concept::all()
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let mut rng = rng::stream(seed, i as u64);
                loop {
                    let v = Embedding((0..dim).map(|_| normal.sample(&mut rng)).collect());
                    if let Ok(u) = normalize(&v) {
                        return (c, u);
                    }
                }
            })
            .collect();
        Ok(ConceptTable { dim, seed, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, c: Concept) -> &[f64] {
        &self.vectors[&c].0
    }

    fn shape(&self, s: Shape) -> &[f64] {
        self.get(Concept::Shape(s))
    }

    fn color(&self, c: Color) -> &[f64] {
        self.get(Concept::Color(c))
    }
}

/// Adds isotropic Gaussian noise whose expected norm is `sigma`
/// (per-component standard deviation `sigma / sqrt(d)`).
fn add_noise<R: Rng + ?Sized>(v: &mut [f64], sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma / (v.len() as f64).sqrt()).expect("valid std");
    for x in v.iter_mut() {
        *x += normal.sample(rng);
    }
}

/// Sums color vectors and shape vectors in canonical order, so any scene
/// with the same multiset of colors and shapes gets a bit-identical sum.
fn bag_sum(scene: &Scene, table: &ConceptTable) -> Vec<f64> {
    let mut colors: Vec<Color> = scene.objects.iter().map(|o| o.color).collect();
    let mut shapes: Vec<Shape> = scene.objects.iter().map(|o| o.shape).collect();
    colors.sort();
    shapes.sort();
    let mut acc = vec![0.0; table.dim()];
    for c in colors {
        linalg::add_assign(&mut acc, table.color(c));
    }
    for s in shapes {
        linalg::add_assign(&mut acc, table.shape(s));
    }
    acc
}

/// Bag-of-concepts encoder: `sum over objects of (t[color] + t[shape])`.
pub fn encode_bag<R: Rng + ?Sized>(
    scene: &Scene,
    table: &ConceptTable,
    noise_sigma: f64,
    rng: &mut R,
) -> Embedding {
    let mut v = bag_sum(scene, table);
    add_noise(&mut v, noise_sigma, rng);
    Embedding(v)
}

/// Rank roles of each object of a two-object scene. An axis whose gap is
/// below `TAU` assigns no rank, mirroring the truth oracle's margin.
fn rank_roles(scene: &Scene) -> Vec<(Shape, RankRole)> {
    let [a, b] = scene.objects.as_slice() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(4);
    if (a.x - b.x).abs() >= TAU {
        let (l, r) = if a.x < b.x { (a, b) } else { (b, a) };
        out.push((l.shape, RankRole::Leftmost));
        out.push((r.shape, RankRole::Rightmost));
    }
    if (a.z - b.z).abs() >= TAU {
        let (f, k) = if a.z < b.z { (a, b) } else { (b, a) };
        out.push((f.shape, RankRole::Frontmost));
        out.push((k.shape, RankRole::Backmost));
    }
    out
}

/// Binding-aware encoder.
///
/// Sums `t[color] ⊛ t[shape]` over objects and, for two-object scenes,
/// `t[shape] ⊛ t[rank]` for each positional rank role. With `bag_terms` the
/// plain bag sum is added as well, which keeps every constituent linearly
/// readable alongside the bound structure.
pub fn encode_structured<R: Rng + ?Sized>(
    scene: &Scene,
    table: &ConceptTable,
    noise_sigma: f64,
    bag_terms: bool,
    rng: &mut R,
) -> Embedding {
    let mut v = if bag_terms {
        bag_sum(scene, table)
    } else {
        vec![0.0; table.dim()]
    };
    let mut objects = scene.objects.clone();
    objects.sort_by_key(|o| o.shape);
    for o in &objects {
        let bound = circ_conv(table.color(o.color), table.shape(o.shape)).expect("table dims agree");
        linalg::add_assign(&mut v, &bound);
    }
    for (shape, role) in rank_roles(scene) {
        let bound = circ_conv(table.shape(shape), table.get(Concept::Rank(role))).expect("table dims agree");
        linalg::add_assign(&mut v, &bound);
    }
    add_noise(&mut v, noise_sigma, rng);
    Embedding(v)
}

/// Scene extent covered by the raster canvas.
const RASTER_EXTENT: f64 = 3.7;

/// Pixel-level control encoder: silhouettes on a `grid x grid x 3` canvas,
/// flattened and multiplied by a fixed Gaussian projection.
#[derive(Clone, Debug)]
pub struct RasterEncoder {
    grid: usize,
    dim: usize,
    seed: u64,
    /// `dim` rows of `grid * grid * 3` entries.
    projection: Vec<f64>,
}

impl RasterEncoder {
    pub fn new(grid: usize, dim: usize, projection_seed: u64) -> Result<RasterEncoder> {
        if grid < 8 {
            return Err(Error::Config(format!("raster grid must be at least 8, got {grid}")));
        }
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let pixels = grid * grid * 3;
        let normal = Normal::new(0.0, 1.0 / (pixels as f64).sqrt()).expect("valid std");
        let projection = (0..dim)
            .flat_map(|row| {
                let mut rng = rng::stream(projection_seed, row as u64);
                (0..pixels).map(move |_| normal.sample(&mut rng)).collect::<Vec<_>>()
            })
            .collect();
        Ok(RasterEncoder {
            grid,
            dim,
            seed: projection_seed,
            projection,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Paints the scene, far objects first. Row index follows depth, column
    /// index follows the lateral axis.
    pub fn rasterize(&self, scene: &Scene) -> Vec<f64> {
        let g = self.grid;
        let mut canvas = vec![0.0; g * g * 3];
        let mut objects = scene.objects.clone();
        objects.sort_by(|a, b| b.z.total_cmp(&a.z));
        let cell = 2.0 * RASTER_EXTENT / g as f64;
        let cell_of = |v: f64| (((v + RASTER_EXTENT) / cell).floor().max(0.0) as usize).min(g - 1);
        for o in &objects {
            let rgb = o.color.rgb();
            // objects smaller than a cell still mark the cell under their centre
            let centre = (cell_of(o.z) * g + cell_of(o.x)) * 3;
            canvas[centre..centre + 3].copy_from_slice(&rgb);
            for row in 0..g {
                let pz = -RASTER_EXTENT + (row as f64 + 0.5) * cell;
                for col in 0..g {
                    let px = -RASTER_EXTENT + (col as f64 + 0.5) * cell;
                    let (dx, dz) = (px - o.x, pz - o.z);
                    let r = o.size;
                    let inside = match o.shape {
                        Shape::Sphere => dx * dx + dz * dz <= r * r,
                        Shape::Cube => dx.abs() <= r && dz.abs() <= r,
                        // apex toward the back, base toward the viewer
                        Shape::Cylinder => dz.abs() <= r && dx.abs() <= (r - dz) / 2.0,
                    };
                    if inside {
                        let base = (row * g + col) * 3;
                        canvas[base..base + 3].copy_from_slice(&rgb);
                    }
                }
            }
        }
        canvas
    }

    pub fn encode(&self, scene: &Scene) -> Embedding {
        let pixels = self.rasterize(scene);
        Embedding(
            self.projection
                .chunks_exact(pixels.len())
                .take(self.dim)
                .map(|row| linalg::dot(row, &pixels))
                .collect(),
        )
    }
}

/// One-shot raster encoding; builds the projection from `projection_seed`.
pub fn encode_raster(scene: &Scene, grid: usize, dim: usize, projection_seed: u64) -> Result<Embedding> {
    Ok(RasterEncoder::new(grid, dim, projection_seed)?.encode(scene))
}

/// Frozen embeddings keyed by example id.
pub type ImageBank = BTreeMap<String, Embedding>;

/// Writes the text interchange format: a `dim=<d> count=<n>` header, then
/// one `<id> f1 ... fd` line per embedding.
pub fn export_embeddings<W: Write>(mut w: W, bank: &ImageBank) -> Result<()> {
    let dim = bank.values().next().map_or(0, Embedding::dim);
    writeln!(w, "dim={dim} count={}", bank.len())?;
    for (id, e) in bank {
        if e.dim() != dim {
            return Err(Error::Contract(format!("embedding `{id}` has dimension {}", e.dim())));
        }
        write!(w, "{id}")?;
        for v in &e.0 {
            write!(w, " {v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut dim = None;
    let mut count = None;
    for field in line.split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => dim = v.parse().ok(),
            Some(("count", v)) => count = v.parse().ok(),
            _ => return Err(Error::format(1, format!("unexpected header field `{field}`"))),
        }
    }
    match (dim, count) {
        (Some(d), Some(n)) => Ok((d, n)),
        _ => Err(Error::format(1, "header must be `dim=<d> count=<n>`")),
    }
}

pub fn import_embeddings<R: BufRead>(r: R) -> Result<ImageBank> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::format(1, "empty file"))??;
    let (dim, count) = parse_header(&header)?;
    let mut bank = ImageBank::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-empty line").to_string();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::format(lineno, format!("bad float `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(Error::format(
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(lineno, "non-finite value"));
        }
        if bank.insert(id.clone(), Embedding(values)).is_some() {
            return Err(Error::format(lineno, format!("duplicate id `{id}`")));
        }
    }
    if bank.len() != count {
        return Err(Error::format(
            1,
            format!("header announces {count} rows, found {}", bank.len()),
        ));
    }
    Ok(bank)
}

/// Which image encoder to use; parsed from `bag`, `structured`,
/// `structured-pure`, `raster` or `import:<path>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    Bag,
    Structured,
    /// Structured encoder without the additive bag terms.
    StructuredPure,
    Raster,
    Import(PathBuf),
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderKind::Bag => f.write_str("bag"),
            EncoderKind::Structured => f.write_str("structured"),
            EncoderKind::StructuredPure => f.write_str("structured-pure"),
            EncoderKind::Raster => f.write_str("raster"),
            EncoderKind::Import(p) => write!(f, "import:{}", p.display()),
        }
    }
}

impl FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag" => Ok(EncoderKind::Bag),
            "structured" => Ok(EncoderKind::Structured),
            "structured-pure" => Ok(EncoderKind::StructuredPure),
            "raster" => Ok(EncoderKind::Raster),
            _ => match s.strip_prefix("import:") {
                Some(p) if !p.is_empty() => Ok(EncoderKind::Import(PathBuf::from(p))),
                _ => Err(Error::Config(format!("unknown encoder `{s}`"))),
            },
        }
    }
}

crate::serde_via_str!(EncoderKind);

/// A ready-to-use frozen image encoder.
#[derive(Clone, Debug)]
pub enum FrozenEncoder {
    Bag { table: ConceptTable, sigma: f64 },
    Structured { table: ConceptTable, sigma: f64, bag_terms: bool },
    Raster(RasterEncoder),
    Imported(ImageBank),
}

impl FrozenEncoder {
    /// Builds the encoder for `kind`. Imported banks are read from disk.
    pub fn build(kind: &EncoderKind, dim: usize, sigma: f64, grid: usize, seed: u64) -> Result<FrozenEncoder> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(match kind {
            EncoderKind::Bag => FrozenEncoder::Bag {
                table: ConceptTable::new(seed, dim)?,
                sigma,
            },
            EncoderKind::Structured | EncoderKind::StructuredPure => FrozenEncoder::Structured {
                table: ConceptTable::new(seed, dim)?,
                sigma,
                bag_terms: *kind == EncoderKind::Structured,
            },
            EncoderKind::Raster => FrozenEncoder::Raster(RasterEncoder::new(grid, dim, seed)?),
            EncoderKind::Import(path) => {
                let file = std::fs::File::open(path)?;
                FrozenEncoder::Imported(import_embeddings(std::io::BufReader::new(file))?)
            }
        })
    }

    /// Embeds one example. Noise comes from a stream keyed by the example
    /// id, so the result does not depend on evaluation order.
    pub fn embed(&self, ex: &Example, noise_seed: u64) -> Result<Embedding> {
        let mut rng = rng::stream(noise_seed, rng::fnv1a(ex.id.as_bytes()));
        Ok(match self {
            FrozenEncoder::Bag { table, sigma } => encode_bag(&ex.scene, table, *sigma, &mut rng),
            FrozenEncoder::Structured {
                table,
                sigma,
                bag_terms,
            } => encode_structured(&ex.scene, table, *sigma, *bag_terms, &mut rng),
            FrozenEncoder::Raster(r) => r.encode(&ex.scene),
            FrozenEncoder::Imported(bank) => bank
                .get(&ex.id)
                .cloned()
                .ok_or_else(|| Error::Contract(format!("no imported embedding for `{}`", ex.id)))?,
        })
    }

    /// Embeds every example of a manifest once.
    pub fn embed_manifest(&self, manifest: &DatasetManifest, noise_seed: u64) -> Result<ImageBank> {
        let examples: Vec<&Example> = manifest.examples().collect();
        let embedded = examples
            .par_iter()
            .map(|ex| Ok((ex.id.clone(), self.embed(ex, noise_seed)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(embedded.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::SceneObject;

    fn object(shape: Shape, color: Color, x: f64, z: f64) -> SceneObject {
        SceneObject {
            shape,
            color,
            x,
            z,
            size: 0.4,
        }
    }

    fn table() -> ConceptTable {
        ConceptTable::new(42, 64).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let v = normalize(&Embedding(vec![3.0, 4.0])).unwrap();
        assert_eq!(v.0, vec![0.6, 0.8]);
        let again = normalize(&v).unwrap();
        assert!(again.0.iter().zip(&v.0).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(matches!(normalize(&Embedding(vec![0.0, 0.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn concept_table_is_unit_and_deterministic() {
        let t = table();
        for c in Concept::all() {
            assert!((linalg::norm(t.get(c)) - 1.0).abs() < 1e-9);
        }
        assert_eq!(t, table());
        assert!(ConceptTable::new(1, 0).is_err());
    }

    #[test]
    fn bag_single_object_is_plain_sum() {
        let t = table();
        let scene = Scene {
            objects: vec![object(Shape::Cube, Color::Red, 0.0, 0.0)],
        };
        let mut rng = rng::stream(0, 0);
        let e = encode_bag(&scene, &t, 0.0, &mut rng);
        let expected: Vec<f64> = t
            .get(Concept::Color(Color::Red))
            .iter()
            .zip(t.get(Concept::Shape(Shape::Cube)))
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(e.0, expected);
    }

    #[test]
    fn bag_ignores_binding_and_position() {
        let t = table();
        let mut rng = rng::stream(0, 0);
        let a = Scene {
            objects: vec![
                object(Shape::Cube, Color::Red, -2.0, 0.0),
                object(Shape::Sphere, Color::Yellow, 2.0, 1.0),
            ],
        };
        let b = Scene {
            objects: vec![
                object(Shape::Sphere, Color::Red, 1.0, -2.0),
                object(Shape::Cube, Color::Yellow, -1.0, 2.0),
            ],
        };
        assert_eq!(encode_bag(&a, &t, 0.0, &mut rng), encode_bag(&b, &t, 0.0, &mut rng));
    }

    #[test]
    fn structured_single_object_pure_form() {
        let t = table();
        let mut rng = rng::stream(0, 0);
        let scene = Scene {
            objects: vec![object(Shape::Cube, Color::Red, 0.0, 0.0)],
        };
        let e = encode_structured(&scene, &t, 0.0, false, &mut rng);
        let bound = circ_conv(t.get(Concept::Color(Color::Red)), t.get(Concept::Shape(Shape::Cube))).unwrap();
        assert_eq!(e.0, bound);
    }

    #[test]
    fn structured_contains_leftmost_binding() {
        let t = table();
        let mut rng = rng::stream(0, 0);
        let scene = Scene {
            objects: vec![
                object(Shape::Cube, Color::Red, -1.0, 0.0),
                object(Shape::Sphere, Color::Blue, 1.0, 0.0),
            ],
        };
        let roles = rank_roles(&scene);
        assert_eq!(
            roles,
            vec![(Shape::Cube, RankRole::Leftmost), (Shape::Sphere, RankRole::Rightmost)]
        );
        let e = encode_structured(&scene, &t, 0.0, false, &mut rng);
        let term = circ_conv(t.get(Concept::Shape(Shape::Cube)), t.get(Concept::Rank(RankRole::Leftmost))).unwrap();
        // the bound term dominates its own direction
        assert!(linalg::cosine(&e.0, &term) > 0.3);
    }

    #[test]
    fn raster_examples() {
        let enc = RasterEncoder::new(8, 32, 5).unwrap();
        let empty = Scene { objects: vec![] };
        assert!(enc.encode(&empty).0.iter().all(|v| *v == 0.0));
        let red = Scene {
            objects: vec![object(Shape::Cube, Color::Red, 0.0, 0.0)],
        };
        let blue = Scene {
            objects: vec![object(Shape::Cube, Color::Blue, 0.0, 0.0)],
        };
        assert_eq!(enc.encode(&red), RasterEncoder::new(8, 32, 5).unwrap().encode(&red));
        assert_ne!(enc.encode(&red), enc.encode(&blue));
        assert!(RasterEncoder::new(7, 32, 5).is_err());
    }

    #[test]
    fn interchange_parse_and_errors() {
        let ok = "dim=4 count=2\na 1 2 3 4\nb 0.5 -1 2e-3 0\n";
        let bank = import_embeddings(ok.as_bytes()).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank["b"].0, vec![0.5, -1.0, 0.002, 0.0]);

        let short = "dim=4 count=1\na 1 2 3\n";
        assert!(matches!(import_embeddings(short.as_bytes()), Err(Error::Format { line: 2, .. })));
        let dup = "dim=1 count=2\na 1\na 2\n";
        assert!(matches!(import_embeddings(dup.as_bytes()), Err(Error::Format { .. })));
        let nan = "dim=1 count=1\na NaN\n";
        assert!(matches!(import_embeddings(nan.as_bytes()), Err(Error::Format { .. })));
        let miscount = "dim=1 count=3\na 1\n";
        assert!(matches!(import_embeddings(miscount.as_bytes()), Err(Error::Format { .. })));
    }

    #[test]
    fn export_import_round_trip() {
        let mut rng = rng::stream(9, 9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let bank: ImageBank = (0..5)
            .map(|i| (format!("ex-{i}"), Embedding((0..7).map(|_| normal.sample(&mut rng)).collect())))
            .collect();
        let mut buf = Vec::new();
        export_embeddings(&mut buf, &bank).unwrap();
        let back = import_embeddings(buf.as_slice()).unwrap();
        for (id, e) in &bank {
            assert!(e.0.iter().zip(&back[id].0).all(|(a, b)| (a - b).abs() <= 1e-6));
        }
    }

    #[test]
    fn encoder_kind_parsing() {
        assert_eq!("bag".parse::<EncoderKind>().unwrap(), EncoderKind::Bag);
        assert_eq!(
            "import:/tmp/x.txt".parse::<EncoderKind>().unwrap(),
            EncoderKind::Import(PathBuf::from("/tmp/x.txt"))
        );
        assert!("clip".parse::<EncoderKind>().unwrap_err().is_config());
    }
}
