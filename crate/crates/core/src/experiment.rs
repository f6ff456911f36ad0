//! End-to-end experiments: dataset, frozen image embeddings, multi-seed
//! training of each model, reports. Outputs land in a seed-suffixed
//! directory and are byte-identical across reruns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compose::ModelKind;
use crate::embed::{export_embeddings, import_embeddings, EncoderKind, FrozenEncoder, ImageBank, DEFAULT_DIM, DEFAULT_NOISE};
use crate::error::{Error, Result};
use crate::report::{emit_report, ReportFormat};
use crate::rng;
use crate::scenegen::{build_dataset, DatasetKind, DatasetManifest, SplitCounts};
use crate::train::{run_seeds, split_seen_holdout, RunSummary, TrainConfig};

/// Environment variable that overrides the master seed.
pub const SEED_ENV: &str = "CBL_SEED";
pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_HOLDOUT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Examples per class in every split; overrides the per-split counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generalization: Option<usize>,
    /// Read this manifest instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Single,
            per_class: None,
            train: None,
            validation: None,
            generalization: None,
            manifest: None,
        }
    }
}

impl DatasetConfig {
    pub fn counts(&self) -> SplitCounts {
        if let Some(n) = self.per_class {
            return SplitCounts::per_class(self.kind, n);
        }
        let d = SplitCounts::defaults(self.kind);
        SplitCounts {
            train: self.train.unwrap_or(d.train),
            validation: self.validation.unwrap_or(d.validation),
            generalization: self.generalization.unwrap_or(d.generalization),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    /// Expected norm of the additive noise.
    pub sigma: f64,
    /// Raster side length, for the raster encoder.
    pub grid: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Structured,
            dim: DEFAULT_DIM,
            sigma: DEFAULT_NOISE,
            grid: DEFAULT_GRID,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Calibrated stacking on the generalization split.
    pub calibrate: bool,
    /// Share of training examples held out as seen-class validation data
    /// when calibrating.
    pub holdout_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            calibrate: false,
            holdout_fraction: DEFAULT_HOLDOUT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<ReportFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs"),
            formats: vec![ReportFormat::Csv, ReportFormat::Markdown],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub models: Vec<ModelKind>,
    pub dataset: DatasetConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            models: ModelKind::ALL.to_vec(),
            dataset: DatasetConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<ExperimentConfig> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if self.encoder.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("no report formats selected".into()));
        }
        if self.eval.calibrate && self.dataset.kind == DatasetKind::Relational {
            return Err(Error::Config("calibration applies to adjective-noun datasets only".into()));
        }
        Ok(())
    }

    /// `<output dir>/<dataset>-seed<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output.dir.join(format!("{}-seed{}", self.dataset.kind, self.seed))
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub summaries: Vec<RunSummary>,
    pub files: Vec<PathBuf>,
}

/// Generates the configured dataset, or reads it from disk.
pub fn load_or_build_dataset(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    match &cfg.dataset.manifest {
        Some(path) => {
            let m = DatasetManifest::read_jsonl(BufReader::new(File::open(path)?))?;
            if m.kind != cfg.dataset.kind {
                return Err(Error::Config(format!(
                    "manifest holds a {} dataset, configuration asks for {}",
                    m.kind, cfg.dataset.kind
                )));
            }
            Ok(m)
        }
        None => build_dataset(cfg.dataset.kind, cfg.dataset.counts(), cfg.seed),
    }
}

/// Cache file name keyed by encoder settings, seed and manifest contents.
fn cache_name(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<String> {
    let enc = &cfg.encoder;
    let mut key = format!("{}|{}|{}|{}|{}|", enc.kind, enc.dim, enc.sigma, enc.grid, cfg.seed).into_bytes();
    manifest.write_jsonl(&mut key)?;
    Ok(format!("embeddings-{:016x}.txt", rng::fnv1a(&key)))
}

/// Embeds every example with the configured encoder; the encoder and its
/// noise are seeded from the master seed.
pub fn compute_images(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<ImageBank> {
    let encoder = FrozenEncoder::build(
        &cfg.encoder.kind,
        cfg.encoder.dim,
        cfg.encoder.sigma,
        cfg.encoder.grid,
        rng::derive(cfg.seed, "encoder"),
    )?;
    encoder.embed_manifest(manifest, rng::derive(cfg.seed, "noise"))
}

/// Embeds every example, reusing the cached interchange file in `dir`
/// when one exists for the same encoder settings.
pub fn embed_cached(cfg: &ExperimentConfig, manifest: &DatasetManifest, dir: &Path) -> Result<ImageBank> {
    let path = dir.join(cache_name(cfg, manifest)?);
    if path.exists() {
        let bank = import_embeddings(BufReader::new(File::open(&path)?))?;
        if manifest.examples().all(|e| bank.contains_key(&e.id)) && bank.len() == manifest.len() {
            return Ok(bank);
        }
    }
    let bank = compute_images(cfg, manifest)?;
    let mut w = BufWriter::new(File::create(&path)?);
    export_embeddings(&mut w, &bank)?;
    w.flush()?;
    Ok(bank)
}

pub fn load_summaries(path: &Path) -> Result<Vec<RunSummary>> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_file(path: PathBuf, contents: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

/// Trains and evaluates every configured model and writes all artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    write_file(dir.join("config.toml"), cfg.to_toml_string()?.as_bytes(), &mut files)?;

    let manifest = load_or_build_dataset(cfg)?;
    let mut buf = Vec::new();
    manifest.write_jsonl(&mut buf)?;
    write_file(dir.join("manifest.jsonl"), &buf, &mut files)?;
    let images = embed_cached(cfg, &manifest, &dir)?;

    let (train_manifest, holdout) = if cfg.eval.calibrate {
        let (m, h) = split_seen_holdout(&manifest, cfg.eval.holdout_fraction, cfg.seed)?;
        (m, Some(h))
    } else {
        (manifest.clone(), None)
    };

    let mut summaries = Vec::new();
    for model in &cfg.models {
        let out = run_seeds(
            *model,
            &train_manifest,
            &images,
            &cfg.train,
            rng::derive(cfg.seed, "train"),
            holdout.as_deref(),
        )?;
        let name = model.name().to_lowercase();
        for (seed, params) in out.summary.seeds.iter().zip(&out.checkpoints) {
            write_file(
                dir.join(format!("history-{name}-seed{}.csv", seed.seed)),
                seed.history.to_csv().as_bytes(),
                &mut files,
            )?;
            let mut ck = Vec::new();
            params.write_checkpoint(&mut ck)?;
            write_file(dir.join(format!("checkpoint-{name}-seed{}.json", seed.seed)), &ck, &mut files)?;
        }
        summaries.push(out.summary);
    }
    write_file(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summaries)?.as_bytes(),
        &mut files,
    )?;
    files.extend(emit_report(&summaries, &cfg.output.formats, &dir)?);
    Ok(ExperimentOutput {
        dir,
        manifest,
        summaries,
        files,
    })
}
