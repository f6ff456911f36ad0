//! `cbl`: generate datasets, train and evaluate composition models, render
//! reports.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on bad configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cbl_core::embed::{export_embeddings, import_embeddings, EncoderKind};
use cbl_core::eval::{evaluate_split, score_examples, taxonomy, TiePolicy};
use cbl_core::experiment::{self, load_summaries, ExperimentConfig, SEED_ENV};
use cbl_core::gradcheck::gradcheck;
use cbl_core::report::{emit_report, ReportFormat};
use cbl_core::scenegen::{build_dataset, DatasetKind, DatasetManifest, Split, SplitCounts};
use cbl_core::train::{Negatives, SoftmaxForm};
use cbl_core::{ComposerParams, ModelKind};

#[derive(Parser)]
#[command(name = "cbl", version, about = "Concept-binding lab for grounded phrase composition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset manifest.
    Gen(GenArgs),
    /// Embed a manifest with a frozen encoder and write the interchange file.
    Embed(EmbedArgs),
    /// Train models on an existing manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on every split of a manifest.
    Eval(EvalArgs),
    /// Render tables from a run summary.
    Report(ReportArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate, embed, train, evaluate and report in one go.
    Run(RunArgs),
}

#[derive(Args, Clone)]
struct SeedArg {
    /// Master seed.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct CountArgs {
    /// Examples per class in every split.
    #[arg(long, conflicts_with_all = ["train_count", "val_count", "gen_count"])]
    per_class: Option<usize>,
    #[arg(long = "train-count")]
    train_count: Option<usize>,
    #[arg(long = "val-count")]
    val_count: Option<usize>,
    #[arg(long = "gen-count")]
    gen_count: Option<usize>,
}

#[derive(Args, Clone)]
struct EncoderArgs {
    /// bag, structured, structured-pure, raster or import:<path>.
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    dim: Option<usize>,
    /// Expected norm of the encoder noise.
    #[arg(long)]
    sigma: Option<f64>,
    /// Raster side length.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Clone)]
struct TrainOpts {
    /// Model to train; repeat for several.
    #[arg(long = "model")]
    models: Vec<ModelKind>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `all` or a sampled count per example.
    #[arg(long)]
    negatives: Option<Negatives>,
    /// lowest_index, adversarial or random:<seed>.
    #[arg(long)]
    tie_policy: Option<TiePolicy>,
    #[arg(long)]
    logit_scale: Option<f64>,
    /// Score with raw dot products instead of scaled cosines.
    #[arg(long)]
    raw_scores: bool,
    /// standard or printed.
    #[arg(long)]
    softmax: Option<SoftmaxForm>,
    /// Calibrated stacking on the generalization split.
    #[arg(long)]
    calibrate: bool,
    /// Report format; repeat for several.
    #[arg(long = "format")]
    formats: Vec<ReportFormat>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    dataset: DatasetKind,
    #[command(flatten)]
    counts: CountArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Manifest path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Interchange file path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    train: TrainOpts,
    #[command(flatten)]
    seed: SeedArg,
    /// Output root; results go to `<out>/<dataset>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Precomputed image embeddings; otherwise the encoder is rebuilt from
    /// the seed.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value = "lowest_index")]
    tie_policy: TiePolicy,
    #[arg(long)]
    logit_scale: Option<f64>,
    #[arg(long)]
    raw_scores: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// `summary.json` written by `run` or `train`.
    #[arg(long)]
    summary: PathBuf,
    #[arg(long = "format", required = true)]
    formats: Vec<ReportFormat>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long = "model")]
    models: Vec<ModelKind>,
    #[arg(long = "dataset")]
    datasets: Vec<DatasetKind>,
    #[arg(long = "dim", default_values_t = [8, 16])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[command(flatten)]
    counts: CountArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    train: TrainOpts,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn apply_encoder(cfg: &mut ExperimentConfig, a: &EncoderArgs) {
    if let Some(k) = &a.encoder {
        cfg.encoder.kind = k.clone();
    }
    if let Some(d) = a.dim {
        cfg.encoder.dim = d;
    }
    if let Some(s) = a.sigma {
        cfg.encoder.sigma = s;
    }
    if let Some(g) = a.grid {
        cfg.encoder.grid = g;
    }
}

fn apply_train(cfg: &mut ExperimentConfig, a: &TrainOpts) {
    if !a.models.is_empty() {
        cfg.models = a.models.clone();
    }
    let t = &mut cfg.train;
    if let Some(v) = a.seeds {
        t.seeds = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.negatives {
        t.negatives = v;
    }
    if let Some(v) = a.tie_policy {
        t.tie_policy = v;
    }
    if let Some(v) = a.logit_scale {
        t.logit_scale = v;
    }
    if a.raw_scores {
        t.normalize_scores = false;
    }
    if let Some(v) = a.softmax {
        t.softmax = v;
    }
    if a.calibrate {
        cfg.eval.calibrate = true;
    }
    if !a.formats.is_empty() {
        cfg.output.formats = a.formats.clone();
    }
}

fn apply_counts(cfg: &mut ExperimentConfig, a: &CountArgs) {
    if a.per_class.is_some() {
        cfg.dataset.per_class = a.per_class;
    }
    cfg.dataset.train = a.train_count.or(cfg.dataset.train);
    cfg.dataset.validation = a.val_count.or(cfg.dataset.validation);
    cfg.dataset.generalization = a.gen_count.or(cfg.dataset.generalization);
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(DatasetManifest::read_jsonl(BufReader::new(file))?)
}

fn base_config(seed: &SeedArg) -> ExperimentConfig {
    ExperimentConfig {
        seed: seed.seed.unwrap_or(0),
        ..ExperimentConfig::default()
    }
}

fn print_run(out: &experiment::ExperimentOutput) {
    for s in &out.summaries {
        println!(
            "{:<5} train {:6.2} ± {:4.2}  val {:6.2} ± {:4.2}  gen {:6.2} ± {:4.2}",
            s.model.name(),
            s.accuracy.train.mean,
            s.accuracy.train.stderr,
            s.accuracy.validation.mean,
            s.accuracy.validation.stderr,
            s.accuracy.generalization.mean,
            s.accuracy.generalization.stderr,
        );
    }
    println!("results in {}", out.dir.display());
}

fn gen(a: GenArgs) -> Result<()> {
    let counts = match a.counts.per_class {
        Some(n) => SplitCounts::per_class(a.dataset, n),
        None => {
            let d = SplitCounts::defaults(a.dataset);
            SplitCounts {
                train: a.counts.train_count.unwrap_or(d.train),
                validation: a.counts.val_count.unwrap_or(d.validation),
                generalization: a.counts.gen_count.unwrap_or(d.generalization),
            }
        }
    };
    let manifest = build_dataset(a.dataset, counts, a.seed.seed.unwrap_or(0))?;
    if let Some(parent) = a.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&a.out)?);
    manifest.write_jsonl(&mut w)?;
    w.flush()?;
    println!("{} examples written to {}", manifest.len(), a.out.display());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let mut cfg = base_config(&a.seed);
    apply_encoder(&mut cfg, &a.encoder);
    let bank = experiment::compute_images(&cfg, &manifest)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    export_embeddings(&mut w, &bank)?;
    w.flush()?;
    println!("{} embeddings written to {}", bank.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let mut cfg = base_config(&a.seed);
    cfg.dataset.kind = manifest.kind;
    cfg.dataset.manifest = Some(a.manifest.clone());
    apply_encoder(&mut cfg, &a.encoder);
    apply_train(&mut cfg, &a.train);
    if let Some(o) = a.out {
        cfg.output.dir = o;
    }
    print_run(&experiment::run_experiment(&cfg)?);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let params = ComposerParams::read_checkpoint(BufReader::new(
        File::open(&a.checkpoint).with_context(|| format!("opening {}", a.checkpoint.display()))?,
    ))?;
    let images = match &a.embeddings {
        Some(p) => import_embeddings(BufReader::new(File::open(p)?))?,
        None => {
            let mut cfg = base_config(&a.seed);
            apply_encoder(&mut cfg, &a.encoder);
            experiment::compute_images(&cfg, &manifest)?
        }
    };
    let mut tc = cbl_core::TrainConfig::default();
    if let Some(s) = a.logit_scale {
        tc.logit_scale = s;
    }
    tc.normalize_scores = !a.raw_scores;
    tc.validate()?;
    let scorer = tc.scorer();
    for split in Split::ALL {
        let scored = score_examples(&params, &manifest.split(split).examples, &images, &scorer)?;
        let ev = evaluate_split(&scored, a.tie_policy)?;
        println!(
            "{:<14} accuracy {:6.2}%  ties {:5.2}%  ({} examples)",
            split.name(),
            100.0 * ev.accuracy,
            100.0 * ev.tie_rate(),
            ev.predictions.len()
        );
        if split == Split::Generalization {
            let tax = taxonomy(manifest.kind, &ev.predictions)?;
            match tax.percentages() {
                Some(p) => {
                    let cells: Vec<String> = tax
                        .labels()
                        .iter()
                        .zip(&p)
                        .map(|(l, v)| format!("{l} {v:.2}%"))
                        .collect();
                    println!("errors: {}", cells.join(", "));
                }
                None => println!("errors: none"),
            }
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let summaries = load_summaries(&a.summary)?;
    for p in emit_report(&summaries, &a.formats, &a.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<bool> {
    let models = if a.models.is_empty() { ModelKind::ALL.to_vec() } else { a.models };
    let datasets = if a.datasets.is_empty() {
        vec![DatasetKind::Single, DatasetKind::Relational]
    } else {
        a.datasets
    };
    let mut ok = true;
    for model in &models {
        for kind in &datasets {
            for dim in &a.dims {
                let r = gradcheck(*model, *kind, *dim, a.trials, a.seed)?;
                let pass = r.compose_error < a.tolerance && r.loss_error < a.tolerance;
                ok &= pass;
                println!(
                    "{:<4} {:<10} d={:<3} compose {:.2e}  loss {:.2e}  {}",
                    model.name(),
                    kind.name(),
                    dim,
                    r.compose_error,
                    r.loss_error,
                    if pass { "ok" } else { "FAIL" }
                );
            }
        }
    }
    Ok(ok)
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.seed.seed {
        cfg.seed = s;
    }
    if let Some(k) = a.dataset {
        cfg.dataset.kind = k;
    }
    apply_counts(&mut cfg, &a.counts);
    apply_encoder(&mut cfg, &a.encoder);
    apply_train(&mut cfg, &a.train);
    if let Some(o) = a.out {
        cfg.output.dir = o;
    }
    print_run(&experiment::run_experiment(&cfg)?);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cbl_core::Error>() {
        Some(e) if e.is_config() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Embed(a) => embed(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
        Command::Gradcheck(a) => match gradcheck_cmd(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("gradient check failed");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Command::Run(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
