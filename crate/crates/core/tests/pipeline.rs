use cbl_core::embed::{EncoderKind, FrozenEncoder};
use cbl_core::eval::{evaluate_split, score_examples, TiePolicy};
use cbl_core::experiment::{load_summaries, run_experiment, ExperimentConfig};
use cbl_core::gradcheck::random_params;
use cbl_core::scenegen::{build_dataset, DatasetKind, Split, SplitCounts};
use cbl_core::train::{run_seeds, Scorer, TrainConfig};
use cbl_core::ModelKind;

#[test]
fn small_experiment_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 2;
    cfg.models = vec![ModelKind::Add, ModelKind::RF];
    cfg.dataset.kind = DatasetKind::Two;
    cfg.dataset.per_class = Some(4);
    cfg.encoder.dim = 32;
    cfg.train.seeds = 2;
    cfg.train.epochs = 3;
    cfg.eval.calibrate = true;
    cfg.output.dir = tmp.path().to_path_buf();
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.dir, tmp.path().join("two-seed2"));
    assert_eq!(out.summaries.len(), 2);
    for name in ["config.toml", "manifest.jsonl", "summary.json", "accuracy.csv", "accuracy_adversarial.md", "taxonomy.csv", "calibration.md"] {
        assert!(out.dir.join(name).is_file(), "{name}");
    }
    let histories = out.files.iter().filter(|p| p.to_string_lossy().contains("history-")).count();
    assert_eq!(histories, 4);
    for s in &out.summaries {
        assert_eq!(s.seeds.len(), 2);
        for seed in &s.seeds {
            assert!((1..=3).contains(&seed.selected_epoch));
            assert!(seed.calibration.is_some());
        }
        assert!(s.adversarial_accuracy.train.mean <= s.accuracy.train.mean);
    }
    assert_eq!(load_summaries(&out.dir.join("summary.json")).unwrap(), out.summaries);
    let reloaded = ExperimentConfig::from_file(&out.dir.join("config.toml")).unwrap();
    assert_eq!(reloaded, cfg);
}

#[test]
fn commutative_models_never_win_cleanly_on_relations() {
    let kind = DatasetKind::Relational;
    let m = build_dataset(kind, SplitCounts::per_class(kind, 5), 1).unwrap();
    let images = FrozenEncoder::build(&EncoderKind::Structured, 64, 0.05, 32, 1)
        .unwrap()
        .embed_manifest(&m, 2)
        .unwrap();
    let scorer = Scorer::default();
    for model in [ModelKind::Add, ModelKind::Mult, ModelKind::Conv] {
        let params = random_params(model, kind, 64, 5).unwrap();
        for split in Split::ALL {
            let scored = score_examples(&params, &m.split(split).examples, &images, &scorer).unwrap();
            let ev = evaluate_split(&scored, TiePolicy::LowestIndex).unwrap();
            for p in ev.predictions.iter().filter(|p| p.correct()) {
                assert!(p.tie, "{model} {}: true label won without a tie", p.id);
            }
        }
    }
}

#[test]
fn training_improves_on_initialization() {
    let kind = DatasetKind::Single;
    let m = build_dataset(kind, SplitCounts::per_class(kind, 30), 3).unwrap();
    let images = FrozenEncoder::build(&EncoderKind::Structured, 64, 0.05, 32, 4)
        .unwrap()
        .embed_manifest(&m, 5)
        .unwrap();
    let cfg = TrainConfig {
        seeds: 1,
        epochs: 5,
        learning_rate: 5e-3,
        ..TrainConfig::default()
    };
    let out = run_seeds(ModelKind::Add, &m, &images, &cfg, 0, None).unwrap();
    let history = &out.summary.seeds[0].history.records;
    assert_eq!(history.len(), 5);
    assert!(history.last().unwrap().train_loss < history[0].train_loss);
    assert!(out.summary.accuracy.train.mean > 50.0, "{:?}", out.summary.accuracy);
}
