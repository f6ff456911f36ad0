use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use cbl_core::compose::compose_with;
use cbl_core::embed::{encode_bag, encode_structured, normalize, ConceptTable, Embedding};
use cbl_core::eval::{apply_calibration, evaluate_split, mean_stderr, taxonomy, CandidateScores, TiePolicy};
use cbl_core::gradcheck::random_params;
use cbl_core::linalg::cosine;
use cbl_core::rng::stream;
use cbl_core::scenegen::{
    build_dataset, check_class_splits, phrase_universe, relation_holds, relational_exclusive, sample_scene,
    DatasetKind, Phrase, SceneClass, Split, SplitCounts,
};
use cbl_core::train::{batch_loss, Adam, Scorer, SoftmaxForm, TrainExample};
use cbl_core::{ComposerParams, ModelKind};

fn kinds() -> impl Strategy<Value = DatasetKind> {
    prop_oneof![Just(DatasetKind::Single), Just(DatasetKind::Two), Just(DatasetKind::Relational)]
}

fn models() -> impl Strategy<Value = ModelKind> {
    proptest::sample::select(ModelKind::ALL.to_vec())
}

fn class_for(kind: DatasetKind, pick: usize, rng: &mut impl Rng) -> SceneClass {
    let u = phrase_universe(kind);
    let p = u[pick % u.len()];
    match kind {
        DatasetKind::Single => SceneClass::Single(p),
        DatasetKind::Relational => SceneClass::Relation(p),
        DatasetKind::Two => loop {
            let q = u[rng.random_range(0..u.len())];
            if let (Phrase::AdjNoun { adjective: a, noun: n }, Phrase::AdjNoun { adjective: b, noun: m }) = (p, q) {
                if a != b && n != m {
                    break SceneClass::Pair(p, q);
                }
            }
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_scenes_are_valid_and_depict_their_class(kind in kinds(), pick in 0usize..100, seed in any::<u64>()) {
        let mut r = stream(seed, 0);
        let class = class_for(kind, pick, &mut r);
        let scene = sample_scene(&class, &mut r).unwrap();
        scene.validate().unwrap();
        match class {
            SceneClass::Single(p) => prop_assert!(relation_holds(&scene, &p)),
            SceneClass::Pair(p, q) => prop_assert!(relation_holds(&scene, &p) && relation_holds(&scene, &q)),
            SceneClass::Relation(p) => {
                prop_assert!(relation_holds(&scene, &p));
                prop_assert!(relational_exclusive(&scene));
            }
        }
    }

    #[test]
    fn manifests_respect_class_splits(kind in kinds(), seed in any::<u64>()) {
        let m = build_dataset(kind, SplitCounts::per_class(kind, 2), seed).unwrap();
        check_class_splits(&m).unwrap();
        for split in Split::ALL {
            let data = m.split(split);
            for ex in &data.examples {
                prop_assert!(data.classes.contains(&ex.true_phrase));
                prop_assert!(relation_holds(&ex.scene, &ex.true_phrase));
                let distinct: BTreeSet<Phrase> = ex.candidates().into_iter().collect();
                prop_assert_eq!(distinct.len(), 5);
                for d in &ex.distractors {
                    prop_assert!(!relation_holds(&ex.scene, d));
                }
            }
        }
    }

    #[test]
    fn composition_keeps_dimension(model in models(), kind in kinds(), dim in 2usize..24, seed in any::<u64>()) {
        let params = random_params(model, kind, dim, seed).unwrap();
        for p in phrase_universe(kind) {
            let e = compose_with(&params, &p).unwrap();
            prop_assert_eq!(e.dim(), dim);
            prop_assert!(e.is_finite());
        }
    }

    #[test]
    fn order_sensitive_models_separate_swapped_arguments(
        model in prop_oneof![Just(ModelKind::TL), Just(ModelKind::RF)],
        dim in 16usize..48,
        seed in any::<u64>(),
    ) {
        let params = random_params(model, DatasetKind::Relational, dim, seed).unwrap();
        for p in phrase_universe(DatasetKind::Relational) {
            let Phrase::Rel { subject, relation, object } = p else { unreachable!() };
            let q = Phrase::Rel { subject: object, relation, object: subject };
            let (a, b) = (compose_with(&params, &p).unwrap(), compose_with(&params, &q).unwrap());
            prop_assert!(a.cosine(&b) < 0.999, "{p}: cosine {}", a.cosine(&b));
        }
    }

    #[test]
    fn tiny_adam_step_does_not_raise_the_loss(model in models(), seed in any::<u64>()) {
        let kind = DatasetKind::Relational;
        let dim = 12;
        let mut params: ComposerParams = random_params(model, kind, dim, seed).unwrap();
        let u = phrase_universe(kind);
        let mut r = stream(seed, 1);
        let images: Vec<Embedding> = (0..4)
            .map(|_| Embedding((0..dim).map(|_| r.random_range(-1.0..1.0)).collect()))
            .collect();
        let batch: Vec<TrainExample> = images
            .iter()
            .enumerate()
            .map(|(i, img)| TrainExample {
                image: img,
                positive: u[i],
                negatives: u[4..8].to_vec(),
            })
            .collect();
        let scorer = Scorer::default();
        let (before, grads) = batch_loss(&params, &batch, &scorer, SoftmaxForm::Standard, 1e-5).unwrap();
        let mut adam = Adam::new(params.len(), 1e-6);
        adam.step(params.values_mut(), grads.values());
        let (after, _) = batch_loss(&params, &batch, &scorer, SoftmaxForm::Standard, 1e-5).unwrap();
        prop_assert!(after <= before + 1e-12, "{before} -> {after}");
    }

    #[test]
    fn accuracy_ignores_example_order(scores in prop::collection::vec(prop::array::uniform5(-3i32..3), 1..40), seed in any::<u64>()) {
        let u = phrase_universe(DatasetKind::Single);
        let rows: Vec<CandidateScores> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| CandidateScores {
                id: format!("ex-{i}"),
                candidates: u[..5].to_vec(),
                scores: s.iter().map(|v| *v as f64).collect(),
                true_index: i % 5,
            })
            .collect();
        let mut shuffled = rows.clone();
        let mut r = stream(seed, 2);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.random_range(0..=i));
        }
        for policy in [TiePolicy::LowestIndex, TiePolicy::Adversarial, TiePolicy::Random(seed)] {
            let a = evaluate_split(&rows, policy).unwrap();
            let b = evaluate_split(&shuffled, policy).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            let adv = evaluate_split(&rows, TiePolicy::Adversarial).unwrap().accuracy;
            prop_assert!(adv <= a.accuracy);
        }
        let preds = evaluate_split(&rows, TiePolicy::LowestIndex).unwrap().predictions;
        let seen: BTreeSet<Phrase> = u[..2].iter().copied().collect();
        prop_assert_eq!(apply_calibration(&preds, 0.0, &seen), preds.clone());
        let tax = taxonomy(DatasetKind::Single, &preds).unwrap();
        let wrong = preds.iter().filter(|p| !p.correct()).count();
        prop_assert_eq!(tax.total(), wrong);
        if let Some(pct) = tax.percentages() {
            prop_assert!((pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_and_stderr_match_definition(values in prop::collection::vec(-100.0f64..100.0, 2..12)) {
        let (m, se) = mean_stderr(&values);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((m - mean).abs() < 1e-9);
        prop_assert!((se - (var / n).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn checkpoints_round_trip(model in models(), kind in kinds(), seed in any::<u64>()) {
        let params = random_params(model, kind, 6, seed).unwrap();
        let mut buf = Vec::new();
        params.write_checkpoint(&mut buf).unwrap();
        let back = ComposerParams::read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(back, params);
    }

    #[test]
    fn normalized_vectors_have_unit_norm(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
        let n = normalize(&Embedding(v)).unwrap();
        prop_assert!((n.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bag_encoding_ignores_positions(seed in any::<u64>(), dx in -0.5f64..0.5) {
        let table = ConceptTable::new(seed, 32).unwrap();
        let mut r = stream(seed, 3);
        let class = class_for(DatasetKind::Relational, seed as usize, &mut r);
        let scene = sample_scene(&class, &mut r).unwrap();
        let mut moved = scene.clone();
        moved.objects.iter_mut().for_each(|o| o.x = (o.x + dx).clamp(-3.0, 3.0));
        moved.objects.swap(0, 1);
        prop_assert_eq!(encode_bag(&scene, &table, 0.0, &mut r), encode_bag(&moved, &table, 0.0, &mut r));
    }

    #[test]
    fn structured_encoding_sees_swapped_attributes(seed in any::<u64>(), dim in 128usize..257) {
        let table = ConceptTable::new(seed, dim).unwrap();
        let mut r = stream(seed, 4);
        let class = class_for(DatasetKind::Two, seed as usize, &mut r);
        let scene = sample_scene(&class, &mut r).unwrap();
        let mut swapped = scene.clone();
        let (c0, c1) = (scene.objects[0].color, scene.objects[1].color);
        swapped.objects[0].color = c1;
        swapped.objects[1].color = c0;
        let a = encode_structured(&scene, &table, 0.0, true, &mut r);
        let b = encode_structured(&swapped, &table, 0.0, true, &mut r);
        prop_assert!(cosine(a.as_slice(), b.as_slice()) < 0.99);
    }
}
