use std::collections::BTreeMap;
use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tension_core::classifier::{
    backward, evaluate, forward, load_checkpoint, load_labelled_csv, save_checkpoint,
    split_dataset, train, undersample, weighted_bce_loss, ClassifierError, HeadConfig, ItemMeta,
    LabelledDataset, LabelledItem, Metrics, Mode, TensionModelParams, UndersampleStrategy,
    DEFAULT_DROP_INTRO,
};
use tension_core::embed::{EmbeddingVector, DEFAULT_HASH_DIMENSION};
use tension_core::synthetic::{hashing_dataset, synthetic_texts, SyntheticSpec};

const LN2: f64 = std::f64::consts::LN_2;

fn vector(values: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(values.to_vec(), "p")
}

fn random_params(config: HeadConfig, seed: u64) -> TensionModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..config.parameter_count())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    TensionModelParams::from_values(config, values).unwrap()
}

#[test]
fn loss_reference_values() {
    for w in [0.5, 1.0, 2.0, 10.0] {
        assert!((weighted_bce_loss(0.0, 0, w) - LN2).abs() < 1e-12);
    }
    assert!((weighted_bce_loss(0.0, 1, 2.0) - 2.0 * LN2).abs() < 1e-12);
    assert!(weighted_bce_loss(30.0, 1, 1.0) < 1e-12);
    assert!(weighted_bce_loss(-800.0, 1, 1.0).is_finite());
}

#[test]
fn forward_reference_values() {
    let mut config = HeadConfig::new(2);
    config.blocks = 0;
    let mut params = TensionModelParams::zeros(config).unwrap();
    params.final_weights_mut().copy_from_slice(&[1.0, 2.0]);
    *params.final_bias_mut() = 0.5;
    assert_eq!(
        forward(&params, &vector(&[1.0, 1.0]), Mode::Eval).unwrap(),
        3.5
    );

    let zero = TensionModelParams::zeros(HeadConfig::new(3)).unwrap();
    assert_eq!(
        forward(&zero, &vector(&[4.0, -1.0, 2.0]), Mode::Eval).unwrap(),
        0.0
    );
    assert!(matches!(
        forward(&zero, &vector(&[1.0, 2.0]), Mode::Eval),
        Err(ClassifierError::Dimension {
            expected: 3,
            found: 2
        })
    ));
}

#[test]
fn saturated_correct_logits_have_flat_gradient() {
    let mut config = HeadConfig::new(2);
    config.blocks = 0;
    let mut params = TensionModelParams::zeros(config).unwrap();
    params.final_weights_mut().copy_from_slice(&[40.0, -40.0]);
    let batch = vec![
        LabelledItem::new(vector(&[1.0, 0.0]), 1),
        LabelledItem::new(vector(&[0.0, 1.0]), 0),
    ];
    let grad = backward(&params, &batch, Mode::Eval).unwrap();
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm < 1e-10, "{norm:e}");
}

#[test]
fn pos_weight_scales_only_the_positive_contribution() {
    let mut config = HeadConfig::new(4);
    config.hidden_dim = 5;
    config.pos_weight = 1.5;
    let params = random_params(config, 8);
    let mut doubled = params.clone();
    doubled.config.pos_weight = 3.0;
    let pos = vec![LabelledItem::new(vector(&[0.2, -0.4, 0.6, 0.1]), 1)];
    let neg = vec![LabelledItem::new(vector(&[-0.3, 0.5, 0.2, -0.8]), 0)];
    let gp = backward(&params, &pos, Mode::Eval).unwrap();
    let gp2 = backward(&doubled, &pos, Mode::Eval).unwrap();
    for (a, b) in gp.iter().zip(&gp2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
    assert_eq!(
        backward(&params, &neg, Mode::Eval).unwrap(),
        backward(&doubled, &neg, Mode::Eval).unwrap()
    );
}

#[test]
fn eval_forward_is_pure_and_train_mode_is_seeded() {
    let params = random_params(HeadConfig::new(6), 2);
    let x = vector(&[0.1, 0.2, -0.3, 0.4, 0.0, -0.9]);
    let e1 = forward(&params, &x, Mode::Eval).unwrap();
    assert_eq!(e1, forward(&params, &x, Mode::Eval).unwrap());
    let t1 = forward(&params, &x, Mode::Train(5)).unwrap();
    assert_eq!(t1, forward(&params, &x, Mode::Train(5)).unwrap());
    let differs = (0..20).any(|s| forward(&params, &x, Mode::Train(s)).unwrap() != t1);
    assert!(differs);
}

#[test]
fn zero_bias_heads_ignore_input_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for blocks in 1..=3 {
        let mut config = HeadConfig::new(5);
        config.blocks = blocks;
        config.hidden_dim = 4;
        let mut params = random_params(config, blocks as u64);
        for i in params.linear_bias_indices() {
            params.values[i] = 0.0;
        }
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = rng.random_range(0.5..10.0);
            let run = |factor: f64| {
                let v: Vec<f64> = x.iter().map(|v| v * factor).collect();
                forward(&params, &vector(&v), Mode::Eval).unwrap()
            };
            // the layer-norm epsilon breaks exactness when the pre-norm variance is small
            let (a, b) = (run(1.0), run(c));
            assert!(
                (a - b).abs() < 1e-3 * a.abs().max(1.0),
                "N={blocks} c={c}: {a} vs {b}"
            );
            let (a, b) = (run(1e3), run(1e3 * c));
            assert!(
                (a - b).abs() < 1e-9 * a.abs().max(1.0),
                "N={blocks} c={c}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn metric_conventions() {
    let m = Metrics::from_counts(2, 1, 1, 6);
    assert!((m.precision - 0.6667).abs() < 1e-4);
    assert!((m.recall - 0.6667).abs() < 1e-4);
    assert_eq!(m.accuracy, 0.8);
    let all_negative = Metrics::from_counts(0, 0, 4, 6);
    assert_eq!((all_negative.precision, all_negative.recall), (0.0, 0.0));
    let perfect = Metrics::from_counts(3, 0, 0, 2);
    assert_eq!(
        (perfect.precision, perfect.recall, perfect.accuracy),
        (1.0, 1.0, 1.0)
    );
}

proptest! {
    #[test]
    fn metric_identities(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 0u64..1000) {
        prop_assume!(tp + fp + fn_ + tn > 0);
        let m = Metrics::from_counts(tp, fp, fn_, tn);
        prop_assert_eq!(m.total(), tp + fp + fn_ + tn);
        let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        prop_assert_eq!(m.precision, p);
        prop_assert_eq!(m.recall, r);
        prop_assert_eq!(m.accuracy, (tp + tn) as f64 / m.total() as f64);
    }

    #[test]
    fn loss_is_non_negative(z in -700.0f64..700.0, y in 0u8..2, w in 0.01f64..50.0) {
        let l = weighted_bce_loss(z, y, w);
        prop_assert!(l >= 0.0 && l.is_finite());
    }

    #[test]
    fn splits_are_disjoint_exhaustive_and_stratified(
        labels in prop::collection::vec(0u8..2, 2..200),
        ratio in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let ds = indexed_dataset(&labels);
        let positives = ds.positives();
        prop_assume!(positives > 0 && positives < ds.len());
        let (train, test) = split_dataset(&ds, ratio, seed, true).unwrap();
        prop_assert_eq!(train.len(), (ds.len() as f64 * ratio + 1e-9).floor() as usize);
        let mut seen: Vec<u32> = train.items().iter().chain(test.items()).map(|i| i.meta.ordinal.unwrap()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..ds.len() as u32).collect::<Vec<_>>());
        let want = positives as f64 * ratio;
        prop_assert!((train.positives() as f64 - want).abs() <= 1.0);
        prop_assert_eq!(split_dataset(&ds, ratio, seed, true).unwrap(), (train, test));
    }
}

fn indexed_dataset(labels: &[u8]) -> LabelledDataset {
    let items = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| LabelledItem {
            embedding: vector(&[i as f64, 1.0]),
            label: l,
            meta: ItemMeta {
                paragraph_id: None,
                session: Some("WHC-35".into()),
                ordinal: Some(i as u32),
            },
        })
        .collect();
    LabelledDataset::new(items).unwrap()
}

#[test]
fn split_sizes() {
    let labels: Vec<u8> = (0..1270).map(|i| u8::from(i % 4 == 0)).collect();
    let ds = indexed_dataset(&labels);
    let (train, test) = split_dataset(&ds, 0.8, 0, true).unwrap();
    assert_eq!((train.len(), test.len()), (1016, 254));
    let (train, test) = split_dataset(&ds, 0.8, 0, false).unwrap();
    assert_eq!((train.len(), test.len()), (1016, 254));

    let ten = indexed_dataset(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    let (train, test) = split_dataset(&ten, 0.8, 3, true).unwrap();
    assert_eq!((train.positives(), train.len() - train.positives()), (4, 4));
    assert_eq!((test.positives(), test.len() - test.positives()), (1, 1));

    assert!(matches!(
        split_dataset(&indexed_dataset(&[0, 0, 0]), 0.5, 0, true),
        Err(ClassifierError::EmptyClass(1))
    ));
    assert!(matches!(
        split_dataset(&ten, 1.0, 0, true),
        Err(ClassifierError::Ratio(_))
    ));
}

#[test]
fn undersampling() {
    let thirty = indexed_dataset(&[0; 30]);
    let kept = undersample(
        &thirty,
        UndersampleStrategy::DropIntro {
            n: DEFAULT_DROP_INTRO,
        },
    );
    assert_eq!(kept.len(), 10);
    assert!(kept.items().iter().all(|i| i.meta.ordinal.unwrap() >= 20));
    let ten = indexed_dataset(&[1; 10]);
    assert_eq!(
        undersample(&ten, UndersampleStrategy::DropIntro { n: 20 }).len(),
        0
    );

    let mixed = indexed_dataset(&(0..40).map(|i| u8::from(i % 4 == 0)).collect::<Vec<_>>());
    let same = undersample(
        &mixed,
        UndersampleStrategy::RandomNegativeDrop {
            fraction: 0.0,
            seed: 1,
        },
    );
    assert_eq!(same, mixed);
    let half = undersample(
        &mixed,
        UndersampleStrategy::RandomNegativeDrop {
            fraction: 0.5,
            seed: 1,
        },
    );
    assert_eq!(half.positives(), 10);
    assert_eq!(half.len(), 10 + 15);
}

#[test]
fn checkpoints_round_trip_and_detect_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("head.ckpt");
    let mut config = HeadConfig::new(7);
    config.hidden_dim = 5;
    config.blocks = 2;
    config.pos_weight = 10.0;
    let params = random_params(config, 31);
    save_checkpoint(&params, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), params);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[20] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(ClassifierError::Codec(_))
    ));
    std::fs::write(&path, &bytes[..10]).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn labelled_csv_loading() {
    let rows = load_labelled_csv("text,label\n\"Hello, world\",1\nplain,0\n".as_bytes()).unwrap();
    assert_eq!(
        rows,
        vec![("Hello, world".to_owned(), 1), ("plain".to_owned(), 0)]
    );
    let reordered = load_labelled_csv("label,source,text\n0,wiki,a\n".as_bytes()).unwrap();
    assert_eq!(reordered, vec![("a".to_owned(), 0)]);
    assert!(matches!(
        load_labelled_csv("text,label\nfine,1\nbad,2\n".as_bytes()),
        Err(ClassifierError::Csv { line: 3, .. })
    ));
    assert!(matches!(
        load_labelled_csv("body,y\nx,1\n".as_bytes()),
        Err(ClassifierError::Csv { line: 1, .. })
    ));
}

fn separable_set() -> LabelledDataset {
    hashing_dataset(
        &synthetic_texts(&SyntheticSpec::separable(500, 7)),
        DEFAULT_HASH_DIMENSION,
    )
}

#[test]
fn separable_synthetic_set_is_learned() {
    let ds = separable_set();
    let mut config = HeadConfig::new(DEFAULT_HASH_DIMENSION);
    config.epochs = 50;
    let start = Instant::now();
    let out = train(&ds, &config, None).unwrap();
    let elapsed = start.elapsed();
    let reached = out
        .history
        .iter()
        .find(|r| r.train_metrics.accuracy >= 0.95);
    assert!(
        reached.is_some(),
        "best {:?}",
        out.history
            .iter()
            .map(|r| r.train_metrics.accuracy)
            .fold(0.0, f64::max)
    );
    assert!(elapsed.as_secs_f64() < 30.0, "{elapsed:?}");
    assert!(out.history[9].train_loss < out.history[0].train_loss);
    assert_eq!(out.history.len(), 50);
    assert_eq!(out.history[0].epoch, 1);
}

#[test]
fn training_is_reproducible_and_composes() {
    let texts = synthetic_texts(&SyntheticSpec::separable(120, 3));
    let ds = hashing_dataset(&texts, 64);
    let mut config = HeadConfig::new(64);
    config.hidden_dim = 16;
    config.epochs = 3;
    let a = train(&ds, &config, None).unwrap();
    assert_eq!(a, train(&ds, &config, None).unwrap());

    let stage1 = a.params;
    let mut fine = config.clone();
    fine.seed = 9;
    fine.pos_weight = 10.0;
    let two_stage = train(&ds, &fine, Some(&stage1)).unwrap();
    let again = train(
        &ds,
        &fine,
        Some(&TensionModelParams::from_values(fine.clone(), stage1.values.clone()).unwrap()),
    )
    .unwrap();
    assert_eq!(two_stage, again);
    assert_eq!(two_stage.params.config, fine);

    let mut wrong = config.clone();
    wrong.hidden_dim = 8;
    assert!(matches!(
        train(&ds, &wrong, Some(&stage1)),
        Err(ClassifierError::Shape { .. })
    ));
}

#[test]
fn larger_pos_weight_does_not_lower_recall() {
    let spec = SyntheticSpec {
        items: 400,
        positive_fraction: 0.1,
        signal_words: 1,
        filler_words: 10,
        noise: 0.35,
        seed: 21,
    };
    let ds = hashing_dataset(&synthetic_texts(&spec), 128);
    assert_eq!(ds.positives(), 40);
    let mut recalls = BTreeMap::new();
    for w in [1u32, 10] {
        let mut config = HeadConfig::new(128);
        config.hidden_dim = 32;
        config.epochs = 8;
        config.pos_weight = f64::from(w);
        let out = train(&ds, &config, None).unwrap();
        recalls.insert(w, evaluate(&out.params, &ds, 0.5).unwrap().recall);
    }
    assert!(recalls[&10] >= recalls[&1], "{recalls:?}");
    assert!(recalls[&10] > 0.0);
}
