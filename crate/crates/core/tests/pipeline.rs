#![allow(clippy::field_reassign_with_default)]

//! End-to-end behavior of the training pipeline on small synthetic data.

use std::collections::HashMap;

use contra_re::augment::{AugmentConfig, AugmentOp, SynonymLexicon};
use contra_re::contrastive::cosine_sim;
use contra_re::depgraph::{EntitySpan, EntityType, ParsedSentence};
use contra_re::encoder::{build_vocab, encode_forward, EncoderConfig, EncoderParams, Vocab};
use contra_re::eval::micro_prf;
use contra_re::kbgen::{RelationInstance, RelationTask};
use contra_re::pipeline::{
    contrastive_pretrain, finetune, load_model, save_model, OptimizerKind, TrainConfig,
};
use contra_re::rng::CounterRng;
use contra_re::synth;

fn tiny_encoder(vocab_size: usize, classes: usize, seed: u64) -> EncoderConfig {
    EncoderConfig {
        layers: 1,
        heads: 2,
        d: 16,
        d_ff: 32,
        d_h: 16,
        d_z: 8,
        max_len: 24,
        vocab_size,
        classes,
        init_seed: seed,
    }
}

/// Two clusters of sentences over disjoint token pools. Views augmented by
/// SR stay inside their cluster because the lexicon maps pool words to pool
/// words.
struct ClusterCorpus {
    instances: Vec<RelationInstance>,
    parses: HashMap<String, ParsedSentence>,
    lexicon: SynonymLexicon,
    vocab: Vocab,
}

fn cluster_corpus(per_cluster: usize) -> ClusterCorpus {
    let pools: [Vec<String>; 2] = [
        (0..8).map(|i| format!("left{i}")).collect(),
        (0..8).map(|i| format!("right{i}")).collect(),
    ];
    let cues = ["joins", "avoids"];
    let mut lexicon = SynonymLexicon::new();
    for pool in &pools {
        for w in pool {
            let syns: Vec<String> = pool.iter().filter(|s| *s != w).take(3).cloned().collect();
            lexicon.insert(w, syns).unwrap();
        }
    }

    let mut rng = CounterRng::new(7);
    let mut instances = Vec::new();
    let mut parses = HashMap::new();
    for cluster in 0..2 {
        for i in 0..per_cluster {
            let pool = &pools[cluster];
            let mut tokens = vec![
                pool[rng.below(pool.len())].clone(),
                pool[rng.below(pool.len())].clone(),
                "@PROTEIN$".to_string(),
                cues[cluster].to_string(),
                "@PROTEIN$".to_string(),
                pool[rng.below(pool.len())].clone(),
            ];
            tokens.push(".".into());
            let heads = vec![4, 1, 4, 0, 4, 4, 4];
            let deprels: Vec<String> = vec!["advmod", "dep", "nsubj", "root", "obj", "advmod", "punct"]
                .into_iter()
                .map(String::from)
                .collect();
            let id = format!("c{cluster}-{i}#0-1");
            let parsed = ParsedSentence::new(id.clone(), tokens.clone(), heads, deprels).unwrap();
            instances.push(RelationInstance {
                instance_id: id.clone(),
                tokens,
                e1: EntitySpan::new(2, 3, EntityType::Protein),
                e2: EntitySpan::new(4, 5, EntityType::Protein),
                relation_label: None,
                task: RelationTask::Ppi,
                in_kb: None,
            });
            parses.insert(id, parsed);
        }
    }
    let rows: Vec<&[String]> = instances.iter().map(|i| i.tokens.as_slice()).collect();
    let vocab = build_vocab(rows.iter().copied(), 1).unwrap();
    ClusterCorpus {
        instances,
        parses,
        lexicon,
        vocab,
    }
}

fn cluster_train_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.pretrain.epochs = 6;
    cfg.pretrain.batch_size = 4;
    cfg.pretrain.learning_rate = 0.05;
    cfg.pretrain.augment = AugmentConfig::new(AugmentOp::Sr, 0.3, 11);
    cfg
}

#[test]
fn zero_learning_rate_leaves_params_unchanged() {
    let corpus = cluster_corpus(4);
    let mut cfg = cluster_train_config(1);
    cfg.pretrain.learning_rate = 0.0;
    cfg.pretrain.epochs = 2;
    let enc = tiny_encoder(corpus.vocab.len(), 2, 5);
    let params = EncoderParams::init(&enc).unwrap();
    let before = params.clone();
    let (after, record) = contrastive_pretrain(
        &cfg,
        params,
        &corpus.vocab,
        &corpus.instances,
        &corpus.lexicon,
        &corpus.parses,
        None,
    )
    .unwrap();
    assert_eq!(after, before);
    assert_eq!(record.epoch_losses.len(), 2);

    // Same for fine-tuning.
    let synth_corpus = synth::generate(&synth::SynthSpec {
        n_train: 12,
        n_test: 0,
        seed: 3,
        correlation: 0.0,
        n_entities: 10,
    })
    .unwrap();
    let rows: Vec<&[String]> = synth_corpus.train.iter().map(|i| i.tokens.as_slice()).collect();
    let vocab = build_vocab(rows.iter().copied(), 1).unwrap();
    let enc = tiny_encoder(vocab.len(), 4, 5);
    let params = EncoderParams::init(&enc).unwrap();
    let before = params.clone();
    let mut cfg = TrainConfig::default();
    cfg.finetune.learning_rate = 0.0;
    cfg.finetune.epochs = 2;
    let (model, _) = finetune(
        &cfg,
        params,
        &vocab,
        &synth_corpus.train,
        None,
        synth::NEGATIVE_LABEL,
    )
    .unwrap();
    assert_eq!(model.params, before);
}

#[test]
fn missing_parse_errors_with_instance_id() {
    let corpus = cluster_corpus(4);
    let cfg = cluster_train_config(1);
    let enc = tiny_encoder(corpus.vocab.len(), 2, 5);
    let params = EncoderParams::init(&enc).unwrap();
    let mut parses = corpus.parses.clone();
    parses.remove("c1-2#0-1");
    let err = contrastive_pretrain(
        &cfg,
        params,
        &corpus.vocab,
        &corpus.instances,
        &corpus.lexicon,
        &parses,
        None,
    )
    .unwrap_err();
    assert!(err.to_string().contains("c1-2#0-1"), "{err}");
}

#[test]
fn pretraining_separates_clusters_and_loss_trends_down() {
    let corpus = cluster_corpus(8);
    let cfg = cluster_train_config(2);
    let enc = tiny_encoder(corpus.vocab.len(), 2, 9);
    let params = EncoderParams::init(&enc).unwrap();
    let (params, record) = contrastive_pretrain(
        &cfg,
        params,
        &corpus.vocab,
        &corpus.instances,
        &corpus.lexicon,
        &corpus.parses,
        None,
    )
    .unwrap();

    // Loss over the first 3 epochs non-increasing within +2%.
    let l = &record.epoch_losses;
    assert!(l.len() >= 3);
    assert!(l[1] <= l[0] * 1.02, "epoch 2 loss {} vs epoch 1 {}", l[1], l[0]);
    assert!(l[2] <= l[1] * 1.02, "epoch 3 loss {} vs epoch 2 {}", l[2], l[1]);

    // Held-out views: fresh augmentations under a different seed.
    let held_cfg = AugmentConfig::new(AugmentOp::Sr, 0.3, 999);
    let mut reps: Vec<(usize, ndarray::Array1<f64>)> = Vec::new();
    for inst in &corpus.instances {
        let parse = &corpus.parses[&inst.instance_id];
        let sdp =
            contra_re::depgraph::shortest_dependency_path(parse, &inst.e1, &inst.e2).unwrap();
        let pair = contra_re::augment::make_views(inst, &sdp, &held_cfg, &corpus.lexicon).unwrap();
        let cluster = usize::from(inst.instance_id.starts_with("c1"));
        for view in [&pair.view_a, &pair.view_b] {
            let ids = corpus.vocab.encode(view, enc.max_len);
            let (h, _) = encode_forward(&params, &ids).unwrap();
            reps.push((cluster, h));
        }
    }
    let mut within = Vec::new();
    let mut cross = Vec::new();
    for i in 0..reps.len() {
        for j in (i + 1)..reps.len() {
            let cos = cosine_sim(&reps[i].1, &reps[j].1).unwrap();
            if reps[i].0 == reps[j].0 {
                within.push(cos);
            } else {
                cross.push(cos);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&within) > mean(&cross),
        "within {} not above cross {}",
        mean(&within),
        mean(&cross)
    );
}

#[test]
fn same_seed_gives_byte_identical_checkpoints() {
    let corpus = cluster_corpus(4);
    let mut cfg = cluster_train_config(17);
    cfg.pretrain.epochs = 3;
    cfg.pretrain.epoch_grid = vec![2];
    let enc = tiny_encoder(corpus.vocab.len(), 2, 5);

    let mut artifacts: Vec<(Vec<u8>, Vec<f64>)> = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let params = EncoderParams::init(&enc).unwrap();
        let (_, record) = contrastive_pretrain(
            &cfg,
            params,
            &corpus.vocab,
            &corpus.instances,
            &corpus.lexicon,
            &corpus.parses,
            Some(dir.path()),
        )
        .unwrap();
        let bytes = std::fs::read(dir.path().join("pretrained.ckpt")).unwrap();
        artifacts.push((bytes, record.epoch_losses));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "checkpoint bytes differ");
    assert_eq!(artifacts[0].1, artifacts[1].1, "loss traces differ");
}

#[test]
fn stripped_head_does_not_change_classifier_outputs() {
    let corpus = cluster_corpus(4);
    let mut cfg = cluster_train_config(3);
    cfg.pretrain.epochs = 2;
    let enc = tiny_encoder(corpus.vocab.len(), 2, 5);
    let dir = tempfile::tempdir().unwrap();
    let params = EncoderParams::init(&enc).unwrap();
    let (full, _) = contrastive_pretrain(
        &cfg,
        params,
        &corpus.vocab,
        &corpus.instances,
        &corpus.lexicon,
        &corpus.parses,
        Some(dir.path()),
    )
    .unwrap();
    let stripped = contra_re::encoder::load_checkpoint(&dir.path().join("pretrained.ckpt")).unwrap();
    assert!(stripped.proj.w1.iter().all(|&x| x == 0.0));
    for inst in corpus.instances.iter().take(4) {
        let ids = corpus.vocab.encode(&inst.tokens, enc.max_len);
        let (h_full, _) = encode_forward(&full, &ids).unwrap();
        let (h_stripped, _) = encode_forward(&stripped, &ids).unwrap();
        assert_eq!(h_full, h_stripped);
        let a = contra_re::encoder::classify_forward(&full, &h_full).unwrap();
        let b = contra_re::encoder::classify_forward(&stripped, &h_stripped).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn single_example_memorization() {
    let corpus = synth::generate(&synth::SynthSpec {
        n_train: 4,
        n_test: 0,
        seed: 21,
        correlation: 0.0,
        n_entities: 6,
    })
    .unwrap();
    let one = &corpus.train[..1];
    // One class in the data; classifier must still pick it out of two.
    let mut train: Vec<RelationInstance> = one.to_vec();
    train[0].relation_label = Some("rel".into());
    let mut second = corpus.train[1].clone();
    second.relation_label = Some("other".into());
    train.push(second);

    let rows: Vec<&[String]> = train.iter().map(|i| i.tokens.as_slice()).collect();
    let vocab = build_vocab(rows.iter().copied(), 1).unwrap();
    let enc = tiny_encoder(vocab.len(), 2, 13);
    let params = EncoderParams::init(&enc).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.finetune.epochs = 150;
    cfg.finetune.batch_size = 2;
    cfg.finetune.learning_rate = 0.01;
    cfg.optimizer.kind = OptimizerKind::adam();
    cfg.optimizer.grad_clip = Some(5.0);
    let (_, record) = finetune(&cfg, params, &vocab, &train, None, "other").unwrap();
    let last = *record.epoch_losses.last().unwrap();
    assert!(last < 0.01, "memorization loss {last}");
}

#[test]
fn linearly_separable_task_reaches_perfect_train_f1() {
    // Cue tokens on the SDP fully determine the label; distractors are
    // uncorrelated (shared pool only).
    let corpus = synth::generate(&synth::SynthSpec {
        n_train: 32,
        n_test: 0,
        seed: 5,
        correlation: 0.0,
        n_entities: 10,
    })
    .unwrap();
    let rows: Vec<&[String]> = corpus.train.iter().map(|i| i.tokens.as_slice()).collect();
    let vocab = build_vocab(rows.iter().copied(), 1).unwrap();
    let enc = tiny_encoder(vocab.len(), 4, 23);
    let params = EncoderParams::init(&enc).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.finetune.epochs = 80;
    cfg.finetune.batch_size = 8;
    cfg.finetune.learning_rate = 0.01;
    cfg.optimizer.kind = OptimizerKind::adam();
    cfg.optimizer.grad_clip = Some(5.0);
    let (model, _) = finetune(&cfg, params, &vocab, &corpus.train, None, synth::NEGATIVE_LABEL)
        .unwrap();
    let preds: Vec<String> = corpus
        .train
        .iter()
        .map(|i| model.predict_label(&i.tokens).unwrap())
        .collect();
    let golds: Vec<String> = corpus
        .train
        .iter()
        .map(|i| i.relation_label.clone().unwrap())
        .collect();
    let report = micro_prf(&preds, &golds, synth::NEGATIVE_LABEL).unwrap();
    assert_eq!(report.f1, 1.0, "train micro-F {}", report.f1);
}

#[test]
fn dev_set_selects_best_epoch_and_model_roundtrips() {
    let corpus = synth::generate(&synth::SynthSpec {
        n_train: 40,
        n_test: 16,
        seed: 9,
        correlation: 0.0,
        n_entities: 10,
    })
    .unwrap();
    let rows: Vec<&[String]> = corpus
        .train
        .iter()
        .chain(&corpus.test)
        .map(|i| i.tokens.as_slice())
        .collect();
    let vocab = build_vocab(rows.iter().copied(), 1).unwrap();
    let enc = tiny_encoder(vocab.len(), 4, 31);
    let params = EncoderParams::init(&enc).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.finetune.epochs = 30;
    cfg.finetune.batch_size = 8;
    cfg.finetune.learning_rate = 0.01;
    cfg.optimizer.kind = OptimizerKind::adam();
    cfg.optimizer.grad_clip = Some(5.0);
    let (model, record) = finetune(
        &cfg,
        params,
        &vocab,
        &corpus.train,
        Some(&corpus.test),
        synth::NEGATIVE_LABEL,
    )
    .unwrap();
    let dev = record.dev_metrics.as_ref().unwrap();
    assert_eq!(dev.len(), 30);
    let best = dev.iter().map(|m| m.micro_f1).fold(f64::MIN, f64::max);
    // The retained parameters reproduce the best dev score.
    let preds: Vec<String> = corpus
        .test
        .iter()
        .map(|i| model.predict_label(&i.tokens).unwrap())
        .collect();
    let golds: Vec<String> = corpus
        .test
        .iter()
        .map(|i| i.relation_label.clone().unwrap())
        .collect();
    let report = micro_prf(&preds, &golds, synth::NEGATIVE_LABEL).unwrap();
    assert!((report.f1 - best).abs() < 1e-12, "{} vs {}", report.f1, best);

    // Save and reload: predictions survive the round trip.
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path(), synth::NEGATIVE_LABEL).unwrap();
    let (loaded, negative) = load_model(dir.path()).unwrap();
    assert_eq!(negative, synth::NEGATIVE_LABEL);
    for inst in corpus.test.iter().take(8) {
        assert_eq!(
            model.predict_label(&inst.tokens).unwrap(),
            loaded.predict_label(&inst.tokens).unwrap()
        );
    }
}
