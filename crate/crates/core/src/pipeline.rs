//! Training orchestration: contrastive pre-training over unlabeled relation
//! instances, then supervised fine-tuning, with config-driven reproducible
//! runs and grid-epoch checkpoints.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{make_views, AugmentConfig, AugmentOp, SynonymLexicon};
use crate::contrastive::{
    batch_contrastive_loss, project, project_backward, ContrastiveBatch,
};
use crate::depgraph::{shortest_dependency_path, ParsedSentence, SdpResult};
use crate::encoder::{
    classify_forward, encode_backward_into, encode_forward, save_checkpoint,
    write_config_sidecar, EncoderParams, Vocab,
};
use crate::error::{Error, Result};
use crate::eval::{micro_prf, Predictor};
use crate::kbgen::RelationInstance;
use crate::rng::CounterRng;
use crate::util::softmax;

/// Default pre-training epoch count when no development set exists.
pub const DEFAULT_PRETRAIN_EPOCHS: usize = 6;

fn default_pretrain_epochs() -> usize {
    DEFAULT_PRETRAIN_EPOCHS
}
fn default_pretrain_batch() -> usize {
    32
}
fn default_pretrain_lr() -> f64 {
    0.05
}
fn default_tau() -> f64 {
    0.1
}
fn default_epoch_grid() -> Vec<usize> {
    vec![2, 4, 6, 8, 10]
}
fn default_finetune_epochs() -> usize {
    10
}
fn default_finetune_batch() -> usize {
    16
}
fn default_finetune_lr() -> f64 {
    0.05
}
fn default_max_seq_len() -> usize {
    128
}
fn default_augment() -> AugmentConfig {
    AugmentConfig::new(AugmentOp::Sr, 0.1, 0)
}
fn default_grad_clip() -> Option<f64> {
    Some(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    #[serde(default = "default_pretrain_epochs")]
    pub epochs: usize,
    #[serde(default = "default_pretrain_batch")]
    pub batch_size: usize,
    #[serde(default = "default_pretrain_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_augment")]
    pub augment: AugmentConfig,
    #[serde(default = "default_epoch_grid")]
    pub epoch_grid: Vec<usize>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    #[serde(default = "default_finetune_epochs")]
    pub epochs: usize,
    #[serde(default = "default_finetune_batch")]
    pub batch_size: usize,
    #[serde(default = "default_finetune_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_max_seq_len")]
    pub max_seq_len: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain minibatch gradient descent; the reference mode.
    #[default]
    Sgd,
    /// Adam, available as a config extension.
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default, flatten)]
    pub kind: OptimizerKind,
    /// Global-norm gradient clipping; `null` disables it.
    #[serde(default = "default_grad_clip")]
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            grad_clip: default_grad_clip(),
        }
    }
}

/// Every training hyperparameter for stages 2 and 3.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("pretrain.learning_rate", self.pretrain.learning_rate),
            ("finetune.learning_rate", self.finetune.learning_rate),
        ] {
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::Config(format!("{name} = {rate} is not a valid rate")));
            }
        }
        if self.pretrain.batch_size < 2 || !self.pretrain.batch_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "pretrain.batch_size must be an even count >= 2, got {}",
                self.pretrain.batch_size
            )));
        }
        if self.finetune.batch_size == 0 {
            return Err(Error::Config("finetune.batch_size must be positive".into()));
        }
        if self.pretrain.tau <= 0.0 || self.pretrain.tau.is_nan() {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.pretrain.tau
            )));
        }
        if self.pretrain.epoch_grid.is_empty() {
            return Err(Error::Config("epoch_grid must not be empty".into()));
        }
        if let Some(clip) = self.optimizer.grad_clip {
            if clip <= 0.0 || clip.is_nan() {
                return Err(Error::Config(format!("grad_clip must be positive, got {clip}")));
            }
        }
        self.pretrain.augment.validate()
    }
}

/// SHA-256 over the canonical JSON serialization of the config.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetric {
    pub epoch: usize,
    pub micro_f1: f64,
}

/// What one training stage did: per-epoch losses, wall time, config hash,
/// checkpoints written, and dev scores when a dev set exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub stage: String,
    pub epoch_losses: Vec<f64>,
    pub wall_time_secs: f64,
    pub config_hash: String,
    pub checkpoint_paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_metrics: Option<Vec<EpochMetric>>,
}

impl RunRecord {
    pub fn validate(&self, cfg: &TrainConfig) -> Result<()> {
        if self.epoch_losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("run record holds a non-finite loss".into()));
        }
        if self.config_hash != config_hash(cfg) {
            return Err(Error::Validation {
                id: self.stage.clone(),
                msg: "config hash does not match the serialized config".into(),
            });
        }
        Ok(())
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("stage: {}\n", self.stage);
        out.push_str(&format!("config hash: {}\n", self.config_hash));
        out.push_str(&format!("wall time: {:.2}s\n", self.wall_time_secs));
        out.push_str(&format!("{:<8} {:>12}\n", "epoch", "loss"));
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{:<8} {:>12.6}\n", i + 1, loss));
        }
        if let Some(dev) = &self.dev_metrics {
            out.push_str(&format!("{:<8} {:>12}\n", "epoch", "dev micro-F1"));
            for m in dev {
                out.push_str(&format!("{:<8} {:>12.4}\n", m.epoch, m.micro_f1));
            }
        }
        if !self.checkpoint_paths.is_empty() {
            out.push_str("checkpoints:\n");
            for p in &self.checkpoint_paths {
                out.push_str(&format!("  {p}\n"));
            }
        }
        out
    }
}

struct Optimizer {
    cfg: OptimizerConfig,
    lr: f64,
    m: Option<EncoderParams>,
    v: Option<EncoderParams>,
    t: usize,
}

impl Optimizer {
    fn new(cfg: OptimizerConfig, lr: f64) -> Self {
        Optimizer {
            cfg,
            lr,
            m: None,
            v: None,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut EncoderParams, grads: &mut EncoderParams) -> Result<()> {
        if let Some(clip) = self.cfg.grad_clip {
            let norm = grads.l2_norm();
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                params.scaled_add(grads, -self.lr);
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_none() {
                    self.m = Some(EncoderParams::zeros(&params.config)?);
                    self.v = Some(EncoderParams::zeros(&params.config)?);
                }
                self.t += 1;
                let t = self.t as i32;
                let m = self.m.as_mut().unwrap();
                let v = self.v.as_mut().unwrap();
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (((_, p), (_, g)), ((_, ms), (_, vs))) in params
                    .flat_tensors_mut()
                    .into_iter()
                    .zip(grads.flat_tensors_mut())
                    .zip(m.flat_tensors_mut().into_iter().zip(v.flat_tensors_mut()))
                {
                    for i in 0..p.len() {
                        ms[i] = beta1 * ms[i] + (1.0 - beta1) * g[i];
                        vs[i] = beta2 * vs[i] + (1.0 - beta2) * g[i] * g[i];
                        let mhat = ms[i] / bc1;
                        let vhat = vs[i] / bc2;
                        p[i] -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

fn epoch_seed(base: u64, epoch: u64) -> u64 {
    CounterRng::new(base).split_str("epoch").split(epoch).next_u64()
}

fn sdp_cache(
    corpus: &[RelationInstance],
    parses: &HashMap<String, ParsedSentence>,
    max_len: usize,
) -> Result<Vec<SdpResult>> {
    let mut out = Vec::with_capacity(corpus.len());
    for inst in corpus {
        let parse = parses
            .get(&inst.instance_id)
            .ok_or_else(|| Error::Lookup(format!("no parse for instance {}", inst.instance_id)))?;
        if parse.tokens != inst.tokens {
            return Err(Error::validation(
                &inst.instance_id,
                "parse tokens differ from instance tokens",
            ));
        }
        if inst.tokens.len() + 1 > max_len {
            return Err(Error::Config(format!(
                "instance {} has {} tokens; max_len {} cannot hold it plus [CLS]",
                inst.instance_id,
                inst.tokens.len(),
                max_len
            )));
        }
        out.push(shortest_dependency_path(parse, &inst.e1, &inst.e2)?);
    }
    Ok(out)
}

/// Contrastive pre-training (stage 2). Shuffles seeded per epoch, forms
/// batches of N instances expanded to 2N views, updates encoder and
/// projection head, drops the last short batch, and writes stripped
/// checkpoints at grid epochs under `ckpt_dir` when given.
pub fn contrastive_pretrain(
    cfg: &TrainConfig,
    mut params: EncoderParams,
    vocab: &Vocab,
    corpus: &[RelationInstance],
    lex: &SynonymLexicon,
    parses: &HashMap<String, ParsedSentence>,
    ckpt_dir: Option<&Path>,
) -> Result<(EncoderParams, RunRecord)> {
    let start = Instant::now();
    if corpus.is_empty() {
        return Err(Error::Data("pre-training corpus is empty".into()));
    }
    let pc = &cfg.pretrain;
    if corpus.len() < pc.batch_size {
        return Err(Error::Config(format!(
            "batch size {} exceeds corpus size {}",
            pc.batch_size,
            corpus.len()
        )));
    }
    let max_len = params.config.max_len;
    let sdps = sdp_cache(corpus, parses, max_len)?;

    let mut optimizer = Optimizer::new(cfg.optimizer.clone(), pc.learning_rate);
    let shuffle_root = CounterRng::new(cfg.seed).split_str("pretrain-shuffle");
    let mut epoch_losses = Vec::with_capacity(pc.epochs);
    let mut checkpoint_paths: Vec<String> = Vec::new();

    if let Some(dir) = ckpt_dir {
        std::fs::create_dir_all(dir)?;
    }

    for epoch in 1..=pc.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        shuffle_root.split(epoch as u64).shuffle(&mut order);
        let aug = AugmentConfig {
            seed: epoch_seed(pc.augment.seed, epoch as u64),
            ..pc.augment.clone()
        };

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks_exact(pc.batch_size) {
            let mut hs = Vec::with_capacity(2 * chunk.len());
            let mut caches = Vec::with_capacity(2 * chunk.len());
            let mut zs = Vec::with_capacity(2 * chunk.len());
            for &idx in chunk {
                let inst = &corpus[idx];
                let pair = make_views(inst, &sdps[idx], &aug, lex)?;
                for view in [&pair.view_a, &pair.view_b] {
                    let ids = vocab.encode(view, max_len);
                    let (h, cache) = encode_forward(&params, &ids)?;
                    zs.push(project(&params.proj, &h));
                    hs.push(h);
                    caches.push(cache);
                }
            }
            let batch = ContrastiveBatch::new(zs, pc.tau)?;
            let (loss, dzs) = batch_contrastive_loss(&batch);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite contrastive loss in epoch {epoch}"
                )));
            }
            let mut grads = EncoderParams::zeros(&params.config)?;
            for i in 0..hs.len() {
                let (dh, dw1, dw2) = project_backward(&params.proj, &hs[i], &dzs[i]);
                grads.proj.w1 += &dw1;
                grads.proj.w2 += &dw2;
                encode_backward_into(&params, &caches[i], &dh, &mut grads)?;
            }
            optimizer.step(&mut params, &mut grads)?;
            loss_sum += loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::Config("no full batch fits the corpus".into()));
        }
        epoch_losses.push(loss_sum / batches as f64);

        if let Some(dir) = ckpt_dir {
            if pc.epoch_grid.contains(&epoch) || epoch == pc.epochs {
                let path = dir.join(format!("epoch{epoch}.ckpt"));
                save_checkpoint(&params, &path, false)?;
                write_config_sidecar(&params.config, &path)?;
                checkpoint_paths.push(path.to_string_lossy().into_owned());
            }
        }
    }
    params.assert_finite()?;

    if let Some(dir) = ckpt_dir {
        let path = dir.join("pretrained.ckpt");
        save_checkpoint(&params, &path, false)?;
        write_config_sidecar(&params.config, &path)?;
        checkpoint_paths.push(path.to_string_lossy().into_owned());
    }

    let record = RunRecord {
        stage: "pretrain".into(),
        epoch_losses,
        wall_time_secs: start.elapsed().as_secs_f64(),
        config_hash: config_hash(cfg),
        checkpoint_paths,
        dev_metrics: None,
    };
    Ok((params, record))
}

/// A fine-tuned classifier bundle: parameters, vocabulary, ordered label
/// set, and the inference truncation length.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: EncoderParams,
    pub vocab: Vocab,
    pub labels: Vec<String>,
    pub max_seq_len: usize,
}

impl TrainedModel {
    fn effective_len(&self) -> usize {
        self.max_seq_len.min(self.params.config.max_len)
    }

    pub fn logits(&self, tokens: &[String]) -> Result<Array1<f64>> {
        let ids = self.vocab.encode(tokens, self.effective_len());
        let (h, _) = encode_forward(&self.params, &ids)?;
        classify_forward(&self.params, &h)
    }

    pub fn predict_label(&self, tokens: &[String]) -> Result<String> {
        let logits = self.logits(tokens)?;
        let mut best = 0usize;
        for i in 1..logits.len() {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        Ok(self.labels[best].clone())
    }
}

impl Predictor for TrainedModel {
    fn predict(&self, tokens: &[String]) -> String {
        self.predict_label(tokens)
            .expect("inference failed on a validated instance")
    }
}

fn class_index(labels: &[String], label: &str) -> Option<usize> {
    labels.iter().position(|l| l == label)
}

/// Supervised fine-tuning (stage 3): minibatch gradient descent on the
/// cross-entropy of `softmax(classify(encode(x)))`. With a dev set, the
/// epoch with the best dev micro-F1 is kept.
pub fn finetune(
    cfg: &TrainConfig,
    params: EncoderParams,
    vocab: &Vocab,
    train: &[RelationInstance],
    dev: Option<&[RelationInstance]>,
    negative_label: &str,
) -> Result<(TrainedModel, RunRecord)> {
    let start = Instant::now();
    if train.is_empty() {
        return Err(Error::Data("fine-tuning set is empty".into()));
    }
    let fc = &cfg.finetune;

    let mut label_set: BTreeSet<String> = BTreeSet::new();
    for inst in train {
        match &inst.relation_label {
            Some(l) => {
                label_set.insert(l.clone());
            }
            None => {
                return Err(Error::validation(&inst.instance_id, "missing relation label"));
            }
        }
    }
    let labels: Vec<String> = label_set.into_iter().collect();
    if labels.len() != params.config.classes {
        return Err(Error::Config(format!(
            "config declares {} classes but the data has {}",
            params.config.classes,
            labels.len()
        )));
    }
    if let Some(dev) = dev {
        for inst in dev {
            match &inst.relation_label {
                Some(l) if class_index(&labels, l).is_some() => {}
                Some(l) => {
                    return Err(Error::validation(
                        &inst.instance_id,
                        format!("unknown label {l:?}"),
                    ))
                }
                None => {
                    return Err(Error::validation(&inst.instance_id, "missing relation label"))
                }
            }
        }
    }

    let max_len = fc.max_seq_len.min(params.config.max_len);
    let mut model = TrainedModel {
        params,
        vocab: vocab.clone(),
        labels: labels.clone(),
        max_seq_len: fc.max_seq_len,
    };
    let mut optimizer = Optimizer::new(cfg.optimizer.clone(), fc.learning_rate);
    let shuffle_root = CounterRng::new(cfg.seed).split_str("finetune-shuffle");

    let mut epoch_losses = Vec::with_capacity(fc.epochs);
    let mut dev_metrics: Vec<EpochMetric> = Vec::new();
    let mut best: Option<(f64, EncoderParams)> = None;

    for epoch in 1..=fc.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle_root.split(epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(fc.batch_size) {
            let mut grads = EncoderParams::zeros(&model.params.config)?;
            for &idx in chunk {
                let inst = &train[idx];
                let gold = class_index(&labels, inst.relation_label.as_ref().unwrap())
                    .expect("label collected above");
                let ids = model.vocab.encode(&inst.tokens, max_len);
                let (h, cache) = encode_forward(&model.params, &ids)?;
                let logits = classify_forward(&model.params, &h)?;
                let probs = softmax(logits.as_slice().expect("contiguous"));
                let ce = -probs[gold].max(1e-300).ln();
                loss_sum += ce;
                // d(ce)/d(logits) = probs - onehot
                let mut dlogits = Array1::from(probs);
                dlogits[gold] -= 1.0;
                let dh = model.params.classifier.t().dot(&dlogits);
                for c in 0..dlogits.len() {
                    let mut row = grads.classifier.row_mut(c);
                    row.scaled_add(dlogits[c], &h);
                }
                encode_backward_into(&model.params, &cache, &dh, &mut grads)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            optimizer.step(&mut model.params, &mut grads)?;
        }
        let epoch_loss = loss_sum / train.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
        }
        epoch_losses.push(epoch_loss);

        if let Some(dev) = dev {
            let preds: Vec<String> = dev
                .iter()
                .map(|inst| model.predict_label(&inst.tokens))
                .collect::<Result<_>>()?;
            let golds: Vec<String> = dev
                .iter()
                .map(|i| i.relation_label.clone().unwrap())
                .collect();
            let report = micro_prf(&preds, &golds, negative_label)?;
            dev_metrics.push(EpochMetric {
                epoch,
                micro_f1: report.f1,
            });
            let better = match &best {
                Some((f, _)) => report.f1 > *f,
                None => true,
            };
            if better {
                best = Some((report.f1, model.params.clone()));
            }
        }
    }

    if let Some((_, best_params)) = best {
        model.params = best_params;
    }
    model.params.assert_finite()?;

    let record = RunRecord {
        stage: "finetune".into(),
        epoch_losses,
        wall_time_secs: start.elapsed().as_secs_f64(),
        config_hash: config_hash(cfg),
        checkpoint_paths: Vec::new(),
        dev_metrics: if dev.is_some() { Some(dev_metrics) } else { None },
    };
    Ok((model, record))
}

/// Rebuild the classifier head for a different class count, keeping every
/// other tensor. Pre-training never touches the classifier, so a checkpoint
/// produced before the label set was known can be adapted losslessly; the
/// new head draws from the same seeded stream `init` would use.
pub fn with_classes(params: &EncoderParams, classes: usize) -> Result<EncoderParams> {
    if classes == 0 {
        return Err(Error::Config("class count must be positive".into()));
    }
    let mut config = params.config.clone();
    config.classes = classes;
    let fresh = EncoderParams::init(&config)?;
    let mut out = params.clone();
    out.config = config;
    out.classifier = fresh.classifier;
    Ok(out)
}

/// Pick the pre-training epoch: argmax dev score over the grid, ties to
/// the smaller epoch; without a dev set the default is
/// [`DEFAULT_PRETRAIN_EPOCHS`].
pub fn select_epoch(grid: &[usize], dev_scores: Option<&[f64]>) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::Config("epoch grid is empty".into()));
    }
    let scores = match dev_scores {
        None => return Ok(DEFAULT_PRETRAIN_EPOCHS),
        Some(s) => s,
    };
    if scores.len() != grid.len() {
        return Err(Error::Config(format!(
            "{} scores for a grid of {}",
            scores.len(),
            grid.len()
        )));
    }
    let mut best = 0usize;
    for i in 1..grid.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && grid[i] < grid[best]);
        if better {
            best = i;
        }
    }
    Ok(grid[best])
}

/// Persist a fine-tuned model directory: checkpoint, config sidecar,
/// vocabulary and label metadata.
pub fn save_model(model: &TrainedModel, dir: &Path, negative_label: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&model.params, &ckpt, false)?;
    write_config_sidecar(&model.params.config, &ckpt)?;
    crate::util::write_atomic(dir.join("vocab.tsv").as_path(), model.vocab.to_tsv().as_bytes())?;
    let meta = serde_json::json!({
        "labels": model.labels,
        "negative_label": negative_label,
        "max_seq_len": model.max_seq_len,
    });
    crate::util::write_atomic(
        dir.join("labels.json").as_path(),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;
    Ok(())
}

/// Load a model directory written by [`save_model`]. Returns the model and
/// its negative label.
pub fn load_model(dir: &Path) -> Result<(TrainedModel, String)> {
    let params = crate::encoder::load_checkpoint(&dir.join("model.ckpt"))?;
    let vocab = Vocab::load(&dir.join("vocab.tsv"))?;
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("labels.json"))?)?;
    let labels: Vec<String> = meta["labels"]
        .as_array()
        .ok_or_else(|| Error::Data("labels.json missing labels array".into()))?
        .iter()
        .map(|v| v.as_str().unwrap_or_default().to_string())
        .collect();
    let negative = meta["negative_label"]
        .as_str()
        .ok_or_else(|| Error::Data("labels.json missing negative_label".into()))?
        .to_string();
    let max_seq_len = meta["max_seq_len"].as_u64().unwrap_or(128) as usize;
    if labels.len() != params.config.classes {
        return Err(Error::Data(format!(
            "model declares {} classes but labels.json lists {}",
            params.config.classes,
            labels.len()
        )));
    }
    Ok((
        TrainedModel {
            params,
            vocab,
            labels,
            max_seq_len,
        },
        negative,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_epoch_tie_goes_to_smaller() {
        let grid = [2, 4, 6, 8, 10];
        let scores = [0.5, 0.7, 0.7, 0.6, 0.6];
        assert_eq!(select_epoch(&grid, Some(&scores)).unwrap(), 4);
    }

    #[test]
    fn select_epoch_default_without_dev() {
        assert_eq!(select_epoch(&[2, 4, 6, 8, 10], None).unwrap(), 6);
    }

    #[test]
    fn select_epoch_single_element() {
        assert_eq!(select_epoch(&[8], Some(&[0.1])).unwrap(), 8);
        assert!(select_epoch(&[], Some(&[])).is_err());
        assert!(select_epoch(&[2, 4], Some(&[0.1])).is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = TrainConfig::default();
        let mut b = TrainConfig::default();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn run_record_validation() {
        let cfg = TrainConfig::default();
        let mut rec = RunRecord {
            stage: "pretrain".into(),
            epoch_losses: vec![1.0, 0.5],
            wall_time_secs: 0.1,
            config_hash: config_hash(&cfg),
            checkpoint_paths: vec![],
            dev_metrics: None,
        };
        rec.validate(&cfg).unwrap();
        rec.epoch_losses.push(f64::NAN);
        assert!(rec.validate(&cfg).is_err());
    }

    #[test]
    fn train_config_validation() {
        let mut cfg = TrainConfig::default();
        cfg.validate().unwrap();
        cfg.pretrain.batch_size = 3;
        assert!(cfg.validate().is_err());
        cfg.pretrain.batch_size = 4;
        cfg.pretrain.tau = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn optimizer_config_json_shapes() {
        let sgd: OptimizerConfig = serde_json::from_str(r#"{"kind":"sgd"}"#).unwrap();
        assert_eq!(sgd.kind, OptimizerKind::Sgd);
        assert_eq!(sgd.grad_clip, Some(1.0));
        let adam: OptimizerConfig = serde_json::from_str(
            r#"{"kind":"adam","beta1":0.9,"beta2":0.999,"eps":1e-8,"grad_clip":null}"#,
        )
        .unwrap();
        assert_eq!(adam.kind, OptimizerKind::adam());
        assert_eq!(adam.grad_clip, None);
    }
}
