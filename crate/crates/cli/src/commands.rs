//! One function per subcommand. Every output file goes through
//! `write_atomic`; primary results print to stdout, diagnostics to stderr.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use contra_re::augment::{make_views, SynonymLexicon};
use contra_re::depgraph::{parse_conllu, shortest_dependency_path, ParsedSentence, SdpResult};
use contra_re::encoder::{build_vocab, load_checkpoint, EncoderParams, Vocab};
use contra_re::eval::{generate_shift_set, micro_prf, prediction_shift, EvalReport, ShiftReport};
use contra_re::kbgen::{
    enumerate_pairs_with_parses, load_kb_pairs, load_labels, load_mentions,
    read_instances_jsonl, write_instances_jsonl, AnnotatedSentence, RelationInstance,
};
use contra_re::pipeline::{
    config_hash, contrastive_pretrain, finetune, load_model, save_model, with_classes, RunRecord,
};
use contra_re::util::write_atomic;
use contra_re::{Error, Result};

use crate::config::AppConfig;

fn load_annotated(conllu: &Path, mentions: &Path) -> Result<Vec<AnnotatedSentence>> {
    let text = std::fs::read_to_string(conllu)?;
    let parses = parse_conllu(&text)?;
    let mention_map = load_mentions(mentions)?;
    parses
        .into_iter()
        .map(|p| {
            let ms = mention_map.get(&p.sentence_id).cloned().unwrap_or_default();
            AnnotatedSentence::new(p, ms)
        })
        .collect()
}

/// A dataset directory as written by `kbgen`: instances plus their parses.
pub struct Dataset {
    pub instances: Vec<RelationInstance>,
    pub parses: HashMap<String, ParsedSentence>,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let instances = read_instances_jsonl(&dir.join("instances.jsonl"))?;
    let text = std::fs::read_to_string(dir.join("parses.conllu"))?;
    let parses: HashMap<String, ParsedSentence> = parse_conllu(&text)?
        .into_iter()
        .map(|p| (p.sentence_id.clone(), p))
        .collect();
    Ok(Dataset { instances, parses })
}

pub fn cmd_sdp(
    cfg: &AppConfig,
    conllu: &Path,
    mentions: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let task = cfg.task()?;
    let sentences = load_annotated(conllu, mentions)?;
    let mut records = Vec::new();
    for sent in &sentences {
        for i in 0..sent.mentions.len() {
            for j in (i + 1)..sent.mentions.len() {
                let (a, b) = (&sent.mentions[i], &sent.mentions[j]);
                if !task.accepts(a.span.entity_type, b.span.entity_type) {
                    continue;
                }
                let sdp = shortest_dependency_path(&sent.parsed, &a.span, &b.span)?;
                let surface = sdp.path_surface(&sent.parsed).join(" ");
                println!(
                    "{}\t{}\t{}\t{}",
                    sent.parsed.sentence_id, a.entity_id, b.entity_id, surface
                );
                records.push(serde_json::json!({
                    "sentence_id": sent.parsed.sentence_id,
                    "e1_id": a.entity_id,
                    "e2_id": b.entity_id,
                    "sdp": SdpResult { path_token_indices: sdp.path_token_indices.clone(), frozen_indices: sdp.frozen_indices.clone() },
                }));
            }
        }
    }
    if let Some(out) = out {
        write_atomic(out, serde_json::to_string_pretty(&records)?.as_bytes())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_kbgen(
    cfg: &AppConfig,
    conllu: &Path,
    mentions: &Path,
    kb: Option<&Path>,
    labels: Option<&Path>,
    kb_filter: bool,
    out_dir: &Path,
) -> Result<()> {
    let task = cfg.task()?;
    let kb = kb
        .map(|p| load_kb_pairs(p, &cfg.task))
        .transpose()?;
    let label_map = labels.map(load_labels).transpose()?;

    let sentences = load_annotated(conllu, mentions)?;
    let mut instances = Vec::new();
    let mut parses = Vec::new();
    for sent in &sentences {
        let (insts, ps) = enumerate_pairs_with_parses(sent, task, kb.as_ref())?;
        for mut inst in insts {
            if kb_filter && inst.in_kb == Some(false) {
                continue;
            }
            if let Some(map) = &label_map {
                inst.relation_label = map.get(&inst.instance_id).cloned();
            }
            parses.push(ps[&inst.instance_id].clone());
            instances.push(inst);
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let mut jsonl = Vec::new();
    write_instances_jsonl(&instances, &mut jsonl)?;
    write_atomic(&out_dir.join("instances.jsonl"), &jsonl)?;
    write_atomic(
        &out_dir.join("parses.conllu"),
        contra_re::depgraph::write_conllu(&parses).as_bytes(),
    )?;
    println!(
        "wrote {} instances from {} sentences to {}",
        instances.len(),
        sentences.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_augment(
    cfg: &AppConfig,
    data_dir: &Path,
    lexicon: &Path,
    out: &Path,
) -> Result<()> {
    let dataset = load_dataset(data_dir)?;
    let lex = SynonymLexicon::load(lexicon)?;
    let aug = &cfg.train.pretrain.augment;
    let mut buf = String::new();
    for inst in &dataset.instances {
        let parse = dataset
            .parses
            .get(&inst.instance_id)
            .ok_or_else(|| Error::Lookup(format!("no parse for instance {}", inst.instance_id)))?;
        let sdp = shortest_dependency_path(parse, &inst.e1, &inst.e2)?;
        let pair = make_views(inst, &sdp, aug, &lex)?;
        buf.push_str(&serde_json::to_string(&pair)?);
        buf.push('\n');
    }
    write_atomic(out, buf.as_bytes())?;
    println!(
        "wrote {} augmented pairs to {}",
        dataset.instances.len(),
        out.display()
    );
    Ok(())
}

fn write_runrecord(record: &RunRecord, dir: &Path) -> Result<()> {
    write_atomic(
        &dir.join("runrecord.json"),
        serde_json::to_string_pretty(record)?.as_bytes(),
    )
}

pub fn cmd_pretrain(
    cfg: &AppConfig,
    data_dir: &Path,
    lexicon: &Path,
    out_dir: &Path,
) -> Result<()> {
    let dataset = load_dataset(data_dir)?;
    let lex = SynonymLexicon::load(lexicon)?;
    let rows: Vec<&[String]> = dataset.instances.iter().map(|i| i.tokens.as_slice()).collect();
    let vocab = build_vocab(rows.iter().copied(), cfg.min_freq)?;
    let mut enc = cfg.encoder.clone();
    enc.vocab_size = vocab.len();
    let params = EncoderParams::init(&enc)?;
    std::fs::create_dir_all(out_dir)?;
    let (_, record) = contrastive_pretrain(
        &cfg.train,
        params,
        &vocab,
        &dataset.instances,
        &lex,
        &dataset.parses,
        Some(out_dir),
    )?;
    write_atomic(&out_dir.join("vocab.tsv"), vocab.to_tsv().as_bytes())?;
    write_runrecord(&record, out_dir)?;
    print!("{}", record.render_table());
    Ok(())
}

fn resolve_init(init: &Path) -> Result<(EncoderParams, Vocab)> {
    let (ckpt, vocab_path) = if init.is_dir() {
        (init.join("pretrained.ckpt"), init.join("vocab.tsv"))
    } else {
        let dir = init.parent().unwrap_or_else(|| Path::new("."));
        (init.to_path_buf(), dir.join("vocab.tsv"))
    };
    let params = load_checkpoint(&ckpt)?;
    let vocab = Vocab::load(&vocab_path)?;
    if vocab.len() != params.config.vocab_size {
        return Err(Error::Data(format!(
            "vocab has {} entries but the checkpoint expects {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    Ok((params, vocab))
}

pub fn cmd_finetune(
    cfg: &AppConfig,
    data_dir: &Path,
    dev_dir: Option<&Path>,
    init: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let dataset = load_dataset(data_dir)?;
    let dev = dev_dir.map(load_dataset).transpose()?;
    let mut label_set: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for inst in &dataset.instances {
        if let Some(l) = &inst.relation_label {
            label_set.insert(l.clone());
        }
    }
    let n_classes = label_set.len().max(1);

    let (params, vocab) = match init {
        Some(path) => {
            let (params, vocab) = resolve_init(path)?;
            let params = if params.config.classes != n_classes {
                with_classes(&params, n_classes)?
            } else {
                params
            };
            (params, vocab)
        }
        None => {
            let rows: Vec<&[String]> =
                dataset.instances.iter().map(|i| i.tokens.as_slice()).collect();
            let vocab = build_vocab(rows.iter().copied(), cfg.min_freq)?;
            let mut enc = cfg.encoder.clone();
            enc.vocab_size = vocab.len();
            enc.classes = n_classes;
            (EncoderParams::init(&enc)?, vocab)
        }
    };

    let (model, record) = finetune(
        &cfg.train,
        params,
        &vocab,
        &dataset.instances,
        dev.as_ref().map(|d| d.instances.as_slice()),
        &cfg.negative_label,
    )?;
    std::fs::create_dir_all(out_dir)?;
    save_model(&model, out_dir, &cfg.negative_label)?;
    write_runrecord(&record, out_dir)?;
    print!("{}", record.render_table());
    Ok(())
}

pub fn cmd_evaluate(
    _cfg: &AppConfig,
    model_dir: &Path,
    data_dir: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let (model, negative) = load_model(model_dir)?;
    let dataset = load_dataset(data_dir)?;
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for inst in &dataset.instances {
        let gold = inst.relation_label.clone().ok_or_else(|| {
            Error::validation(&inst.instance_id, "evaluation needs labeled instances")
        })?;
        preds.push(model.predict_label(&inst.tokens)?);
        golds.push(gold);
    }
    let report: EvalReport = micro_prf(&preds, &golds, &negative)?;
    print!("{}", report.render_table());
    if let Some(out) = out {
        write_atomic(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_predshift(
    cfg: &AppConfig,
    model_dir: &Path,
    data_dir: &Path,
    lexicon: &Path,
    out: Option<&Path>,
    export_pairs: Option<&Path>,
) -> Result<()> {
    let (model, negative) = load_model(model_dir)?;
    let dataset = load_dataset(data_dir)?;
    let lex = SynonymLexicon::load(lexicon)?;
    let pairs = generate_shift_set(&dataset.instances, &dataset.parses, &lex, cfg.train.seed)?;
    if let Some(path) = export_pairs {
        let mut buf = String::new();
        for pair in &pairs {
            buf.push_str(&serde_json::to_string(pair)?);
            buf.push('\n');
        }
        write_atomic(path, buf.as_bytes())?;
    }
    let report: ShiftReport = prediction_shift(&model, &pairs, &negative);
    print!("{}", report.render_table());
    if let Some(out) = out {
        write_atomic(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_report(input: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Data("report file is not a JSON object".into()))?;
    if obj.contains_key("epoch_losses") {
        let record: RunRecord = serde_json::from_value(value)?;
        print!("{}", record.render_table());
    } else if obj.contains_key("n_shift") {
        let report: ShiftReport = serde_json::from_value(value)?;
        print!("{}", report.render_table());
    } else if obj.contains_key("f1") {
        let report: EvalReport = serde_json::from_value(value)?;
        print!("{}", report.render_table());
    } else {
        return Err(Error::Data(
            "unrecognized report shape (expected RunRecord, EvalReport or ShiftReport)".into(),
        ));
    }
    Ok(())
}

/// Echo the fully resolved configuration to stderr as one JSON line.
pub fn echo_config(cfg: &AppConfig, subcommand: &str, inputs: &serde_json::Value) -> Result<()> {
    let resolved = serde_json::json!({
        "subcommand": subcommand,
        "inputs": inputs,
        "config": cfg,
        "config_hash": config_hash(&cfg.train),
    });
    eprintln!("resolved config: {}", serde_json::to_string(&resolved)?);
    Ok(())
}

pub fn path_json(p: Option<&PathBuf>) -> serde_json::Value {
    match p {
        Some(p) => serde_json::Value::String(p.display().to_string()),
        None => serde_json::Value::Null,
    }
}
