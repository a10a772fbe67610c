//! End-to-end runs of the binary against the bundled data.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contra-re"))
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn sdp_prints_fixture_path() {
    let out = run(&[
        "sdp",
        "--conllu",
        repo().join("data/fixtures/ppi_table.conllu").to_str().unwrap(),
        "--mentions",
        repo().join("data/fixtures/ppi_table.mentions.tsv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(
        stdout(&out).contains("@PROTEIN$ interacts @PROTEIN$"),
        "got: {}",
        stdout(&out)
    );
    // Every run echoes its resolved config.
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolved config:"));
}

fn make_dataset(dir: &Path, split: &str, with_labels: bool) {
    let mut args = vec![
        "kbgen".to_string(),
        "--conllu".into(),
        repo().join(format!("data/synth-small/{split}.conllu")).display().to_string(),
        "--mentions".into(),
        repo().join(format!("data/synth-small/{split}.mentions.tsv")).display().to_string(),
        "--kb".into(),
        repo().join("data/synth-small/kb.tsv").display().to_string(),
        "--out".into(),
        dir.display().to_string(),
    ];
    if with_labels {
        args.push("--labels".into());
        args.push(
            repo()
                .join(format!("data/synth-small/{split}.labels.tsv"))
                .display()
                .to_string(),
        );
    }
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn augment_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("train");
    make_dataset(&data, "train", false);
    let lexicon = repo().join("data/synth-small/lexicon.tsv");
    let out_a = tmp.path().join("a.jsonl");
    let out_b = tmp.path().join("b.jsonl");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "augment",
            "--data",
            data.to_str().unwrap(),
            "--lexicon",
            lexicon.to_str().unwrap(),
            "--op",
            "SR",
            "--p",
            "0.1",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "same seed must give byte-identical output files");
}

/// Minimal JSON-Schema subset validator: type, required, properties,
/// additionalProperties, items, minimum, maximum.
fn validate(schema: &serde_json::Value, value: &serde_json::Value, path: &str) -> Vec<String> {
    let mut errors = Vec::new();
    if let Some(ty) = schema.get("type").and_then(|t| t.as_str()) {
        let ok = match ty {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            _ => true,
        };
        if !ok {
            errors.push(format!("{path}: expected {ty}, got {value}"));
            return errors;
        }
    }
    if let Some(req) = schema.get("required").and_then(|r| r.as_array()) {
        for key in req {
            let key = key.as_str().unwrap();
            if value.get(key).is_none() {
                errors.push(format!("{path}: missing required field {key}"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
        for (key, sub) in props {
            if let Some(v) = value.get(key) {
                errors.extend(validate(sub, v, &format!("{path}.{key}")));
            }
        }
    }
    if let Some(extra) = schema.get("additionalProperties") {
        if extra.is_object() {
            if let Some(obj) = value.as_object() {
                let named: Vec<&String> = schema
                    .get("properties")
                    .and_then(|p| p.as_object())
                    .map(|p| p.keys().collect())
                    .unwrap_or_default();
                for (key, v) in obj {
                    if !named.contains(&key) {
                        errors.extend(validate(extra, v, &format!("{path}.{key}")));
                    }
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                errors.extend(validate(items, v, &format!("{path}[{i}]")));
            }
        }
    }
    if let Some(n) = value.as_f64() {
        if let Some(min) = schema.get("minimum").and_then(|m| m.as_f64()) {
            if n < min {
                errors.push(format!("{path}: {n} below minimum {min}"));
            }
        }
        if let Some(max) = schema.get("maximum").and_then(|m| m.as_f64()) {
            if n > max {
                errors.push(format!("{path}: {n} above maximum {max}"));
            }
        }
    }
    errors
}

fn assert_schema(schema_file: &str, json_file: &Path) {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(repo().join("schemas").join(schema_file)).unwrap(),
    )
    .unwrap();
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json_file).unwrap()).unwrap();
    let errors = validate(&schema, &value, "$");
    assert!(errors.is_empty(), "{schema_file}: {errors:?}");
}

#[test]
fn full_chain_smoke_run_with_schema_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let train = tmp.path().join("train");
    let test = tmp.path().join("test");
    make_dataset(&train, "train", true);
    make_dataset(&test, "test", true);
    let config = repo().join("configs/synth-small.json");
    let lexicon = repo().join("data/synth-small/lexicon.tsv");

    let pre = tmp.path().join("pre");
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "pretrain",
        "--data",
        train.to_str().unwrap(),
        "--lexicon",
        lexicon.to_str().unwrap(),
        "--out",
        pre.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(pre.join("pretrained.ckpt").exists());
    assert!(pre.join("vocab.tsv").exists());
    assert_schema("runrecord.schema.json", &pre.join("runrecord.json"));

    let model = tmp.path().join("model");
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "finetune",
        "--data",
        train.to_str().unwrap(),
        "--init",
        pre.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_schema("runrecord.schema.json", &model.join("runrecord.json"));

    let eval_json = tmp.path().join("eval.json");
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        test.to_str().unwrap(),
        "--out",
        eval_json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("micro (non-negative):"));
    assert_schema("evalreport.schema.json", &eval_json);

    let shift_json = tmp.path().join("shift.json");
    let pairs_jsonl = tmp.path().join("pairs.jsonl");
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "predshift",
        "--model",
        model.to_str().unwrap(),
        "--data",
        test.to_str().unwrap(),
        "--lexicon",
        lexicon.to_str().unwrap(),
        "--export-pairs",
        pairs_jsonl.to_str().unwrap(),
        "--out",
        shift_json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_schema("shiftreport.schema.json", &shift_json);
    let lines = std::fs::read_to_string(&pairs_jsonl).unwrap();
    assert_eq!(lines.lines().count(), 20, "one shift pair per test instance");

    // report renders all three artifacts.
    for file in [&pre.join("runrecord.json"), &eval_json, &shift_json] {
        let out = run(&["report", file.to_str().unwrap()]);
        assert!(out.status.success());
        assert!(!stdout(&out).is_empty());
    }
}

#[test]
fn kb_filter_drops_unlisted_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("filtered");
    let res = run(&[
        "kbgen",
        "--conllu",
        repo().join("data/fixtures/kb_three_proteins.conllu").to_str().unwrap(),
        "--mentions",
        repo()
            .join("data/fixtures/kb_three_proteins.mentions.tsv")
            .to_str()
            .unwrap(),
        "--kb",
        repo().join("data/fixtures/kb_pairs.tsv").to_str().unwrap(),
        "--kb-filter",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let jsonl = std::fs::read_to_string(out_dir.join("instances.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 2, "one of three pairs is not in the KB");
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    // Unknown augmentation op: configuration error (1).
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "augment",
        "--data",
        tmp.path().to_str().unwrap(),
        "--lexicon",
        "nofile",
        "--op",
        "XX",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    // Missing input file: data error (2).
    let out = run(&[
        "sdp",
        "--conllu",
        "no-such-file.conllu",
        "--mentions",
        "no-such-file.tsv",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Malformed CoNLL-U: data error (2) naming the line.
    let bad = tmp.path().join("bad.conllu");
    std::fs::write(&bad, "1\tA\t_\t_\t_\t_\t2\tdep\t_\t_\nbroken line\n").unwrap();
    let ms = tmp.path().join("m.tsv");
    std::fs::write(&ms, "").unwrap();
    let out = run(&[
        "sdp",
        "--conllu",
        bad.to_str().unwrap(),
        "--mentions",
        ms.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // Unknown flags are rejected (usage = configuration error).
    let out = run(&["sdp", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(1));
}
