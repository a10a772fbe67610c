//! `contra-re`: every pipeline stage as a subcommand.
//!
//! The config file is the source of truth, flags override single fields,
//! and every run echoes its resolved configuration to stderr. Exit codes:
//! 0 success, 1 configuration error, 2 data error, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{path_json, echo_config};
use config::AppConfig;
use contra_re::Error;

#[derive(Parser, Debug)]
#[command(
    name = "contra-re",
    version,
    about = "SDP-preserving contrastive pre-training for relation extraction",
    disable_help_subcommand = true
)]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (training, shuffling, augmentation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Primary output path (directory or file depending on subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the shortest dependency path for every task-relevant mention pair.
    Sdp {
        #[arg(long)]
        conllu: PathBuf,
        #[arg(long)]
        mentions: PathBuf,
    },
    /// Build a relation-instance dataset from parses, mentions and a KB pair list.
    Kbgen {
        #[arg(long)]
        conllu: PathBuf,
        #[arg(long)]
        mentions: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Keep only pairs present in the KB (default: emit all, flagged).
        #[arg(long)]
        kb_filter: bool,
    },
    /// Write augmented view pairs for a dataset as JSONL.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Augmentation operation: SR, RS or RD.
        #[arg(long)]
        op: Option<String>,
        /// Augmentation probability p.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Contrastive pre-training over an unlabeled dataset.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Temperature for the contrastive loss.
        #[arg(long)]
        tau: Option<f64>,
        /// Augmentation operation: SR, RS or RD.
        #[arg(long)]
        op: Option<String>,
        /// Augmentation probability p.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Supervised fine-tuning on a labeled dataset.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Checkpoint file or pre-training output directory to start from.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Micro P/R/F1 of a model over a labeled dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Prediction-shift counts of a model over a dataset.
    Predshift {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Also export the generated shift set as JSONL.
        #[arg(long)]
        export_pairs: Option<PathBuf>,
    },
    /// Render a RunRecord, EvalReport or ShiftReport JSON file as a table.
    Report {
        input: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) | Error::Shape(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> contra_re::Result<()> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    let (op, p, tau) = match &cli.cmd {
        Cmd::Augment { op, p, .. } => (op.clone(), *p, None),
        Cmd::Pretrain { op, p, tau, .. } => (op.clone(), *p, *tau),
        _ => (None, None, None),
    };
    cfg.apply_overrides(cli.seed, cli.threads, tau, op.as_deref(), p)?;

    match &cli.cmd {
        Cmd::Sdp { conllu, mentions } => {
            echo_config(
                &cfg,
                "sdp",
                &serde_json::json!({
                    "conllu": conllu.display().to_string(),
                    "mentions": mentions.display().to_string(),
                    "out": path_json(cli.out.as_ref()),
                }),
            )?;
            commands::cmd_sdp(&cfg, conllu, mentions, cli.out.as_deref())
        }
        Cmd::Kbgen {
            conllu,
            mentions,
            kb,
            labels,
            kb_filter,
        } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Error::Config("kbgen needs --out DIR".into()))?;
            echo_config(
                &cfg,
                "kbgen",
                &serde_json::json!({
                    "conllu": conllu.display().to_string(),
                    "mentions": mentions.display().to_string(),
                    "kb": path_json(kb.as_ref()),
                    "labels": path_json(labels.as_ref()),
                    "kb_filter": kb_filter,
                    "out": out.display().to_string(),
                }),
            )?;
            commands::cmd_kbgen(
                &cfg,
                conllu,
                mentions,
                kb.as_deref(),
                labels.as_deref(),
                *kb_filter,
                &out,
            )
        }
        Cmd::Augment { data, lexicon, .. } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Error::Config("augment needs --out FILE".into()))?;
            echo_config(
                &cfg,
                "augment",
                &serde_json::json!({
                    "data": data.display().to_string(),
                    "lexicon": lexicon.display().to_string(),
                    "out": out.display().to_string(),
                }),
            )?;
            commands::cmd_augment(&cfg, data, lexicon, &out)
        }
        Cmd::Pretrain { data, lexicon, .. } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Error::Config("pretrain needs --out DIR".into()))?;
            echo_config(
                &cfg,
                "pretrain",
                &serde_json::json!({
                    "data": data.display().to_string(),
                    "lexicon": lexicon.display().to_string(),
                    "out": out.display().to_string(),
                }),
            )?;
            commands::cmd_pretrain(&cfg, data, lexicon, &out)
        }
        Cmd::Finetune { data, dev, init } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Error::Config("finetune needs --out DIR".into()))?;
            echo_config(
                &cfg,
                "finetune",
                &serde_json::json!({
                    "data": data.display().to_string(),
                    "dev": path_json(dev.as_ref()),
                    "init": path_json(init.as_ref()),
                    "out": out.display().to_string(),
                }),
            )?;
            commands::cmd_finetune(&cfg, data, dev.as_deref(), init.as_deref(), &out)
        }
        Cmd::Evaluate { model, data } => {
            echo_config(
                &cfg,
                "evaluate",
                &serde_json::json!({
                    "model": model.display().to_string(),
                    "data": data.display().to_string(),
                    "out": path_json(cli.out.as_ref()),
                }),
            )?;
            commands::cmd_evaluate(&cfg, model, data, cli.out.as_deref())
        }
        Cmd::Predshift {
            model,
            data,
            lexicon,
            export_pairs,
        } => {
            echo_config(
                &cfg,
                "predshift",
                &serde_json::json!({
                    "model": model.display().to_string(),
                    "data": data.display().to_string(),
                    "lexicon": lexicon.display().to_string(),
                    "export_pairs": path_json(export_pairs.as_ref()),
                    "out": path_json(cli.out.as_ref()),
                }),
            )?;
            commands::cmd_predshift(
                &cfg,
                model,
                data,
                lexicon,
                cli.out.as_deref(),
                export_pairs.as_deref(),
            )
        }
        Cmd::Report { input } => {
            echo_config(
                &cfg,
                "report",
                &serde_json::json!({ "input": input.display().to_string() }),
            )?;
            commands::cmd_report(input)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CONTRA_RE_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            // Usage problems are configuration errors.
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
