//! Config file handling: one JSON file is the source of truth, CLI flags
//! override individual fields, and the resolved merge is echoed so every
//! run can be reproduced from its log line alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use contra_re::encoder::EncoderConfig;
use contra_re::kbgen::RelationTask;
use contra_re::pipeline::TrainConfig;
use contra_re::{Error, Result};

fn default_threads() -> usize {
    1
}
fn default_task() -> String {
    "PPI".into()
}
fn default_negative() -> String {
    "none".into()
}
fn default_min_freq() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppConfig {
    /// Upper bound on worker threads. Compute in this build is serial, so
    /// any bound is honored; results never depend on it.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default = "default_negative")]
    pub negative_label: String,
    /// Minimum token frequency for vocabulary construction.
    #[serde(default = "default_min_freq")]
    pub min_freq: usize,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: AppConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("bad config {}: {e}", p.display())))?
            }
            None => AppConfig::default(),
        };
        cfg.encoder.vocab_size = cfg.encoder.vocab_size.max(6);
        Ok(cfg)
    }

    pub fn task(&self) -> Result<RelationTask> {
        RelationTask::from_name(&self.task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        self.task()?;
        self.encoder.validate()?;
        self.train.validate()
    }

    /// Apply flag overrides. String-valued op is parsed here so a typo is
    /// a config error, not a usage error.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        threads: Option<usize>,
        tau: Option<f64>,
        op: Option<&str>,
        p: Option<f64>,
    ) -> Result<()> {
        if let Some(s) = seed {
            self.train.seed = s;
            self.train.pretrain.augment.seed = s;
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(t) = tau {
            self.train.pretrain.tau = t;
        }
        if let Some(o) = op {
            self.train.pretrain.augment.op = o.parse()?;
        }
        if let Some(p) = p {
            self.train.pretrain.augment.p = p;
        }
        self.validate()
    }
}
