//! SDP-preserving text augmentation: synonym replacement, random swap,
//! random deletion.
//!
//! Every operation leaves the frozen index set (shortest dependency path
//! plus entity spans) untouched: frozen tokens keep their surface form and
//! relative order in every view.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depgraph::{is_entity_tag, SdpResult};
use crate::error::{Error, Result};
use crate::kbgen::RelationInstance;
use crate::rng::CounterRng;

/// Lowercase surface form -> synonym list. Stand-in for a full lexical
/// database; loaded from TSV (`word<TAB>syn1<TAB>syn2...`, `#` comments).
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    map: HashMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        SynonymLexicon::default()
    }

    /// Insert an entry, enforcing the lexicon invariants.
    pub fn insert(&mut self, word: &str, synonyms: Vec<String>) -> Result<()> {
        let key = word.to_lowercase();
        if synonyms.is_empty() {
            return Err(Error::Data(format!("word {key:?} maps to an empty synonym list")));
        }
        if synonyms.iter().any(|s| s.to_lowercase() == key) {
            return Err(Error::Data(format!("word {key:?} lists itself as a synonym")));
        }
        self.map.insert(key, synonyms);
        Ok(())
    }

    /// Case-insensitive lookup.
    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.map.get(&word.to_lowercase()).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn from_tsv_str(text: &str) -> Result<Self> {
        let mut lex = SynonymLexicon::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let word = fields.next().unwrap_or("");
            let syns: Vec<String> = fields
                .filter(|s| !s.is_empty())
                .map(|s| s.to_string())
                .collect();
            if word.is_empty() {
                return Err(Error::parse(lineno + 1, "missing word column"));
            }
            lex.insert(word, syns)
                .map_err(|e| Error::parse(lineno + 1, e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv_str(&text)
    }
}

/// The three augmentation operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentOp {
    #[serde(rename = "SR")]
    Sr,
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "RD")]
    Rd,
}

impl fmt::Display for AugmentOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AugmentOp::Sr => "SR",
            AugmentOp::Rs => "RS",
            AugmentOp::Rd => "RD",
        };
        f.write_str(s)
    }
}

impl FromStr for AugmentOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SR" => Ok(AugmentOp::Sr),
            "RS" => Ok(AugmentOp::Rs),
            "RD" => Ok(AugmentOp::Rd),
            other => Err(Error::Config(format!("unknown augmentation op {other:?}"))),
        }
    }
}

fn default_rng_name() -> String {
    crate::rng::GENERATOR_NAME.to_string()
}

/// Augmentation settings. `p` drives deletion directly and sets
/// `n = max(1, floor(p * len))` for SR and RS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub op: AugmentOp,
    pub p: f64,
    pub seed: u64,
    /// Name of the random generator; only [`crate::rng::GENERATOR_NAME`]
    /// is recognized, so configs are honest about reproducibility.
    #[serde(default = "default_rng_name")]
    pub rng: String,
}

impl AugmentConfig {
    pub fn new(op: AugmentOp, p: f64, seed: u64) -> Self {
        AugmentConfig {
            op,
            p,
            seed,
            rng: default_rng_name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !self.p.is_finite() {
            return Err(Error::Config(format!("augment p = {} outside [0, 1]", self.p)));
        }
        if self.rng != crate::rng::GENERATOR_NAME {
            return Err(Error::Config(format!(
                "unknown rng {:?}; this build implements {:?}",
                self.rng,
                crate::rng::GENERATOR_NAME
            )));
        }
        Ok(())
    }

    /// Replacement/swap count for a sentence of `len` tokens.
    pub fn op_count(&self, len: usize) -> usize {
        ((self.p * len as f64).floor() as usize).max(1)
    }
}

/// Two augmented views of one instance. `changed_*` hold original-token
/// indices whose surface was replaced, moved or deleted in that view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedPair {
    pub source_id: String,
    pub view_a: Vec<String>,
    pub view_b: Vec<String>,
    pub changed_a: BTreeSet<usize>,
    pub changed_b: BTreeSet<usize>,
}

fn capitalize_first(tok: &str) -> String {
    let mut chars = tok.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn lowercase_first(tok: &str) -> String {
    let mut chars = tok.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn is_all_caps(tok: &str) -> bool {
    let alpha: Vec<char> = tok.chars().filter(|c| c.is_alphabetic()).collect();
    alpha.len() >= 2 && alpha.iter().all(|c| c.is_uppercase())
}

fn starts_upper(tok: &str) -> bool {
    tok.chars().next().is_some_and(|c| c.is_uppercase())
}

fn sr_impl(
    tokens: &[String],
    frozen: &BTreeSet<usize>,
    n: usize,
    lex: &SynonymLexicon,
    rng: &mut CounterRng,
) -> (Vec<String>, BTreeSet<usize>) {
    let eligible: Vec<usize> = (0..tokens.len())
        .filter(|i| !frozen.contains(i) && lex.get(&tokens[*i]).is_some())
        .collect();
    let mut out = tokens.to_vec();
    let mut changed = BTreeSet::new();
    if eligible.is_empty() || n == 0 {
        return (out, changed);
    }
    let mut picks: Vec<usize> = rng
        .sample_indices(eligible.len(), n)
        .into_iter()
        .map(|slot| eligible[slot])
        .collect();
    picks.sort_unstable();
    for i in picks {
        let syns = lex.get(&tokens[i]).expect("eligibility checked");
        let syn = &syns[rng.below(syns.len())];
        let replacement = if starts_upper(&tokens[i]) {
            capitalize_first(syn)
        } else {
            syn.clone()
        };
        if replacement != tokens[i] {
            changed.insert(i);
        }
        out[i] = replacement;
    }
    (out, changed)
}

fn rs_impl(
    tokens: &[String],
    frozen: &BTreeSet<usize>,
    n: usize,
    rng: &mut CounterRng,
) -> (Vec<String>, BTreeSet<usize>) {
    let movable: Vec<usize> = (0..tokens.len()).filter(|i| !frozen.contains(i)).collect();
    let mut out = tokens.to_vec();
    if movable.len() < 2 {
        return (out, BTreeSet::new());
    }
    // Track where the sentence-initial token ends up so capitalization can
    // be normalized afterwards.
    let mut pos0_at = 0usize;
    for _ in 0..n {
        let a_slot = rng.below(movable.len());
        // Second draw over the remaining slots, skipping a's slot.
        let b_raw = rng.below(movable.len() - 1);
        let b_slot = if b_raw >= a_slot { b_raw + 1 } else { b_raw };
        let a = movable[a_slot];
        let b = movable[b_slot];
        out.swap(a, b);
        if pos0_at == a {
            pos0_at = b;
        } else if pos0_at == b {
            pos0_at = a;
        }
    }
    if pos0_at != 0 {
        if !is_entity_tag(&out[pos0_at]) && !is_all_caps(&out[pos0_at]) {
            out[pos0_at] = lowercase_first(&out[pos0_at]);
        }
        if !is_entity_tag(&out[0]) {
            out[0] = capitalize_first(&out[0]);
        }
    }
    let changed = (0..tokens.len()).filter(|&i| out[i] != tokens[i]).collect();
    (out, changed)
}

fn rd_impl(
    tokens: &[String],
    frozen: &BTreeSet<usize>,
    p: f64,
    rng: &mut CounterRng,
) -> (Vec<String>, BTreeSet<usize>) {
    let mut kept: Vec<usize> = Vec::with_capacity(tokens.len());
    let mut deleted = BTreeSet::new();
    for i in 0..tokens.len() {
        if frozen.contains(&i) || rng.next_f64() >= p {
            kept.push(i);
        } else {
            deleted.insert(i);
        }
    }
    if kept.is_empty() {
        // Deleting everything would empty the sentence; keep the original.
        return (tokens.to_vec(), BTreeSet::new());
    }
    let first_deleted = deleted.contains(&0);
    let mut out: Vec<String> = kept.iter().map(|&i| tokens[i].clone()).collect();
    // Normalize the new sentence start, but never rewrite a frozen token:
    // frozen surfaces are inviolable.
    if first_deleted && !frozen.contains(&kept[0]) && !is_entity_tag(&out[0]) {
        out[0] = capitalize_first(&out[0]);
    }
    (out, deleted)
}

/// Replace `n` eligible (non-frozen, in-lexicon) tokens with uniformly
/// chosen synonyms. Fewer than `n` eligible tokens means all of them are
/// replaced; none means the input comes back unchanged.
pub fn synonym_replacement(
    tokens: &[String],
    frozen: &BTreeSet<usize>,
    n: usize,
    lex: &SynonymLexicon,
    rng: &mut CounterRng,
) -> Vec<String> {
    sr_impl(tokens, frozen, n, lex, rng).0
}

/// Swap two distinct non-frozen positions, `n` times. Identity when fewer
/// than two positions are movable.
pub fn random_swap(
    tokens: &[String],
    frozen: &BTreeSet<usize>,
    n: usize,
    rng: &mut CounterRng,
) -> Vec<String> {
    rs_impl(tokens, frozen, n, rng).0
}

/// Delete each non-frozen token independently with probability `p`.
pub fn random_deletion(
    tokens: &[String],
    frozen: &BTreeSet<usize>,
    p: f64,
    rng: &mut CounterRng,
) -> Vec<String> {
    rd_impl(tokens, frozen, p, rng).0
}

fn apply_op(
    tokens: &[String],
    frozen: &BTreeSet<usize>,
    cfg: &AugmentConfig,
    lex: &SynonymLexicon,
    rng: &mut CounterRng,
) -> (Vec<String>, BTreeSet<usize>) {
    let n = cfg.op_count(tokens.len());
    match cfg.op {
        AugmentOp::Sr => sr_impl(tokens, frozen, n, lex, rng),
        AugmentOp::Rs => rs_impl(tokens, frozen, n, rng),
        AugmentOp::Rd => rd_impl(tokens, frozen, cfg.p, rng),
    }
}

/// Produce the two views of one instance. RNG streams are derived from
/// (seed, instance id, view index); view b is re-drawn up to 8 times if it
/// collides with view a, after which the duplicate is accepted.
pub fn make_views(
    instance: &RelationInstance,
    sdp: &SdpResult,
    cfg: &AugmentConfig,
    lex: &SynonymLexicon,
) -> Result<AugmentedPair> {
    cfg.validate()?;
    let frozen = &sdp.frozen_indices;
    let stream = CounterRng::new(cfg.seed).split_str(&instance.instance_id);

    let mut rng_a = stream.split(0);
    let (view_a, changed_a) = apply_op(&instance.tokens, frozen, cfg, lex, &mut rng_a);

    let mut view_b = Vec::new();
    let mut changed_b = BTreeSet::new();
    for attempt in 0..=8u64 {
        let mut rng_b = stream.split(1 + attempt);
        let (vb, cb) = apply_op(&instance.tokens, frozen, cfg, lex, &mut rng_b);
        view_b = vb;
        changed_b = cb;
        if view_b != view_a {
            break;
        }
    }

    Ok(AugmentedPair {
        source_id: instance.instance_id.clone(),
        view_a,
        view_b,
        changed_a,
        changed_b,
    })
}
