//! Micro P/R/F over non-negative classes, deterministic k-fold splits, and
//! the prediction-shift rationale-faithfulness metric.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::augment::{synonym_replacement, SynonymLexicon};
use crate::depgraph::{shortest_dependency_path, ParsedSentence};
use crate::error::{Error, Result};
use crate::kbgen::RelationInstance;
use crate::rng::CounterRng;

/// Pooled and per-class confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Micro precision/recall/F1 over the non-negative classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: BTreeMap<String, ClassCounts>,
    pub n_examples: usize,
    pub negative_label: String,
}

impl EvalReport {
    /// Plain-text table for terminal output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>6} {:>6} {:>6}\n",
            "class", "tp", "fp", "fn"
        ));
        for (class, c) in &self.per_class {
            out.push_str(&format!(
                "{:<16} {:>6} {:>6} {:>6}\n",
                class, c.tp, c.fp, c.fn_
            ));
        }
        out.push_str(&format!(
            "micro (non-negative): P {:.4}  R {:.4}  F1 {:.4}  over {} examples\n",
            self.precision, self.recall, self.f1, self.n_examples
        ));
        out
    }
}

/// Pool confusion counts over the non-negative classes; the negative label
/// means "no relation". A correct non-negative prediction is a true
/// positive. A wrong non-negative prediction is a false positive. Every
/// wrong prediction is also a false negative: charged to the gold class
/// when the gold is non-negative, otherwise to the spuriously predicted
/// class. Zero denominators give zero scores.
pub fn micro_prf(preds: &[String], golds: &[String], negative_label: &str) -> Result<EvalReport> {
    if preds.len() != golds.len() {
        return Err(Error::Data(format!(
            "{} predictions vs {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut per_class: BTreeMap<String, ClassCounts> = BTreeMap::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, g) in preds.iter().zip(golds) {
        if p != negative_label {
            let slot = per_class.entry(p.clone()).or_default();
            if p == g {
                slot.tp += 1;
                tp += 1;
            } else {
                slot.fp += 1;
                fp += 1;
            }
        }
        if p != g {
            let charged = if g != negative_label { g } else { p };
            per_class.entry(charged.clone()).or_default().fn_ += 1;
            fn_ += 1;
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        precision,
        recall,
        f1,
        per_class,
        n_examples: preds.len(),
        negative_label: negative_label.to_string(),
    })
}

/// Deterministic k-fold split: returns `(train_indices, test_indices)` per
/// fold. Folds are within one element of each other in size; every item
/// appears in exactly one test fold.
pub fn kfold_split<T>(items: &[T], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = items.len();
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::Data(format!("{n} instances cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = CounterRng::new(seed).split_str("kfold");
    rng.shuffle(&mut order);

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test: Vec<usize> = order[start..start + size].to_vec();
        let train: Vec<usize> = order[..start]
            .iter()
            .chain(order[start + size..].iter())
            .copied()
            .collect();
        folds.push((train, test));
        start += size;
    }
    Ok(folds)
}

/// A test instance paired with its SDP-preserving synonym-replacement
/// neighbor. `unchanged` flags instances whose neighbor is identical
/// (nothing replaceable); those can never shift.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftPair {
    pub original: RelationInstance,
    pub neighbor_tokens: Vec<String>,
    pub unchanged: bool,
}

/// Build one SR neighbor per test instance with the SDP and entity tags
/// frozen, `n = max(1, floor(0.1 * len))`, streams derived from
/// `(seed, instance_id)`.
pub fn generate_shift_set(
    test: &[RelationInstance],
    parses: &HashMap<String, ParsedSentence>,
    lex: &SynonymLexicon,
    seed: u64,
) -> Result<Vec<ShiftPair>> {
    let root = CounterRng::new(seed);
    let mut out = Vec::with_capacity(test.len());
    for inst in test {
        let parsed = parses.get(&inst.instance_id).ok_or_else(|| {
            Error::Lookup(format!("no parse for instance {}", inst.instance_id))
        })?;
        if parsed.tokens != inst.tokens {
            return Err(Error::validation(
                &inst.instance_id,
                "parse tokens differ from instance tokens",
            ));
        }
        let sdp = shortest_dependency_path(parsed, &inst.e1, &inst.e2)?;
        let n = ((0.1 * inst.tokens.len() as f64).floor() as usize).max(1);
        let mut rng = root.split_str(&inst.instance_id);
        let neighbor =
            synonym_replacement(&inst.tokens, &sdp.frozen_indices, n, lex, &mut rng);
        let unchanged = neighbor == inst.tokens;
        out.push(ShiftPair {
            original: inst.clone(),
            neighbor_tokens: neighbor,
            unchanged,
        });
    }
    Ok(out)
}

/// Anything that maps a token list to a label.
pub trait Predictor {
    fn predict(&self, tokens: &[String]) -> String;
}

impl<F> Predictor for F
where
    F: Fn(&[String]) -> String,
{
    fn predict(&self, tokens: &[String]) -> String {
        self(tokens)
    }
}

/// Prediction-shift counts over a shift set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    /// Test examples whose original prediction is non-negative.
    pub n_eligible: usize,
    /// Eligible examples whose neighbor prediction differs.
    pub n_shift: usize,
    pub shifted_ids: Vec<String>,
    /// `n_shift / n_eligible`, 0 when nothing is eligible.
    pub shift_rate: f64,
    /// Originals predicted negative (excluded from `n_eligible`).
    pub n_negative_originals: usize,
    /// Among those, how many changed label on the neighbor. Reported for
    /// inspection; not part of the shift count.
    pub n_negative_flips: usize,
    pub negative_label: String,
}

impl ShiftReport {
    pub fn render_table(&self) -> String {
        format!(
            "prediction shift: {} / {} eligible ({:.2}%)\nnegative originals: {} ({} flipped)\n",
            self.n_shift,
            self.n_eligible,
            100.0 * self.shift_rate,
            self.n_negative_originals,
            self.n_negative_flips
        )
    }
}

/// Count prediction shifts: originals predicted non-negative whose
/// neighbor prediction differs. Flagged identical-neighbor pairs never
/// shift.
pub fn prediction_shift(
    model: &dyn Predictor,
    pairs: &[ShiftPair],
    negative_label: &str,
) -> ShiftReport {
    let mut n_eligible = 0usize;
    let mut n_shift = 0usize;
    let mut shifted_ids = Vec::new();
    let mut n_negative_originals = 0usize;
    let mut n_negative_flips = 0usize;
    for pair in pairs {
        let original = model.predict(&pair.original.tokens);
        let neighbor = if pair.unchanged {
            original.clone()
        } else {
            model.predict(&pair.neighbor_tokens)
        };
        if original == negative_label {
            n_negative_originals += 1;
            if neighbor != original {
                n_negative_flips += 1;
            }
            continue;
        }
        n_eligible += 1;
        if neighbor != original {
            n_shift += 1;
            shifted_ids.push(pair.original.instance_id.clone());
        }
    }
    let shift_rate = if n_eligible > 0 {
        n_shift as f64 / n_eligible as f64
    } else {
        0.0
    };
    ShiftReport {
        n_eligible,
        n_shift,
        shifted_ids,
        shift_rate,
        n_negative_originals,
        n_negative_flips,
        negative_label: negative_label.to_string(),
    }
}
