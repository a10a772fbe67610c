//! Whitespace-token vocabulary with fixed reserved ids.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS_TOKEN: &str = "[CLS]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

/// Reserved tokens occupy ids 0 through 5 in this order.
pub const RESERVED_TOKENS: [&str; 6] = [
    CLS_TOKEN,
    PAD_TOKEN,
    UNK_TOKEN,
    "@PROTEIN$",
    "@DRUG$",
    "@CHEMICAL$",
];

pub const CLS_ID: usize = 0;
pub const PAD_ID: usize = 1;
pub const UNK_ID: usize = 2;

/// Injective token -> id map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocab {
    fn reserved_only() -> Self {
        let id_to_token: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id_of(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(|s| s.as_str())
    }

    /// Encode a token list as `[CLS]` plus ids, truncated to `max_len`
    /// ids total.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> Vec<usize> {
        let mut ids = Vec::with_capacity((tokens.len() + 1).min(max_len));
        ids.push(CLS_ID);
        for tok in tokens.iter().take(max_len.saturating_sub(1)) {
            ids.push(self.id_or_unk(tok));
        }
        ids
    }

    /// TSV serialization, `token<TAB>id`, ordered by id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.id_to_token.iter().enumerate() {
            out.push_str(&format!("{tok}\t{id}\n"));
        }
        out
    }

    pub fn from_tsv_str(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, usize)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno + 1, "expected token<TAB>id"))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(lineno + 1, format!("bad id {id:?}")))?;
            entries.push((tok.to_string(), id));
        }
        entries.sort_by_key(|(_, id)| *id);
        let mut vocab = Vocab {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for (i, (tok, id)) in entries.into_iter().enumerate() {
            if id != i {
                return Err(Error::Data(format!("vocab ids not contiguous at {id}")));
            }
            if vocab.token_to_id.insert(tok.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate vocab token {tok:?}")));
            }
            vocab.id_to_token.push(tok);
        }
        for (i, reserved) in RESERVED_TOKENS.iter().enumerate() {
            if vocab.token(i) != Some(reserved) {
                return Err(Error::Data(format!(
                    "reserved token {reserved:?} missing from id {i}"
                )));
            }
        }
        Ok(vocab)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv_str(&std::fs::read_to_string(path)?)
    }
}

/// Build a vocabulary: reserved ids 0-5, then corpus tokens with frequency
/// at least `min_freq`, in descending frequency order with lexicographic
/// tie-breaks.
pub fn build_vocab<'a, I>(corpus: I, min_freq: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if min_freq < 1 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tokens in corpus {
        for tok in tokens {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let mut vocab = Vocab::reserved_only();
    let mut entries: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(tok, freq)| *freq >= min_freq && !RESERVED_TOKENS.contains(tok))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (tok, _) in entries {
        let id = vocab.id_to_token.len();
        vocab.token_to_id.insert(tok.to_string(), id);
        vocab.id_to_token.push(tok.to_string());
    }
    Ok(vocab)
}
