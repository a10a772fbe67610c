//! Dependency-parsed sentences and shortest dependency paths.
//!
//! Sentences arrive pre-parsed (a CoNLL-U subset: ID, FORM, HEAD, DEPREL);
//! no parser lives here. The shortest dependency path (SDP) between two
//! entity spans is computed over the undirected arcs of the validated tree.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entity categories carried by relation extraction corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityType {
    Protein,
    Drug,
    Chemical,
}

impl EntityType {
    /// Placeholder token substituted for a mention of this type.
    pub fn tag(self) -> &'static str {
        match self {
            EntityType::Protein => "@PROTEIN$",
            EntityType::Drug => "@DRUG$",
            EntityType::Chemical => "@CHEMICAL$",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "PROTEIN" => Some(EntityType::Protein),
            "DRUG" => Some(EntityType::Drug),
            "CHEMICAL" => Some(EntityType::Chemical),
            _ => None,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityType::Protein => "PROTEIN",
            EntityType::Drug => "DRUG",
            EntityType::Chemical => "CHEMICAL",
        };
        f.write_str(s)
    }
}

/// True for the three placeholder tokens.
pub fn is_entity_tag(token: &str) -> bool {
    matches!(token, "@PROTEIN$" | "@DRUG$" | "@CHEMICAL$")
}

/// One dependency-parsed sentence. `heads` are 1-based token ids with 0 for
/// the artificial root; token indices elsewhere in this crate are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSentence {
    pub sentence_id: String,
    pub tokens: Vec<String>,
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
}

impl ParsedSentence {
    pub fn new(
        sentence_id: impl Into<String>,
        tokens: Vec<String>,
        heads: Vec<usize>,
        deprels: Vec<String>,
    ) -> Result<Self> {
        let sent = ParsedSentence {
            sentence_id: sentence_id.into(),
            tokens,
            heads,
            deprels,
        };
        sent.validate()?;
        Ok(sent)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Head of token `i` as a 0-based index, `None` for the root.
    pub fn parent(&self, i: usize) -> Option<usize> {
        match self.heads[i] {
            0 => None,
            h => Some(h - 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let id = &self.sentence_id;
        if self.heads.len() != n || self.deprels.len() != n {
            return Err(Error::validation(
                id,
                format!(
                    "field lengths disagree: {} tokens, {} heads, {} deprels",
                    n,
                    self.heads.len(),
                    self.deprels.len()
                ),
            ));
        }
        if n == 0 {
            return Err(Error::validation(id, "empty sentence"));
        }
        let mut roots = 0usize;
        for (i, &h) in self.heads.iter().enumerate() {
            if h > n {
                return Err(Error::validation(
                    id,
                    format!("token {} has head {} beyond sentence length {}", i + 1, h, n),
                ));
            }
            if h == i + 1 {
                return Err(Error::validation(id, format!("token {} is its own head", i + 1)));
            }
            if h == 0 {
                roots += 1;
            }
        }
        if roots != 1 {
            return Err(Error::validation(id, format!("{roots} roots, expected exactly 1")));
        }
        // Single root + one head per token: a cycle is the only way a token
        // can fail to reach the root.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0usize;
            while let Some(p) = self.parent(cur) {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(Error::validation(
                        id,
                        format!("cycle in head arcs involving token {}", start + 1),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Token span of one entity mention, `start` inclusive, `end` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, entity_type: EntityType) -> Self {
        EntitySpan {
            start,
            end,
            entity_type,
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i < self.end
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn validate_for(&self, sent: &ParsedSentence) -> Result<()> {
        if self.start >= self.end || self.end > sent.len() {
            return Err(Error::validation(
                &sent.sentence_id,
                format!(
                    "span [{}, {}) invalid for sentence of length {}",
                    self.start,
                    self.end,
                    sent.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Shortest dependency path between two entity spans, plus the full index
/// set frozen during augmentation (path plus both spans).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdpResult {
    pub path_token_indices: Vec<usize>,
    pub frozen_indices: BTreeSet<usize>,
}

impl SdpResult {
    /// Surface forms along the path, in order.
    pub fn path_surface(&self, sent: &ParsedSentence) -> Vec<String> {
        self.path_token_indices
            .iter()
            .map(|&i| sent.tokens[i].clone())
            .collect()
    }
}

/// Anchor of a span: the span token whose head lies outside the span, ties
/// broken by lowest index. A tree guarantees at least one such token.
pub fn span_anchor(sent: &ParsedSentence, span: &EntitySpan) -> usize {
    for i in span.start..span.end {
        match sent.parent(i) {
            None => return i,
            Some(p) if !span.contains(p) => return i,
            Some(_) => {}
        }
    }
    // Unreachable for valid trees; fall back to the first token.
    span.start
}

/// Minimum-length path between the anchors of `e1` and `e2`, direction of
/// arcs ignored. In a tree the path is unique: walk both anchors to the
/// root and splice at the lowest common ancestor.
pub fn shortest_dependency_path(
    sent: &ParsedSentence,
    e1: &EntitySpan,
    e2: &EntitySpan,
) -> Result<SdpResult> {
    e1.validate_for(sent)?;
    e2.validate_for(sent)?;

    let a = span_anchor(sent, e1);
    let b = span_anchor(sent, e2);

    let mut up_a = Vec::new(); // a, parent(a), ..., root
    let mut cur = Some(a);
    while let Some(i) = cur {
        up_a.push(i);
        cur = sent.parent(i);
    }
    let depth_of = |node: usize, chain: &[usize]| chain.iter().position(|&x| x == node);

    // Walk b upward until we meet a's ancestor chain.
    let mut up_b = Vec::new();
    let mut cur = Some(b);
    let lca_pos = loop {
        let i = cur.expect("tree walk reached past the root without meeting the other chain");
        if let Some(pos) = depth_of(i, &up_a) {
            break pos;
        }
        up_b.push(i);
        cur = sent.parent(i);
    };

    let mut path: Vec<usize> = up_a[..=lca_pos].to_vec();
    path.extend(up_b.iter().rev());

    let mut frozen: BTreeSet<usize> = path.iter().copied().collect();
    frozen.extend(e1.start..e1.end);
    frozen.extend(e2.start..e2.end);

    Ok(SdpResult {
        path_token_indices: path,
        frozen_indices: frozen,
    })
}

/// Parse a CoNLL-U subset: blank-line-separated blocks of tab-separated
/// token lines carrying at least the ID, FORM, HEAD and DEPREL columns
/// (positions 1, 2, 7, 8). `#` comment lines are skipped, except that a
/// `# sent_id = ...` comment names the following sentence; sentences
/// without one get `s1`, `s2`, ... by position.
pub fn parse_conllu(text: &str) -> Result<Vec<ParsedSentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut heads: Vec<usize> = Vec::new();
    let mut deprels: Vec<String> = Vec::new();
    let mut sent_id: Option<String> = None;

    let flush = |tokens: &mut Vec<String>,
                     heads: &mut Vec<usize>,
                     deprels: &mut Vec<String>,
                     sent_id: &mut Option<String>,
                     out: &mut Vec<ParsedSentence>|
     -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let id = sent_id
            .take()
            .unwrap_or_else(|| format!("s{}", out.len() + 1));
        let sent = ParsedSentence::new(
            id,
            std::mem::take(tokens),
            std::mem::take(heads),
            std::mem::take(deprels),
        )?;
        out.push(sent);
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut heads, &mut deprels, &mut sent_id, &mut sentences)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                if k.trim() == "sent_id" {
                    sent_id = Some(v.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 8 {
            return Err(Error::parse(
                lineno,
                format!("expected at least 8 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad token id {:?}", cols[0])))?;
        if id != tokens.len() + 1 {
            return Err(Error::parse(
                lineno,
                format!("token id {} out of sequence, expected {}", id, tokens.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad head {:?}", cols[6])))?;
        if cols[1].is_empty() {
            return Err(Error::parse(lineno, "empty FORM column"));
        }
        tokens.push(cols[1].to_string());
        heads.push(head);
        deprels.push(cols[7].to_string());
    }
    flush(&mut tokens, &mut heads, &mut deprels, &mut sent_id, &mut sentences)?;
    Ok(sentences)
}

/// Serialize sentences back to the CoNLL-U subset read by [`parse_conllu`].
/// Unused columns are written as `_`.
pub fn write_conllu(sentences: &[ParsedSentence]) -> String {
    let mut out = String::new();
    for sent in sentences {
        out.push_str(&format!("# sent_id = {}\n", sent.sentence_id));
        for i in 0..sent.len() {
            out.push_str(&format!(
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                sent.tokens[i],
                sent.heads[i],
                sent.deprels[i]
            ));
        }
        out.push('\n');
    }
    out
}
