//! Unlabeled corpus construction from entity-annotated sentences and
//! knowledge-base pair lists, plus the entity-tag preprocessing step.
//!
//! Every combination of task-relevant mentions in a sentence becomes one
//! instance; a KB pair list marks (not filters) the pairs it knows about.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depgraph::{EntitySpan, EntityType, ParsedSentence};
use crate::error::{Error, Result};

/// Which pair of entity types a task relates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RelationTask {
    ChemProt,
    Ddi,
    Ppi,
    Custom,
}

impl RelationTask {
    /// The pair-type rule: same-type for PPI/DDI, chemical-protein for
    /// ChemProt, and any pair of mentions for Custom.
    pub fn accepts(self, a: EntityType, b: EntityType) -> bool {
        match self {
            RelationTask::Ppi => a == EntityType::Protein && b == EntityType::Protein,
            RelationTask::Ddi => a == EntityType::Drug && b == EntityType::Drug,
            RelationTask::ChemProt => {
                (a == EntityType::Chemical && b == EntityType::Protein)
                    || (a == EntityType::Protein && b == EntityType::Chemical)
            }
            RelationTask::Custom => true,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "CHEMPROT" => Ok(RelationTask::ChemProt),
            "DDI" => Ok(RelationTask::Ddi),
            "PPI" => Ok(RelationTask::Ppi),
            "CUSTOM" => Ok(RelationTask::Custom),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

/// One entity mention: a span plus the caller-supplied canonical id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub span: EntitySpan,
    pub entity_id: String,
}

/// A parsed sentence together with its entity mentions.
#[derive(Debug, Clone)]
pub struct AnnotatedSentence {
    pub parsed: ParsedSentence,
    pub mentions: Vec<Mention>,
}

impl AnnotatedSentence {
    pub fn new(parsed: ParsedSentence, mentions: Vec<Mention>) -> Result<Self> {
        for m in &mentions {
            m.span.validate_for(&parsed)?;
        }
        for (i, a) in mentions.iter().enumerate() {
            for b in mentions.iter().skip(i + 1) {
                if a.span.overlaps(&b.span) {
                    return Err(Error::validation(
                        &parsed.sentence_id,
                        format!(
                            "mentions {:?} and {:?} overlap",
                            a.entity_id, b.entity_id
                        ),
                    ));
                }
            }
        }
        Ok(AnnotatedSentence { parsed, mentions })
    }
}

/// Unordered canonical-id pairs for one relation, loaded from TSV.
#[derive(Debug, Clone)]
pub struct KbPairList {
    pub relation_name: String,
    pairs: HashSet<(String, String)>,
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl KbPairList {
    pub fn new(relation_name: impl Into<String>) -> Self {
        KbPairList {
            relation_name: relation_name.into(),
            pairs: HashSet::new(),
        }
    }

    pub fn insert(&mut self, a: &str, b: &str) -> Result<()> {
        if a == b {
            return Err(Error::Data(format!("self-pair ({a}, {b}) not allowed")));
        }
        self.pairs.insert(ordered(a, b));
        Ok(())
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&ordered(a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Read a KB pair list from `id1<TAB>id2` lines. Blank and `#` lines are
/// skipped; reversed duplicates collapse to one pair; a self-pair is a
/// validation error naming the line.
pub fn load_kb_pairs_str(text: &str, relation_name: &str) -> Result<KbPairList> {
    let mut kb = KbPairList::new(relation_name);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (a, b) = match (fields.next(), fields.next()) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => (a, b),
            _ => {
                return Err(Error::parse(
                    lineno + 1,
                    "expected two tab-separated ids",
                ))
            }
        };
        kb.insert(a, b)
            .map_err(|e| Error::parse(lineno + 1, e.to_string()))?;
    }
    Ok(kb)
}

pub fn load_kb_pairs(path: &Path, relation_name: &str) -> Result<KbPairList> {
    let text = std::fs::read_to_string(path)?;
    load_kb_pairs_str(&text, relation_name)
}

/// One classification example with entity tags substituted in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub instance_id: String,
    pub tokens: Vec<String>,
    pub e1: EntitySpan,
    pub e2: EntitySpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_label: Option<String>,
    pub task: RelationTask,
    /// Whether the canonical-id pair appears in the KB list; `None` when no
    /// KB was consulted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_kb: Option<bool>,
}

impl RelationInstance {
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        for (name, span) in [("e1", &self.e1), ("e2", &self.e2)] {
            if span.start >= span.end || span.end > n {
                return Err(Error::validation(
                    &self.instance_id,
                    format!("{name} span [{}, {}) invalid for {n} tokens", span.start, span.end),
                ));
            }
            let anchor = &self.tokens[span.start];
            if anchor != span.entity_type.tag() {
                return Err(Error::validation(
                    &self.instance_id,
                    format!("{name} anchor token {anchor:?} is not {}", span.entity_type.tag()),
                ));
            }
        }
        if self.e1.overlaps(&self.e2) {
            return Err(Error::validation(&self.instance_id, "entity spans overlap"));
        }
        Ok(())
    }
}

/// Outcome of collapsing two mention spans to tag tokens: the re-indexed
/// parse plus the new single-token spans.
#[derive(Debug, Clone)]
pub struct TaggedSentence {
    pub parsed: ParsedSentence,
    pub e1: EntitySpan,
    pub e2: EntitySpan,
}

fn find_mention(sent: &AnnotatedSentence, id: &str, skip: Option<usize>) -> Result<usize> {
    sent.mentions
        .iter()
        .enumerate()
        .position(|(i, m)| m.entity_id == id && Some(i) != skip)
        .ok_or_else(|| {
            Error::Lookup(format!(
                "entity id {id:?} not found in sentence {}",
                sent.parsed.sentence_id
            ))
        })
}

/// Collapse the spans of two mentions (by mention index) to single tag
/// tokens and rebuild the dependency tree over the shorter sentence. The
/// tag inherits the head and relation of the span's anchor token; arcs into
/// a collapsed span re-point at its tag.
pub fn collapse_mentions(sent: &AnnotatedSentence, m1: usize, m2: usize) -> Result<TaggedSentence> {
    let parsed = &sent.parsed;
    let a = &sent.mentions[m1];
    let b = &sent.mentions[m2];
    let (first, second) = if a.span.start <= b.span.start { (a, b) } else { (b, a) };

    let n = parsed.len();

    // Map old index -> new index. Span members map to their tag's slot.
    let mut new_index = vec![usize::MAX; n];
    let mut new_tokens = Vec::new();
    let mut old_for_new: Vec<Option<usize>> = Vec::new(); // representative old index
    let mut first_tag_at = usize::MAX;
    let mut second_tag_at = usize::MAX;
    let mut i = 0;
    while i < n {
        if i == first.span.start {
            first_tag_at = new_tokens.len();
            new_tokens.push(first.span.entity_type.tag().to_string());
            old_for_new.push(None);
            new_index[first.span.start..first.span.end].fill(first_tag_at);
            i = first.span.end;
        } else if i == second.span.start {
            second_tag_at = new_tokens.len();
            new_tokens.push(second.span.entity_type.tag().to_string());
            old_for_new.push(None);
            new_index[second.span.start..second.span.end].fill(second_tag_at);
            i = second.span.end;
        } else {
            new_index[i] = new_tokens.len();
            new_tokens.push(parsed.tokens[i].clone());
            old_for_new.push(Some(i));
            i += 1;
        }
    }

    let anchor_of = |span: &EntitySpan| -> usize {
        for i in span.start..span.end {
            match parsed.parent(i) {
                None => return i,
                Some(p) if !span.contains(p) => return i,
                Some(_) => {}
            }
        }
        span.start
    };
    let first_anchor = anchor_of(&first.span);
    let second_anchor = anchor_of(&second.span);

    let map_head = |old: usize| -> usize {
        match parsed.parent(old) {
            None => 0,
            Some(p) => new_index[p] + 1,
        }
    };

    let mut new_heads = vec![0usize; new_tokens.len()];
    let mut new_deprels = vec![String::new(); new_tokens.len()];
    for (ni, rep) in old_for_new.iter().enumerate() {
        let old = match rep {
            Some(o) => *o,
            None => {
                if ni == first_tag_at {
                    first_anchor
                } else {
                    second_anchor
                }
            }
        };
        new_heads[ni] = map_head(old);
        new_deprels[ni] = parsed.deprels[old].clone();
        // A span-internal arc mapping back onto the tag itself would make
        // the tag its own head; that cannot happen for the anchor, whose
        // head lies outside its span, unless it points into the other span.
        if new_heads[ni] == ni + 1 {
            return Err(Error::validation(
                &parsed.sentence_id,
                "mention collapse produced a self-headed token",
            ));
        }
    }

    let parsed = ParsedSentence::new(
        parsed.sentence_id.clone(),
        new_tokens,
        new_heads,
        new_deprels,
    )?;
    let (e1_at, e1_ty, e2_at, e2_ty) = if a.span.start <= b.span.start {
        (first_tag_at, a.span.entity_type, second_tag_at, b.span.entity_type)
    } else {
        (second_tag_at, a.span.entity_type, first_tag_at, b.span.entity_type)
    };
    Ok(TaggedSentence {
        parsed,
        e1: EntitySpan::new(e1_at, e1_at + 1, e1_ty),
        e2: EntitySpan::new(e2_at, e2_at + 1, e2_ty),
    })
}

/// Tag-substitute the mentions of `e1_id` and `e2_id` and return the token
/// list of the shortened sentence. Other mentions are left as-is.
pub fn replace_entity_mentions(
    sent: &AnnotatedSentence,
    e1_id: &str,
    e2_id: &str,
) -> Result<Vec<String>> {
    let m1 = find_mention(sent, e1_id, None)?;
    let m2 = find_mention(sent, e2_id, Some(m1))?;
    Ok(collapse_mentions(sent, m1, m2)?.parsed.tokens)
}

/// Enumerate every unordered pair of task-relevant mentions as one
/// instance. A sentence with k relevant mentions yields C(k, 2) instances
/// (or k_a * k_b across types for ChemProt). When `kb` is given, pairs it
/// does not contain are still emitted, flagged with `in_kb = false`.
pub fn enumerate_pairs(
    sent: &AnnotatedSentence,
    task: RelationTask,
    kb: Option<&KbPairList>,
) -> Result<Vec<RelationInstance>> {
    let mut out = Vec::new();
    for i in 0..sent.mentions.len() {
        for j in (i + 1)..sent.mentions.len() {
            let (ma, mb) = (&sent.mentions[i], &sent.mentions[j]);
            if !task.accepts(ma.span.entity_type, mb.span.entity_type) {
                continue;
            }
            let tagged = collapse_mentions(sent, i, j)?;
            let instance = RelationInstance {
                instance_id: format!("{}#{}-{}", sent.parsed.sentence_id, i, j),
                tokens: tagged.parsed.tokens.clone(),
                e1: tagged.e1,
                e2: tagged.e2,
                relation_label: None,
                task,
                in_kb: kb.map(|kb| kb.contains(&ma.entity_id, &mb.entity_id)),
            };
            instance.validate()?;
            out.push(instance);
        }
    }
    Ok(out)
}

/// Like [`enumerate_pairs`] but also returning each instance's re-indexed
/// parse, keyed by instance id, for downstream SDP computation.
pub fn enumerate_pairs_with_parses(
    sent: &AnnotatedSentence,
    task: RelationTask,
    kb: Option<&KbPairList>,
) -> Result<(Vec<RelationInstance>, HashMap<String, ParsedSentence>)> {
    let mut instances = Vec::new();
    let mut parses = HashMap::new();
    for i in 0..sent.mentions.len() {
        for j in (i + 1)..sent.mentions.len() {
            let (ma, mb) = (&sent.mentions[i], &sent.mentions[j]);
            if !task.accepts(ma.span.entity_type, mb.span.entity_type) {
                continue;
            }
            let tagged = collapse_mentions(sent, i, j)?;
            let instance_id = format!("{}#{}-{}", sent.parsed.sentence_id, i, j);
            let mut parsed = tagged.parsed;
            parsed.sentence_id = instance_id.clone();
            let instance = RelationInstance {
                instance_id: instance_id.clone(),
                tokens: parsed.tokens.clone(),
                e1: tagged.e1,
                e2: tagged.e2,
                relation_label: None,
                task,
                in_kb: kb.map(|kb| kb.contains(&ma.entity_id, &mb.entity_id)),
            };
            instance.validate()?;
            instances.push(instance);
            parses.insert(instance_id, parsed);
        }
    }
    Ok((instances, parses))
}

/// Standoff mention file: `sentence_id<TAB>start<TAB>end<TAB>type<TAB>id`
/// per line, `#` comments skipped. Spans are 0-based, end-exclusive.
pub fn load_mentions_str(text: &str) -> Result<HashMap<String, Vec<Mention>>> {
    let mut out: HashMap<String, Vec<Mention>> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(Error::parse(lineno + 1, "expected 5 tab-separated columns"));
        }
        let start: usize = cols[1]
            .parse()
            .map_err(|_| Error::parse(lineno + 1, format!("bad start {:?}", cols[1])))?;
        let end: usize = cols[2]
            .parse()
            .map_err(|_| Error::parse(lineno + 1, format!("bad end {:?}", cols[2])))?;
        let ty = EntityType::from_name(cols[3])
            .ok_or_else(|| Error::parse(lineno + 1, format!("bad entity type {:?}", cols[3])))?;
        out.entry(cols[0].to_string()).or_default().push(Mention {
            span: EntitySpan::new(start, end, ty),
            entity_id: cols[4].to_string(),
        });
    }
    Ok(out)
}

pub fn load_mentions(path: &Path) -> Result<HashMap<String, Vec<Mention>>> {
    let text = std::fs::read_to_string(path)?;
    load_mentions_str(&text)
}

/// Labels file: `instance_id<TAB>label` per line.
pub fn load_labels_str(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(lineno + 1, "expected id<TAB>label"))?;
        out.insert(id.to_string(), label.to_string());
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    load_labels_str(&text)
}

/// Write instances as JSONL, one record per line.
pub fn write_instances_jsonl<W: Write>(instances: &[RelationInstance], mut w: W) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read instances back from JSONL.
pub fn read_instances_jsonl(path: &Path) -> Result<Vec<RelationInstance>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: RelationInstance = serde_json::from_str(&line)
            .map_err(|e| Error::parse(lineno + 1, e.to_string()))?;
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}
