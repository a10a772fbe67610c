//! The bundled example sentences reproduce the documented paths and
//! augmentation outputs when loaded from their interchange files.

use std::collections::HashMap;
use std::path::PathBuf;

use contra_re::augment::SynonymLexicon;
use contra_re::depgraph::{parse_conllu, shortest_dependency_path};
use contra_re::eval::generate_shift_set;
use contra_re::kbgen::{
    enumerate_pairs, enumerate_pairs_with_parses, load_kb_pairs, load_mentions,
    AnnotatedSentence, RelationTask,
};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn load_annotated(conllu: &str, mentions: &str) -> Vec<AnnotatedSentence> {
    let text = std::fs::read_to_string(data_dir().join(conllu)).unwrap();
    let parses = parse_conllu(&text).unwrap();
    let mentions = load_mentions(&data_dir().join(mentions)).unwrap();
    parses
        .into_iter()
        .map(|p| {
            let ms = mentions.get(&p.sentence_id).cloned().unwrap_or_default();
            AnnotatedSentence::new(p, ms).unwrap()
        })
        .collect()
}

#[test]
fn ppi_table_sdp_surface() {
    let sents = load_annotated("fixtures/ppi_table.conllu", "fixtures/ppi_table.mentions.tsv");
    assert_eq!(sents.len(), 1);
    let sent = &sents[0];
    let sdp = shortest_dependency_path(
        &sent.parsed,
        &sent.mentions[0].span,
        &sent.mentions[1].span,
    )
    .unwrap();
    let surface = sdp.path_surface(&sent.parsed).join(" ");
    assert_eq!(surface, "@PROTEIN$ interacts @PROTEIN$");
}

#[test]
fn three_protein_sentence_yields_three_instances() {
    let sents = load_annotated(
        "fixtures/kb_three_proteins.conllu",
        "fixtures/kb_three_proteins.mentions.tsv",
    );
    let kb = load_kb_pairs(&data_dir().join("fixtures/kb_pairs.tsv"), "ppi").unwrap();
    let instances = enumerate_pairs(&sents[0], RelationTask::Ppi, Some(&kb)).unwrap();
    assert_eq!(instances.len(), 3);
    // NIPP1-PP1 and PP1-Sap155 are in the pair list; NIPP1-Sap155 is not.
    let flags: Vec<Option<bool>> = instances.iter().map(|i| i.in_kb).collect();
    assert_eq!(flags, vec![Some(true), Some(false), Some(true)]);
}

#[test]
fn shift_examples_reproduce_published_neighbors() {
    let sents = load_annotated(
        "fixtures/shift_examples.conllu",
        "fixtures/shift_examples.mentions.tsv",
    );
    assert_eq!(sents.len(), 2);

    let mut instances = Vec::new();
    let mut parses = HashMap::new();
    for sent in &sents {
        let (insts, ps) = enumerate_pairs_with_parses(sent, RelationTask::ChemProt, None).unwrap();
        instances.extend(insts);
        parses.extend(ps);
    }
    assert_eq!(instances.len(), 2);

    // Sentence 1: SDP keeps "Instead" free; the lexicon entry rewrites it.
    let lex1 = SynonymLexicon::from_tsv_str("instead\tor else\n").unwrap();
    let pairs = generate_shift_set(&instances[..1], &parses, &lex1, 3).unwrap();
    assert!(!pairs[0].unchanged);
    assert_eq!(pairs[0].neighbor_tokens[0], "Or else");
    assert_eq!(&pairs[0].neighbor_tokens[1..], &pairs[0].original.tokens[1..]);

    // Sentence 2: "neurons" sits off the path and becomes "nerve cell".
    let lex2 = SynonymLexicon::from_tsv_str("neurons\tnerve cell\n").unwrap();
    let pairs = generate_shift_set(&instances[1..], &parses, &lex2, 3).unwrap();
    assert!(!pairs[0].unchanged);
    let idx = pairs[0]
        .original
        .tokens
        .iter()
        .position(|t| t == "neurons")
        .unwrap();
    assert_eq!(pairs[0].neighbor_tokens[idx], "nerve cell");
    let sdp = shortest_dependency_path(
        &parses[&instances[1].instance_id],
        &instances[1].e1,
        &instances[1].e2,
    )
    .unwrap();
    assert!(!sdp.frozen_indices.contains(&idx), "neurons must be replaceable");
}

#[test]
fn bundled_lexicon_parses() {
    let lex = SynonymLexicon::load(&data_dir().join("lexicon.tsv")).unwrap();
    assert_eq!(lex.get("directly").unwrap(), ["straight".to_string()]);
    assert_eq!(lex.get("Instead").unwrap(), ["or else".to_string()]);
}
