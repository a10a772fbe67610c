//! Regenerate a synthetic relation corpus as interchange files.
//!
//! Usage: cargo run --example generate_corpus -- OUT_DIR [N_TRAIN N_TEST SEED]

use contra_re::synth::{generate, write_corpus_dir, SynthSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().expect("usage: generate_corpus OUT_DIR [N_TRAIN N_TEST SEED]");
    let mut spec = SynthSpec::default();
    if let Some(n) = args.next() {
        spec.n_train = n.parse().expect("N_TRAIN");
    }
    if let Some(n) = args.next() {
        spec.n_test = n.parse().expect("N_TEST");
    }
    if let Some(s) = args.next() {
        spec.seed = s.parse().expect("SEED");
    }
    let corpus = generate(&spec).expect("generation");
    write_corpus_dir(&corpus, &spec, std::path::Path::new(&out)).expect("write");
    println!(
        "wrote {} train / {} test sentences to {}",
        spec.n_train, spec.n_test, out
    );
}
