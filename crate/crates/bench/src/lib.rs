//! Shared fixtures for the benchmarks.

use hsmp_core::synth::{generate_corpus, SynthConfig};
use hsmp_core::{
    Corpus, HeaderLexicon, LabelSchema, OracleConfig, OracleScorer, TemplateSet, Verbalizer,
};

pub struct Fixture {
    pub corpus: Corpus,
    pub lexicon: HeaderLexicon,
    pub verbalizer: Verbalizer,
    pub oracle: OracleScorer,
}

/// Synthetic corpus of `n` reports with a noiseless oracle over every cell.
pub fn fixture(n: usize, seed: u64) -> Fixture {
    let schema = LabelSchema::standard();
    let corpus = generate_corpus(
        &SynthConfig {
            n_reports: n,
            seed,
            ..SynthConfig::default()
        },
        schema,
    )
    .expect("synthetic corpus");
    let lexicon = HeaderLexicon::default();
    let verbalizer = Verbalizer::new(schema, &TemplateSet::english()).expect("templates");
    let oracle = OracleScorer::from_corpus(
        OracleConfig::default(),
        verbalizer.clone(),
        &corpus,
        &lexicon,
        None,
    )
    .expect("oracle");
    Fixture {
        corpus,
        lexicon,
        verbalizer,
        oracle,
    }
}
