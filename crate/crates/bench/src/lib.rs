//! Fixtures shared by the criterion benches under `benches/`.

use hyperpersona::embedding::hash_embed;
use hyperpersona::hiergraph::{to_hiergraph, HierGraph, LevelConfig};
use hyperpersona::hypergraph::build_hypergraph;
use hyperpersona::segment::{segment_corpus, SegmenterConfig};
use hyperpersona::synth::{make_synthetic_corpus, SynthSpec};
use hyperpersona::EssayRecord;

/// Synthetic essays with `sentences` and `words` ranges per document.
pub fn essays(docs: usize, sentences: (usize, usize), words: (usize, usize)) -> Vec<EssayRecord> {
    let spec = SynthSpec {
        docs,
        sentences,
        words,
        ..SynthSpec::default()
    };
    make_synthetic_corpus(&spec).expect("valid spec").records
}

pub fn graphs(records: &[EssayRecord], dim: usize, level: LevelConfig) -> Vec<HierGraph> {
    let (docs, _) = segment_corpus(records, &SegmenterConfig::default());
    docs.iter()
        .map(|d| {
            let b = hash_embed(d, dim, 0).expect("dim >= 2");
            to_hiergraph(&build_hypergraph(d, &b).expect("consistent bundle"), level)
                .expect("non-degenerate")
        })
        .collect()
}
