//! Document hypergraph: one node per word occurrence, one hyperedge per
//! sentence, and a document hyperedge spanning every node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{validate_bundle, EmbeddingBundle, Violation};
use crate::segment::SegmentedDocument;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypergraphError {
    #[error("bundle for `{doc_id}` fails validation: {violations:?}")]
    Invalid {
        doc_id: String,
        violations: Vec<Violation>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordNode {
    /// 0-based sentence index.
    pub sentence: usize,
    /// 0-based position within the sentence.
    pub position: usize,
    pub token: String,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperedge {
    /// Member node ids in increasing order.
    pub members: Vec<usize>,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextHypergraph {
    pub doc_id: String,
    pub dim: usize,
    pub nodes: Vec<WordNode>,
    pub sentence_edges: Vec<Hyperedge>,
    pub document_edge: Hyperedge,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn build_hypergraph(
    doc: &SegmentedDocument,
    bundle: &EmbeddingBundle,
) -> Result<TextHypergraph, HypergraphError> {
    let report = validate_bundle(bundle, doc);
    if !report.is_clean() {
        return Err(HypergraphError::Invalid {
            doc_id: doc.doc_id.clone(),
            violations: report.violations,
        });
    }
    let mut nodes = Vec::with_capacity(doc.word_count());
    let mut sentence_edges = Vec::with_capacity(doc.sentences.len());
    for (j, sent) in doc.sentences.iter().enumerate() {
        let start = nodes.len();
        for (k, word) in sent.words.iter().enumerate() {
            nodes.push(WordNode {
                sentence: j,
                position: k,
                token: word.clone(),
                features: widen(&bundle.word_vecs[j][k]),
            });
        }
        sentence_edges.push(Hyperedge {
            members: (start..nodes.len()).collect(),
            features: widen(&bundle.sent_vecs[j]),
        });
    }
    let document_edge = Hyperedge {
        members: (0..nodes.len()).collect(),
        features: widen(&bundle.doc_vec),
    };
    Ok(TextHypergraph {
        doc_id: doc.doc_id.clone(),
        dim: bundle.dim,
        nodes,
        sentence_edges,
        document_edge,
    })
}

/// Dense 0/1 matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl IncidenceMatrix {
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) as usize).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c) as usize).sum())
            .collect()
    }
}

impl TextHypergraph {
    pub fn edge_count(&self) -> usize {
        self.sentence_edges.len() + 1
    }

    /// `|V| × |E|` membership matrix; columns are the sentence hyperedges in
    /// order followed by the document hyperedge.
    pub fn incidence_matrix(&self) -> IncidenceMatrix {
        let cols = self.edge_count();
        let mut m = IncidenceMatrix {
            rows: self.nodes.len(),
            cols,
            data: vec![0; self.nodes.len() * cols],
        };
        let edges = self
            .sentence_edges
            .iter()
            .chain(std::iter::once(&self.document_edge));
        for (c, e) in edges.enumerate() {
            for &v in &e.members {
                m.data[v * cols + c] = 1;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::hash_embed;
    use crate::segment::segment;
    use proptest::prelude::*;

    fn example() -> TextHypergraph {
        let d = segment("d", "one two three. four five.").unwrap();
        let b = hash_embed(&d, 4, 0).unwrap();
        build_hypergraph(&d, &b).unwrap()
    }

    #[test]
    fn counts_for_three_plus_two() {
        let h = example();
        assert_eq!(h.nodes.len(), 5);
        assert_eq!(h.edge_count(), 3);
        let m = h.incidence_matrix();
        assert_eq!((m.rows, m.cols), (5, 3));
        assert!((0..5).all(|r| m.get(r, 2) == 1));
        assert_eq!(m.col_sums(), vec![3, 2, 5]);
        assert!(m.row_sums().iter().all(|&s| s == 2));
    }

    #[test]
    fn minimal_document() {
        let d = segment("d", "hi").unwrap();
        let b = hash_embed(&d, 2, 0).unwrap();
        let h = build_hypergraph(&d, &b).unwrap();
        assert_eq!(h.nodes.len(), 1);
        assert_eq!(h.edge_count(), 2);
    }

    #[test]
    fn features_are_bundle_values() {
        let d = segment("d", "alpha beta. gamma.").unwrap();
        let b = hash_embed(&d, 6, 7).unwrap();
        let h = build_hypergraph(&d, &b).unwrap();
        assert_eq!(h.nodes[2].features, widen(&b.word_vecs[1][0]));
        assert_eq!(h.sentence_edges[0].features, widen(&b.sent_vecs[0]));
        assert_eq!(h.document_edge.features, widen(&b.doc_vec));
    }

    #[test]
    fn invalid_pairing_rejected() {
        let d = segment("d", "alpha beta. gamma.").unwrap();
        let mut b = hash_embed(&d, 6, 7).unwrap();
        b.word_vecs[1].push(vec![0.0; 6]);
        assert!(matches!(
            build_hypergraph(&d, &b),
            Err(HypergraphError::Invalid { .. })
        ));
    }

    proptest! {
        #[test]
        fn structure_invariants(lens in prop::collection::vec(1usize..6, 1..6)) {
            let text = lens
                .iter()
                .enumerate()
                .map(|(j, &n)| (0..n).map(|k| format!("w{j}x{k}")).collect::<Vec<_>>().join(" ") + ".")
                .collect::<Vec<_>>()
                .join(" ");
            let d = segment("p", &text).unwrap();
            let b = hash_embed(&d, 3, 1).unwrap();
            let h = build_hypergraph(&d, &b).unwrap();
            prop_assert_eq!(h.nodes.len(), lens.iter().sum::<usize>());
            prop_assert_eq!(h.edge_count(), lens.len() + 1);
            let mut union: Vec<usize> = h.sentence_edges.iter().flat_map(|e| e.members.clone()).collect();
            union.sort();
            prop_assert_eq!(&union, &h.document_edge.members);
            let m = h.incidence_matrix();
            prop_assert!(m.row_sums().iter().all(|&s| s == 2));
        }
    }
}
