//! Weighted hierarchical graph derived from a [`TextHypergraph`]: a document
//! core joined to sentence nodes, each joined to its own word nodes, plus
//! the reduced variants used for level ablations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::TextHypergraph;
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierGraphError {
    #[error("edge_weight on vectors of length {left} and {right}")]
    Dimension { left: usize, right: usize },
    #[error("level `{level}` leaves no nodes for `{doc_id}`")]
    Degenerate { doc_id: String, level: LevelConfig },
    #[error("unknown level `{0}` (expected full, doc-sent, doc-word, sent or word)")]
    UnknownLevel(String),
}

/// Which node kinds survive into the graph.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum LevelConfig {
    #[default]
    Full,
    DocSent,
    DocWord,
    #[serde(rename = "sent")]
    SentOnly,
    #[serde(rename = "word")]
    WordOnly,
}

impl LevelConfig {
    pub const ALL: [LevelConfig; 5] = [
        LevelConfig::Full,
        LevelConfig::DocSent,
        LevelConfig::DocWord,
        LevelConfig::SentOnly,
        LevelConfig::WordOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LevelConfig::Full => "full",
            LevelConfig::DocSent => "doc-sent",
            LevelConfig::DocWord => "doc-word",
            LevelConfig::SentOnly => "sent",
            LevelConfig::WordOnly => "word",
        }
    }

    /// Row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            LevelConfig::Full => "Multi-level (Doc + Sent + Word)",
            LevelConfig::DocSent => "Doc + Sent",
            LevelConfig::DocWord => "Doc + Word",
            LevelConfig::SentOnly => "Sent",
            LevelConfig::WordOnly => "Word",
        }
    }

    pub fn includes(self, kind: NodeKind) -> bool {
        use LevelConfig::*;
        use NodeKind::*;
        matches!(
            (self, kind),
            (Full, _)
                | (DocSent, Document | Sentence)
                | (DocWord, Document | Word)
                | (SentOnly, Sentence)
                | (WordOnly, Word)
        )
    }
}

impl fmt::Display for LevelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LevelConfig {
    type Err = HierGraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LevelConfig::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| HierGraphError::UnknownLevel(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Document,
    Sentence,
    Word,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierNode {
    pub kind: NodeKind,
    pub features: Vec<f64>,
}

/// Undirected edge, stored once with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierGraph {
    pub doc_id: String,
    pub level: LevelConfig,
    pub nodes: Vec<HierNode>,
    pub edges: Vec<HierEdge>,
}

/// Directed edge list in the layout message passing consumes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DirectedEdges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
}

impl DirectedEdges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn push(&mut self, src: usize, dst: usize, weight: f64) {
        self.src.push(src);
        self.dst.push(dst);
        self.weight.push(weight);
    }
}

/// `max(0, cos(u, v))`, or 0 when either vector has zero norm.
pub fn edge_weight(u: &[f64], v: &[f64]) -> Result<f64, HierGraphError> {
    if u.len() != v.len() {
        return Err(HierGraphError::Dimension {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    // exact for u == v
    let prod = nu * nv;
    let denom = if prod.is_normal() {
        prod.sqrt()
    } else {
        nu.sqrt() * nv.sqrt()
    };
    let cos = dot / denom;
    Ok(cos.clamp(0.0, 1.0))
}

impl HierGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.features.len())
    }

    pub fn feature_matrix(&self) -> Tensor {
        let dim = self.feature_dim();
        let data = self
            .nodes
            .iter()
            .flat_map(|n| n.features.iter().copied())
            .collect();
        Tensor::from_vec(self.nodes.len(), dim, data).expect("node features share one dimension")
    }

    /// Each stored edge in both directions, in edge order (`u→v` then `v→u`).
    pub fn directed_edges(&self) -> DirectedEdges {
        let mut out = DirectedEdges::default();
        for e in &self.edges {
            out.push(e.u, e.v, e.weight);
            out.push(e.v, e.u, e.weight);
        }
        out
    }

    pub fn kind_count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }
}

pub fn to_hiergraph(hg: &TextHypergraph, level: LevelConfig) -> Result<HierGraph, HierGraphError> {
    let mut nodes = Vec::new();
    let doc = level.includes(NodeKind::Document).then(|| {
        nodes.push(HierNode {
            kind: NodeKind::Document,
            features: hg.document_edge.features.clone(),
        });
        0
    });
    let sents: Option<Vec<usize>> = level.includes(NodeKind::Sentence).then(|| {
        hg.sentence_edges
            .iter()
            .map(|e| {
                nodes.push(HierNode {
                    kind: NodeKind::Sentence,
                    features: e.features.clone(),
                });
                nodes.len() - 1
            })
            .collect()
    });
    let words: Option<Vec<usize>> = level.includes(NodeKind::Word).then(|| {
        hg.nodes
            .iter()
            .map(|w| {
                nodes.push(HierNode {
                    kind: NodeKind::Word,
                    features: w.features.clone(),
                });
                nodes.len() - 1
            })
            .collect()
    });
    if nodes.is_empty() {
        return Err(HierGraphError::Degenerate {
            doc_id: hg.doc_id.clone(),
            level,
        });
    }

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    match (doc, &sents, &words) {
        (Some(d), Some(s), Some(w)) => {
            pairs.extend(s.iter().map(|&sj| (d, sj)));
            for (j, edge) in hg.sentence_edges.iter().enumerate() {
                pairs.extend(edge.members.iter().map(|&m| (s[j], w[m])));
            }
        }
        (Some(d), Some(s), None) => pairs.extend(s.iter().map(|&sj| (d, sj))),
        (Some(d), None, Some(w)) => pairs.extend(w.iter().map(|&wi| (d, wi))),
        (None, Some(ids), None) | (None, None, Some(ids)) => {
            pairs.extend(ids.windows(2).map(|p| (p[0], p[1])));
        }
        _ => unreachable!("level {level} selects an unsupported node set"),
    }

    let edges = pairs
        .into_iter()
        .map(|(u, v)| {
            let weight = edge_weight(&nodes[u].features, &nodes[v].features)?;
            Ok(HierEdge { u, v, weight })
        })
        .collect::<Result<Vec<_>, HierGraphError>>()?;

    Ok(HierGraph {
        doc_id: hg.doc_id.clone(),
        level,
        nodes,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::hash_embed;
    use crate::hypergraph::build_hypergraph;
    use crate::segment::segment;
    use proptest::prelude::*;

    fn example(text: &str) -> TextHypergraph {
        let d = segment("d", text).unwrap();
        let b = hash_embed(&d, 8, 3).unwrap();
        build_hypergraph(&d, &b).unwrap()
    }

    fn connected(g: &HierGraph) -> bool {
        let n = g.node_count();
        let mut adj = vec![Vec::new(); n];
        for e in &g.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn weight_examples() {
        assert_eq!(edge_weight(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(edge_weight(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(edge_weight(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.0);
        let w = edge_weight(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((w - 0.7071068).abs() < 1e-6);
        assert_eq!(edge_weight(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            edge_weight(&[1.0], &[1.0, 2.0]),
            Err(HierGraphError::Dimension { left: 1, right: 2 })
        ));
    }

    #[test]
    fn full_counts() {
        let g = to_hiergraph(&example("one two three. four five."), LevelConfig::Full).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.edges.len(), 7);
        assert_eq!(g.nodes[0].kind, NodeKind::Document);
        assert_eq!(g.nodes[1].kind, NodeKind::Sentence);
        assert_eq!(g.nodes[3].kind, NodeKind::Word);
        assert_eq!((g.edges[0].u, g.edges[0].v), (0, 1));
        assert_eq!((g.edges[2].u, g.edges[2].v), (1, 3));
        assert_eq!((g.edges[6].u, g.edges[6].v), (2, 7));
        assert!(connected(&g));
        assert_eq!(g.directed_edges().len(), 14);
    }

    #[test]
    fn word_only_is_a_path() {
        let g = to_hiergraph(&example("one two three. four five."), LevelConfig::WordOnly).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edges.len(), 4);
        assert!(g
            .edges
            .iter()
            .enumerate()
            .all(|(i, e)| e.u == i && e.v == i + 1));
    }

    #[test]
    fn reduced_variants() {
        let h = example("one two three. four five. six.");
        let ds = to_hiergraph(&h, LevelConfig::DocSent).unwrap();
        assert_eq!((ds.node_count(), ds.edges.len()), (4, 3));
        let dw = to_hiergraph(&h, LevelConfig::DocWord).unwrap();
        assert_eq!((dw.node_count(), dw.edges.len()), (7, 6));
        let s = to_hiergraph(&h, LevelConfig::SentOnly).unwrap();
        assert_eq!((s.node_count(), s.edges.len()), (3, 2));
        assert_eq!(s.kind_count(NodeKind::Sentence), 3);
    }

    #[test]
    fn identical_features_weight_one() {
        let d = segment("d", "same same. same").unwrap();
        let mut b = hash_embed(&d, 4, 0).unwrap();
        b.doc_vec = b.word_vecs[0][0].clone();
        b.sent_vecs = vec![b.doc_vec.clone(); 2];
        let h = build_hypergraph(&d, &b).unwrap();
        let g = to_hiergraph(&h, LevelConfig::Full).unwrap();
        assert!(g.edges.iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn level_names_round_trip() {
        for l in LevelConfig::ALL {
            assert_eq!(l.name().parse::<LevelConfig>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.name()));
        }
        assert!("doc".parse::<LevelConfig>().is_err());
    }

    proptest! {
        #[test]
        fn structural_invariants(lens in prop::collection::vec(1usize..5, 1..5), seed in 0u64..1000) {
            let text = lens
                .iter()
                .enumerate()
                .map(|(j, &n)| (0..n).map(|k| format!("t{}", (j * 7 + k * 3) % 5)).collect::<Vec<_>>().join(" ") + ".")
                .collect::<Vec<_>>()
                .join(" ");
            let d = segment("p", &text).unwrap();
            let b = hash_embed(&d, 5, seed).unwrap();
            let h = build_hypergraph(&d, &b).unwrap();
            for level in LevelConfig::ALL {
                let g = to_hiergraph(&h, level).unwrap();
                prop_assert_eq!(g.edges.len() + 1, g.node_count());
                prop_assert!(connected(&g));
                for e in &g.edges {
                    prop_assert!(e.u < e.v);
                    prop_assert!((0.0..=1.0).contains(&e.weight));
                }
                for n in &g.nodes {
                    prop_assert!(level.includes(n.kind));
                }
            }
        }
    }
}
