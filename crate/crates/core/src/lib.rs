//! Multi-level hypergraph representations of essays and an attention graph
//! encoder with a learned feature mask for binary Big Five trait prediction.

pub mod checkpoint;
pub mod corpus;
pub mod embedding;
pub mod hiergraph;
pub mod hypergraph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod tensor;
pub mod train;

pub use corpus::{ColumnMap, EssayRecord, SplitSpec, Trait, TraitLabels};
pub use embedding::{BundleManifest, EmbeddingBundle};
pub use hiergraph::{HierGraph, LevelConfig};
pub use hypergraph::TextHypergraph;
pub use metrics::{AblationReport, TraitReport};
pub use model::{EdgeWeightMode, ModelConfig, ModelParams};
pub use pipeline::{PipelineError, RunConfig, RunReport, Stage};
pub use segment::{SegmentedDocument, SegmenterConfig};
pub use synth::SynthSpec;
pub use train::{TauSchedule, TrainConfig};
