//! Temporal knowledge graph data model: facts, relation vocabulary,
//! time-indexed storage, dataset ingestion and synthetic generation.

mod coverage;
mod dataset;
mod graph;
mod synth;
mod types;

pub use coverage::{coverage_stats, CoverageOptions, CoverageStats};
pub use dataset::{load_dataset, load_dir, DatasetBundle, Splits};
pub use graph::{Edge, TemporalKG};
pub use synth::{generate_synthetic, PlantedFact, Rule, SynthConfig, SyntheticData};
pub use types::{EntityId, Quadruple, RelationId, RelationVocab, Timestep};
