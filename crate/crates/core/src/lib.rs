//! Two-stage temporal knowledge graph forecasting.
//!
//! Stage 1 ([`policy`]) searches the history of a query's subject for clue
//! paths with a reinforcement-learned beam search policy. Stage 2
//! ([`reasoner`]) turns the facts behind those paths into a sequence of
//! per-timestep graphs, encodes it with an RGCN and a GRU, and re-ranks the
//! candidate answers. [`train`] runs the pretrain / frozen / joint schedule
//! and [`eval`] computes rankings, metrics and explanations.

pub mod error;
pub mod eval;
pub mod io;
pub mod kg;
pub mod nd;
pub mod pipeline;
pub mod policy;
pub mod reasoner;
pub mod train;

pub use error::{Error, Result};
pub use kg::{DatasetBundle, EntityId, Quadruple, RelationId, RelationVocab, TemporalKG, Timestep};
pub use nd::{ParamStore, Tape, Tensor, Var};
