//! Stage 2: turns clue paths into a per-timestep graph sequence and
//! scores every entity with an RGCN, a GRU and a linear decoder.

mod clues;
mod model;
mod trace;

pub use clues::{
    build_sequence, derive_clue_facts, repetitive_clue_facts, ClueGraph, ClueGraphSequence, CluePath, Hop,
};
pub use model::{beam_reward, ce_loss, score_entities, ReasonerDims, Stage2Params};
pub use trace::{reasoning_trace, ReasoningTrace, TraceGraph};
