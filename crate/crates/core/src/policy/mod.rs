//! Stage 1: a policy network walks the history graph from the query
//! subject and returns a beam of clue paths.

mod actions;
mod beam;
mod network;
mod rank;
mod reward;
mod trace;

pub use actions::{
    action_window, adaptive_window, enumerate_actions, ActionCand, ActionConfig, AgentState, Query, WindowMode,
};
pub use beam::{randomized_beam_search, randomized_pick, sort_beams, BeamConfig, BeamEntry};
pub use network::{PolicyDims, Stage1Params};
pub use rank::stage1_rank;
pub use reward::{push_surrogate_terms, reinforce_surrogate, reinforce_update, terminal_reward, Baseline, RewardPhase};
pub use trace::{RolloutTrace, TracePath, TraceStep};
