use serde::{Deserialize, Serialize};

use super::actions::{ActionCand, Query};
use super::beam::BeamEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub relation: u32,
    pub entity: u32,
    pub time: u32,
    pub self_loop: bool,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePath {
    pub destination: u32,
    pub cum_log_prob: f64,
    pub steps: Vec<TraceStep>,
}

/// One JSON Lines record per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub query: Query,
    pub window: u32,
    pub paths: Vec<TracePath>,
}

impl RolloutTrace {
    pub fn new(query: Query, window: u32, beams: &[BeamEntry]) -> Self {
        let paths = beams
            .iter()
            .map(|b| TracePath {
                destination: b.destination(),
                cum_log_prob: b.cum_log_prob,
                steps: b
                    .actions
                    .iter()
                    .zip(&b.step_log_probs)
                    .map(|(a, &lp): (&ActionCand, &f64)| TraceStep {
                        relation: a.relation,
                        entity: a.entity,
                        time: a.time,
                        self_loop: a.is_self_loop,
                        log_prob: lp,
                    })
                    .collect(),
            })
            .collect();
        Self { query, window, paths }
    }
}
