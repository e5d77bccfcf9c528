use serde::{Deserialize, Serialize};

use super::evaluator::{EvalMode, Evaluator, RankedEntity};
use super::ranking::rank_of;
use crate::error::{Error, Result};
use crate::kg::EntityId;
use crate::policy::{Query, TracePath};
use crate::reasoner::{reasoning_trace, TraceGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedCandidate {
    pub entity: EntityId,
    pub path_score: f64,
    pub best_path: TracePath,
}

/// How one query was answered: Stage-1 candidates with their best path,
/// the clue-graph sequence Stage 2 read, and the final scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub query: Query,
    pub window: u32,
    pub candidates: Vec<ExplainedCandidate>,
    pub sequence: Vec<TraceGraph>,
    pub final_top: Vec<RankedEntity>,
    pub answer: EntityId,
    pub truth_rank: Option<usize>,
}

pub fn explain(ev: &Evaluator<'_>, query: &Query, k: usize) -> Result<Explanation> {
    let p2 = ev
        .stage2
        .ok_or_else(|| Error::Invalid("explanations need Stage-2 parameters".into()))?;
    let pred = ev.predict(query, 0, EvalMode::Full)?;
    let rollout = pred.rollout.as_ref().expect("full mode records a rollout");
    let candidates = pred
        .candidates
        .iter()
        .take(k)
        .map(|&(e, s)| {
            let best = rollout
                .paths
                .iter()
                .filter(|p| p.destination == e)
                .max_by(|a, b| a.cum_log_prob.total_cmp(&b.cum_log_prob))
                .cloned()
                .expect("candidate comes from a path");
            ExplainedCandidate {
                entity: e,
                path_score: s,
                best_path: best,
            }
        })
        .collect();
    let trace = reasoning_trace(p2, &pred.sequence, k)?;
    let final_top = pred
        .ordering
        .iter()
        .take(k)
        .map(|&e| RankedEntity {
            entity: e,
            score: pred.score_of(e),
        })
        .collect();
    Ok(Explanation {
        query: *query,
        window: rollout.window,
        candidates,
        sequence: trace.graphs,
        final_top,
        answer: pred.ordering[0],
        truth_rank: query.answer.map(|a| rank_of(&pred.ordering, a)).transpose()?,
    })
}
