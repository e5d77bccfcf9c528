use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::clues::ClueGraphSequence;
use super::model::{score_entities, Stage2Params};
use crate::error::Result;
use crate::kg::{EntityId, RelationId, Timestep};
use crate::nd::{Tape, Tensor};
use crate::policy::Query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceGraph {
    pub time: Timestep,
    pub edges: Vec<(EntityId, RelationId, EntityId)>,
    /// First 16 hex digits of the SHA-256 of the graph embedding's bits.
    pub embedding_digest: String,
}

/// What Stage 2 saw and concluded for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub query: Query,
    pub graphs: Vec<TraceGraph>,
    pub top: Vec<(EntityId, f64)>,
}

fn digest(t: &Tensor) -> String {
    let mut h = Sha256::new();
    for v in t.data() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Scores the sequence and records the per-graph digests and the `k` best
/// entities (ties by id).
pub fn reasoning_trace(params: &Stage2Params, seq: &ClueGraphSequence, k: usize) -> Result<ReasoningTrace> {
    let mut tape = Tape::new(&params.store);
    let (h, gs) = params.encode_sequence_with(&mut tape, seq)?;
    let logits = params.logits(&mut tape, h)?;
    let scores = score_entities(tape.value(logits));
    let mut ranked: Vec<(EntityId, f64)> = scores.iter().enumerate().map(|(e, &p)| (e as EntityId, p)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    let graphs = seq
        .graphs
        .iter()
        .zip(gs)
        .map(|(g, v)| TraceGraph {
            time: g.time,
            edges: g.edges.clone(),
            embedding_digest: digest(tape.value(v)),
        })
        .collect();
    Ok(ReasoningTrace {
        query: seq.query,
        graphs,
        top: ranked,
    })
}
