use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, Quadruple, RelationId, TemporalKG, Timestep};
use crate::policy::{ActionCand, Query};

/// One hop `(e_{k−1}, r_k, e_k)` of a clue path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub source: EntityId,
    pub relation: RelationId,
    pub target: EntityId,
    pub self_loop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CluePath {
    pub hops: Vec<Hop>,
}

impl CluePath {
    /// Chains the actions of a Stage-1 path starting at `subject`.
    pub fn from_actions(subject: EntityId, actions: &[ActionCand]) -> Self {
        let mut at = subject;
        let hops = actions
            .iter()
            .map(|a| {
                let hop = Hop {
                    source: at,
                    relation: a.relation,
                    target: a.entity,
                    self_loop: a.is_self_loop,
                };
                at = a.entity;
                hop
            })
            .collect();
        Self { hops }
    }

    pub fn destination(&self) -> Option<EntityId> {
        self.hops.last().map(|h| h.target)
    }
}

/// Every fact matching a non-self-loop hop strictly before the query time
/// (and, with `window`, no older than `t_s − window`). Sorted and
/// deduplicated.
pub fn derive_clue_facts(kg: &TemporalKG, query: &Query, paths: &[CluePath], window: Option<u32>) -> Vec<Quadruple> {
    let lo = window.map_or(0, |m| query.time.saturating_sub(m));
    let mut out = Vec::new();
    for hop in paths.iter().flat_map(|p| &p.hops).filter(|h| !h.self_loop) {
        for &t in kg.triple_times(hop.source, hop.relation, hop.target) {
            if t >= lo && t < query.time {
                out.push(Quadruple::new(hop.source, hop.relation, hop.target, t));
            }
        }
    }
    out.sort_unstable_by_key(|q| (q.time, q.subject, q.relation, q.object));
    out.dedup();
    out
}

/// 1-hop repetitive clues `(e_s, r_q, o, t)` with `t < t_s`, bypassing the
/// policy.
pub fn repetitive_clue_facts(kg: &TemporalKG, query: &Query, window: Option<u32>) -> Vec<Quadruple> {
    if query.time == 0 {
        return Vec::new();
    }
    let lo = window.map_or(0, |m| query.time.saturating_sub(m));
    let mut out: Vec<Quadruple> = kg
        .window_slice(query.subject, lo, query.time - 1)
        .iter()
        .filter(|f| f.relation == query.relation)
        .copied()
        .collect();
    out.sort_unstable_by_key(|q| (q.time, q.subject, q.relation, q.object));
    out.dedup();
    out
}

/// Edges `(s, r, o)` active at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueGraph {
    pub time: Timestep,
    pub edges: Vec<(EntityId, RelationId, EntityId)>,
}

impl ClueGraph {
    /// Distinct entities touched by the edges, ascending.
    pub fn entities(&self) -> Vec<EntityId> {
        let mut v: Vec<EntityId> = self.edges.iter().flat_map(|&(s, _, o)| [s, o]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueGraphSequence {
    pub query: Query,
    pub graphs: Vec<ClueGraph>,
}

impl ClueGraphSequence {
    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }
}

/// Groups facts by timestep and keeps the `max_len` most recent graphs
/// (before the query time) in ascending time order.
pub fn build_sequence(facts: &[Quadruple], query: &Query, max_len: usize) -> ClueGraphSequence {
    let mut by_time: BTreeMap<Timestep, Vec<(EntityId, RelationId, EntityId)>> = BTreeMap::new();
    for f in facts.iter().filter(|f| f.time < query.time) {
        by_time
            .entry(f.time)
            .or_default()
            .push((f.subject, f.relation, f.object));
    }
    let skip = by_time.len().saturating_sub(max_len);
    let graphs = by_time
        .into_iter()
        .skip(skip)
        .map(|(time, edges)| ClueGraph { time, edges })
        .collect();
    ClueGraphSequence { query: *query, graphs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RelationVocab;

    fn kg() -> TemporalKG {
        let facts = [
            Quadruple::new(0, 1, 2, 3),
            Quadruple::new(0, 1, 2, 7),
            Quadruple::new(0, 1, 2, 12),
            Quadruple::new(2, 0, 4, 5),
            Quadruple::new(0, 0, 3, 6),
        ];
        TemporalKG::new(facts, 5, RelationVocab::new(2)).unwrap()
    }

    fn act(relation: u32, entity: u32, time: u32) -> ActionCand {
        ActionCand {
            relation,
            entity,
            time,
            is_self_loop: relation == 4,
        }
    }

    #[test]
    fn hop_maps_to_all_earlier_facts() {
        let q = Query::new(0, 1, 10);
        let path = CluePath::from_actions(0, &[act(1, 2, 7)]);
        let facts = derive_clue_facts(&kg(), &q, &[path.clone(), path], None);
        let times: Vec<_> = facts.iter().map(|f| f.time).collect();
        assert_eq!(times, vec![3, 7]);
    }

    #[test]
    fn self_loops_contribute_nothing() {
        let q = Query::new(0, 1, 10);
        let path = CluePath::from_actions(0, &[act(4, 0, 10), act(4, 0, 10)]);
        assert!(derive_clue_facts(&kg(), &q, &[path], None).is_empty());
    }

    #[test]
    fn second_hop_starts_at_first_target() {
        let q = Query::new(0, 1, 10);
        let path = CluePath::from_actions(0, &[act(1, 2, 7), act(0, 4, 5)]);
        let facts = derive_clue_facts(&kg(), &q, &[path], Some(6));
        assert_eq!(facts, vec![Quadruple::new(2, 0, 4, 5), Quadruple::new(0, 1, 2, 7)]);
    }

    #[test]
    fn sequence_keeps_latest() {
        let q = Query::new(0, 0, 100);
        let facts: Vec<_> = (0..12).map(|t| Quadruple::new(0, 0, 1, t * 3)).collect();
        let seq = build_sequence(&facts, &q, 10);
        let times: Vec<_> = seq.graphs.iter().map(|g| g.time).collect();
        assert_eq!(times, (2..12).map(|t| t * 3).collect::<Vec<_>>());
        let one = build_sequence(&facts[..1], &q, 10);
        assert_eq!(one.len(), 1);
        assert!(build_sequence(&[], &q, 10).is_empty());
    }

    #[test]
    fn repetitive_clues() {
        let q = Query::new(0, 1, 10);
        let facts = repetitive_clue_facts(&kg(), &q, None);
        assert_eq!(facts.len(), 2);
        assert!(facts.iter().all(|f| f.relation == 1 && f.subject == 0));
    }
}
