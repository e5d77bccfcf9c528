use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::types::{EntityId, Quadruple, RelationId, RelationVocab, Timestep};
use crate::error::{Error, Result};

/// An outgoing edge `(r', e', t')` of some entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub relation: RelationId,
    pub object: EntityId,
    pub time: Timestep,
}

/// Immutable time-indexed fact store.
///
/// Facts are kept sorted by `(subject, time, relation, object)` so the
/// outgoing facts of an entity form one contiguous, time-sorted slice and
/// any time window is found with two binary searches.
#[derive(Debug, Clone)]
pub struct TemporalKG {
    facts: Vec<Quadruple>,
    offsets: Vec<usize>,
    num_entities: usize,
    vocab: RelationVocab,
    max_time: Timestep,
    triple_times: HashMap<(EntityId, RelationId, EntityId), Vec<Timestep>>,
    pattern_times: HashMap<(EntityId, RelationId), Vec<Timestep>>,
}

impl TemporalKG {
    pub fn new(facts: impl IntoIterator<Item = Quadruple>, num_entities: usize, vocab: RelationVocab) -> Result<Self> {
        let mut facts: Vec<Quadruple> = facts.into_iter().collect();
        for q in &facts {
            if q.subject as usize >= num_entities || q.object as usize >= num_entities {
                return Err(Error::Validation(format!(
                    "fact {q} references an entity outside [0, {num_entities})"
                )));
            }
            if q.relation as usize >= vocab.extended_size() {
                return Err(Error::Validation(format!(
                    "fact {q} references a relation outside [0, {})",
                    vocab.extended_size()
                )));
            }
        }
        facts.sort_unstable_by_key(|q| (q.subject, q.time, q.relation, q.object));

        let mut offsets = vec![0usize; num_entities + 1];
        for q in &facts {
            offsets[q.subject as usize + 1] += 1;
        }
        for i in 0..num_entities {
            offsets[i + 1] += offsets[i];
        }

        let mut triple_times: HashMap<_, Vec<Timestep>> = HashMap::new();
        let mut pattern_times: HashMap<_, Vec<Timestep>> = HashMap::new();
        for q in &facts {
            triple_times
                .entry((q.subject, q.relation, q.object))
                .or_default()
                .push(q.time);
            pattern_times.entry((q.subject, q.relation)).or_default().push(q.time);
        }
        // facts are time-sorted within a subject, so these lists are too
        for times in pattern_times.values_mut() {
            times.dedup();
        }
        let max_time = facts.iter().map(|q| q.time).max().unwrap_or(0);

        Ok(Self {
            facts,
            offsets,
            num_entities,
            vocab,
            max_time,
            triple_times,
            pattern_times,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn vocab(&self) -> RelationVocab {
        self.vocab
    }

    pub fn num_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn max_time(&self) -> Timestep {
        self.max_time
    }

    pub fn facts(&self) -> &[Quadruple] {
        &self.facts
    }

    /// All facts with subject `e`, sorted by time ascending.
    pub fn subject_slice(&self, e: EntityId) -> &[Quadruple] {
        let e = e as usize;
        if e >= self.num_entities {
            return &[];
        }
        &self.facts[self.offsets[e]..self.offsets[e + 1]]
    }

    /// The facts of `e` with `t_lo <= t <= t_hi`, sorted by time ascending.
    pub fn window_slice(&self, e: EntityId, t_lo: Timestep, t_hi: Timestep) -> &[Quadruple] {
        let slice = self.subject_slice(e);
        if t_lo > t_hi {
            return &[];
        }
        let start = slice.partition_point(|q| q.time < t_lo);
        let end = slice.partition_point(|q| q.time <= t_hi);
        &slice[start..end.max(start)]
    }

    /// Outgoing facts of `e` inside the closed window `[t_lo, t_hi]`,
    /// ordered by time descending, then relation and object ascending.
    pub fn outgoing_facts(&self, e: EntityId, t_lo: Timestep, t_hi: Timestep) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .window_slice(e, t_lo, t_hi)
            .iter()
            .map(|q| Edge {
                relation: q.relation,
                object: q.object,
                time: q.time,
            })
            .collect();
        out.sort_by(|a, b| {
            b.time
                .cmp(&a.time)
                .then(a.relation.cmp(&b.relation))
                .then(a.object.cmp(&b.object))
        });
        out
    }

    /// Ascending timesteps at which `(s, r, o)` holds (with multiplicity).
    pub fn triple_times(&self, s: EntityId, r: RelationId, o: EntityId) -> &[Timestep] {
        self.triple_times.get(&(s, r, o)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Distinct ascending timesteps at which the pattern `(s, r, ·)` occurs.
    pub fn pattern_times(&self, s: EntityId, r: RelationId) -> &[Timestep] {
        self.pattern_times.get(&(s, r)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The `k`-th most recent timestep `t' < t_s` at which `(e_s, r_q, ·)`
    /// occurred, or `None` if it occurred fewer than `k` times.
    pub fn last_pattern_time(&self, e_s: EntityId, r_q: RelationId, t_s: Timestep, k: usize) -> Option<Timestep> {
        if k == 0 {
            return None;
        }
        let times = self.pattern_times(e_s, r_q);
        let before = times.partition_point(|&t| t < t_s);
        (before >= k).then(|| times[before - k])
    }
}
