use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, Quadruple, RelationId, Timestep};
use crate::policy::Query;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rerank {
    /// Stage-1 candidates outrank every other entity; both groups are
    /// ordered by Stage-2 score.
    CandidatesFirst,
    /// Every entity ordered by Stage-2 score alone.
    Pure,
}

impl std::str::FromStr for Rerank {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "candidates_first" => Ok(Rerank::CandidatesFirst),
            "pure" => Ok(Rerank::Pure),
            _ => Err(Error::Config(format!("unknown rerank mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for Rerank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rerank::CandidatesFirst => "candidates_first",
            Rerank::Pure => "pure",
        })
    }
}

fn by_score_then_id(scores: &[f64]) -> impl Fn(&EntityId, &EntityId) -> std::cmp::Ordering + '_ {
    move |&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b))
}

/// Total order over all `scores.len()` entities. Ties go to the smaller
/// id; an empty candidate set behaves like [`Rerank::Pure`].
pub fn final_ranking(candidates: &[EntityId], scores: &[f64], mode: Rerank) -> Vec<EntityId> {
    let n = scores.len();
    let mut is_cand = vec![false; n];
    for &c in candidates {
        if (c as usize) < n {
            is_cand[c as usize] = true;
        }
    }
    let cmp = by_score_then_id(scores);
    if mode == Rerank::Pure || !is_cand.iter().any(|&c| c) {
        let mut all: Vec<EntityId> = (0..n as EntityId).collect();
        all.sort_by(&cmp);
        return all;
    }
    let (mut head, mut tail): (Vec<EntityId>, Vec<EntityId>) = (0..n as EntityId).partition(|&e| is_cand[e as usize]);
    head.sort_by(&cmp);
    tail.sort_by(&cmp);
    head.extend(tail);
    head
}

/// Ranked Stage-1 candidates followed by every other entity in id order.
pub fn stage1_ordering(ranked: &[(EntityId, f64)], num_entities: usize) -> Vec<EntityId> {
    let mut seen = vec![false; num_entities];
    let mut out = Vec::with_capacity(num_entities);
    for &(e, _) in ranked {
        if (e as usize) < num_entities && !seen[e as usize] {
            seen[e as usize] = true;
            out.push(e);
        }
    }
    out.extend((0..num_entities as EntityId).filter(|&e| !seen[e as usize]));
    out
}

/// 1-based position of `truth`.
pub fn rank_of(ordering: &[EntityId], truth: EntityId) -> Result<usize> {
    ordering
        .iter()
        .position(|&e| e == truth)
        .map(|p| p + 1)
        .ok_or_else(|| Error::Invalid(format!("entity {truth} missing from the ranking")))
}

/// Objects of true facts `(s, r, ·, t)` in any split, for the time-aware
/// filtered setting.
#[derive(Debug, Clone, Default)]
pub struct TimeFilter {
    objects: HashMap<(EntityId, RelationId, Timestep), HashSet<EntityId>>,
}

impl TimeFilter {
    pub fn new<'a>(facts: impl IntoIterator<Item = &'a Quadruple>) -> Self {
        let mut objects: HashMap<_, HashSet<EntityId>> = HashMap::new();
        for f in facts {
            objects
                .entry((f.subject, f.relation, f.time))
                .or_default()
                .insert(f.object);
        }
        Self { objects }
    }

    pub fn is_true(&self, query: &Query, entity: EntityId) -> bool {
        self.objects
            .get(&(query.subject, query.relation, query.time))
            .is_some_and(|s| s.contains(&entity))
    }

    /// Rank of `truth` after dropping every other entity that forms a true
    /// fact at the query time.
    pub fn filtered_rank(&self, query: &Query, ordering: &[EntityId], truth: EntityId) -> Result<usize> {
        let raw = rank_of(ordering, truth)?;
        let Some(known) = self.objects.get(&(query.subject, query.relation, query.time)) else {
            return Ok(raw);
        };
        let removed = ordering[..raw - 1].iter().filter(|e| known.contains(e)).count();
        Ok(raw - removed)
    }
}
