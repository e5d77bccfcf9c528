use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, TemporalKG, Timestep};

/// A forecasting query `(e_s, r_q, ?, t_s)`, optionally with its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub subject: EntityId,
    pub relation: RelationId,
    pub time: Timestep,
    pub answer: Option<EntityId>,
}

impl Query {
    pub fn new(subject: EntityId, relation: RelationId, time: Timestep) -> Self {
        Self {
            subject,
            relation,
            time,
            answer: None,
        }
    }

    pub fn with_answer(mut self, answer: EntityId) -> Self {
        self.answer = Some(answer);
        self
    }

    pub fn from_fact(q: &crate::kg::Quadruple) -> Self {
        Self::new(q.subject, q.relation, q.time).with_answer(q.object)
    }

    pub fn validate(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        let bad_entity = |e: EntityId| e as usize >= num_entities;
        if bad_entity(self.subject) || self.answer.is_some_and(bad_entity) {
            return Err(Error::Validation(format!(
                "query {self:?} has an entity outside [0, {num_entities})"
            )));
        }
        if self.relation as usize >= num_relations {
            return Err(Error::Validation(format!(
                "query {self:?} has a relation outside [0, {num_relations})"
            )));
        }
        Ok(())
    }
}

/// Where the agent stands: current entity, time of the last action taken
/// (the query time at step 0) and the step index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub entity: EntityId,
    pub time: Timestep,
    pub step: usize,
}

impl AgentState {
    pub fn start(query: &Query) -> Self {
        Self {
            entity: query.subject,
            time: query.time,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCand {
    pub relation: RelationId,
    pub entity: EntityId,
    pub time: Timestep,
    pub is_self_loop: bool,
}

impl ActionCand {
    /// Deterministic tie-break key: relation and entity ascending, time
    /// descending.
    pub fn order_key(&self) -> (RelationId, EntityId, std::cmp::Reverse<Timestep>) {
        (self.relation, self.entity, std::cmp::Reverse(self.time))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowMode {
    /// `m = t_s − (k-th most recent time the pattern (e_s, r_q, ·) occurred)`.
    PatternK(usize),
    /// Constant `m`.
    Fixed(u32),
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WindowMode::PatternK(k) => write!(f, "pattern:{k}"),
            WindowMode::Fixed(m) => write!(f, "fixed:{m}"),
        }
    }
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad window mode {s:?}, expected pattern:K or fixed:M"));
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "pattern" => {
                let k: usize = n.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(WindowMode::PatternK(k))
            }
            "fixed" => Ok(WindowMode::Fixed(n.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// History window `m` for a query. When the pattern never occurred the
/// window falls back to the full history `t_s`, capped by `m_max`.
pub fn adaptive_window(kg: &TemporalKG, query: &Query, mode: WindowMode, m_max: Option<u32>) -> u32 {
    match mode {
        WindowMode::Fixed(m) => m,
        WindowMode::PatternK(k) => match kg.last_pattern_time(query.subject, query.relation, query.time, k) {
            Some(t) => query.time - t,
            None => m_max.map_or(query.time, |cap| query.time.min(cap)),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionConfig {
    /// Maximum gap between consecutive action timestamps.
    pub delta: u32,
    /// Keep at most this many non-self-loop actions (the most recent ones).
    pub cap: Option<usize>,
    /// Apply the `delta` constraint at step 0 too (against `t_0 = t_s`).
    pub strict_delta_step0: bool,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            delta: 3,
            cap: Some(200),
            strict_delta_step0: false,
        }
    }
}

/// The closed time window `[lo, hi]` admissible from `state`, or `None`
/// when it is empty.
pub fn action_window(state: &AgentState, query: &Query, m: u32, cfg: &ActionConfig) -> Option<(Timestep, Timestep)> {
    if query.time == 0 {
        return None;
    }
    let mut hi = query.time - 1;
    let mut lo = query.time.saturating_sub(m);
    if state.step >= 1 || cfg.strict_delta_step0 {
        lo = lo.max(state.time.saturating_sub(cfg.delta));
        hi = hi.min(state.time.saturating_add(cfg.delta));
    }
    (lo <= hi).then_some((lo, hi))
}

/// Time-constrained outgoing edges of the current entity plus one
/// self-loop (always last).
pub fn enumerate_actions(
    kg: &TemporalKG,
    state: &AgentState,
    query: &Query,
    m: u32,
    cfg: &ActionConfig,
) -> Vec<ActionCand> {
    let mut out: Vec<ActionCand> = match action_window(state, query, m, cfg) {
        Some((lo, hi)) => kg
            .outgoing_facts(state.entity, lo, hi)
            .into_iter()
            .map(|e| ActionCand {
                relation: e.relation,
                entity: e.object,
                time: e.time,
                is_self_loop: false,
            })
            .collect(),
        None => Vec::new(),
    };
    if let Some(cap) = cfg.cap {
        out.truncate(cap);
    }
    out.push(ActionCand {
        relation: kg.vocab().self_loop(),
        entity: state.entity,
        time: state.time,
        is_self_loop: true,
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Quadruple, RelationVocab};

    fn kg() -> TemporalKG {
        let facts = [
            Quadruple::new(0, 0, 1, 10),
            Quadruple::new(0, 1, 2, 12),
            Quadruple::new(0, 1, 3, 17),
            Quadruple::new(0, 0, 4, 19),
            Quadruple::new(0, 0, 4, 20),
            Quadruple::new(1, 1, 2, 16),
        ];
        TemporalKG::new(facts, 5, RelationVocab::new(2)).unwrap()
    }

    #[test]
    fn no_history_only_self_loop() {
        let kg = kg();
        let q = Query::new(3, 0, 20);
        let acts = enumerate_actions(&kg, &AgentState::start(&q), &q, 20, &ActionConfig::default());
        assert_eq!(acts.len(), 1);
        assert!(acts[0].is_self_loop);
        assert_eq!(acts[0].relation, 4);
    }

    #[test]
    fn window_excludes_query_time_and_old_facts() {
        let kg = kg();
        let q = Query::new(0, 0, 20);
        let acts = enumerate_actions(&kg, &AgentState::start(&q), &q, 8, &ActionConfig::default());
        let times: Vec<_> = acts.iter().map(|a| a.time).collect();
        assert_eq!(times, vec![19, 17, 12, 20]);
    }

    #[test]
    fn delta_boundary_is_inclusive() {
        let kg = kg();
        let q = Query::new(0, 0, 20);
        let state = AgentState {
            entity: 0,
            time: 15,
            step: 1,
        };
        let cfg = ActionConfig {
            delta: 3,
            ..Default::default()
        };
        let acts = enumerate_actions(&kg, &state, &q, 20, &cfg);
        let times: Vec<_> = acts.iter().filter(|a| !a.is_self_loop).map(|a| a.time).collect();
        // 12 = 15 - 3 and 17 are inside; 10 and 19 are not
        assert_eq!(times, vec![17, 12]);
    }

    #[test]
    fn cap_keeps_most_recent_and_self_loop() {
        let kg = kg();
        let q = Query::new(0, 0, 21);
        let cfg = ActionConfig {
            cap: Some(2),
            ..Default::default()
        };
        let acts = enumerate_actions(&kg, &AgentState::start(&q), &q, 21, &cfg);
        assert_eq!(acts.len(), 3);
        assert_eq!(acts[0].time, 20);
        assert_eq!(acts[1].time, 19);
        assert!(acts[2].is_self_loop);
    }

    #[test]
    fn window_modes() {
        let facts = [3, 9, 14].map(|t| Quadruple::new(0, 1, 2, t));
        let kg = TemporalKG::new(facts, 3, RelationVocab::new(2)).unwrap();
        let q = Query::new(0, 1, 20);
        assert_eq!(adaptive_window(&kg, &q, WindowMode::PatternK(1), None), 6);
        assert_eq!(adaptive_window(&kg, &q, WindowMode::PatternK(3), None), 17);
        let absent = Query::new(0, 0, 20);
        assert_eq!(adaptive_window(&kg, &absent, WindowMode::PatternK(1), None), 20);
        assert_eq!(adaptive_window(&kg, &absent, WindowMode::PatternK(1), Some(5)), 5);
        assert_eq!(adaptive_window(&kg, &q, WindowMode::Fixed(4), None), 4);
        assert_eq!("pattern:3".parse::<WindowMode>().unwrap(), WindowMode::PatternK(3));
        assert!("pattern:0".parse::<WindowMode>().is_err());
    }
}
