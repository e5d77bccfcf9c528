use serde::{Deserialize, Serialize};

use super::metrics::{metrics, MetricsReport};
use super::ranking::{final_ranking, rank_of, stage1_ordering, Rerank, TimeFilter};
use crate::error::{Error, Result};
use crate::kg::{EntityId, TemporalKG};
use crate::nd::Tape;
use crate::pipeline::{clue_sequence, derive_rng, run_stage1, SearchConfig, Workers};
use crate::policy::{stage1_rank, Query, RolloutTrace, Stage1Params};
use crate::reasoner::{build_sequence, repetitive_clue_facts, ClueGraphSequence, Stage2Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Full,
    /// Destinations ranked by their best path score.
    Stage1Only,
    /// Stage 2 fed with 1-hop repetitive clues, no policy.
    Stage2Only,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::Full, EvalMode::Stage1Only, EvalMode::Stage2Only];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Full => "full",
            EvalMode::Stage1Only => "stage1_only",
            EvalMode::Stage2Only => "stage2_only",
        }
    }
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown eval mode {s:?}")))
    }
}

/// Everything computed for one query.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub query: Query,
    pub mode: EvalMode,
    pub rollout: Option<RolloutTrace>,
    /// Stage-1 destinations with their best path score.
    pub candidates: Vec<(EntityId, f64)>,
    pub sequence: ClueGraphSequence,
    /// Stage-2 sigmoid scores over all entities.
    pub scores: Option<Vec<f64>>,
    pub ordering: Vec<EntityId>,
}

impl Prediction {
    /// Score shown next to an entity: Stage-2 score when present, else the
    /// best path score (absent for entities no path reached).
    pub fn score_of(&self, e: EntityId) -> Option<f64> {
        match &self.scores {
            Some(p) if !self.sequence.is_empty() => p.get(e as usize).copied(),
            _ => self.candidates.iter().find(|c| c.0 == e).map(|c| c.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub entity: EntityId,
    pub score: Option<f64>,
}

/// One JSON Lines record per evaluated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub query: Query,
    pub mode: EvalMode,
    pub direction: String,
    pub top: Vec<RankedEntity>,
    pub rank_raw: usize,
    pub rank_time_filtered: usize,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub records: Vec<RankingRecord>,
    pub reports: Vec<MetricsReport>,
}

pub struct Evaluator<'a> {
    /// History graph; queries only ever see facts strictly before `t_s`.
    pub history: &'a TemporalKG,
    pub filter: &'a TimeFilter,
    pub stage1: Option<&'a Stage1Params>,
    pub stage2: Option<&'a Stage2Params>,
    pub search: SearchConfig,
    pub rerank: Rerank,
    pub seed: u64,
    pub workers: usize,
    /// Entities kept per record.
    pub top_k: usize,
}

/// Stream tag for evaluation rollouts.
const EVAL_STREAM: u64 = 0xe7a1;

impl<'a> Evaluator<'a> {
    fn require_stage1(&self) -> Result<&'a Stage1Params> {
        self.stage1
            .ok_or_else(|| Error::Invalid("this mode needs Stage-1 parameters".into()))
    }

    fn require_stage2(&self) -> Result<&'a Stage2Params> {
        self.stage2
            .ok_or_else(|| Error::Invalid("this mode needs Stage-2 parameters".into()))
    }

    pub fn predict(&self, query: &Query, index: usize, mode: EvalMode) -> Result<Prediction> {
        let n = self.history.num_entities();
        query.validate(n, self.history.vocab().extended_size())?;
        let mut out = Prediction {
            query: *query,
            mode,
            rollout: None,
            candidates: Vec::new(),
            sequence: ClueGraphSequence {
                query: *query,
                graphs: Vec::new(),
            },
            scores: None,
            ordering: Vec::new(),
        };
        if mode != EvalMode::Stage2Only {
            let p1 = self.require_stage1()?;
            let mut tape = Tape::new(&p1.store);
            let mut rng = derive_rng(self.seed, &[EVAL_STREAM, index as u64]);
            let s1 = run_stage1(&mut tape, self.history, p1, query, &self.search, &mut rng)?;
            out.candidates = stage1_rank(&s1.beams);
            if mode == EvalMode::Full {
                out.sequence = clue_sequence(self.history, query, &s1.beams, &self.search);
            }
            out.rollout = Some(RolloutTrace::new(*query, s1.window, &s1.beams));
        }
        match mode {
            EvalMode::Stage1Only => {
                out.ordering = stage1_ordering(&out.candidates, n);
            }
            EvalMode::Full | EvalMode::Stage2Only => {
                let p2 = self.require_stage2()?;
                if mode == EvalMode::Stage2Only {
                    let facts = repetitive_clue_facts(self.history, query, self.search.clue_window);
                    let mut cands: Vec<EntityId> = facts.iter().map(|f| f.object).collect();
                    cands.sort_unstable();
                    cands.dedup();
                    out.candidates = cands.into_iter().map(|e| (e, 0.0)).collect();
                    out.sequence = build_sequence(&facts, query, self.search.seq_len);
                }
                let scores = p2.score(&out.sequence)?;
                out.ordering = if out.sequence.is_empty() && mode == EvalMode::Full {
                    // nothing for Stage 2 to read: keep the path-score order
                    stage1_ordering(&out.candidates, n)
                } else {
                    let cands: Vec<EntityId> = out.candidates.iter().map(|c| c.0).collect();
                    final_ranking(&cands, &scores, self.rerank)
                };
                out.scores = Some(scores);
            }
        }
        Ok(out)
    }

    fn record(&self, pred: &Prediction) -> Result<RankingRecord> {
        let q = &pred.query;
        let truth = q
            .answer
            .ok_or_else(|| Error::Invalid(format!("query {q:?} has no answer to rank")))?;
        let top = pred
            .ordering
            .iter()
            .take(self.top_k)
            .map(|&e| RankedEntity {
                entity: e,
                score: pred.score_of(e),
            })
            .collect();
        Ok(RankingRecord {
            query: *q,
            mode: pred.mode,
            direction: direction(self.history, q).into(),
            top,
            rank_raw: rank_of(&pred.ordering, truth)?,
            rank_time_filtered: self.filter.filtered_rank(q, &pred.ordering, truth)?,
        })
    }

    pub fn evaluate(&self, queries: &[Query], mode: EvalMode) -> Result<EvalRun> {
        let records = Workers::new(self.workers)?.map(queries, |i, q| {
            let pred = self.predict(q, i, mode)?;
            self.record(&pred)
        })?;
        let reports = summarise(&records, mode)?;
        Ok(EvalRun { records, reports })
    }
}

pub fn direction(kg: &TemporalKG, q: &Query) -> &'static str {
    if kg.vocab().is_inverse(q.relation) {
        "subject"
    } else {
        "object"
    }
}

/// Raw and time-filtered reports for each direction present plus `both`.
pub fn summarise(records: &[RankingRecord], mode: EvalMode) -> Result<Vec<MetricsReport>> {
    if records.is_empty() {
        return Err(Error::Invalid("no queries were evaluated".into()));
    }
    let mut out = Vec::new();
    for setting in ["raw", "time_filtered"] {
        for dir in ["object", "subject", "both"] {
            let ranks: Vec<usize> = records
                .iter()
                .filter(|r| dir == "both" || r.direction == dir)
                .map(|r| {
                    if setting == "raw" {
                        r.rank_raw
                    } else {
                        r.rank_time_filtered
                    }
                })
                .collect();
            if ranks.is_empty() {
                continue;
            }
            let m = metrics(&ranks)?;
            out.push(MetricsReport {
                setting: setting.into(),
                mode: mode.to_string(),
                direction: dir.into(),
                mrr: m.mrr,
                hits1: m.hits1,
                hits10: m.hits10,
                n_queries: m.n,
            });
        }
    }
    Ok(out)
}
