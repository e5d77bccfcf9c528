use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::actions::{enumerate_actions, ActionCand, ActionConfig, AgentState, Query};
use super::network::Stage1Params;
use crate::error::{Error, Result};
use crate::kg::TemporalKG;
use crate::nd::{LstmState, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Beam width `B`.
    pub width: usize,
    /// Probability of taking the best remaining candidate at each pick.
    pub mu: f64,
    /// Path length `I`.
    pub max_steps: usize,
    pub actions: ActionConfig,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            width: 32,
            mu: 0.3,
            max_steps: 1,
            actions: ActionConfig::default(),
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.max_steps == 0 {
            return Err(Error::Config("beam width and path length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Config(format!("mu = {} is outside [0, 1]", self.mu)));
        }
        Ok(())
    }
}

/// One surviving path.
#[derive(Debug, Clone)]
pub struct BeamEntry {
    pub state: AgentState,
    pub actions: Vec<ActionCand>,
    pub step_log_probs: Vec<f64>,
    pub cum_log_prob: f64,
    /// LSTM state after the last action; absent once the path is complete.
    pub(crate) rnn: Option<LstmState>,
    /// Per step: the log-softmax node and the chosen column.
    pub(crate) picks: Vec<(Var, usize)>,
}

impl BeamEntry {
    pub fn destination(&self) -> crate::kg::EntityId {
        self.state.entity
    }

    /// Tape handles of the chosen log-probabilities, one per step.
    pub fn log_prob_nodes(&self) -> &[(Var, usize)] {
        &self.picks
    }
}

/// Higher cumulative log-probability first, then lexicographic on the
/// action sequence.
fn path_order(a_score: f64, a: &[ActionCand], b_score: f64, b: &[ActionCand]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| {
        a.iter()
            .map(ActionCand::order_key)
            .cmp(b.iter().map(ActionCand::order_key))
    })
}

struct PoolItem {
    parent: usize,
    action: ActionCand,
    log_prob: f64,
    node: Var,
    column: usize,
    score: f64,
    path: Vec<ActionCand>,
}

/// Picks `k` of `n` ranked items: each pick takes the best remaining one
/// with probability `mu`, otherwise a uniformly random remaining one.
pub fn randomized_pick<R: Rng + ?Sized>(n: usize, k: usize, mu: f64, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(k.min(n));
    while out.len() < k && !remaining.is_empty() {
        let at = if rng.gen_bool(mu) {
            0
        } else {
            rng.gen_range(0..remaining.len())
        };
        out.push(remaining.remove(at));
    }
    out
}

/// Randomized beam search over `max_steps` hops. Every entry keeps its
/// tape handles so a policy-gradient loss can be built on the same tape.
///
/// At step 0 the pool is every action of the subject; afterwards each
/// beam contributes its top-`B` actions.
pub fn randomized_beam_search<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    kg: &TemporalKG,
    params: &Stage1Params,
    query: &Query,
    window: u32,
    cfg: &BeamConfig,
    rng: &mut R,
) -> Result<Vec<BeamEntry>> {
    cfg.validate()?;
    query.validate(kg.num_entities(), kg.vocab().extended_size())?;
    let width = cfg.width;
    let rnn = params.start_state(tape, query.subject)?;
    let mut beams = vec![BeamEntry {
        state: AgentState::start(query),
        actions: Vec::new(),
        step_log_probs: Vec::new(),
        cum_log_prob: 0.0,
        rnn: Some(rnn),
        picks: Vec::new(),
    }];
    for step in 0..cfg.max_steps {
        let mut pool = Vec::new();
        for (bi, beam) in beams.iter().enumerate() {
            let acts = enumerate_actions(kg, &beam.state, query, window, &cfg.actions);
            let h = beam.rnn.as_ref().expect("live beam has a state").top();
            let node = params.action_log_probs(tape, beam.state.entity, h, query.relation, &acts)?;
            let lp = tape.value(node).row(0);
            let mut order: Vec<usize> = (0..acts.len()).collect();
            order.sort_by(|&i, &j| {
                lp[j]
                    .total_cmp(&lp[i])
                    .then_with(|| acts[i].order_key().cmp(&acts[j].order_key()))
            });
            if step > 0 {
                order.truncate(width);
            }
            for col in order {
                let mut path = beam.actions.clone();
                path.push(acts[col]);
                pool.push(PoolItem {
                    parent: bi,
                    action: acts[col],
                    log_prob: lp[col],
                    node,
                    column: col,
                    score: beam.cum_log_prob + lp[col],
                    path,
                });
            }
        }
        pool.sort_by(|a, b| path_order(a.score, &a.path, b.score, &b.path));
        let chosen = randomized_pick(pool.len(), width, cfg.mu, rng);
        let last = step + 1 == cfg.max_steps;
        let mut next = Vec::with_capacity(chosen.len());
        for idx in chosen {
            let item = &pool[idx];
            let parent = &beams[item.parent];
            let rnn = if last {
                None
            } else {
                let prev = parent.rnn.as_ref().expect("live beam has a state");
                Some(params.advance(tape, prev, &item.action)?)
            };
            let mut step_log_probs = parent.step_log_probs.clone();
            step_log_probs.push(item.log_prob);
            let mut picks = parent.picks.clone();
            picks.push((item.node, item.column));
            next.push(BeamEntry {
                state: AgentState {
                    entity: item.action.entity,
                    time: item.action.time,
                    step: step + 1,
                },
                actions: item.path.clone(),
                step_log_probs,
                cum_log_prob: item.score,
                rnn,
                picks,
            });
        }
        beams = next;
    }
    Ok(beams)
}

/// Sorts beams best-first with the same tie-break the search uses.
pub fn sort_beams(beams: &mut [BeamEntry]) {
    beams.sort_by(|a, b| path_order(a.cum_log_prob, &a.actions, b.cum_log_prob, &b.actions));
}
