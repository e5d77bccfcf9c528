//! Synthetic temporal knowledge graphs with planted lagged rules.
//!
//! Every timestep draws `base_facts_per_step` random cause events over the
//! rules' cause relations (all relations when there are no rules). Each
//! event fires every rule it causes with that rule's probability, emitting
//! the effect fact `lag` steps later between the same two entities. On top of
//! that, `noise_facts_per_step` uniformly random facts are added; noise
//! never triggers rules. Pairs of rules that share a cause but differ in
//! effect and lag make the timing of the cause matter, which only a
//! time-aware reasoner can exploit.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetBundle, Splits};
use super::types::{EntityId, Quadruple, RelationId, Timestep};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub cause: RelationId,
    pub effect: RelationId,
    pub lag: u32,
    pub fire_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_entities: usize,
    pub num_relations: u32,
    pub num_timesteps: u32,
    pub rules: Vec<Rule>,
    pub base_facts_per_step: usize,
    pub noise_facts_per_step: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// The planted-rule benchmark: 2,000 entities, 8 relations, 200 steps
    /// and two lag-disambiguated rule pairs firing with probability 0.9.
    pub fn planted(seed: u64) -> Self {
        let rule = |cause, effect, lag| Rule {
            cause,
            effect,
            lag,
            fire_prob: 0.9,
        };
        Self {
            num_entities: 2000,
            num_relations: 8,
            num_timesteps: 200,
            rules: vec![rule(0, 1, 1), rule(0, 2, 3), rule(3, 4, 2), rule(3, 5, 4)],
            base_facts_per_step: 60,
            noise_facts_per_step: 10,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_entities < 2 {
            return Err(Error::Config("need at least 2 entities".into()));
        }
        if self.num_relations == 0 || self.num_timesteps == 0 {
            return Err(Error::Config("num_relations and num_timesteps must be positive".into()));
        }
        for r in &self.rules {
            if r.lag < 1 {
                return Err(Error::Config(format!("rule {r:?}: lag must be >= 1")));
            }
            if !(0.0..=1.0).contains(&r.fire_prob) {
                return Err(Error::Config(format!("rule {r:?}: fire_prob must lie in [0, 1]")));
            }
            if r.cause >= self.num_relations || r.effect >= self.num_relations {
                return Err(Error::Config(format!("rule {r:?}: relation out of range")));
            }
        }
        Ok(())
    }

    /// Relations that base events are drawn from: the distinct rule causes,
    /// or every relation when no rules are planted.
    pub fn base_relations(&self) -> Vec<RelationId> {
        if self.rules.is_empty() {
            return (0..self.num_relations).collect();
        }
        let mut causes: Vec<RelationId> = self.rules.iter().map(|r| r.cause).collect();
        causes.sort_unstable();
        causes.dedup();
        causes
    }

    /// Exclusive timestep bounds of the train and valid splits.
    pub fn split_bounds(&self) -> (Timestep, Timestep) {
        let t = self.num_timesteps;
        (t * 8 / 10, t * 9 / 10)
    }
}

/// An effect fact together with the cause fact and rule that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFact {
    pub effect: Quadruple,
    pub cause: Quadruple,
    pub rule: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub bundle: DatasetBundle,
    pub planted: Vec<PlantedFact>,
}

impl SyntheticData {
    /// Planted facts whose effect falls in `[lo, hi)`.
    pub fn planted_between(&self, lo: Timestep, hi: Timestep) -> Vec<PlantedFact> {
        self.planted
            .iter()
            .filter(|p| p.effect.time >= lo && p.effect.time < hi)
            .copied()
            .collect()
    }

    /// Marks planted facts whose subject also has another event of the
    /// same cause relation, to a different object, recent enough that one
    /// of that relation's rules could still fire from it. Only the lag
    /// separates the true answer from that distractor.
    pub fn lag_ambiguous(&self, config: &SynthConfig) -> Vec<bool> {
        let mut events: HashMap<(EntityId, RelationId), Vec<(Timestep, EntityId)>> = HashMap::new();
        for f in self.bundle.facts(Splits::All) {
            events
                .entry((f.subject, f.relation))
                .or_default()
                .push((f.time, f.object));
        }
        self.planted
            .iter()
            .map(|p| {
                let c = p.cause.relation;
                let max_lag = config
                    .rules
                    .iter()
                    .filter(|r| r.cause == c)
                    .map(|r| r.lag)
                    .max()
                    .unwrap_or(0);
                let t = p.effect.time;
                events.get(&(p.effect.subject, c)).is_some_and(|v| {
                    v.iter()
                        .any(|&(u, o)| o != p.effect.object && u < t && t - u <= max_lag)
                })
            })
            .collect()
    }
}

fn distinct_pair(rng: &mut ChaCha8Rng, n: usize) -> (EntityId, EntityId) {
    let s = rng.gen_range(0..n);
    let mut o = rng.gen_range(0..n - 1);
    if o >= s {
        o += 1;
    }
    (s as EntityId, o as EntityId)
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let horizon = config.num_timesteps;
    let base_relations = config.base_relations();

    let mut facts: Vec<Quadruple> = Vec::new();
    let mut planted: Vec<PlantedFact> = Vec::new();
    for t in 0..horizon {
        for _ in 0..config.base_facts_per_step {
            let (s, o) = distinct_pair(&mut rng, config.num_entities);
            let r = base_relations[rng.gen_range(0..base_relations.len())];
            let cause = Quadruple::new(s, r, o, t);
            facts.push(cause);
            for (idx, rule) in config.rules.iter().enumerate() {
                if rule.cause != r {
                    continue;
                }
                // draw even past the horizon so firing is independent of it
                let fires = rng.gen_bool(rule.fire_prob);
                if fires && t + rule.lag < horizon {
                    let effect = Quadruple::new(s, rule.effect, o, t + rule.lag);
                    facts.push(effect);
                    planted.push(PlantedFact {
                        effect,
                        cause,
                        rule: idx,
                    });
                }
            }
        }
        for _ in 0..config.noise_facts_per_step {
            let (s, o) = distinct_pair(&mut rng, config.num_entities);
            let r = rng.gen_range(0..config.num_relations);
            facts.push(Quadruple::new(s, r, o, t));
        }
    }

    facts.sort_unstable_by_key(|q| (q.time, q.subject, q.relation, q.object));
    planted.sort_unstable_by_key(|p| {
        (
            p.effect.time,
            p.effect.subject,
            p.effect.relation,
            p.effect.object,
            p.cause.time,
        )
    });
    let (train_end, valid_end) = config.split_bounds();
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for q in facts {
        if q.time < train_end {
            train.push(q);
        } else if q.time < valid_end {
            valid.push(q);
        } else {
            test.push(q);
        }
    }
    if test.is_empty() || valid.is_empty() || train.is_empty() {
        return Err(Error::Config(format!(
            "configuration yields an empty split (train {}, valid {}, test {})",
            train.len(),
            valid.len(),
            test.len()
        )));
    }
    let bundle = DatasetBundle::new(train, valid, test, config.num_entities, config.num_relations, 1)?;
    Ok(SyntheticData { bundle, planted })
}
