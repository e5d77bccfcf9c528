//! How many training queries can be answered from history at all: by a
//! repeated fact, by any direct link, or by a path of at most two hops.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetBundle, Splits};
use super::types::{EntityId, Quadruple, Timestep};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub num_queries: usize,
    pub frac_repetitive_1hop: f64,
    pub frac_any_1hop: f64,
    pub frac_upto_2hop: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoverageOptions {
    /// Also count inverse (subject-side) training queries.
    pub both_directions: bool,
    /// Require the two hops of a 2-hop path to lie within this many steps
    /// of each other. `None` leaves the hop times unconstrained.
    pub two_hop_delta: Option<u32>,
}

type Pair = (EntityId, EntityId);

struct PairIndex {
    times: HashMap<Pair, Vec<Timestep>>,
    /// Per entity: `(first time, neighbour)` sorted by first time.
    neighbours: Vec<Vec<(Timestep, EntityId)>>,
}

impl PairIndex {
    fn build(facts: &[Quadruple], num_entities: usize) -> Self {
        let mut times: HashMap<Pair, Vec<Timestep>> = HashMap::new();
        for q in facts {
            times.entry((q.subject, q.object)).or_default().push(q.time);
        }
        let mut neighbours = vec![Vec::new(); num_entities];
        for ((s, o), ts) in times.iter_mut() {
            ts.sort_unstable();
            neighbours[*s as usize].push((ts[0], *o));
        }
        for list in &mut neighbours {
            list.sort_unstable();
        }
        Self { times, neighbours }
    }

    fn before(&self, a: EntityId, b: EntityId, t: Timestep) -> &[Timestep] {
        match self.times.get(&(a, b)) {
            Some(ts) => &ts[..ts.partition_point(|&x| x < t)],
            None => &[],
        }
    }

    fn neighbours_before(&self, e: EntityId, t: Timestep) -> &[(Timestep, EntityId)] {
        let list = &self.neighbours[e as usize];
        &list[..list.partition_point(|&(first, _)| first < t)]
    }
}

fn within(a: &[Timestep], b: &[Timestep], delta: u32) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].abs_diff(b[j]) <= delta {
            return true;
        }
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    false
}

/// Computes coverage fractions over the training queries of an
/// inverse-augmented bundle, using the training graph as history.
pub fn coverage_stats(bundle: &DatasetBundle, opts: CoverageOptions) -> Result<CoverageStats> {
    if !bundle.is_augmented() {
        return Err(Error::Invalid(
            "coverage statistics need an inverse-augmented bundle".into(),
        ));
    }
    let vocab = bundle.vocab();
    let history: Vec<Quadruple> = bundle.facts(Splits::Train).copied().collect();
    let kg = bundle.history_graph(Splits::Train)?;
    let pairs = PairIndex::build(&history, bundle.num_entities);

    let (mut n, mut rep, mut any, mut two) = (0usize, 0usize, 0usize, 0usize);
    for q in &bundle.train {
        if !opts.both_directions && vocab.is_inverse(q.relation) {
            continue;
        }
        n += 1;
        let (s, o, t) = (q.subject, q.object, q.time);
        if kg.triple_times(s, q.relation, o).first().is_some_and(|&x| x < t) {
            rep += 1;
        }
        if !pairs.before(s, o, t).is_empty() {
            any += 1;
            two += 1;
            continue;
        }
        let ns = pairs.neighbours_before(s, t);
        let no = pairs.neighbours_before(o, t);
        // augmented history is symmetric: (x, o) exists iff (o, x) does
        let (small, from, to) = if ns.len() <= no.len() { (ns, s, o) } else { (no, o, s) };
        let reachable = small.iter().any(|&(_, x)| {
            let near = pairs.before(x, to, t);
            if near.is_empty() {
                return false;
            }
            match opts.two_hop_delta {
                None => true,
                Some(delta) => within(pairs.before(from, x, t), near, delta),
            }
        });
        if reachable {
            two += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptySplit("train".into()));
    }
    let frac = |c: usize| c as f64 / n as f64;
    Ok(CoverageStats {
        num_queries: n,
        frac_repetitive_1hop: frac(rep),
        frac_any_1hop: frac(any),
        frac_upto_2hop: frac(two),
    })
}
