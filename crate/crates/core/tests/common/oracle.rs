//! Independent re-implementations used as oracles. Every check panics with
//! a description of the first mismatch and returns a one-line summary.

use std::collections::HashSet;

use cluegraph::eval::{metrics, rank_of, TimeFilter};
use cluegraph::kg::{EntityId, Quadruple, RelationVocab, TemporalKG};
use cluegraph::nd::{LstmState, Tape};
use cluegraph::policy::{
    enumerate_actions, randomized_beam_search, ActionCand, ActionConfig, AgentState, BeamConfig, PolicyDims, Query,
    RolloutTrace, Stage1Params,
};
use cluegraph::reasoner::{ClueGraph, ReasonerDims, Stage2Params};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::toy_kg;

fn self_loop(kg: &TemporalKG, state: &AgentState) -> ActionCand {
    ActionCand {
        relation: kg.vocab().self_loop(),
        entity: state.entity,
        time: state.time,
        is_self_loop: true,
    }
}

/// Filters every fact of the graph with the two time predicates.
pub fn brute_force_actions(
    kg: &TemporalKG,
    state: &AgentState,
    query: &Query,
    m: u32,
    cfg: &ActionConfig,
) -> Vec<ActionCand> {
    let ts = query.time as i64;
    let mut out: Vec<ActionCand> = kg
        .facts()
        .iter()
        .filter(|f| f.subject == state.entity)
        .filter(|f| {
            let t = f.time as i64;
            let in_window = t < ts && ts - t <= m as i64;
            let near =
                (state.step == 0 && !cfg.strict_delta_step0) || (t - state.time as i64).abs() <= cfg.delta as i64;
            in_window && near
        })
        .map(|f| ActionCand {
            relation: f.relation,
            entity: f.object,
            time: f.time,
            is_self_loop: false,
        })
        .collect();
    if let Some(cap) = cfg.cap {
        out.sort_by_key(|a| (std::cmp::Reverse(a.time), a.relation, a.entity));
        out.truncate(cap);
    }
    out.push(self_loop(kg, state));
    out
}

fn as_set(actions: &[ActionCand]) -> HashSet<(u32, u32, u32, bool)> {
    actions
        .iter()
        .map(|a| (a.relation, a.entity, a.time, a.is_self_loop))
        .collect()
}

/// `enumerate_actions` against [`brute_force_actions`] on random states of
/// random toy graphs (≤ 50 entities, ≤ 10 relations, ≤ 20 timesteps).
pub fn action_space(states: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total_actions = 0;
    let mut kg = toy_kg(&mut rng, 50, 10, 20, 100);
    for i in 0..states {
        if i % 10 == 0 {
            let facts = rng.gen_range(1..300);
            kg = toy_kg(&mut rng, 50, 10, 20, facts);
        }
        let horizon = kg.max_time() + 2;
        let qt = rng.gen_range(0..=horizon);
        let query = Query::new(
            rng.gen_range(0..kg.num_entities() as u32),
            rng.gen_range(0..2 * kg.vocab().base_count()),
            qt,
        );
        let step = rng.gen_range(0..3);
        let state = AgentState {
            entity: rng.gen_range(0..kg.num_entities() as u32),
            time: if step == 0 { qt } else { rng.gen_range(0..=qt) },
            step,
        };
        let m = rng.gen_range(0..=qt + 1);
        let cfg = ActionConfig {
            delta: rng.gen_range(0..5),
            cap: rng.gen_bool(0.2).then(|| rng.gen_range(1..8)),
            strict_delta_step0: rng.gen_bool(0.3),
        };
        let got = enumerate_actions(&kg, &state, &query, m, &cfg);
        let want = brute_force_actions(&kg, &state, &query, m, &cfg);
        assert_eq!(
            as_set(&got),
            as_set(&want),
            "state {i}: {state:?} query {query:?} m {m} cfg {cfg:?}"
        );
        assert_eq!(got.len(), want.len(), "state {i}: duplicate actions");
        assert_eq!(got.iter().filter(|a| a.is_self_loop).count(), 1);
        total_actions += got.len();
    }
    format!("{states} states, {total_actions} actions, exact set equality")
}

type Path = (Vec<ActionCand>, f64);

#[allow(clippy::too_many_arguments)]
fn expand(
    tape: &mut Tape<'_>,
    kg: &TemporalKG,
    p: &Stage1Params,
    q: &Query,
    m: u32,
    cfg: &ActionConfig,
    state: AgentState,
    rnn: &LstmState,
    prefix: &mut Vec<ActionCand>,
    score: f64,
    left: usize,
    out: &mut Vec<Path>,
) {
    let acts = enumerate_actions(kg, &state, q, m, cfg);
    let node = p
        .action_log_probs(tape, state.entity, rnn.top(), q.relation, &acts)
        .unwrap();
    let lp = tape.value(node).row(0).to_vec();
    for (a, l) in acts.iter().zip(lp) {
        prefix.push(*a);
        if left == 1 {
            out.push((prefix.clone(), score + l));
        } else {
            let next = AgentState {
                entity: a.entity,
                time: a.time,
                step: state.step + 1,
            };
            let h = p.advance(tape, rnn, a).unwrap();
            expand(tape, kg, p, q, m, cfg, next, &h, prefix, score + l, left - 1, out);
        }
        prefix.pop();
    }
}

/// Every length-`steps` path with its summed log-probability, best first.
pub fn exhaustive_paths(
    kg: &TemporalKG,
    p: &Stage1Params,
    q: &Query,
    m: u32,
    cfg: &ActionConfig,
    steps: usize,
) -> Vec<Path> {
    let mut tape = Tape::new(&p.store);
    let h0 = p.start_state(&mut tape, q.subject).unwrap();
    let mut out = Vec::new();
    expand(
        &mut tape,
        kg,
        p,
        q,
        m,
        cfg,
        AgentState::start(q),
        &h0,
        &mut Vec::new(),
        0.0,
        steps,
        &mut out,
    );
    out.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| {
            a.0.iter()
                .map(ActionCand::order_key)
                .cmp(b.0.iter().map(ActionCand::order_key))
        })
    });
    out
}

/// Greedy beam search with an unbounded action set and a beam wide enough
/// for every path must return the exhaustive top-B list.
pub fn beam_search(queries: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut paths_seen = 0;
    while done < queries {
        let facts = rng.gen_range(3..25);
        let kg = toy_kg(&mut rng, 8, 3, 8, facts);
        let dims = PolicyDims {
            embed: rng.gen_range(2..5),
            hidden: rng.gen_range(2..5),
            lstm_layers: rng.gen_range(1..3),
            mlp: rng.gen_range(2..5),
        };
        let p = Stage1Params::init(kg.num_entities(), kg.vocab(), dims, &mut rng).unwrap();
        let qt = rng.gen_range(1..=kg.max_time() + 1);
        let q = Query::new(
            rng.gen_range(0..kg.num_entities() as u32),
            rng.gen_range(0..2 * kg.vocab().base_count()),
            qt,
        );
        let m = rng.gen_range(1..=qt);
        let steps = rng.gen_range(1..=3);
        let actions = ActionConfig {
            delta: rng.gen_range(0..4),
            cap: None,
            strict_delta_step0: false,
        };
        let want = exhaustive_paths(&kg, &p, &q, m, &actions, steps);
        if want.len() > 400 {
            continue;
        }
        let width = want.len() + rng.gen_range(0..3);
        let cfg = BeamConfig {
            width,
            mu: 1.0,
            max_steps: steps,
            actions,
        };
        let mut tape = Tape::new(&p.store);
        let mut search_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let got = randomized_beam_search(&mut tape, &kg, &p, &q, m, &cfg, &mut search_rng).unwrap();
        let top = &want[..width.min(want.len())];
        assert_eq!(got.len(), top.len(), "query {done}: {q:?} beam size");
        for (i, (b, (path, score))) in got.iter().zip(top).enumerate() {
            assert_eq!(&b.actions, path, "query {done}: {q:?} path {i}");
            assert!(
                (b.cum_log_prob - score).abs() <= 1e-12 * score.abs().max(1.0),
                "query {done}: path {i} log-prob {} vs {}",
                b.cum_log_prob,
                score
            );
        }
        paths_seen += top.len();
        done += 1;
    }
    format!("{queries} queries, {paths_seen} paths, exact top-B match")
}

/// 1-based rank by linear scan.
fn scan_rank(ordering: &[EntityId], truth: EntityId) -> usize {
    let mut r = 1;
    for &e in ordering {
        if e == truth {
            return r;
        }
        r += 1;
    }
    panic!("{truth} missing from ordering");
}

/// Worked example plus raw vs time-filtered ranks on random batches,
/// checked against a scan over the fact list.
pub fn metric_oracle(batches: usize, seed: u64) -> String {
    let m = metrics(&[1, 2, 4]).unwrap();
    let mrr = (1.0 + 0.5 + 0.25) / 3.0;
    assert!((m.mrr - mrr).abs() <= 1e-9, "mrr {}", m.mrr);
    assert!((m.mrr - 0.583333).abs() <= 1e-6);
    assert_eq!(m.hits1, 1.0 / 3.0);
    assert_eq!(m.hits10, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strictly_better = 0;
    for b in 0..batches {
        let n = rng.gen_range(2..40u32);
        let nr = rng.gen_range(1..4u32);
        let nt = rng.gen_range(1..6u32);
        let facts: Vec<Quadruple> = (0..rng.gen_range(1..120))
            .map(|_| {
                Quadruple::new(
                    rng.gen_range(0..n),
                    rng.gen_range(0..nr),
                    rng.gen_range(0..n),
                    rng.gen_range(0..nt),
                )
            })
            .collect();
        let filter = TimeFilter::new(&facts);
        let mut raw = Vec::new();
        let mut filtered = Vec::new();
        for _ in 0..rng.gen_range(1..30) {
            let f = facts[rng.gen_range(0..facts.len())];
            let q = Query::from_fact(&f);
            let mut ordering: Vec<EntityId> = (0..n).collect();
            ordering.shuffle(&mut rng);
            let r = scan_rank(&ordering, f.object);
            let ahead = &ordering[..r - 1];
            let removed = ahead
                .iter()
                .filter(|&&e| {
                    facts.iter().any(|g| {
                        g.subject == f.subject && g.relation == f.relation && g.time == f.time && g.object == e
                    })
                })
                .count();
            let fr = filter.filtered_rank(&q, &ordering, f.object).unwrap();
            assert_eq!(rank_of(&ordering, f.object).unwrap(), r, "batch {b}: raw rank");
            assert_eq!(fr, r - removed, "batch {b}: filtered rank");
            assert!(fr <= r);
            raw.push(r);
            filtered.push(fr);
        }
        let (mr, mf) = (metrics(&raw).unwrap(), metrics(&filtered).unwrap());
        assert!(mf.mrr >= mr.mrr, "batch {b}: filtered mrr {} < raw {}", mf.mrr, mr.mrr);
        if mf.mrr > mr.mrr {
            strictly_better += 1;
        }
    }
    format!("worked example exact, {batches} batches, filtered > raw in {strictly_better}")
}

pub fn random_reasoner(rng: &mut ChaCha8Rng, n: usize, base: u32) -> Stage2Params {
    let dims = ReasonerDims {
        embed: rng.gen_range(2..6),
        hidden: rng.gen_range(2..5),
        layers: rng.gen_range(1..4),
        num_bases: rng.gen_bool(0.5).then(|| rng.gen_range(1..4)),
    };
    Stage2Params::init(n, RelationVocab::new(base), dims, rng).unwrap()
}

/// Relabelling entities (graph ids and embedding rows together) permutes
/// the RGCN output rows and changes nothing else. Returns the largest
/// deviation.
pub fn rgcn_equivariance(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.gen_range(2..12usize);
        let base = rng.gen_range(1..4u32);
        let p = random_reasoner(&mut rng, n, base);
        let nrel = p.vocab.extended_size() as u32;
        let mut edges: Vec<_> = (0..rng.gen_range(1..25))
            .map(|_| {
                (
                    rng.gen_range(0..n as u32),
                    rng.gen_range(0..nrel),
                    rng.gen_range(0..n as u32),
                )
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let g = ClueGraph { time: 0, edges };

        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut rng);
        let mut q = p.clone();
        let table = p.store.get(p.entity).clone();
        let moved = q.store.get_mut(q.entity);
        for (old, &new) in perm.iter().enumerate() {
            moved.row_mut(new as usize).copy_from_slice(table.row(old));
        }
        let mut edges2: Vec<_> = g
            .edges
            .iter()
            .map(|&(s, r, o)| (perm[s as usize], r, perm[o as usize]))
            .collect();
        edges2.shuffle(&mut rng);
        let g2 = ClueGraph { time: 0, edges: edges2 };

        let mut t1 = Tape::new(&p.store);
        let (nodes1, h1) = p.rgcn_forward(&mut t1, &g).unwrap();
        let mut t2 = Tape::new(&q.store);
        let (nodes2, h2) = q.rgcn_forward(&mut t2, &g2).unwrap();
        let (h1, h2) = (t1.value(h1), t2.value(h2));
        for (i, &e) in nodes1.iter().enumerate() {
            let j = nodes2
                .iter()
                .position(|&x| x == perm[e as usize])
                .expect("relabelled node present");
            for (a, b) in h1.row(i).iter().zip(h2.row(j)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst <= 1e-10, "rgcn permutation deviation {worst:e}");
    worst
}

/// Stage-1 action distributions and the Stage-2 softmax both sum to one.
/// Returns the largest deviation.
pub fn softmax_normalisation(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let kg = toy_kg(&mut rng, 20, 4, 10, 60);
        let p = Stage1Params::init(
            kg.num_entities(),
            kg.vocab(),
            PolicyDims::new(rng.gen_range(2..8)),
            &mut rng,
        )
        .unwrap();
        let q = Query::new(
            rng.gen_range(0..kg.num_entities() as u32),
            rng.gen_range(0..2 * kg.vocab().base_count()),
            kg.max_time() + 1,
        );
        let acts = enumerate_actions(&kg, &AgentState::start(&q), &q, q.time, &ActionConfig::default());
        let mut tape = Tape::new(&p.store);
        let h = p.start_state(&mut tape, q.subject).unwrap();
        let lp = p
            .action_log_probs(&mut tape, q.subject, h.top(), q.relation, &acts)
            .unwrap();
        let total: f64 = tape.value(lp).data().iter().map(|v| v.exp()).sum();
        worst = worst.max((total - 1.0).abs());

        let n = rng.gen_range(2..200);
        let mut r2 = random_reasoner(&mut rng, n, 2);
        let dec = r2.decoder;
        let [rows, cols] = r2.store.get(dec).shape();
        *r2.store.get_mut(dec) = cluegraph::Tensor::uniform(rows, cols, 20.0, &mut rng);
        let seq = super::grad::random_sequence_over(&mut rng, n as u32, 3);
        let mut tape = Tape::new(&r2.store);
        let logits = r2.forward(&mut tape, &seq).unwrap();
        let ls = tape.log_softmax(logits);
        let total: f64 = tape.value(ls).data().iter().map(|v| v.exp()).sum();
        worst = worst.max((total - 1.0).abs());
        let sm = cluegraph::nd::softmax(tape.value(logits));
        worst = worst.max((sm.sum() - 1.0).abs());
    }
    assert!(worst <= 1e-12, "softmax deviation {worst:e}");
    worst
}

/// Re-evaluates the time predicates on every step of a rollout and checks
/// that each taken edge exists in `kg`.
pub fn check_rollout(kg: &TemporalKG, trace: &RolloutTrace, cfg: &ActionConfig) -> Result<usize, String> {
    let q = &trace.query;
    let mut checked = 0;
    for (pi, path) in trace.paths.iter().enumerate() {
        let (mut entity, mut time) = (q.subject, q.time);
        for (i, s) in path.steps.iter().enumerate() {
            if s.self_loop {
                if s.relation != kg.vocab().self_loop() || s.entity != entity || s.time != time {
                    return Err(format!("{q:?} path {pi} step {i}: malformed self-loop {s:?}"));
                }
                continue;
            }
            let ok_window = s.time < q.time && q.time - s.time <= trace.window;
            let ok_delta = (i == 0 && !cfg.strict_delta_step0) || s.time.abs_diff(time) <= cfg.delta;
            if !ok_window || !ok_delta {
                return Err(format!(
                    "{q:?} path {pi} step {i}: {s:?} violates the time constraints (m = {})",
                    trace.window
                ));
            }
            let exists = kg
                .subject_slice(entity)
                .iter()
                .any(|f| f.relation == s.relation && f.object == s.entity && f.time == s.time);
            if !exists {
                return Err(format!("{q:?} path {pi} step {i}: {s:?} is not a fact of {entity}"));
            }
            entity = s.entity;
            time = s.time;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Random-policy rollouts on random toy graphs, all satisfying the time
/// predicates.
pub fn rollout_constraints(queries: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = 0;
    for i in 0..queries {
        let kg = toy_kg(&mut rng, 30, 5, 20, 150);
        let p = Stage1Params::init(kg.num_entities(), kg.vocab(), PolicyDims::new(4), &mut rng).unwrap();
        let qt = rng.gen_range(1..=kg.max_time() + 1);
        let q = Query::new(
            rng.gen_range(0..kg.num_entities() as u32),
            rng.gen_range(0..2 * kg.vocab().base_count()),
            qt,
        );
        let m = rng.gen_range(1..=qt);
        let cfg = BeamConfig {
            width: rng.gen_range(1..10),
            mu: rng.gen_range(0.0..=1.0),
            max_steps: rng.gen_range(1..4),
            actions: ActionConfig {
                delta: rng.gen_range(0..4),
                cap: Some(rng.gen_range(1..20)),
                strict_delta_step0: rng.gen_bool(0.3),
            },
        };
        let mut tape = Tape::new(&p.store);
        let beams = randomized_beam_search(&mut tape, &kg, &p, &q, m, &cfg, &mut rng).unwrap();
        let trace = RolloutTrace::new(q, m, &beams);
        steps += check_rollout(&kg, &trace, &cfg.actions).unwrap_or_else(|e| panic!("rollout {i}: {e}"));
    }
    format!("{queries} rollouts, {steps} non-self-loop steps re-checked")
}
