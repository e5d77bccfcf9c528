//! Finite-difference checks of every differentiable building block. Each
//! check panics on failure and returns the largest relative error seen.

use cluegraph::kg::RelationVocab;
use cluegraph::nd::{
    grad_check, gru_cell as gru_step, lstm_cell as lstm_step, GradCheckReport, GruCell, LstmLayer, ParamStore, Tape,
    Tensor,
};
use cluegraph::pipeline::{run_stage1, SearchConfig};
use cluegraph::policy::{reinforce_surrogate as surrogate, BeamConfig, PolicyDims, Query, Stage1Params, WindowMode};
use cluegraph::reasoner::{ce_loss as ce, ClueGraph, ClueGraphSequence, ReasonerDims, Stage2Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const SEEDS: u64 = 20;

fn assert_pass(what: &str, seed: u64, r: &GradCheckReport) -> f64 {
    assert!(r.checked > 0, "{what} seed {seed}: nothing checked");
    assert!(
        r.pass,
        "{what} seed {seed}: max rel err {:.3e} at {:?}",
        r.max_rel_err, r.worst
    );
    r.max_rel_err
}

/// Random fixed projection so the checked scalar mixes every output.
fn probe(rng: &mut ChaCha8Rng, cols: usize) -> Tensor {
    Tensor::uniform(cols, 1, 1.0, rng)
}

fn project(tape: &mut Tape<'_>, v: cluegraph::Var, w: &Tensor) -> cluegraph::Var {
    let c = tape.constant(w.clone());
    tape.matmul(v, c).unwrap()
}

pub fn lstm_cell() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (input, hidden) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let mut store = ParamStore::new();
        let layer = LstmLayer::init(&mut store, "l", input, hidden, &mut rng).unwrap();
        let x = store.add("x", Tensor::uniform(1, input, 1.0, &mut rng)).unwrap();
        let h0 = store.add("h0", Tensor::uniform(1, hidden, 1.0, &mut rng)).unwrap();
        let c0 = store.add("c0", Tensor::uniform(1, hidden, 1.0, &mut rng)).unwrap();
        let (wh, wc) = (probe(&mut rng, hidden), probe(&mut rng, hidden));
        let r = grad_check(
            |t| {
                let (x, h0, c0) = (t.param(x), t.param(h0), t.param(c0));
                let (h, c) = lstm_step(t, x, h0, c0, &layer)?;
                let a = project(t, h, &wh);
                let b = project(t, c, &wc);
                t.add(a, b)
            },
            &store,
            H,
            TOL,
        )
        .unwrap();
        worst = worst.max(assert_pass("lstm_cell", seed, &r));
    }
    worst
}

pub fn gru_cell() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (input, hidden) = (rng.gen_range(1..6), rng.gen_range(1..5));
        let mut store = ParamStore::new();
        let cell = GruCell::init(&mut store, "g", input, hidden, &mut rng).unwrap();
        // non-zero bias so every bias slot is exercised away from its init
        let b = store.id("g.bias").unwrap();
        *store.get_mut(b) = Tensor::uniform(1, 3 * hidden, 0.5, &mut rng);
        let x = store.add("x", Tensor::uniform(1, input, 1.0, &mut rng)).unwrap();
        let h0 = store.add("h0", Tensor::uniform(1, hidden, 1.0, &mut rng)).unwrap();
        let w = probe(&mut rng, hidden);
        let r = grad_check(
            |t| {
                let (x, h0) = (t.param(x), t.param(h0));
                let h = gru_step(t, x, h0, &cell)?;
                Ok(project(t, h, &w))
            },
            &store,
            H,
            TOL,
        )
        .unwrap();
        worst = worst.max(assert_pass("gru_cell", seed, &r));
    }
    worst
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: u32, nrel: u32, time: u32, edges: usize) -> ClueGraph {
    let mut e: Vec<_> = (0..edges)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..nrel), rng.gen_range(0..n)))
        .collect();
    e.sort_unstable();
    e.dedup();
    ClueGraph { time, edges: e }
}

pub fn reasoner(rng: &mut ChaCha8Rng, n: usize, base: u32, bases: Option<usize>) -> Stage2Params {
    let dims = ReasonerDims {
        embed: rng.gen_range(2..5),
        hidden: rng.gen_range(2..5),
        layers: rng.gen_range(1..3),
        num_bases: bases,
    };
    let mut p = Stage2Params::init(n, RelationVocab::new(base), dims, rng).unwrap();
    // a zero decoder would make every upstream gradient vanish
    let dec = p.store.id("decoder").unwrap();
    let shape = p.store.get(dec).shape();
    *p.store.get_mut(dec) = Tensor::uniform(shape[0], shape[1], 1.0, rng);
    p
}

pub fn rgcn_forward() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let bases = (seed % 2 == 1).then_some(2);
        let p = reasoner(&mut rng, 6, 2, bases);
        let k = rng.gen_range(1..6);
        let g = random_graph(&mut rng, 6, 6, 1, k);
        let w = probe(&mut rng, p.dims.embed);
        let r = grad_check(
            |t| {
                let (_, h) = p.rgcn_forward(t, &g)?;
                let m = t.mean_rows(h)?;
                let rows = t.shape(h)[0];
                let s = project(t, m, &w);
                Ok(t.scale(s, rows as f64))
            },
            &p.store,
            H,
            TOL,
        )
        .unwrap();
        worst = worst.max(assert_pass("rgcn_forward", seed, &r));
    }
    worst
}

fn random_sequence(rng: &mut ChaCha8Rng, steps: usize) -> ClueGraphSequence {
    random_sequence_over(rng, 6, steps)
}

/// Sequence of small random graphs over `n` entities and the six
/// extended relations of a two-relation vocabulary.
pub fn random_sequence_over(rng: &mut ChaCha8Rng, n: u32, steps: usize) -> ClueGraphSequence {
    let graphs = (0..steps)
        .map(|i| {
            let k = rng.gen_range(1..4);
            random_graph(rng, n, 6, 2 * i as u32, k)
        })
        .collect();
    ClueGraphSequence {
        query: Query::new(rng.gen_range(0..n), rng.gen_range(0..6), 2 * steps as u32 + 1),
        graphs,
    }
}

pub fn encode_sequence() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let p = reasoner(&mut rng, 6, 2, None);
        let seq = random_sequence(&mut rng, 3);
        let w = probe(&mut rng, p.dims.hidden);
        let r = grad_check(
            |t| {
                let h = p.encode_sequence(t, &seq)?;
                Ok(project(t, h, &w))
            },
            &p.store,
            H,
            TOL,
        )
        .unwrap();
        worst = worst.max(assert_pass("encode_sequence", seed, &r));
    }
    worst
}

pub fn ce_loss() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let p = reasoner(&mut rng, 6, 2, None);
        let steps = rng.gen_range(1..4);
        let seq = random_sequence(&mut rng, steps);
        let target = rng.gen_range(0..6);
        let r = grad_check(
            |t| {
                let logits = p.forward(t, &seq)?;
                ce(t, logits, target)
            },
            &p.store,
            H,
            TOL,
        )
        .unwrap();
        worst = worst.max(assert_pass("ce_loss", seed, &r));
    }
    worst
}

pub fn reinforce_surrogate() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let kg = super::toy_kg(&mut rng, 8, 3, 8, 30);
        let dims = PolicyDims {
            embed: 3,
            hidden: 3,
            lstm_layers: rng.gen_range(1..3),
            mlp: 3,
        };
        let p = Stage1Params::init(kg.num_entities(), kg.vocab(), dims, &mut rng).unwrap();
        let fact = kg.facts()[rng.gen_range(0..kg.num_facts())];
        let q = Query::new(fact.subject, fact.relation, kg.max_time() + 1);
        let cfg = SearchConfig {
            beam: BeamConfig {
                width: 4,
                mu: 1.0,
                max_steps: 2,
                ..BeamConfig::default()
            },
            window: WindowMode::Fixed(kg.max_time() + 1),
            ..SearchConfig::default()
        };
        let rewards: Vec<f64> = (0..cfg.beam.width).map(|_| rng.gen_range(0.0..2.0)).collect();
        let r = grad_check(
            |t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let out = run_stage1(t, &kg, &p, &q, &cfg, &mut rng)?;
                let rollouts: Vec<_> = out.beams.iter().zip(&rewards).map(|(b, &r)| (b, r)).collect();
                surrogate(t, &rollouts, 0.4)
            },
            &p.store,
            H,
            TOL,
        )
        .unwrap();
        worst = worst.max(assert_pass("reinforce_surrogate", seed, &r));
    }
    worst
}
