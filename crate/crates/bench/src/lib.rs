//! Fixtures shared by the kernel benchmarks.

use cluegraph::kg::{generate_synthetic, Splits, SynthConfig};
use cluegraph::pipeline::{clue_sequence, derive_rng, run_stage1};
use cluegraph::policy::{Query, Stage1Params};
use cluegraph::reasoner::{ClueGraphSequence, Stage2Params};
use cluegraph::train::TrainConfig;
use cluegraph::{Tape, TemporalKG};

pub struct Fixture {
    pub cfg: TrainConfig,
    pub kg: TemporalKG,
    pub stage1: Stage1Params,
    pub stage2: Stage2Params,
    pub queries: Vec<Query>,
    pub sequences: Vec<ClueGraphSequence>,
}

/// A scaled-down planted dataset with freshly initialised models of
/// embedding size `dim` and beam width `beam`.
pub fn fixture(dim: usize, beam: usize) -> Fixture {
    let mut synth = SynthConfig::planted(0);
    synth.num_entities = 500;
    synth.num_timesteps = 100;
    let data = generate_synthetic(&synth).unwrap();
    let bundle = data.bundle.augment_inverse().unwrap();
    let mut cfg = TrainConfig::default();
    for (k, v) in [
        ("embed_dim", dim),
        ("policy_hidden", dim),
        ("policy_mlp", dim),
        ("reasoner_hidden", dim),
        ("beam_width", beam),
    ] {
        cfg.set(k, &v.to_string()).unwrap();
    }
    let kg = bundle.history_graph(Splits::All).unwrap();
    let n = bundle.num_entities;
    let stage1 = Stage1Params::init(n, bundle.vocab(), cfg.policy_dims(), &mut derive_rng(1, &[])).unwrap();
    let stage2 = Stage2Params::init(n, bundle.vocab(), cfg.reasoner_dims(), &mut derive_rng(2, &[])).unwrap();
    let queries: Vec<Query> = bundle.test.iter().take(64).map(Query::from_fact).collect();
    let search = cfg.eval_search();
    let sequences = queries
        .iter()
        .map(|q| {
            let mut tape = Tape::new(&stage1.store);
            let s1 = run_stage1(&mut tape, &kg, &stage1, q, &search, &mut derive_rng(3, &[])).unwrap();
            clue_sequence(&kg, q, &s1.beams, &search)
        })
        .collect();
    Fixture {
        cfg,
        kg,
        stage1,
        stage2,
        queries,
        sequences,
    }
}
