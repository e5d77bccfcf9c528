//! The per-query path shared by training and evaluation: Stage-1 search,
//! then the clue-graph sequence handed to Stage 2.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::TemporalKG;
use crate::nd::Tape;
use crate::policy::{adaptive_window, randomized_beam_search, BeamConfig, BeamEntry, Query, Stage1Params, WindowMode};
use crate::reasoner::{build_sequence, derive_clue_facts, ClueGraphSequence, CluePath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub beam: BeamConfig,
    pub window: WindowMode,
    /// Cap on the full-history fallback window.
    pub m_max: Option<u32>,
    /// Maximum number of graphs fed to the GRU.
    pub seq_len: usize,
    /// Restrict clue facts to the last `clue_window` timesteps.
    pub clue_window: Option<u32>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam: BeamConfig::default(),
            window: WindowMode::PatternK(1),
            m_max: None,
            seq_len: 10,
            clue_window: None,
        }
    }
}

impl SearchConfig {
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.beam.mu = mu;
        self
    }
}

/// Independent random stream for one unit of work, e.g.
/// `(seed, phase, epoch, query index)`.
pub fn derive_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    // splitmix64 finalizer folded over the parts
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut h = mix(seed);
    for &p in parts {
        h = mix(h ^ mix(p));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Fan-out over independent items that keeps results in input order, so
/// reductions over them are deterministic for any worker count.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(n: usize) -> Result<Self> {
        let pool = if n > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { pool })
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Result<Vec<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &T) -> Result<U> + Sync + Send,
    {
        match &self.pool {
            None => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
            Some(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub window: u32,
    pub beams: Vec<BeamEntry>,
}

pub fn run_stage1(
    tape: &mut Tape<'_>,
    kg: &TemporalKG,
    params: &Stage1Params,
    query: &Query,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Stage1Output> {
    let window = adaptive_window(kg, query, cfg.window, cfg.m_max);
    let beams = randomized_beam_search(tape, kg, params, query, window, &cfg.beam, rng)?;
    Ok(Stage1Output { window, beams })
}

pub fn clue_paths(query: &Query, beams: &[BeamEntry]) -> Vec<CluePath> {
    beams
        .iter()
        .map(|b| CluePath::from_actions(query.subject, &b.actions))
        .collect()
}

pub fn clue_sequence(kg: &TemporalKG, query: &Query, beams: &[BeamEntry], cfg: &SearchConfig) -> ClueGraphSequence {
    let facts = derive_clue_facts(kg, query, &clue_paths(query, beams), cfg.clue_window);
    build_sequence(&facts, query, cfg.seq_len)
}
