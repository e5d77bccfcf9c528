#![allow(dead_code)]

pub mod grad;
pub mod oracle;
pub mod run;

use cluegraph::kg::{Quadruple, RelationVocab, TemporalKG};
use rand::Rng;

/// Random augmented toy graph: every base fact also appears inverted.
pub fn toy_kg<R: Rng>(rng: &mut R, max_e: usize, max_r: u32, max_t: u32, facts: usize) -> TemporalKG {
    let n = rng.gen_range(2..=max_e);
    let nr = rng.gen_range(1..=max_r);
    let t = rng.gen_range(2..=max_t);
    let vocab = RelationVocab::new(nr);
    let mut all = Vec::new();
    for _ in 0..facts {
        let s = rng.gen_range(0..n) as u32;
        let o = rng.gen_range(0..n) as u32;
        let r = rng.gen_range(0..nr);
        let ts = rng.gen_range(0..t);
        all.push(Quadruple::new(s, r, o, ts));
        all.push(Quadruple::new(o, vocab.inverse(r), s, ts));
    }
    all.sort_unstable_by_key(|q| (q.time, q.subject, q.relation, q.object));
    all.dedup();
    TemporalKG::new(all, n, vocab).unwrap()
}
