use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::RelationId;
use crate::policy::RolloutTrace;
use crate::reasoner::ClueGraphSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClueCategoryStats {
    pub total: usize,
    pub repetitive_fraction: f64,
    pub non_repetitive_fraction: f64,
}

/// Share of clue facts consumed by Stage 2 that repeat the query pattern
/// (same subject and relation as the query).
pub fn clue_category_stats<'a>(sequences: impl IntoIterator<Item = &'a ClueGraphSequence>) -> ClueCategoryStats {
    let (mut total, mut rep) = (0usize, 0usize);
    for seq in sequences {
        let q = &seq.query;
        for &(s, r, _) in seq.graphs.iter().flat_map(|g| &g.edges) {
            total += 1;
            if s == q.subject && r == q.relation {
                rep += 1;
            }
        }
    }
    let frac = if total == 0 { 0.0 } else { rep as f64 / total as f64 };
    ClueCategoryStats {
        total,
        repetitive_fraction: frac,
        non_repetitive_fraction: if total == 0 { 0.0 } else { 1.0 - frac },
    }
}

/// Weighted `(clue relation, query relation, count)` edges from 1-hop
/// non-repetitive paths, heaviest first and then by relation ids.
pub fn clue_graph_export(traces: &[RolloutTrace]) -> Result<Vec<(RelationId, RelationId, usize)>> {
    let mut counts: BTreeMap<(RelationId, RelationId), usize> = BTreeMap::new();
    for t in traces {
        for p in &t.paths {
            if p.steps.len() != 1 {
                return Err(Error::Invalid(format!(
                    "clue graph export needs 1-hop traces, got a {}-hop path",
                    p.steps.len()
                )));
            }
            let step = &p.steps[0];
            if !step.self_loop && step.relation != t.query.relation {
                *counts.entry((step.relation, t.query.relation)).or_default() += 1;
            }
        }
    }
    let mut out: Vec<_> = counts.into_iter().map(|((a, q), c)| (a, q, c)).collect();
    out.sort_by(|x, y| y.2.cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    Ok(out)
}

/// Tab-separated edge list: `clue_relation  query_relation  count`.
pub fn clue_graph_tsv(edges: &[(RelationId, RelationId, usize)]) -> String {
    let mut s = String::from("clue_relation\tquery_relation\tcount\n");
    for (a, q, c) in edges {
        s.push_str(&format!("{a}\t{q}\t{c}\n"));
    }
    s
}
