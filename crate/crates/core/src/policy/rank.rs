use std::collections::HashMap;

use super::beam::BeamEntry;
use crate::kg::EntityId;

/// Ranks destinations by their best path log-probability; ties go to the
/// smaller entity id.
pub fn stage1_rank(beams: &[BeamEntry]) -> Vec<(EntityId, f64)> {
    let mut best: HashMap<EntityId, f64> = HashMap::new();
    for b in beams {
        best.entry(b.destination())
            .and_modify(|s| *s = s.max(b.cum_log_prob))
            .or_insert(b.cum_log_prob);
    }
    let mut out: Vec<_> = best.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}
