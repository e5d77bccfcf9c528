use serde::{Deserialize, Serialize};
use std::fmt;

pub type EntityId = u32;
pub type RelationId = u32;
pub type Timestep = u32;

/// A time-stamped fact `(subject, relation, object, time)`.
///
/// Field order matters: the derived `Ord` sorts by subject, then relation,
/// object and time. Index construction uses its own explicit keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub time: Timestep,
}

impl Quadruple {
    pub const fn new(subject: EntityId, relation: RelationId, object: EntityId, time: Timestep) -> Self {
        Self {
            subject,
            relation,
            object,
            time,
        }
    }
}

impl fmt::Display for Quadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.subject, self.relation, self.object, self.time
        )
    }
}

/// Extended relation vocabulary.
///
/// Layout: `[0, R)` base relations, `[R, 2R)` their inverses, `2R` the
/// self-loop relation and `2R + 1` the dummy start relation used to seed
/// the path encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationVocab {
    base_count: u32,
}

impl RelationVocab {
    pub const fn new(base_count: u32) -> Self {
        Self { base_count }
    }

    pub const fn base_count(&self) -> u32 {
        self.base_count
    }

    /// Size of the extended vocabulary, `2R + 2`.
    pub const fn extended_size(&self) -> usize {
        2 * self.base_count as usize + 2
    }

    pub const fn self_loop(&self) -> RelationId {
        2 * self.base_count
    }

    pub const fn dummy_start(&self) -> RelationId {
        2 * self.base_count + 1
    }

    pub const fn is_inverse(&self, r: RelationId) -> bool {
        r >= self.base_count && r < 2 * self.base_count
    }

    /// Inverse of a base or inverse relation. The special relations map to
    /// themselves.
    pub const fn inverse(&self, r: RelationId) -> RelationId {
        if r < self.base_count {
            r + self.base_count
        } else if r < 2 * self.base_count {
            r - self.base_count
        } else {
            r
        }
    }

    /// The base relation behind `r` (identity for base relations).
    pub const fn base_of(&self, r: RelationId) -> RelationId {
        if self.is_inverse(r) {
            r - self.base_count
        } else {
            r
        }
    }
}
