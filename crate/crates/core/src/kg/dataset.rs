use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::graph::TemporalKG;
use super::types::{Quadruple, RelationVocab, Timestep};
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Which splits to include when building a history graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splits {
    Train,
    TrainValid,
    All,
}

/// The three splits of a dataset plus its vocabulary sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    pub num_entities: usize,
    pub num_base_relations: u32,
    /// Original time units per timestep.
    pub time_gap: u32,
    augmented: bool,
}

impl DatasetBundle {
    /// Builds a bundle, validating every fact against the vocabulary.
    pub fn new(
        train: Vec<Quadruple>,
        valid: Vec<Quadruple>,
        test: Vec<Quadruple>,
        num_entities: usize,
        num_base_relations: u32,
        time_gap: u32,
    ) -> Result<Self> {
        let bundle = Self {
            train,
            valid,
            test,
            num_entities,
            num_base_relations,
            time_gap,
            augmented: false,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn vocab(&self) -> RelationVocab {
        RelationVocab::new(self.num_base_relations)
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    fn validate(&self) -> Result<()> {
        let rel_limit = if self.augmented {
            2 * self.num_base_relations
        } else {
            self.num_base_relations
        };
        for (name, split) in self.named_splits() {
            if split.is_empty() {
                return Err(Error::EmptySplit(name.to_string()));
            }
            for q in split {
                if q.subject as usize >= self.num_entities || q.object as usize >= self.num_entities {
                    return Err(Error::Validation(format!(
                        "{name}: fact {q} has an entity id >= {}",
                        self.num_entities
                    )));
                }
                if q.relation >= rel_limit {
                    return Err(Error::Validation(format!(
                        "{name}: fact {q} has a relation id >= {rel_limit}"
                    )));
                }
            }
        }
        self.check_time_order();
        Ok(())
    }

    fn check_time_order(&self) {
        let max_train = self.train.iter().map(|q| q.time).max();
        let min_valid = self.valid.iter().map(|q| q.time).min();
        let min_test = self.test.iter().map(|q| q.time).min();
        if let (Some(mt), Some(mv), Some(ms)) = (max_train, min_valid, min_test) {
            if mt >= mv || mv > ms {
                log::warn!("splits are not time-ordered: max train time {mt}, min valid time {mv}, min test time {ms}");
            }
        }
    }

    pub fn named_splits(&self) -> [(&'static str, &[Quadruple]); 3] {
        [("train", &self.train), ("valid", &self.valid), ("test", &self.test)]
    }

    /// Adds `(o, r + R, s, t)` for every `(s, r, o, t)` in every split.
    pub fn augment_inverse(mut self) -> Result<Self> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let vocab = self.vocab();
        for split in [&mut self.train, &mut self.valid, &mut self.test] {
            let inverses: Vec<Quadruple> = split
                .iter()
                .map(|q| Quadruple::new(q.object, vocab.inverse(q.relation), q.subject, q.time))
                .collect();
            split.extend(inverses);
        }
        self.augmented = true;
        Ok(self)
    }

    pub fn facts(&self, splits: Splits) -> impl Iterator<Item = &Quadruple> {
        let valid: &[Quadruple] = match splits {
            Splits::Train => &[],
            _ => &self.valid,
        };
        let test: &[Quadruple] = match splits {
            Splits::All => &self.test,
            _ => &[],
        };
        self.train.iter().chain(valid).chain(test)
    }

    /// Time-indexed graph over the selected splits. Queries only ever look
    /// at facts strictly before their own timestep.
    pub fn history_graph(&self, splits: Splits) -> Result<TemporalKG> {
        TemporalKG::new(self.facts(splits).copied(), self.num_entities, self.vocab())
    }

    /// Writes the (non-augmented) splits plus `stat.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        if self.augmented {
            return Err(Error::Invalid("refusing to write an inverse-augmented bundle".into()));
        }
        fs::create_dir_all(dir)?;
        for (name, split) in self.named_splits() {
            let mut text = String::with_capacity(split.len() * 16);
            for q in split {
                let t = q.time as u64 * self.time_gap as u64;
                text.push_str(&format!("{}\t{}\t{}\t{}\n", q.subject, q.relation, q.object, t));
            }
            write_atomic(&dir.join(format!("{name}.txt")), text.as_bytes())?;
        }
        let stat = format!("{}\t{}\n", self.num_entities, self.num_base_relations);
        write_atomic(&dir.join("stat.txt"), stat.as_bytes())?;
        Ok(())
    }
}

fn parse_split(path: &Path, time_gap: u32) -> Result<Vec<Quadruple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let mut vals = [0u64; 4];
        for (slot, col) in vals.iter_mut().zip(&cols) {
            *slot = col
                .parse::<u64>()
                .map_err(|e| err(format!("bad integer {col:?}: {e}")))?;
        }
        if vals[..3].iter().any(|&v| v > u32::MAX as u64) {
            return Err(err("id does not fit in 32 bits".into()));
        }
        let time = vals[3] / time_gap as u64;
        let time = Timestep::try_from(time).map_err(|_| err("timestep overflow".into()))?;
        out.push(Quadruple::new(vals[0] as u32, vals[1] as u32, vals[2] as u32, time));
    }
    Ok(out)
}

fn parse_stat(path: &Path) -> Result<(usize, u32)> {
    let text = fs::read_to_string(path)?;
    let err = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: msg.to_string(),
    };
    let mut cols = text.split_whitespace();
    let e = cols
        .next()
        .and_then(|c| c.parse::<usize>().ok())
        .ok_or_else(|| err("missing entity count"))?;
    let r = cols
        .next()
        .and_then(|c| c.parse::<u32>().ok())
        .ok_or_else(|| err("missing relation count"))?;
    Ok((e, r))
}

/// Loads three tab-separated split files. Raw time values are divided by
/// `time_gap` (floor). Vocabulary sizes are `1 + max id` unless `stat` is
/// given, in which case its declared sizes are enforced.
pub fn load_dataset(
    train_path: &Path,
    valid_path: &Path,
    test_path: &Path,
    stat_path: Option<&Path>,
    time_gap: u32,
) -> Result<DatasetBundle> {
    if time_gap == 0 {
        return Err(Error::Config("time_gap must be positive".into()));
    }
    let train = parse_split(train_path, time_gap)?;
    let valid = parse_split(valid_path, time_gap)?;
    let test = parse_split(test_path, time_gap)?;
    for (name, split) in [("train", &train), ("valid", &valid), ("test", &test)] {
        if split.is_empty() {
            return Err(Error::EmptySplit(name.to_string()));
        }
    }
    let (num_entities, num_relations) = match stat_path {
        Some(p) => parse_stat(p)?,
        None => {
            let all = train.iter().chain(&valid).chain(&test);
            let (mut e, mut r) = (0u32, 0u32);
            for q in all {
                e = e.max(q.subject).max(q.object);
                r = r.max(q.relation);
            }
            (e as usize + 1, r + 1)
        }
    };
    DatasetBundle::new(train, valid, test, num_entities, num_relations, time_gap)
}

/// Loads `train.txt`, `valid.txt`, `test.txt` (and `stat.txt` if present)
/// from a directory.
pub fn load_dir(dir: &Path, time_gap: u32) -> Result<DatasetBundle> {
    let p = |name: &str| -> PathBuf { dir.join(name) };
    let stat = p("stat.txt");
    load_dataset(
        &p("train.txt"),
        &p("valid.txt"),
        &p("test.txt"),
        stat.exists().then_some(stat.as_path()),
        time_gap,
    )
}
