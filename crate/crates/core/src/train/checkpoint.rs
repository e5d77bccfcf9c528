use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::RelationVocab;
use crate::nd::{ParamStore, TensorArchive};
use crate::pipeline::derive_rng;
use crate::policy::{Baseline, Stage1Params};
use crate::reasoner::Stage2Params;

use super::adam::{Adam, AdamConfig};
use super::config::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Stage2,
    Joint,
}

impl Phase {
    /// Tag recorded once the phase has completed.
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrained",
            Phase::Stage2 => "stage2",
            Phase::Joint => "joint",
        }
    }

    pub fn from_tag(s: &str) -> Result<Self> {
        match s {
            "pretrained" => Ok(Phase::Pretrain),
            "stage2" => Ok(Phase::Stage2),
            "joint" => Ok(Phase::Joint),
            _ => Err(Error::Checkpoint(format!("unknown phase tag {s:?}"))),
        }
    }

    /// Stream id used when deriving random streams for this phase.
    pub(crate) fn stream(self) -> u64 {
        match self {
            Phase::Pretrain => 1,
            Phase::Stage2 => 2,
            Phase::Joint => 3,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// State of a phase that has not finished yet.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub phase: Phase,
    pub epochs_done: usize,
    pub best_score: f64,
    pub bad_epochs: usize,
    pub stopped: bool,
    pub best_stage1: Option<ParamStore>,
    pub best_stage2: Option<ParamStore>,
}

impl Progress {
    pub fn start(phase: Phase) -> Self {
        Self {
            phase,
            epochs_done: 0,
            best_score: f64::NEG_INFINITY,
            bad_epochs: 0,
            stopped: false,
            best_stage1: None,
            best_stage2: None,
        }
    }
}

/// Both stages' parameters plus everything needed to resume training
/// bit-exactly. Random streams are derived from the seed, phase, epoch and
/// query index, so no generator state is stored.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub num_entities: usize,
    pub vocab: RelationVocab,
    pub phases_done: Vec<Phase>,
    pub stage1: Stage1Params,
    pub stage2: Option<Stage2Params>,
    pub adam1: Adam,
    pub adam2: Option<Adam>,
    pub baseline: Baseline,
    pub progress: Option<Progress>,
}

const KIND: &str = "cluegraph-checkpoint";

pub(crate) fn adam_config(cfg: &TrainConfig, lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        eps: cfg.adam_eps,
    }
}

fn parse_meta<T: std::str::FromStr>(a: &TensorArchive, key: &str) -> Result<T> {
    a.require_meta(key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad value for {key}")))
}

impl Checkpoint {
    /// Fresh Stage-1 parameters drawn from the config seed.
    pub fn init(config: &TrainConfig, num_entities: usize, vocab: RelationVocab) -> Result<Self> {
        config.validate()?;
        let mut rng = derive_rng(config.seed, &[0x1417, 1]);
        let stage1 = Stage1Params::init(num_entities, vocab, config.policy_dims(), &mut rng)?;
        let adam1 = Adam::new(&stage1.store, adam_config(config, config.lr_stage1));
        Ok(Self {
            config: config.clone(),
            num_entities,
            vocab,
            phases_done: Vec::new(),
            stage1,
            stage2: None,
            adam1,
            adam2: None,
            baseline: Baseline {
                value: 0.0,
                decay: config.baseline_decay,
            },
            progress: None,
        })
    }

    /// Adds fresh Stage-2 parameters if there are none yet.
    pub fn ensure_stage2(&mut self) -> Result<()> {
        if self.stage2.is_none() {
            let mut rng = derive_rng(self.config.seed, &[0x1417, 2]);
            let p = Stage2Params::init(self.num_entities, self.vocab, self.config.reasoner_dims(), &mut rng)?;
            self.adam2 = Some(Adam::new(&p.store, adam_config(&self.config, self.config.lr_stage2)));
            self.stage2 = Some(p);
        }
        Ok(())
    }

    pub fn has_phase(&self, p: Phase) -> bool {
        self.phases_done.contains(&p)
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new();
        a.push_meta("kind", KIND);
        a.push_meta("config", self.config.to_text());
        a.push_meta("config_hash", self.config.hash());
        a.push_meta("num_entities", self.num_entities.to_string());
        a.push_meta("num_base_relations", self.vocab.base_count().to_string());
        let phases: Vec<&str> = self.phases_done.iter().map(|p| p.tag()).collect();
        a.push_meta("phases", phases.join(","));
        a.push_meta("baseline_value", self.baseline.value.to_string());
        a.push_meta("baseline_decay", self.baseline.decay.to_string());
        a.push_store("s1/", &self.stage1.store);
        self.adam1.save_into(&mut a, "opt1/");
        if let (Some(s2), Some(adam2)) = (&self.stage2, &self.adam2) {
            a.push_store("s2/", &s2.store);
            adam2.save_into(&mut a, "opt2/");
        }
        if let Some(p) = &self.progress {
            a.push_meta("progress_phase", p.phase.tag());
            a.push_meta("progress_epochs", p.epochs_done.to_string());
            a.push_meta("progress_best", p.best_score.to_string());
            a.push_meta("progress_bad", p.bad_epochs.to_string());
            a.push_meta("progress_stopped", p.stopped.to_string());
            if let Some(b) = &p.best_stage1 {
                a.push_store("best1/", b);
            }
            if let Some(b) = &p.best_stage2 {
                a.push_store("best2/", b);
            }
        }
        a
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        if a.require_meta("kind")? != KIND {
            return Err(Error::Checkpoint("not a training checkpoint".into()));
        }
        let config = TrainConfig::from_text(a.require_meta("config")?)?;
        if config.hash() != a.require_meta("config_hash")? {
            return Err(Error::Checkpoint("stored config does not match its hash".into()));
        }
        let num_entities: usize = parse_meta(a, "num_entities")?;
        let vocab = RelationVocab::new(parse_meta(a, "num_base_relations")?);
        let phases_done = a
            .require_meta("phases")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(Phase::from_tag)
            .collect::<Result<_>>()?;
        let stage1 = Stage1Params::from_store(a.extract_store("s1/")?, vocab, config.lstm_layers)?;
        if stage1.num_entities() != num_entities {
            return Err(Error::Checkpoint(
                "stage-1 entity table does not match num_entities".into(),
            ));
        }
        let adam1 = Adam::load_from(a, "opt1/", &stage1.store, adam_config(&config, config.lr_stage1))?;
        let s2 = a.extract_store("s2/")?;
        let (stage2, adam2) = if s2.is_empty() {
            (None, None)
        } else {
            let p = Stage2Params::from_store(s2, vocab)?;
            let adam = Adam::load_from(a, "opt2/", &p.store, adam_config(&config, config.lr_stage2))?;
            (Some(p), Some(adam))
        };
        let progress = match a.meta("progress_phase") {
            None => None,
            Some(tag) => {
                let b1 = a.extract_store("best1/")?;
                let b2 = a.extract_store("best2/")?;
                Some(Progress {
                    phase: Phase::from_tag(tag)?,
                    epochs_done: parse_meta(a, "progress_epochs")?,
                    best_score: parse_meta(a, "progress_best")?,
                    bad_epochs: parse_meta(a, "progress_bad")?,
                    stopped: parse_meta(a, "progress_stopped")?,
                    best_stage1: (!b1.is_empty()).then_some(b1),
                    best_stage2: (!b2.is_empty()).then_some(b2),
                })
            }
        };
        Ok(Self {
            config,
            num_entities,
            vocab,
            phases_done,
            stage1,
            stage2,
            adam1,
            adam2,
            baseline: Baseline {
                value: parse_meta(a, "baseline_value")?,
                decay: parse_meta(a, "baseline_decay")?,
            },
            progress,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_archive().encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_archive(&TensorArchive::decode(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&TensorArchive::load(path)?)
    }
}
