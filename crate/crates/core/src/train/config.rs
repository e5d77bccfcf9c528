use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::Rerank;
use crate::pipeline::SearchConfig;
use crate::policy::{ActionConfig, BeamConfig, PolicyDims, WindowMode};
use crate::reasoner::ReasonerDims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointSchedule {
    /// Every batch takes a Stage-2 step, then a Stage-1 step.
    PerBatch,
    /// Even epochs update Stage 2, odd epochs update Stage 1.
    PerEpoch,
}

/// Every tunable of the pipeline. Stored as flat `key = value` text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub policy_hidden: usize,
    pub lstm_layers: usize,
    pub policy_mlp: usize,
    pub reasoner_hidden: usize,
    pub rgcn_layers: usize,
    pub num_bases: Option<usize>,

    pub beam_width: usize,
    pub mu: f64,
    pub eval_mu: f64,
    pub path_length: usize,
    pub delta: u32,
    pub action_cap: Option<usize>,
    pub strict_delta_step0: bool,
    pub window: WindowMode,
    pub m_max: Option<u32>,
    pub seq_len: usize,
    pub clue_window: Option<u32>,

    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs_pretrain: usize,
    pub epochs_stage2: usize,
    pub epochs_joint: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub baseline_decay: f64,
    pub joint_schedule: JointSchedule,
    pub rerank: Rerank,
    /// Use at most this many training queries (a seeded subset).
    pub max_train_queries: Option<usize>,
    /// Validate on at most this many queries (a seeded subset).
    pub max_valid_queries: Option<usize>,

    pub seed: u64,
    pub precision: u32,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 200,
            policy_hidden: 200,
            lstm_layers: 2,
            policy_mlp: 200,
            reasoner_hidden: 200,
            rgcn_layers: 2,
            num_bases: None,
            beam_width: 32,
            mu: 0.3,
            eval_mu: 1.0,
            path_length: 1,
            delta: 3,
            action_cap: Some(200),
            strict_delta_step0: false,
            window: WindowMode::PatternK(1),
            m_max: None,
            seq_len: 10,
            clue_window: None,
            lr_stage1: 1e-3,
            lr_stage2: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            batch_size: 128,
            epochs_pretrain: 30,
            epochs_stage2: 30,
            epochs_joint: 20,
            patience: 5,
            baseline_decay: 0.9,
            joint_schedule: JointSchedule::PerBatch,
            rerank: Rerank::CandidatesFirst,
            max_train_queries: None,
            max_valid_queries: None,
            seed: 0,
            precision: 64,
            workers: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn show_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl TrainConfig {
    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "policy_hidden" => self.policy_hidden = parse(key, v)?,
            "lstm_layers" => self.lstm_layers = parse(key, v)?,
            "policy_mlp" => self.policy_mlp = parse(key, v)?,
            "reasoner_hidden" => self.reasoner_hidden = parse(key, v)?,
            "rgcn_layers" => self.rgcn_layers = parse(key, v)?,
            "num_bases" => self.num_bases = parse_opt(key, v)?,
            "beam_width" => self.beam_width = parse(key, v)?,
            "mu" => self.mu = parse(key, v)?,
            "eval_mu" => self.eval_mu = parse(key, v)?,
            "path_length" => self.path_length = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "action_cap" => self.action_cap = parse_opt(key, v)?,
            "strict_delta_step0" => self.strict_delta_step0 = parse(key, v)?,
            "window" => self.window = v.parse()?,
            "m_max" => self.m_max = parse_opt(key, v)?,
            "seq_len" => self.seq_len = parse(key, v)?,
            "clue_window" => self.clue_window = parse_opt(key, v)?,
            "lr_stage1" => self.lr_stage1 = parse(key, v)?,
            "lr_stage2" => self.lr_stage2 = parse(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs_pretrain" => self.epochs_pretrain = parse(key, v)?,
            "epochs_stage2" => self.epochs_stage2 = parse(key, v)?,
            "epochs_joint" => self.epochs_joint = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "baseline_decay" => self.baseline_decay = parse(key, v)?,
            "joint_schedule" => {
                self.joint_schedule = match v {
                    "per_batch" => JointSchedule::PerBatch,
                    "per_epoch" => JointSchedule::PerEpoch,
                    _ => return Err(Error::Config(format!("bad value {v:?} for {key}"))),
                }
            }
            "rerank" => self.rerank = v.parse()?,
            "max_train_queries" => self.max_train_queries = parse_opt(key, v)?,
            "max_valid_queries" => self.max_valid_queries = parse_opt(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "precision" => self.precision = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Every field as `(key, value)` in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let js = match self.joint_schedule {
            JointSchedule::PerBatch => "per_batch",
            JointSchedule::PerEpoch => "per_epoch",
        };
        vec![
            ("embed_dim", self.embed_dim.to_string()),
            ("policy_hidden", self.policy_hidden.to_string()),
            ("lstm_layers", self.lstm_layers.to_string()),
            ("policy_mlp", self.policy_mlp.to_string()),
            ("reasoner_hidden", self.reasoner_hidden.to_string()),
            ("rgcn_layers", self.rgcn_layers.to_string()),
            ("num_bases", show_opt(&self.num_bases)),
            ("beam_width", self.beam_width.to_string()),
            ("mu", self.mu.to_string()),
            ("eval_mu", self.eval_mu.to_string()),
            ("path_length", self.path_length.to_string()),
            ("delta", self.delta.to_string()),
            ("action_cap", show_opt(&self.action_cap)),
            ("strict_delta_step0", self.strict_delta_step0.to_string()),
            ("window", self.window.to_string()),
            ("m_max", show_opt(&self.m_max)),
            ("seq_len", self.seq_len.to_string()),
            ("clue_window", show_opt(&self.clue_window)),
            ("lr_stage1", self.lr_stage1.to_string()),
            ("lr_stage2", self.lr_stage2.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs_pretrain", self.epochs_pretrain.to_string()),
            ("epochs_stage2", self.epochs_stage2.to_string()),
            ("epochs_joint", self.epochs_joint.to_string()),
            ("patience", self.patience.to_string()),
            ("baseline_decay", self.baseline_decay.to_string()),
            ("joint_schedule", js.to_string()),
            ("rerank", self.rerank.to_string()),
            ("max_train_queries", show_opt(&self.max_train_queries)),
            ("max_valid_queries", show_opt(&self.max_valid_queries)),
            ("seed", self.seed.to_string()),
            ("precision", self.precision.to_string()),
            ("workers", self.workers.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over every field that can change results (all but `workers`).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k != "workers" {
                h.update(format!("{k}={v}\n"));
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("policy_hidden", self.policy_hidden),
            ("lstm_layers", self.lstm_layers),
            ("policy_mlp", self.policy_mlp),
            ("reasoner_hidden", self.reasoner_hidden),
            ("rgcn_layers", self.rgcn_layers),
            ("beam_width", self.beam_width),
            ("path_length", self.path_length),
            ("seq_len", self.seq_len),
            ("batch_size", self.batch_size),
            ("workers", self.workers),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        for (k, v) in [
            ("mu", self.mu),
            ("eval_mu", self.eval_mu),
            ("baseline_decay", self.baseline_decay),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{k} = {v} is outside [0, 1]")));
            }
        }
        for (k, v) in [
            ("lr_stage1", self.lr_stage1),
            ("lr_stage2", self.lr_stage2),
            ("adam_eps", self.adam_eps),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive and finite")));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        match self.precision {
            64 => {}
            32 => {
                return Err(Error::Config(
                    "32-bit precision is not supported; use precision = 64".into(),
                ))
            }
            p => return Err(Error::Config(format!("unknown precision {p}"))),
        }
        if matches!(self.num_bases, Some(0)) || matches!(self.action_cap, Some(0)) {
            return Err(Error::Config(
                "num_bases and action_cap must be positive or none".into(),
            ));
        }
        Ok(())
    }

    pub fn policy_dims(&self) -> PolicyDims {
        PolicyDims {
            embed: self.embed_dim,
            hidden: self.policy_hidden,
            lstm_layers: self.lstm_layers,
            mlp: self.policy_mlp,
        }
    }

    pub fn reasoner_dims(&self) -> ReasonerDims {
        ReasonerDims {
            embed: self.embed_dim,
            hidden: self.reasoner_hidden,
            layers: self.rgcn_layers,
            num_bases: self.num_bases,
        }
    }

    /// Search settings for training rollouts (`mu`).
    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            beam: BeamConfig {
                width: self.beam_width,
                mu: self.mu,
                max_steps: self.path_length,
                actions: ActionConfig {
                    delta: self.delta,
                    cap: self.action_cap,
                    strict_delta_step0: self.strict_delta_step0,
                },
            },
            window: self.window,
            m_max: self.m_max,
            seq_len: self.seq_len,
            clue_window: self.clue_window,
        }
    }

    /// Search settings for evaluation and frozen-policy rollouts (`eval_mu`).
    pub fn eval_search(&self) -> SearchConfig {
        self.search().with_mu(self.eval_mu)
    }
}
