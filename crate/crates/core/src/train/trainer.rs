use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{adam_config, Checkpoint, Phase, Progress};
use super::config::{JointSchedule, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{EvalMode, Evaluator, TimeFilter};
use crate::kg::{DatasetBundle, Splits, TemporalKG};
use crate::nd::{ParamGrads, Tape};
use crate::pipeline::{clue_sequence, derive_rng, run_stage1, SearchConfig, Workers};
use crate::policy::{push_surrogate_terms, terminal_reward, Query, RewardPhase, Stage1Params};
use crate::reasoner::{ce_loss, score_entities, ClueGraphSequence, Stage2Params};

/// Graphs and query sets for one training run.
pub struct TrainData {
    /// Training facts only; rollouts see facts strictly before `t_s`.
    pub train_kg: TemporalKG,
    /// All splits, for validation.
    pub eval_kg: TemporalKG,
    pub filter: TimeFilter,
    pub train_queries: Vec<Query>,
    pub valid_queries: Vec<Query>,
}

fn subset(queries: Vec<Query>, cap: Option<usize>, seed: u64, tag: u64) -> Vec<Query> {
    match cap {
        Some(k) if k < queries.len() => {
            let mut rng = derive_rng(seed, &[0x5e1ec7, tag]);
            let mut idx = sample(&mut rng, queries.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| queries[i]).collect()
        }
        _ => queries,
    }
}

impl TrainData {
    /// `bundle` must carry inverse facts; training queries cover both
    /// directions.
    pub fn new(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<Self> {
        if !bundle.is_augmented() {
            return Err(Error::Invalid("training needs an inverse-augmented bundle".into()));
        }
        let train_queries = bundle.train.iter().map(Query::from_fact).collect();
        let valid_queries = bundle.valid.iter().map(Query::from_fact).collect();
        Ok(Self {
            train_kg: bundle.history_graph(Splits::Train)?,
            eval_kg: bundle.history_graph(Splits::All)?,
            filter: TimeFilter::new(bundle.facts(Splits::All)),
            train_queries: subset(train_queries, cfg.max_train_queries, cfg.seed, 1),
            valid_queries: subset(valid_queries, cfg.max_valid_queries, cfg.seed, 2),
        })
    }
}

/// One structured log line per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String,
    pub epoch: usize,
    pub loss: f64,
    pub mean_reward: Option<f64>,
    pub val_mrr: Option<f64>,
    pub max_grad_norm: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    /// Return right after this epoch with the phase still in progress.
    Stop,
}

#[derive(Debug, Default)]
struct EpochStats {
    loss_sum: f64,
    loss_count: usize,
    reward_sum: f64,
    reward_count: usize,
    /// Largest pre-clip gradient norm seen.
    max_grad_norm: f64,
}

fn check_finite(phase: Phase, epoch: usize, batch: usize, loss: f64, grads: &ParamGrads) -> Result<()> {
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::NonFinite(format!(
            "{phase} epoch {epoch} batch {batch}: loss {loss}, gradient norm {}",
            grads.global_norm()
        )));
    }
    Ok(())
}

/// Gradients and running sums for a contiguous run of queries in a batch.
struct ChunkOut {
    g1: ParamGrads,
    g2: Option<ParamGrads>,
    policy_loss: f64,
    reward_sum: f64,
    rollouts: usize,
    reasoner_loss: f64,
    reasoner_queries: usize,
}

impl ChunkOut {
    fn new(p1: &Stage1Params, p2: Option<&Stage2Params>) -> Self {
        Self {
            g1: ParamGrads::for_store(&p1.store),
            g2: p2.map(|p| ParamGrads::for_store(&p.store)),
            policy_loss: 0.0,
            reward_sum: 0.0,
            rollouts: 0,
            reasoner_loss: 0.0,
            reasoner_queries: 0,
        }
    }

    fn absorb(&mut self, other: ChunkOut) {
        self.g1.add(&other.g1);
        if let (Some(a), Some(b)) = (self.g2.as_mut(), other.g2.as_ref()) {
            a.add(b);
        }
        self.policy_loss += other.policy_loss;
        self.reward_sum += other.reward_sum;
        self.rollouts += other.rollouts;
        self.reasoner_loss += other.reasoner_loss;
        self.reasoner_queries += other.reasoner_queries;
    }
}

/// Splits `items` into at most `k` contiguous, nearly equal runs.
fn split_runs(items: &[usize], k: usize) -> Vec<&[usize]> {
    let k = k.clamp(1, items.len().max(1));
    let size = items.len().div_ceil(k).max(1);
    items.chunks(size).collect()
}

struct Ctx<'a> {
    cfg: &'a TrainConfig,
    data: &'a TrainData,
    workers: Workers,
    /// Clue sequences per training query while Stage 1 is frozen and its
    /// search is greedy, so they cannot change between epochs.
    frozen: Option<Vec<ClueGraphSequence>>,
}

impl Ctx<'_> {
    fn shuffled(&self, phase: Phase, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.data.train_queries.len()).collect();
        order.shuffle(&mut derive_rng(
            self.cfg.seed,
            &[phase.stream(), epoch as u64, u64::MAX],
        ));
        order
    }

    fn validate(&self, phase: Phase, ck: &Checkpoint) -> Result<Option<f64>> {
        if self.cfg.patience == 0 || self.data.valid_queries.is_empty() {
            return Ok(None);
        }
        let mode = if phase == Phase::Pretrain {
            EvalMode::Stage1Only
        } else {
            EvalMode::Full
        };
        let ev = Evaluator {
            history: &self.data.eval_kg,
            filter: &self.data.filter,
            stage1: Some(&ck.stage1),
            stage2: ck.stage2.as_ref(),
            search: self.cfg.eval_search(),
            rerank: self.cfg.rerank,
            seed: self.cfg.seed,
            workers: self.cfg.workers,
            top_k: 1,
        };
        let run = ev.evaluate(&self.data.valid_queries, mode)?;
        let both = run
            .reports
            .iter()
            .find(|r| r.setting == "raw" && r.direction == "both")
            .expect("summary always has a raw/both line");
        Ok(Some(both.mrr))
    }

    /// Runs Stage 1 and optionally Stage 2 for one training query, adding
    /// its gradients to `acc`. Policy terms carry weight `−(R − b)`; the
    /// caller divides by the batch's rollout count.
    #[allow(clippy::too_many_arguments)]
    fn query_step(
        &self,
        phase: Phase,
        epoch: usize,
        qi: usize,
        p1: &Stage1Params,
        p2: Option<&Stage2Params>,
        search: &SearchConfig,
        baseline: f64,
        want_policy: bool,
        want_reasoner: bool,
        acc: &mut ChunkOut,
    ) -> Result<()> {
        let q = &self.data.train_queries[qi];
        let answer = q.answer.expect("training queries carry answers");
        if let (Some(seqs), Some(p2), false) = (&self.frozen, p2, want_policy) {
            let mut tape2 = Tape::new(&p2.store);
            let logits = p2.forward(&mut tape2, &seqs[qi])?;
            let loss = ce_loss(&mut tape2, logits, answer)?;
            tape2.backward_into(loss, acc.g2.as_mut().expect("stage 2 accumulator"))?;
            acc.reasoner_loss += tape2.value(loss).item();
            acc.reasoner_queries += 1;
            return Ok(());
        }
        let mut rng = derive_rng(self.cfg.seed, &[phase.stream(), epoch as u64, qi as u64]);
        let mut tape1 = Tape::new(&p1.store);
        let s1 = run_stage1(&mut tape1, &self.data.train_kg, p1, q, search, &mut rng)?;
        let mut scores = None;
        if let Some(p2) = p2 {
            let seq = clue_sequence(&self.data.train_kg, q, &s1.beams, search);
            let mut tape2 = Tape::new(&p2.store);
            let logits = p2.forward(&mut tape2, &seq)?;
            scores = Some(score_entities(tape2.value(logits)));
            if want_reasoner {
                let loss = ce_loss(&mut tape2, logits, answer)?;
                tape2.backward_into(loss, acc.g2.as_mut().expect("stage 2 accumulator"))?;
                acc.reasoner_loss += tape2.value(loss).item();
                acc.reasoner_queries += 1;
            }
        }
        if want_policy {
            let mut terms = Vec::new();
            for b in &s1.beams {
                let dest = b.destination();
                let r = match (phase, &scores) {
                    (Phase::Pretrain, _) => terminal_reward(dest, answer, None, RewardPhase::Pretrain),
                    (_, Some(p)) => terminal_reward(dest, answer, Some(p[dest as usize]), RewardPhase::Joint),
                    (_, None) => terminal_reward(dest, answer, None, RewardPhase::Joint),
                }?;
                push_surrogate_terms(&mut terms, &mut tape1, b, r, baseline, 1)?;
                acc.reward_sum += r;
            }
            acc.rollouts += s1.beams.len();
            if !terms.is_empty() {
                let l = tape1.lin_comb(&terms)?;
                tape1.backward_into(l, &mut acc.g1)?;
                acc.policy_loss += tape1.value(l).item();
            }
        }
        Ok(())
    }

    fn epoch(&self, phase: Phase, ck: &mut Checkpoint, epoch: usize) -> Result<EpochStats> {
        let (want_policy, want_reasoner) = match phase {
            Phase::Pretrain => (true, false),
            Phase::Stage2 => (false, true),
            Phase::Joint => match self.cfg.joint_schedule {
                JointSchedule::PerBatch => (true, true),
                JointSchedule::PerEpoch => (!epoch.is_multiple_of(2), epoch.is_multiple_of(2)),
            },
        };
        let search = if phase == Phase::Stage2 {
            self.cfg.eval_search()
        } else {
            self.cfg.search()
        };
        let mut stats = EpochStats::default();
        let order = self.shuffled(phase, epoch);
        for (bi, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let baseline = ck.baseline.value;
            let out = {
                let p1 = &ck.stage1;
                let p2 = if phase == Phase::Pretrain {
                    None
                } else {
                    ck.stage2.as_ref()
                };
                let runs = split_runs(batch, self.cfg.workers);
                let parts = self.workers.map(&runs, |_, run| {
                    let mut acc = ChunkOut::new(p1, p2);
                    for &qi in run.iter() {
                        self.query_step(
                            phase,
                            epoch,
                            qi,
                            p1,
                            p2,
                            &search,
                            baseline,
                            want_policy,
                            want_reasoner,
                            &mut acc,
                        )?;
                    }
                    Ok(acc)
                })?;
                let mut parts = parts.into_iter();
                let mut total = parts.next().expect("a batch is never empty");
                for part in parts {
                    total.absorb(part);
                }
                total
            };
            if want_reasoner && out.reasoner_queries > 0 {
                let p2 = ck.stage2.as_mut().expect("stage 2 initialised");
                let n = out.reasoner_queries as f64;
                let loss = out.reasoner_loss / n;
                let mut g = out.g2.expect("stage 2 accumulator");
                g.scale(1.0 / n);
                check_finite(phase, epoch, bi, loss, &g)?;
                stats.max_grad_norm = stats.max_grad_norm.max(g.clip_global_norm(self.cfg.clip_norm));
                ck.adam2.as_mut().expect("stage 2 optimiser").step(&mut p2.store, &g);
                stats.loss_sum += out.reasoner_loss;
                stats.loss_count += out.reasoner_queries;
            }
            if want_policy && out.rollouts > 0 {
                let n = out.rollouts as f64;
                let loss = out.policy_loss / n;
                let mut g = out.g1;
                g.scale(1.0 / n);
                check_finite(phase, epoch, bi, loss, &g)?;
                stats.max_grad_norm = stats.max_grad_norm.max(g.clip_global_norm(self.cfg.clip_norm));
                ck.adam1.step(&mut ck.stage1.store, &g);
                ck.baseline = ck.baseline.updated(out.reward_sum / n);
                stats.reward_sum += out.reward_sum;
                stats.reward_count += out.rollouts;
                if phase == Phase::Pretrain {
                    stats.loss_sum += loss * batch.len() as f64;
                    stats.loss_count += batch.len();
                }
            }
        }
        Ok(stats)
    }
}

fn check_schedule(ck: &Checkpoint, phase: Phase, force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    let needed: &[Phase] = match phase {
        Phase::Pretrain => &[],
        Phase::Stage2 => &[Phase::Pretrain],
        Phase::Joint => &[Phase::Pretrain, Phase::Stage2],
    };
    for p in needed {
        if !ck.has_phase(*p) {
            return Err(Error::Schedule(format!(
                "{phase} needs a checkpoint that finished the {p} phase (use the override flag to skip this check)"
            )));
        }
    }
    Ok(())
}

/// Runs (or resumes) one phase. `on_epoch` sees every epoch's log line and
/// the checkpoint as of the end of that epoch; returning [`Control::Stop`]
/// hands back that mid-phase checkpoint.
pub fn run_phase(
    phase: Phase,
    cfg: &TrainConfig,
    data: &TrainData,
    mut ck: Checkpoint,
    force: bool,
    on_epoch: &mut dyn FnMut(&EpochLog, &Checkpoint) -> Result<Control>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let mut prog = match ck.progress.take() {
        Some(p) if p.phase == phase => {
            if ck.config.hash() != cfg.hash() {
                return Err(Error::Config(
                    "config differs from the one the interrupted phase was started with".into(),
                ));
            }
            p
        }
        Some(p) => {
            return Err(Error::Schedule(format!(
                "checkpoint has the {} phase in progress, not {phase}",
                p.phase
            )))
        }
        None => {
            check_schedule(&ck, phase, force)?;
            if ck.has_phase(phase) && !force {
                return Err(Error::Schedule(format!(
                    "checkpoint already finished the {phase} phase"
                )));
            }
            // a new phase adopts the current config and learning rates
            ck.config = cfg.clone();
            ck.adam1.cfg = adam_config(cfg, cfg.lr_stage1);
            if phase != Phase::Pretrain {
                ck.ensure_stage2()?;
                if let Some(a) = ck.adam2.as_mut() {
                    a.cfg = adam_config(cfg, cfg.lr_stage2);
                }
            }
            Progress::start(phase)
        }
    };
    let mut ctx = Ctx {
        cfg,
        data,
        workers: Workers::new(cfg.workers)?,
        frozen: None,
    };
    let search = cfg.eval_search();
    if phase == Phase::Stage2 && search.beam.mu == 1.0 && prog.epochs_done < cfg.epochs_stage2 {
        let p1 = &ck.stage1;
        ctx.frozen = Some(ctx.workers.map(&data.train_queries, |_, q| {
            let mut tape = Tape::new(&p1.store);
            // the generator is never consulted when every pick is greedy
            let mut rng = derive_rng(cfg.seed, &[Phase::Stage2.stream()]);
            let s1 = run_stage1(&mut tape, &data.train_kg, p1, q, &search, &mut rng)?;
            Ok(clue_sequence(&data.train_kg, q, &s1.beams, &search))
        })?);
    }
    let epochs = match phase {
        Phase::Pretrain => cfg.epochs_pretrain,
        Phase::Stage2 => cfg.epochs_stage2,
        Phase::Joint => cfg.epochs_joint,
    };
    while prog.epochs_done < epochs && !prog.stopped {
        let start = Instant::now();
        let epoch = prog.epochs_done;
        let stats = ctx.epoch(phase, &mut ck, epoch)?;
        let val = ctx.validate(phase, &ck)?;
        prog.epochs_done += 1;
        if let Some(v) = val {
            if v > prog.best_score {
                prog.best_score = v;
                prog.bad_epochs = 0;
                prog.best_stage1 = (phase != Phase::Stage2).then(|| ck.stage1.store.clone());
                prog.best_stage2 = ck
                    .stage2
                    .as_ref()
                    .filter(|_| phase != Phase::Pretrain)
                    .map(|p| p.store.clone());
            } else {
                prog.bad_epochs += 1;
                prog.stopped = prog.bad_epochs >= cfg.patience;
            }
        }
        let log = EpochLog {
            phase: phase.tag().into(),
            epoch,
            loss: if stats.loss_count > 0 {
                stats.loss_sum / stats.loss_count as f64
            } else {
                0.0
            },
            mean_reward: (stats.reward_count > 0).then(|| stats.reward_sum / stats.reward_count as f64),
            val_mrr: val,
            max_grad_norm: stats.max_grad_norm,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "{} epoch {}: loss {:.5} reward {:?} val_mrr {:?}",
            log.phase,
            log.epoch,
            log.loss,
            log.mean_reward,
            log.val_mrr
        );
        ck.progress = Some(prog.clone());
        if on_epoch(&log, &ck)? == Control::Stop {
            return Ok(ck);
        }
        ck.progress = None;
    }
    if let Some(b) = prog.best_stage1 {
        ck.stage1.store.assign_from(&b)?;
    }
    if let (Some(b), Some(p2)) = (prog.best_stage2, ck.stage2.as_mut()) {
        p2.store.assign_from(&b)?;
    }
    ck.progress = None;
    if !ck.has_phase(phase) {
        ck.phases_done.push(phase);
    }
    Ok(ck)
}

pub fn pretrain_stage1(
    cfg: &TrainConfig,
    data: &TrainData,
    ck: Checkpoint,
    on_epoch: &mut dyn FnMut(&EpochLog, &Checkpoint) -> Result<Control>,
) -> Result<Checkpoint> {
    run_phase(Phase::Pretrain, cfg, data, ck, false, on_epoch)
}

pub fn train_stage2_frozen(
    cfg: &TrainConfig,
    data: &TrainData,
    ck: Checkpoint,
    force: bool,
    on_epoch: &mut dyn FnMut(&EpochLog, &Checkpoint) -> Result<Control>,
) -> Result<Checkpoint> {
    run_phase(Phase::Stage2, cfg, data, ck, force, on_epoch)
}

pub fn train_joint(
    cfg: &TrainConfig,
    data: &TrainData,
    ck: Checkpoint,
    force: bool,
    on_epoch: &mut dyn FnMut(&EpochLog, &Checkpoint) -> Result<Control>,
) -> Result<Checkpoint> {
    run_phase(Phase::Joint, cfg, data, ck, force, on_epoch)
}

/// Callback that keeps going and ignores the logs.
pub fn no_hook() -> impl FnMut(&EpochLog, &Checkpoint) -> Result<Control> {
    |_, _| Ok(Control::Continue)
}
