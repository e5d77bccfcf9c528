use anyhow::{bail, Result};
use cluegraph::eval::{explain as explain_query, EvalMode, Evaluator, MetricsReport, TimeFilter};
use cluegraph::kg::Splits;
use cluegraph::pipeline::{derive_rng, Workers};
use cluegraph::policy::Query;
use cluegraph::train::{Checkpoint, TrainConfig};
use cluegraph::TemporalKG;
use rand::seq::index::sample;

use crate::args::{EvalArgs, ExplainArgs, Global, ModeArg, SplitArg};
use crate::output::{load_bundle, out_path, resolve_config, write_records};
use crate::train::{check_compatible, load_checkpoint};

struct Loaded {
    cfg: TrainConfig,
    ck: Checkpoint,
    history: TemporalKG,
    filter: TimeFilter,
    bundle: cluegraph::DatasetBundle,
}

fn load(g: &Global, checkpoint: &std::path::Path) -> Result<Loaded> {
    let ck = load_checkpoint(checkpoint)?;
    let bundle = load_bundle(g)?.augment_inverse()?;
    check_compatible(&ck, &bundle)?;
    let cfg = resolve_config(g, ck.config.clone())?;
    Ok(Loaded {
        history: bundle.history_graph(Splits::All)?,
        filter: TimeFilter::new(bundle.facts(Splits::All)),
        cfg,
        ck,
        bundle,
    })
}

impl Loaded {
    fn evaluator(&self, top_k: usize) -> Evaluator<'_> {
        Evaluator {
            history: &self.history,
            filter: &self.filter,
            stage1: Some(&self.ck.stage1),
            stage2: self.ck.stage2.as_ref(),
            search: self.cfg.eval_search(),
            rerank: self.cfg.rerank,
            seed: self.cfg.seed,
            workers: self.cfg.workers,
            top_k,
        }
    }
}

fn modes(arg: ModeArg, has_stage2: bool) -> Result<Vec<EvalMode>> {
    let wanted = match arg {
        ModeArg::Full => vec![EvalMode::Full],
        ModeArg::Stage1Only => vec![EvalMode::Stage1Only],
        ModeArg::Stage2Only => vec![EvalMode::Stage2Only],
        ModeArg::All if has_stage2 => EvalMode::ALL.to_vec(),
        ModeArg::All => {
            log::warn!("checkpoint has no Stage-2 parameters; evaluating stage1_only only");
            vec![EvalMode::Stage1Only]
        }
    };
    if !has_stage2 && wanted.iter().any(|&m| m != EvalMode::Stage1Only) {
        bail!("the checkpoint has no Stage-2 parameters; run train-stage2 first or use --mode stage1-only");
    }
    Ok(wanted)
}

pub fn eval(g: &Global, a: &EvalArgs) -> Result<()> {
    let l = load(g, &a.checkpoint)?;
    let split = match a.split {
        SplitArg::Valid => &l.bundle.valid,
        SplitArg::Test => &l.bundle.test,
    };
    let mut queries: Vec<Query> = split.iter().map(Query::from_fact).collect();
    if let Some(k) = a.max_queries.filter(|&k| k < queries.len()) {
        let mut rng = derive_rng(l.cfg.seed, &[0xe5a1]);
        let mut idx = sample(&mut rng, queries.len(), k).into_vec();
        idx.sort_unstable();
        queries = idx.into_iter().map(|i| queries[i]).collect();
    }
    let ev = l.evaluator(a.top_k);
    let mut reports: Vec<MetricsReport> = Vec::new();
    for mode in modes(a.mode, l.ck.stage2.is_some())? {
        let run = ev.evaluate(&queries, mode)?;
        write_records(&out_path(g, &format!("rankings-{mode}.jsonl")), &run.records)?;
        reports.extend(run.reports);
    }
    write_records(&out_path(g, "metrics.jsonl"), &reports)?;
    println!(
        "{:<14}{:<13}{:<9}{:>8}{:>8}{:>8}{:>8}",
        "setting", "mode", "dir", "n", "MRR", "H@1", "H@10"
    );
    for r in &reports {
        println!(
            "{:<14}{:<13}{:<9}{:>8}{:>8.4}{:>8.4}{:>8.4}",
            r.setting, r.mode, r.direction, r.n_queries, r.mrr, r.hits1, r.hits10
        );
    }

    if a.traces {
        let mode = if l.ck.stage2.is_some() {
            EvalMode::Full
        } else {
            EvalMode::Stage1Only
        };
        let preds = Workers::new(l.cfg.workers)?.map(&queries, |i, q| ev.predict(q, i, mode))?;
        let rollouts: Vec<_> = preds.iter().filter_map(|p| p.rollout.clone()).collect();
        write_records(&out_path(g, "rollouts.jsonl"), &rollouts)?;
        if mode == EvalMode::Full {
            let seqs: Vec<_> = preds.into_iter().map(|p| p.sequence).collect();
            write_records(&out_path(g, "sequences.jsonl"), &seqs)?;
        }
    }
    Ok(())
}

pub fn explain(g: &Global, a: &ExplainArgs) -> Result<()> {
    let l = load(g, &a.checkpoint)?;
    if l.ck.stage2.is_none() {
        bail!("explanations need a checkpoint with Stage-2 parameters");
    }
    let mut q = Query::new(a.subject, a.relation, a.time);
    q.answer = a.answer;
    let ev = l.evaluator(a.top_k);
    let e = explain_query(&ev, &q, a.top_k)?;
    write_records(&out_path(g, "explain.jsonl"), &[&e])?;
    println!("{}", serde_json::to_string_pretty(&e)?);
    Ok(())
}
