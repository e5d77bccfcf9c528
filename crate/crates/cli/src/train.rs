use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cluegraph::train::{run_phase, Checkpoint, Control, EpochLog, Phase, TrainConfig, TrainData};
use cluegraph::DatasetBundle;

use crate::args::{Global, TrainArgs};
use crate::output::{load_bundle, out_path, resolve_config, write_records, write_text};

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        bail!("checkpoint {} does not exist", path.display());
    }
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn check_compatible(ck: &Checkpoint, bundle: &DatasetBundle) -> Result<()> {
    if ck.num_entities != bundle.num_entities || ck.vocab.base_count() != bundle.num_base_relations {
        bail!(
            "checkpoint was built for {} entities and {} relations, dataset has {} and {}",
            ck.num_entities,
            ck.vocab.base_count(),
            bundle.num_entities,
            bundle.num_base_relations
        );
    }
    Ok(())
}

/// Log lines kept from earlier runs: other phases, and epochs of this phase
/// that a resumed run does not repeat.
fn earlier_log(path: &Path, phase: Phase, resume_from: usize) -> Result<Vec<EpochLog>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let mut keep = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let log: EpochLog = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        if log.phase != phase.tag() || log.epoch < resume_from {
            keep.push(log);
        }
    }
    Ok(keep)
}

fn train_phase(g: &Global, a: &TrainArgs, phase: Phase) -> Result<()> {
    let loaded = match &a.checkpoint {
        Some(p) => Some(load_checkpoint(p)?),
        None if phase == Phase::Pretrain => None,
        None => bail!("{phase} training needs --checkpoint from the previous phase"),
    };
    // later phases inherit the checkpoint's config; flags still override it
    let base = loaded.as_ref().map_or_else(TrainConfig::default, |c| c.config.clone());
    let cfg = resolve_config(g, base)?;
    let bundle = load_bundle(g)?.augment_inverse()?;
    let ck = match loaded {
        Some(ck) => {
            check_compatible(&ck, &bundle)?;
            ck
        }
        None => Checkpoint::init(&cfg, bundle.num_entities, bundle.vocab())?,
    };
    let data = TrainData::new(&bundle, &cfg)?;

    let resume_from = match &ck.progress {
        Some(p) if p.phase == phase => p.epochs_done,
        _ => 0,
    };
    let log_path = out_path(g, "train_log.jsonl");
    let mut log = earlier_log(&log_path, phase, resume_from)?;
    write_text(&out_path(g, "config.txt"), &cfg.to_text())?;

    let mut ran = 0;
    let mut last_epoch_file = None;
    let mut hook = |line: &EpochLog, ck: &Checkpoint| -> cluegraph::Result<Control> {
        log.push(line.clone());
        cluegraph::io::write_jsonl(&log_path, &log)?;
        let file = out_path(
            g,
            &format!("checkpoints/{}-epoch{:03}.ckpt", phase.tag(), line.epoch + 1),
        );
        ck.save(&file)?;
        last_epoch_file = Some(file);
        ran += 1;
        Ok(match a.stop_after {
            Some(k) if ran >= k => Control::Stop,
            _ => Control::Continue,
        })
    };
    let ck = run_phase(phase, &cfg, &data, ck, a.force, &mut hook)?;
    if ck.progress.is_some() {
        let at = last_epoch_file.expect("a stopped phase ran at least one epoch");
        println!(
            "{phase} stopped after {ran} epochs; resume with --checkpoint {}",
            at.display()
        );
        return Ok(());
    }
    let final_path = out_path(g, &format!("{}.ckpt", phase.tag()));
    ck.save(&final_path)
        .with_context(|| format!("writing {}", final_path.display()))?;
    if log.is_empty() {
        write_records::<EpochLog>(&log_path, &[])?;
    }
    println!("{phase} done; wrote {}", final_path.display());
    Ok(())
}

pub fn pretrain(g: &Global, a: &TrainArgs) -> Result<()> {
    train_phase(g, a, Phase::Pretrain)
}

pub fn stage2(g: &Global, a: &TrainArgs) -> Result<()> {
    train_phase(g, a, Phase::Stage2)
}

pub fn joint(g: &Global, a: &TrainArgs) -> Result<()> {
    train_phase(g, a, Phase::Joint)
}
