use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cluegraph::eval::{clue_category_stats, clue_graph_export, clue_graph_tsv};
use cluegraph::kg::{coverage_stats, generate_synthetic, CoverageOptions, PlantedFact, SynthConfig};
use cluegraph::policy::RolloutTrace;
use cluegraph::reasoner::ClueGraphSequence;
use cluegraph::{DatasetBundle, Quadruple};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::args::{Global, StatsArgs, SynthArgs};
use crate::output::{key_values, load_bundle, out_path, write_records, write_text};

fn time_span(split: &[Quadruple]) -> [u32; 2] {
    let lo = split.iter().map(|q| q.time).min().unwrap_or(0);
    let hi = split.iter().map(|q| q.time).max().unwrap_or(0);
    [lo, hi]
}

fn summary(b: &DatasetBundle) -> serde_json::Value {
    let mut splits = serde_json::Map::new();
    for (name, split) in b.named_splits() {
        splits.insert(
            name.into(),
            json!({ "facts": split.len(), "timesteps": time_span(split) }),
        );
    }
    json!({
        "num_entities": b.num_entities,
        "num_relations": b.num_base_relations,
        "time_gap": b.time_gap,
        "splits": splits,
    })
}

pub fn ingest(g: &Global) -> Result<()> {
    let bundle = load_bundle(g)?;
    let s = summary(&bundle);
    bundle
        .write_dir(&g.out_dir)
        .with_context(|| format!("writing dataset to {}", g.out_dir.display()))?;
    write_records(&out_path(g, "summary.jsonl"), &[&s])?;
    println!("{}", serde_json::to_string(&s)?);
    Ok(())
}

#[derive(Serialize)]
struct PlantedRecord {
    #[serde(flatten)]
    fact: PlantedFact,
    lag_ambiguous: bool,
}

pub fn synth(g: &Global, a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::planted(g.seed.unwrap_or(0));
    if let Some(n) = a.entities {
        cfg.num_entities = n;
    }
    if let Some(r) = a.relations {
        cfg.num_relations = r;
        let before = cfg.rules.len();
        cfg.rules.retain(|rule| rule.cause < r && rule.effect < r);
        if cfg.rules.len() < before {
            log::warn!(
                "dropped {} planted rules that need more than {r} relations",
                before - cfg.rules.len()
            );
        }
    }
    if let Some(t) = a.timesteps {
        cfg.num_timesteps = t;
    }
    if let Some(k) = a.base_facts {
        cfg.base_facts_per_step = k;
    }
    if let Some(k) = a.noise_facts {
        cfg.noise_facts_per_step = k;
    }
    let data = generate_synthetic(&cfg)?;
    data.bundle.write_dir(&g.out_dir)?;
    let ambiguous = data.lag_ambiguous(&cfg);
    let planted: Vec<PlantedRecord> = data
        .planted
        .iter()
        .zip(ambiguous)
        .map(|(&fact, lag_ambiguous)| PlantedRecord { fact, lag_ambiguous })
        .collect();
    write_records(&out_path(g, "planted.jsonl"), &planted)?;
    write_records(&out_path(g, "synth_config.jsonl"), &[&cfg])?;
    let s = summary(&data.bundle);
    write_records(&out_path(g, "summary.jsonl"), &[&s])?;
    println!("{}", serde_json::to_string(&s)?);
    Ok(())
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

pub fn stats(g: &Global, a: &StatsArgs) -> Result<()> {
    let bundle = load_bundle(g)?.augment_inverse()?;
    let opts = CoverageOptions {
        both_directions: a.both_directions,
        two_hop_delta: a.two_hop_delta,
    };
    let c = coverage_stats(&bundle, opts)?;
    let report = json!({
        "num_queries": c.num_queries,
        "frac_repetitive_1hop": c.frac_repetitive_1hop,
        "frac_any_1hop": c.frac_any_1hop,
        "frac_upto_2hop": c.frac_upto_2hop,
        "both_directions": a.both_directions,
        "two_hop_delta": a.two_hop_delta,
    });
    write_records(&out_path(g, "coverage.jsonl"), &[&report])?;
    write_text(&out_path(g, "coverage.txt"), &key_values(&report))?;
    print!("{}", key_values(&report));

    let Some(dir) = &a.traces else {
        return Ok(());
    };
    let rollouts = dir.join("rollouts.jsonl");
    let sequences = dir.join("sequences.jsonl");
    if !rollouts.exists() && !sequences.exists() {
        bail!("no rollouts.jsonl or sequences.jsonl in {}", dir.display());
    }
    if sequences.exists() {
        let seqs: Vec<ClueGraphSequence> = read_records(&sequences)?;
        let cats = clue_category_stats(&seqs);
        write_records(&out_path(g, "clue_categories.jsonl"), &[&cats])?;
        print!("{}", key_values(&serde_json::to_value(cats)?));
    }
    if rollouts.exists() {
        let traces: Vec<RolloutTrace> = read_records(&rollouts)?;
        let edges = clue_graph_export(&traces)?;
        write_text(&out_path(g, "clue_graph.tsv"), &clue_graph_tsv(&edges))?;
        println!("clue_graph_edges = {}", edges.len());
    }
    Ok(())
}
