//! Small end-to-end runs shared by the determinism tests and the
//! acceptance harness.

use cluegraph::eval::{EvalMode, Evaluator, MetricsReport};
use cluegraph::kg::{generate_synthetic, DatasetBundle, Rule, SynthConfig};
use cluegraph::nd::TensorArchive;
use cluegraph::train::{
    no_hook, pretrain_stage1, train_joint, train_stage2_frozen, Checkpoint, TrainConfig, TrainData,
};
use cluegraph::ParamStore;

pub fn tiny_synth(seed: u64) -> SynthConfig {
    let rule = |cause, effect, lag| Rule {
        cause,
        effect,
        lag,
        fire_prob: 0.9,
    };
    SynthConfig {
        num_entities: 40,
        num_relations: 4,
        num_timesteps: 30,
        rules: vec![rule(0, 1, 1), rule(0, 2, 3)],
        base_facts_per_step: 6,
        noise_facts_per_step: 2,
        seed,
    }
}

pub fn tiny_config(workers: usize) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.apply_text(
        "embed_dim = 4\npolicy_hidden = 4\npolicy_mlp = 4\nreasoner_hidden = 4\n\
         beam_width = 4\nwindow = fixed:4\nbatch_size = 32\nlr_stage1 = 0.01\nlr_stage2 = 0.01\n\
         epochs_pretrain = 2\nepochs_stage2 = 2\nepochs_joint = 2\npatience = 2\n\
         max_train_queries = 150\nmax_valid_queries = 40\nseed = 5",
    )
    .unwrap();
    c.workers = workers;
    c
}

pub fn tiny_bundle() -> DatasetBundle {
    generate_synthetic(&tiny_synth(3))
        .unwrap()
        .bundle
        .augment_inverse()
        .unwrap()
}

pub fn store_bytes(store: &ParamStore) -> Vec<u8> {
    let mut a = TensorArchive::new();
    a.push_store("", store);
    a.encode()
}

/// Checkpoint bytes after each phase, Stage-1 bytes before and after the
/// frozen phase, and the final metrics as JSON.
pub struct RunRecord {
    pub phase_bytes: Vec<Vec<u8>>,
    pub stage1_before_frozen: Vec<u8>,
    pub stage1_after_frozen: Vec<u8>,
    pub metrics_json: String,
    pub last: Checkpoint,
}

pub fn full_run(bundle: &DatasetBundle, cfg: &TrainConfig) -> RunRecord {
    let td = TrainData::new(bundle, cfg).unwrap();
    let ck = Checkpoint::init(cfg, bundle.num_entities, bundle.vocab()).unwrap();
    let ck = pretrain_stage1(cfg, &td, ck, &mut no_hook()).unwrap();
    let mut phase_bytes = vec![ck.encode()];
    let before = store_bytes(&ck.stage1.store);
    let ck = train_stage2_frozen(cfg, &td, ck, false, &mut no_hook()).unwrap();
    let after = store_bytes(&ck.stage1.store);
    phase_bytes.push(ck.encode());
    let ck = train_joint(cfg, &td, ck, false, &mut no_hook()).unwrap();
    phase_bytes.push(ck.encode());
    let ev = Evaluator {
        history: &td.eval_kg,
        filter: &td.filter,
        stage1: Some(&ck.stage1),
        stage2: ck.stage2.as_ref(),
        search: cfg.eval_search(),
        rerank: cfg.rerank,
        seed: cfg.seed,
        workers: cfg.workers,
        top_k: 5,
    };
    let mut reports: Vec<MetricsReport> = Vec::new();
    for mode in EvalMode::ALL {
        reports.extend(ev.evaluate(&td.valid_queries, mode).unwrap().reports);
    }
    RunRecord {
        phase_bytes,
        stage1_before_frozen: before,
        stage1_after_frozen: after,
        metrics_json: serde_json::to_string(&reports).unwrap(),
        last: ck,
    }
}

/// Two identical runs agree byte for byte; a checkpoint survives a disk
/// round trip unchanged; the frozen phase leaves Stage 1 alone.
pub fn determinism(workers: usize) -> String {
    let bundle = tiny_bundle();
    let cfg = tiny_config(workers);
    let a = full_run(&bundle, &cfg);
    let b = full_run(&bundle, &cfg);
    for (i, (x, y)) in a.phase_bytes.iter().zip(&b.phase_bytes).enumerate() {
        assert!(x == y, "phase {i} checkpoints differ between identical runs");
    }
    assert_eq!(a.metrics_json, b.metrics_json, "metrics differ between identical runs");
    assert!(
        a.stage1_before_frozen == a.stage1_after_frozen,
        "frozen phase changed Stage 1"
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    a.last.save(&path).unwrap();
    let on_disk = std::fs::read(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert!(back.encode() == on_disk, "load/save round trip is not byte-exact");
    assert!(Checkpoint::decode(&on_disk).unwrap().encode() == on_disk);
    let bytes: usize = a.phase_bytes.iter().map(Vec::len).sum();
    format!("3 phases x 2 runs identical ({bytes} checkpoint bytes), round trip exact, frozen Stage 1 unchanged")
}
