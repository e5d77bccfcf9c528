use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = "embed_dim = 4\npolicy_hidden = 4\npolicy_mlp = 4\nreasoner_hidden = 4\n\
beam_width = 4\nwindow = fixed:4\nbatch_size = 32\nepochs_pretrain = 3\nepochs_stage2 = 2\n\
epochs_joint = 1\npatience = 0\nmax_train_queries = 80\n";

fn cluegraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cluegraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cluegraph(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cluegraph(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) {
    ok(&[
        "synth",
        "--seed",
        seed,
        "--entities",
        "30",
        "--relations",
        "4",
        "--timesteps",
        "24",
        "--base-facts",
        "5",
        "--noise-facts",
        "2",
        "--out-dir",
        s(dir),
    ]);
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn quads(path: &Path) -> Vec<[u32; 4]> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Vec<u32> = l.split('\t').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3]]
        })
        .collect()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["synth", "--no-such-flag"]), 2);
    assert_eq!(code(&["eval"]), 2);
    assert_eq!(code(&["pretrain", "--set", "no_such_key=1"]), 2);
    assert_eq!(code(&["pretrain", "--set", "beam_width"]), 2);
    assert_eq!(code(&["pretrain", "--precision", "32"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn missing_inputs_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(code(&["stats", "--data-dir", s(&missing)]), 1);
    assert_eq!(code(&["stats"]), 1);
    let data = tmp.path().join("data");
    synth(&data, "1");
    let out = tmp.path().join("out");
    assert_eq!(code(&["train-stage2", "--data-dir", s(&data), "--out-dir", s(&out)]), 1);
    let err = cluegraph(&["eval", "--checkpoint", s(&missing), "--data-dir", s(&data)]);
    assert_eq!(err.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&err.stderr).contains("does not exist"));

    fs::write(tmp.path().join("broken.ckpt"), b"not a checkpoint").unwrap();
    let broken = tmp.path().join("broken.ckpt");
    assert_eq!(code(&["eval", "--checkpoint", s(&broken), "--data-dir", s(&data)]), 1);
}

#[test]
fn synth_with_the_same_seed_writes_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "7");
    synth(&b, "7");
    let names: BTreeSet<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() >= 6);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?}");
    }
    let c = tmp.path().join("c");
    synth(&c, "8");
    assert_ne!(
        fs::read(a.join("train.txt")).unwrap(),
        fs::read(c.join("train.txt")).unwrap()
    );
}

#[test]
fn untrained_stage2_ranks_by_the_id_tie_break() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2");
    let run = tmp.path().join("run");
    let cfg = tmp.path().join("tiny.cfg");
    fs::write(&cfg, format!("{TINY}epochs_pretrain = 0\nepochs_stage2 = 0\n")).unwrap();
    let common = ["--config", s(&cfg), "--data-dir", s(&data), "--out-dir", s(&run)];
    ok(&[&["pretrain"], &common[..]].concat());
    let pre = run.join("pretrained.ckpt");
    ok(&[&["train-stage2", "--checkpoint", s(&pre)], &common[..]].concat());
    let ck = run.join("stage2.ckpt");
    ok(&[
        "eval",
        "--checkpoint",
        s(&ck),
        "--mode",
        "stage2-only",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&run),
    ]);

    // with a zero decoder every entity scores the same, so the ordering is
    // the query's earlier objects by id, then everyone else by id
    let stat = fs::read_to_string(data.join("stat.txt")).unwrap();
    let mut cols = stat.split_whitespace();
    let n: u32 = cols.next().unwrap().parse().unwrap();
    let nr: u32 = cols.next().unwrap().parse().unwrap();
    let mut all = Vec::new();
    for split in ["train", "valid", "test"] {
        for [a, r, o, t] in quads(&data.join(format!("{split}.txt"))) {
            all.push([a, r, o, t]);
            all.push([o, r + nr, a, t]);
        }
    }
    let mut rr = Vec::new();
    for [a, r, o, t] in quads(&data.join("test.txt")) {
        for (sub, rel, ans) in [(a, r, o), (o, r + nr, a)] {
            let seen: BTreeSet<u32> = all
                .iter()
                .filter(|f| f[0] == sub && f[1] == rel && f[3] < t)
                .map(|f| f[2])
                .collect();
            let mut order: Vec<u32> = seen.iter().copied().collect();
            order.extend((0..n).filter(|e| !seen.contains(e)));
            let rank = order.iter().position(|&e| e == ans).unwrap() + 1;
            rr.push(1.0 / rank as f64);
        }
    }
    let want = rr.iter().sum::<f64>() / rr.len() as f64;
    let got = jsonl(&run.join("metrics.jsonl"))
        .into_iter()
        .find(|m| m["setting"] == "raw" && m["direction"] == "both")
        .unwrap();
    assert_eq!(got["n_queries"].as_u64().unwrap() as usize, rr.len());
    let mrr = got["mrr"].as_f64().unwrap();
    assert!((mrr - want).abs() < 1e-12, "{mrr} vs {want}");
}

#[test]
fn pipeline_runs_and_resumes_to_the_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3");
    let cfg = tmp.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let (whole, parts) = (tmp.path().join("whole"), tmp.path().join("parts"));
    let with = |out: &Path, extra: &[&str]| -> String {
        let base = ["--config", s(&cfg), "--data-dir", s(&data), "--out-dir", s(out)];
        ok(&[extra, &base[..]].concat())
    };

    with(&whole, &["pretrain"]);
    let said = with(&parts, &["pretrain", "--stop-after", "1"]);
    assert!(said.contains("stopped after 1 epochs"));
    assert!(!parts.join("pretrained.ckpt").exists());
    let mid = parts.join("checkpoints/pretrained-epoch001.ckpt");
    with(&parts, &["pretrain", "--checkpoint", s(&mid)]);
    assert_eq!(
        fs::read(whole.join("pretrained.ckpt")).unwrap(),
        fs::read(parts.join("pretrained.ckpt")).unwrap()
    );
    let log = jsonl(&parts.join("train_log.jsonl"));
    let epochs: Vec<u64> = log.iter().map(|l| l["epoch"].as_u64().unwrap()).collect();
    assert_eq!(epochs, [0, 1, 2]);

    // a finished phase is not rerun unless forced
    let pre = whole.join("pretrained.ckpt");
    assert_eq!(
        code(&[
            "pretrain",
            "--checkpoint",
            s(&pre),
            "--config",
            s(&cfg),
            "--data-dir",
            s(&data),
            "--out-dir",
            s(&parts)
        ]),
        1
    );

    with(&whole, &["train-stage2", "--checkpoint", s(&pre)]);
    let st2 = whole.join("stage2.ckpt");
    with(&whole, &["train-joint", "--checkpoint", s(&st2)]);
    let joint = whole.join("joint.ckpt");
    let ev = tmp.path().join("ev");
    let ev2 = tmp.path().join("ev2");
    for out in [&ev, &ev2] {
        ok(&[
            "eval",
            "--checkpoint",
            s(&joint),
            "--data-dir",
            s(&data),
            "--out-dir",
            s(out),
            "--traces",
        ]);
    }
    for name in [
        "metrics.jsonl",
        "rankings-full.jsonl",
        "rankings-stage1_only.jsonl",
        "rankings-stage2_only.jsonl",
        "rollouts.jsonl",
        "sequences.jsonl",
    ] {
        assert_eq!(
            fs::read(ev.join(name)).unwrap(),
            fs::read(ev2.join(name)).unwrap(),
            "{name}"
        );
    }
    let metrics = jsonl(&ev.join("metrics.jsonl"));
    assert_eq!(metrics.len(), 3 * 2 * 3);
    for m in &metrics {
        let mrr = m["mrr"].as_f64().unwrap();
        assert!(mrr > 0.0 && mrr <= 1.0);
        assert!(m["hits1"].as_f64().unwrap() <= m["hits10"].as_f64().unwrap());
    }

    let st = tmp.path().join("st");
    let said = ok(&["stats", "--data-dir", s(&data), "--out-dir", s(&st), "--traces", s(&ev)]);
    assert!(said.contains("frac_upto_2hop"));
    let cov = &jsonl(&st.join("coverage.jsonl"))[0];
    let f = |k: &str| cov[k].as_f64().unwrap();
    assert!(f("frac_repetitive_1hop") <= f("frac_any_1hop") && f("frac_any_1hop") <= f("frac_upto_2hop"));
    assert!(fs::read_to_string(st.join("clue_graph.tsv"))
        .unwrap()
        .starts_with("clue_relation\tquery_relation\tcount\n"));
    let cats = &jsonl(&st.join("clue_categories.jsonl"))[0];
    let sum = cats["repetitive_fraction"].as_f64().unwrap() + cats["non_repetitive_fraction"].as_f64().unwrap();
    assert!(cats["total"].as_u64().unwrap() == 0 || (sum - 1.0).abs() < 1e-12);
}

#[test]
fn explain_without_history_keeps_only_the_self_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "4");
    let cfg = tmp.path().join("tiny.cfg");
    fs::write(&cfg, format!("{TINY}epochs_pretrain = 1\nepochs_stage2 = 1\n")).unwrap();
    let run = tmp.path().join("run");
    let common = ["--config", s(&cfg), "--data-dir", s(&data), "--out-dir", s(&run)];
    ok(&[&["pretrain"], &common[..]].concat());
    let pre = run.join("pretrained.ckpt");
    ok(&[&["train-stage2", "--checkpoint", s(&pre)], &common[..]].concat());
    let ck = run.join("stage2.ckpt");
    ok(&[
        "explain",
        "--checkpoint",
        s(&ck),
        "--subject",
        "3",
        "--relation",
        "0",
        "--time",
        "0",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&run),
    ]);
    let e = &jsonl(&run.join("explain.jsonl"))[0];
    let cands = e["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 1);
    assert_eq!(cands[0]["entity"], 3);
    for step in cands[0]["best_path"]["steps"].as_array().unwrap() {
        assert_eq!(step["self_loop"], true);
    }
    assert!(e["sequence"].as_array().unwrap().is_empty());
    assert_eq!(e["answer"], 3);
}
