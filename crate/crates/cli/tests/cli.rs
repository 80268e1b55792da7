use std::path::Path;
use std::process::{Command, Output};

use randprompt_ad_core::{DatasetManifest, EvalReport, PromptSet};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_randprompt-ad"));
    c.env_remove("RANDPROMPT_AD_DATA");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(dir: &Path) -> String {
    ok(&[
        "synth-fixture",
        "--out-dir",
        p(dir),
        "--dim",
        "16",
        "--margin",
        "3",
        "--n-pairs",
        "300",
        "--per-class",
        "15",
    ]);
    dir.join("experiment.json").to_string_lossy().into_owned()
}

#[test]
fn train_score_eval_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = fixture(&d.join("fx"));
    let mut reports = Vec::new();
    for i in 0..2 {
        let ckpt = d.join(format!("m{i}.ckpt"));
        let scores = d.join(format!("s{i}.csv"));
        let report = d.join(format!("r{i}.json"));
        let log = ok(&[
            "--config", &cfg, "train", "--hidden-dims", "16,8,8", "--seed", "3", "--out", p(&ckpt),
        ]);
        assert!(log.contains("epoch 2 loss"));
        ok(&["--config", &cfg, "score", "--checkpoint", p(&ckpt), "--out", p(&scores)]);
        ok(&["eval", "--scores", p(&scores), "--out", p(&report)]);
        reports.push([
            std::fs::read(&ckpt).unwrap(),
            std::fs::read(&scores).unwrap(),
            std::fs::read(&report).unwrap(),
        ]);
    }
    assert_eq!(reports[0], reports[1]);

    let csv = String::from_utf8(reports[0][1].clone()).unwrap();
    assert!(csv.starts_with("sample_id,category,label,score_kind,value\n"));
    for kind in [",s_pr,", ",s_fnn,", ",sum,"] {
        assert_eq!(csv.matches(kind).count(), 90, "{kind}");
    }
    let r = EvalReport::load_json(&d.join("r0.json")).unwrap();
    assert_eq!(r.method, "sum");
    assert_eq!(r.categories.len(), 3);
    assert!(r.mean.auroc.mean > 0.9);

    let only_pr = ok(&["eval", "--scores", p(&d.join("s0.csv")), "--kind", "s_pr", "--method", "CLIP"]);
    assert!(only_pr.starts_with("CLIP (runs: 1)"));
}

#[test]
fn experiment_mode_writes_reports_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = fixture(&d.join("fx"));
    let table = ok(&[
        "--config",
        &cfg,
        "eval",
        "--seeds",
        "0-1",
        "--hidden-dims",
        "16,8,8",
        "--setup",
        "few-shot-2",
        "--components",
        "s_pr,s_fnn,s_img",
        "--out",
        p(&d.join("r.json")),
        "--table-out",
        p(&d.join("r.txt")),
        "--scores-out",
        p(&d.join("scores.csv")),
    ]);
    assert!(table.contains("CLIP + ours (runs: 2)"));
    assert_eq!(std::fs::read_to_string(d.join("r.txt")).unwrap(), table[table.find("CLIP").unwrap()..]);
    assert!(d.join("scores.seed0.csv").is_file() && d.join("scores.seed1.csv").is_file());
    assert_eq!(EvalReport::load_json(&d.join("r.json")).unwrap().runs, 2);

    let cmp = ok(&["report", "--reports", p(&d.join("r.json")), p(&d.join("r.json"))]);
    assert_eq!(cmp.lines().filter(|l| l.starts_with("CLIP + ours")).count(), 2);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = fixture(&d.join("fx"));
    let out = d.join("sweep.csv");
    ok(&[
        "--config", &cfg, "sweep", "--variable", "n_pairs", "--values", "100,300", "--seeds", "0",
        "--hidden-dims", "8,8,8", "--out", p(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "variable,value,runs,auroc_mean,auroc_std,aupr_mean,aupr_std,f1_max_mean,f1_max_std"
    );
    assert!(lines[1].starts_with("n_pairs,100,1,") && lines[2].starts_with("n_pairs,300,1,"));

    let bad = run(&["--config", &cfg, "sweep", "--variable", "epochs", "--values", "1", "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = run(&["train", "--train-normals", "no.emb", "--train-anomalies", "no2.emb", "--out", "m"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no.emb"));

    let cfg = d.join("bad.json");
    std::fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(run(&["--config", p(&cfg), "report"]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"seeds": "x"}"#).unwrap();
    assert_eq!(run(&["--config", p(&cfg), "eval"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "--setup", "one-shot"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--out", "m"]).status.code(), Some(2));

    let bad = d.join("corrupt.emb");
    std::fs::write(&bad, b"EMB1 but not really").unwrap();
    let out = run(&["train", "--train-normals", p(&bad), "--train-anomalies", p(&bad), "--out", "m"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_and_data_root_fill_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("c.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 1, "n-pairs": 3, "gen-prompts": {"seed": 7, "word_pair": "good-broken"}}"#,
    )
    .unwrap();
    let from_cfg = ok(&["--config", p(&cfg), "gen-prompts"]);
    assert!(from_cfg.starts_with("#randprompt v1 seed=7 n=3\n"));
    assert!(from_cfg.contains(" broken "));
    let overridden = ok(&["--config", p(&cfg), "gen-prompts", "--seed", "8", "--n-pairs", "2"]);
    assert!(overridden.starts_with("#randprompt v1 seed=8 n=2\n"));

    // Relative inputs resolve against the data root.
    fixture(&d.join("fx"));
    let out = bin()
        .env("RANDPROMPT_AD_DATA", d.join("fx"))
        .args([
            "eval", "--manifest", "manifest.json", "--images", "images.emb", "--guide-normal",
            "guide_normal.emb", "--guide-anomaly", "guide_anomaly.emb", "--components", "s_pr",
            "--seeds", "0",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("CLIP (runs: 1)"));
}

#[test]
fn gen_prompts_files_are_deterministic_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for f in [&a, &b] {
        ok(&["gen-prompts", "--seed", "11", "--n-pairs", "50", "--out", p(f)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let set = PromptSet::read(&a).unwrap();
    assert_eq!((set.seed, set.len()), (11, 50));
    let stdout = ok(&["gen-prompts", "--seed", "11", "--n-pairs", "50"]);
    assert_eq!(stdout.as_bytes(), std::fs::read(&a).unwrap());

    let guides = ok(&["gen-prompts", "--guides", "--word-pair", "flawless-defective"]);
    assert_eq!(guides.lines().count(), 3);
    assert!(guides.contains("a photo of a flawless object\n"));
}

#[test]
fn make_manifest_walks_dataset_tree() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    for f in [
        "cable/train/good/0.png",
        "cable/train/good/1.png",
        "cable/test/good/0.png",
        "cable/test/cut/0.png",
    ] {
        let f = root.join(f);
        std::fs::create_dir_all(f.parent().unwrap()).unwrap();
        std::fs::write(f, b"").unwrap();
    }
    let out = dir.path().join("m.json");
    ok(&["make-manifest", "--root", p(&root), "--out", p(&out), "--refs-per-category", "2"]);
    let m = DatasetManifest::load(&out).unwrap();
    assert_eq!(m.labels(), vec![0, 1]);
    assert_eq!(m.refs()["cable"].len(), 2);
    let refs = DatasetManifest::load(&dir.path().join("m.refs.json")).unwrap();
    assert_eq!(refs.len(), 2);

    let too_many = run(&["make-manifest", "--root", p(&root), "--out", p(&out), "--refs-per-category", "5"]);
    assert_eq!(too_many.status.code(), Some(3));
}
