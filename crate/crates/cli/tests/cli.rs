use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use incongruity::corpus::{write_instances, LabeledInstance, Provenance};
use incongruity::models::{split_sentences, Architecture, Document, IncongruityModel, ModelConfig};

const SMALL: &[&str] = &[
    "--set",
    "model.embed_dim=6",
    "--set",
    "model.word_hidden=6",
    "--set",
    "model.para_hidden=5",
    "--set",
    "model.conv_filters=3",
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_incongruity"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
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

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One JSON line on stderr with the exit code inside it.
fn error_line(out: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with('{')).collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["code"].as_i64(), out.status.code().map(i64::from));
    v
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn toy_dataset(root: &Path, name: &str) -> PathBuf {
    let toy = root.join("toy");
    if !toy.join("articles.jsonl").exists() {
        ok(&[
            "toy-corpus",
            "--out",
            s(&toy),
            "--seed",
            "5",
            "--set",
            "toy.articles_per_topic=40",
        ]);
    }
    let out = root.join(name);
    ok(&[
        "build-dataset",
        "--data",
        s(&toy.join("articles.jsonl")),
        "--out",
        s(&out),
        "--types",
        "--seed",
        "5",
        "--set",
        "dataset.donor_mode=cross_topic",
    ]);
    out
}

#[test]
fn build_dataset_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = toy_dataset(tmp.path(), "a");
    let b = toy_dataset(tmp.path(), "b");
    let fa = files(&a);
    assert!(fa.iter().any(|(p, _)| p.ends_with("types/type4.jsonl")));
    assert_eq!(fa, files(&b));

    let m: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    for key in ["config_hash", "data_hash", "seed", "version", "config", "outputs"] {
        assert!(!m[key].is_null(), "manifest lacks {key}");
    }
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["dataset.donor_mode"], "cross_topic");
    let whole = fs::read(a.join("whole/train.jsonl")).unwrap();
    assert_eq!(
        m["outputs"]["whole/train.jsonl"],
        incongruity::corpus::sha256_hex(&whole)
    );
}

#[test]
fn gradcheck_passes_on_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&["gradcheck", "--out", s(tmp.path())]);
    assert_eq!(stdout.lines().filter(|l| l.ends_with(" ok")).count(), 4, "{stdout}");
    let rows: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("gradcheck.json")).unwrap()).unwrap();
    for r in rows.as_array().unwrap() {
        assert!(r["max_rel_error"].as_f64().unwrap() < 1e-4, "{r}");
    }
}

fn three_paragraph_set() -> Vec<LabeledInstance> {
    let inst = |id: &str, label: u8, head: Vec<u32>, chunks: Vec<Vec<u32>>| LabeledInstance {
        id: id.into(),
        headline_ids: head,
        chunks,
        label,
        provenance: Provenance {
            target_id: id.into(),
            ..Provenance::default()
        },
    };
    vec![
        inst(
            "three",
            1,
            vec![4, 5, 6],
            vec![vec![7, 8, 9, 10], vec![11, 12, 3, 13], vec![14, 15]],
        ),
        inst("two", 0, vec![5, 9], vec![vec![4, 4, 6], vec![16, 2, 3]]),
    ]
}

#[test]
fn eval_ip_emits_paragraph_scores_and_their_max() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("set.jsonl");
    let set = three_paragraph_set();
    let mut buf = Vec::new();
    write_instances(&mut buf, &set).unwrap();
    fs::write(&data, buf).unwrap();
    let out = tmp.path().join("ev");
    let mut args = vec![
        "eval",
        "--model",
        "ahde",
        "--ip",
        "--seed",
        "11",
        "--data",
        s(&data),
        "--out",
        s(&out),
    ];
    args.extend_from_slice(SMALL);
    ok(&args);
    let lines: Vec<serde_json::Value> = fs::read_to_string(out.join("scores.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let first = &lines[0];
    assert_eq!(first["id"], "three");
    let per: Vec<f64> = first["per_paragraph_scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(per.len(), 3);
    assert_eq!(
        first["score"].as_f64().unwrap(),
        per.iter().cloned().fold(f64::MIN, f64::max)
    );

    // Same initialization scored paragraph by paragraph through the library.
    let mut cfg = ModelConfig::new(Architecture::Ahde, 17);
    cfg.embed_dim = 6;
    cfg.word_hidden = 6;
    cfg.para_hidden = 5;
    cfg.conv_filters = 3;
    cfg.seed = 11;
    let model = IncongruityModel::new(cfg).unwrap();
    for (p, &got) in set[0].chunks.iter().zip(&per) {
        let sub = Document::new(set[0].headline_ids.clone(), split_sentences(p, &[]));
        assert_eq!(model.score_document(&sub).unwrap(), got);
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["ip_mode"], true);
    assert_eq!(report["n"], 2);
}

#[test]
fn train_eval_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = toy_dataset(tmp.path(), "ds");
    let model = tmp.path().join("m");
    let mut args = vec![
        "train",
        "--data",
        s(&ds),
        "--out",
        s(&model),
        "--model",
        "hre",
        "--set",
        "train.max_steps=3",
        "--set",
        "train.batch_size=8",
    ];
    args.extend_from_slice(SMALL);
    let summary: serde_json::Value = serde_json::from_str(ok(&args).trim()).unwrap();
    assert_eq!(summary["steps"], 3);
    for f in ["params.incg", "model.json", "vocab.tsv", "history.csv", "manifest.json"] {
        assert!(model.join(f).exists(), "{f}");
    }

    let ev = tmp.path().join("ev");
    ok(&[
        "eval",
        "--data",
        s(&ds),
        "--checkpoint",
        s(&model),
        "--out",
        s(&ev),
        "--types",
        "--top-n",
        "1,3",
    ]);
    let csv = fs::read_to_string(ev.join("by_type.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let mismatch = run(&[
        "eval",
        "--data",
        s(&ds),
        "--checkpoint",
        s(&model),
        "--out",
        s(&ev),
        "--model",
        "rde",
    ]);
    assert_eq!(mismatch.status.code(), Some(2));

    let pr = tmp.path().join("pr");
    let articles = tmp.path().join("toy/articles.jsonl");
    ok(&[
        "predict",
        "--data",
        s(&articles),
        "--checkpoint",
        s(&model),
        "--out",
        s(&pr),
        "--ip",
    ]);
    let text = fs::read_to_string(pr.join("predictions.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 80);
    for l in text.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        let per = v["per_paragraph_scores"].as_array().unwrap();
        let max = per.iter().map(|x| x.as_f64().unwrap()).fold(f64::MIN, f64::max);
        assert_eq!(v["score"].as_f64().unwrap(), max);
    }
    let again = tmp.path().join("pr2");
    ok(&[
        "predict",
        "--data",
        s(&articles),
        "--checkpoint",
        s(&model),
        "--out",
        s(&again),
        "--ip",
    ]);
    assert_eq!(files(&pr), files(&again));
}

#[test]
fn exit_codes_and_error_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\nlearning_rate = 3\n").unwrap();
    let out = run(&["gradcheck", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "config");

    let out = run(&[
        "eval",
        "--data",
        s(&tmp.path().join("missing.jsonl")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out)["message"].as_str().unwrap().contains("missing.jsonl"));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    error_line(&out);

    let ds = toy_dataset(tmp.path(), "ds");
    let nan = tmp.path().join("nan");
    let mut args = vec![
        "train",
        "--data",
        s(&ds),
        "--out",
        s(&nan),
        "--model",
        "rde",
        "--set",
        "train.lr=1e200",
        "--set",
        "train.clip_norm=1e300",
    ];
    args.extend_from_slice(SMALL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["error"], "numeric");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = toy_dataset(tmp.path(), "ds");
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let ev = tmp.path().join(format!("ev{threads}"));
        let mut args = vec!["eval", "--data", s(&ds), "--out", s(&ev), "--model", "cde"];
        args.extend_from_slice(SMALL);
        let o = bin().args(&args).env("INCONGRUITY_THREADS", threads).output().unwrap();
        assert!(o.status.success());
        outs.push(files(&ev));
    }
    assert_eq!(outs[0], outs[1]);
    let bad = bin()
        .args(["gradcheck", "--model", "cde"])
        .env("INCONGRUITY_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
