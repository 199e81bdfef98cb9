use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roarbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roarbench"))
        .args(args)
        .env_remove("ROARBENCH_CACHE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn hash_line(o: &Output) -> String {
    stdout(o).lines().find(|l| l.starts_with("dataset hash ")).expect("hash printed").to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["keyword", "paired", "leakage", "tabular"] {
        let a = dir.path().join(format!("{kind}_a"));
        let b = dir.path().join(format!("{kind}_b"));
        let c = dir.path().join(format!("{kind}_c"));
        let common = ["--n", "30", "--n-val", "10", "--n-test", "10"];
        let run = |out: &Path, seed: &str| {
            let mut args = vec!["gen", kind];
            args.extend(common);
            args.extend(["--seed", seed, "--out", p(out)]);
            roarbench(&args)
        };
        let (oa, ob, oc) = (run(&a, "4"), run(&b, "4"), run(&c, "5"));
        assert!(oa.status.success(), "{kind}: {}", String::from_utf8_lossy(&oa.stderr));
        assert_eq!(hash_line(&oa), hash_line(&ob));
        assert_ne!(hash_line(&oa), hash_line(&oc));
        for split in ["train.jsonl", "validation.jsonl", "test.jsonl"] {
            assert_eq!(fs::read(a.join(split)).unwrap(), fs::read(b.join(split)).unwrap(), "{kind} {split}");
        }
        assert_eq!(fs::read_to_string(a.join("train.jsonl")).unwrap().lines().count(), 30);
    }
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(roarbench(&["gen", "keyword", "--out", p(dir.path())]).status.code(), Some(2));
    assert_eq!(roarbench(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(roarbench(&["roar", "--config", p(&dir.path().join("missing.json"))]).status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"name": "x", "dataset": {"kind": "keyword"}, "model": {"architecture": "linear"}, "typo": 1}"#)
        .unwrap();
    assert_eq!(roarbench(&["roar", "--config", p(&cfg)]).status.code(), Some(2));

    // Attention maps do not exist for the linear model.
    fs::write(&cfg, r#"{"name": "x", "dataset": {"kind": "keyword"}, "model": {"architecture": "linear"}, "measures": ["attention"]}"#)
        .unwrap();
    let o = roarbench(&["roar", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_without_curves_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(roarbench(&["report", "--runs", p(dir.path())]).status.code(), Some(4));
}

#[test]
fn validate_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = roarbench(&["validate", "--seeds", "1,2", "--out", p(&a)]);
    assert_eq!(oa.status.code(), Some(0), "{}", stdout(&oa));
    assert!(stdout(&oa).contains("verdict: pass"));
    roarbench(&["validate", "--seeds", "1,2", "--out", p(&b), "--jobs", "2"]);
    for f in ["validation.json", "validation.svg", "validation.plot.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("validation.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["max_recursive_gap"].as_f64().unwrap() <= 0.02);
}

const SMALL: &str = r#"{
  "name": "kw",
  "dataset": {"kind": "path", "path": "data"},
  "model": {"architecture": "bilstm-attention-single", "embedding_dim": 4, "hidden_dim": 4, "max_epochs": 3,
            "optimizer": {"learning_rate": 0.01}},
  "measures": ["attention", "gradient", "oracle"],
  "schedule": {"relative_step": 0.5},
  "seeds": [1, 2],
  "ig_steps": 4
}"#;

#[test]
fn roar_then_report_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let g = roarbench(&["gen", "keyword", "--n", "80", "--n-val", "30", "--n-test", "40", "--seed", "1", "--out", p(&data)]);
    assert!(g.status.success());
    let cfg = dir.path().join("kw.json");
    fs::write(&cfg, SMALL).unwrap();

    let out = dir.path().join("out");
    let r = roarbench(&["roar", "--config", p(&cfg), "--out", p(&out), "--mode", "both"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["effective_config.json", "summary.json", "faithfulness_recursive.csv", "faithfulness_classic.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let curves = out.join("curves");
    let mut names: Vec<String> = fs::read_dir(&curves).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, vec!["kw_classic.json", "kw_recursive.json"]);
    let bundle: serde_json::Value = serde_json::from_str(&fs::read_to_string(curves.join("kw_recursive.json")).unwrap()).unwrap();
    assert_eq!(bundle["ratios"], serde_json::json!([0.0, 0.5, 1.0]));
    assert_eq!(bundle["measures"].as_array().unwrap().len(), 4);

    let csv = fs::read_to_string(out.join("faithfulness_recursive.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "dataset,measure,mean,ci_low,ci_high");
    assert_eq!(csv.lines().count(), 1 + 4);

    // A second invocation hits the cache and reproduces the curves.
    let before = fs::read(curves.join("kw_recursive.json")).unwrap();
    let again = roarbench(&["roar", "--config", p(&cfg), "--out", p(&out), "--mode", "recursive"]);
    assert!(again.status.success());
    assert_eq!(fs::read(curves.join("kw_recursive.json")).unwrap(), before);

    let rep = roarbench(&["report", "--runs", p(&out)]);
    assert_eq!(rep.status.code(), Some(0), "{}", String::from_utf8_lossy(&rep.stderr));
    let report = out.join("report");
    for f in ["kw_recursive.svg", "kw_recursive.plot.json", "kw_classic.svg", "faithfulness.csv", "summary.md"] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let svg = fs::read_to_string(report.join("kw_recursive.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    let md = fs::read_to_string(report.join("summary.md")).unwrap();
    assert!(md.contains("kw (classic)"));
}
