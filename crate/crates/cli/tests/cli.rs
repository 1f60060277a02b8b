use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_crel");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn crel<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(BIN).args(args).output().expect("run crel")
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Trains the small MD and PEL models used by the fig1 golden test.
fn train_models(dir: &Path, seed: Option<&str>) -> (PathBuf, PathBuf) {
    let (md, pel) = (dir.join("md.json"), dir.join("pel.json"));
    let convs = fixture("train_conversations.json");
    let gold = fixture("train_gold.json");
    let mut common = vec!["--input", p(&convs), "--gold", p(&gold), "--dim", "16"];
    if let Some(s) = seed {
        common.extend(["--seed", s]);
    }
    let md_report = ok_json(crel(["train-md"].iter().chain(&common).chain(&["--output", p(&md)])));
    assert_eq!(md_report["train"]["f1"], 1.0);
    let pel_report = ok_json(crel(["train-pel"].iter().chain(&common).chain(&["--hidden", "8", "--output", p(&pel)])));
    assert_eq!(pel_report["train"]["f1"], 1.0);
    (md, pel)
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in ["link", "pem", "train-md", "train-pel", "train-ed", "eval", "kappa", "stats", "annotate-serve"] {
        let out = crel([sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        assert!(!out.stdout.is_empty());
    }
    assert!(crel(["--help"]).status.success());
}

#[test]
fn usage_and_validation_errors_exit_one() {
    assert_eq!(crel(["eval"]).status.code(), Some(1));
    assert_eq!(crel(["no-such-command"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = crel(["stats", "--gold", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn missing_input_exits_two_and_names_the_path() {
    let out = crel(["pem", "--input", "/nonexistent/convs.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/convs.json"));
}

#[test]
fn figure_one_matches_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let (md, pel) = train_models(dir.path(), None);
    let pred = dir.path().join("pred.json");
    let fig1 = fixture("fig1.json");
    let kb = fixture("kb");
    let out = crel(["link", "--input", p(&fig1), "--md", p(&md), "--pel", p(&pel), "--kb", p(&kb), "--output", p(&pred)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(&pred).unwrap();
    let expected = std::fs::read_to_string(fixture("fig1_expected.json")).unwrap();
    assert_eq!(got, expected);

    let gold = fixture("fig1_gold.json");
    for mode in ["pel", "el", "md"] {
        let report = ok_json(crel(["eval", "--gold", p(&gold), "--pred", p(&pred), "--mode", mode]));
        assert_eq!(report["f1"], 1.0, "{mode}: {report}");
    }
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (md_a, pel_a) = train_models(a.path(), Some("11"));
    let (md_b, pel_b) = train_models(b.path(), Some("11"));
    let (_, pel_c) = train_models(c.path(), Some("12"));
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&md_a), read(&md_b));
    assert_eq!(read(&pel_a), read(&pel_b));
    assert_ne!(read(&pel_a), read(&pel_c));
}

#[test]
fn pem_finds_personal_mentions() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("pem.json");
    let out = crel(["pem", "--input", p(&fixture("fig1.json")), "--output", p(&out_path)]);
    assert!(out.status.success());
    let convs = crel_core::io::read_conversations(&fixture("fig1.json")).unwrap();
    let anns = crel_core::io::read_annotations(&out_path).unwrap();
    let found: Vec<String> = anns[0].personal().map(|pm| convs[0].span_text(&pm.personal)).collect();
    assert_eq!(found, vec!["my cars"]);
}

#[test]
fn stats_and_kappa_reports() {
    let stats = ok_json(crel(["stats", "--gold", p(&fixture("train_gold.json"))]));
    assert_eq!(stats["total"]["conversations"], 10);
    assert_eq!(stats["train"]["conversations"], 10);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    std::fs::write(&csv, "subject,category,count\ns1,a,2\ns1,b,1\ns2,a,1\ns2,b,2\n").unwrap();
    let k = ok_json(crel(["kappa", "--ratings", p(&csv)]));
    assert_eq!(k["subjects"], 2);
    assert!((k["kappa"].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn trained_ed_weights_feed_link() {
    let dir = tempfile::tempdir().unwrap();
    let ed = dir.path().join("ed.json");
    let kb = fixture("kb");
    let report = ok_json(crel([
        "train-ed",
        "--input",
        p(&fixture("train_conversations.json")),
        "--gold",
        p(&fixture("train_gold.json")),
        "--kb",
        p(&kb),
        "--output",
        p(&ed),
    ]));
    assert!(report["lambda_prior"].is_number());
    let (md, pel) = train_models(dir.path(), None);
    let out = crel(["link", "--input", p(&fixture("fig1.json")), "--md", p(&md), "--pel", p(&pel), "--kb", p(&kb), "--ed", p(&ed)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let anns: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(anns.as_array().unwrap().len(), 1);
}

#[test]
fn annotate_serve_init_only_creates_and_reopens() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("proj");
    let out = crel(["annotate-serve", "--project", p(&project), "--init-only"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--conversations"));

    let (convs, linker, kb) = (fixture("fig1.json"), fixture("fig1_gold.json"), fixture("kb"));
    let args = [
        "annotate-serve",
        "--project",
        p(&project),
        "--init-only",
        "--conversations",
        p(&convs),
        "--linker",
        p(&linker),
        "--kb",
        p(&kb),
    ];
    let out = crel(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(project.join("events.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);

    let out = crel(["annotate-serve", "--project", p(&project), "--init-only"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 conversations"));
    assert_eq!(std::fs::read_to_string(project.join("events.jsonl")).unwrap(), log);
}
