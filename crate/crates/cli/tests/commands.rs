use std::path::Path;
use std::process::{Command, Output};

use mill_core::eval::parse_run;

fn mill(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mill"))
        .current_dir(dir)
        .env_remove("LLM_API_KEY")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy(dir: &Path) {
    std::fs::write(dir.join("c.tsv"), "D1\tthe cat sat\nD2\tdogs bark\nD3\tcat cat cat\n").unwrap();
    std::fs::write(dir.join("q.tsv"), "q1\tcat\nq2\tdogs\n").unwrap();
    std::fs::write(dir.join("qrels.txt"), "q1 0 D3 1\nq2 0 D2 1\n").unwrap();
}

#[test]
fn index_reports_statistics_and_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let o = mill(dir.path(), &["index", "--corpus", "c.tsv", "-o", "c.idx"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("documents\t3"));
    let again = mill(dir.path(), &["index", "--corpus", "c.tsv", "-o", "c.idx"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(mill(dir.path(), &["index", "--corpus", "c.tsv", "-o", "c.idx", "--force"]).status.success());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    assert_eq!(mill(dir.path(), &["index", "--corpus", "missing.tsv", "-o", "x.idx"]).status.code(), Some(1));
    assert_eq!(mill(dir.path(), &["frobnicate"]).status.code(), Some(1));

    std::fs::write(dir.path().join("bad.tsv"), "only-one-column\n").unwrap();
    let o = mill(dir.path(), &["index", "--corpus", "bad.tsv", "-o", "b.idx", "--strict"]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(dir.path().join("bad_qrels.txt"), "q1 0 D3 -1\n").unwrap();
    std::fs::write(dir.path().join("r.trec"), "q1 Q0 D3 1 1.0 t\n").unwrap();
    let o = mill(dir.path(), &["eval", "--run", "r.trec", "--qrels", "bad_qrels.txt"]);
    assert_eq!(o.status.code(), Some(2));

    // an unreachable endpoint exhausts retries: a backend failure
    let cfg = "[backend]\nkind = \"remote\"\ncompletion_endpoint = \"http://127.0.0.1:9/v1\"\nembedding_endpoint = \"http://127.0.0.1:9/v1\"\n";
    std::fs::write(dir.path().join("remote.toml"), cfg).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mill"))
        .current_dir(dir.path())
        .env("LLM_API_KEY", "test")
        .args(["run", "--config", "remote.toml", "--corpus", "c.tsv", "--queries", "q.tsv", "--output-dir", "o", "--strict"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = mill(dir.path(), &["run", "--backend", "remote", "--corpus", "c.tsv", "--queries", "q.tsv", "--output-dir", "o"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn no_expansion_run_is_plain_bm25_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    assert!(mill(dir.path(), &["index", "--corpus", "c.tsv", "-o", "c.idx"]).status.success());
    let o = mill(dir.path(), &["run", "--index", "c.idx", "--queries", "q.tsv", "--method", "none", "--output-dir", "out"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/run.trec")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("q1 Q0 D3 1 "));
    assert!(lines[1].starts_with("q1 Q0 D1 2 "));
    assert!(lines[2].starts_with("q2 Q0 D2 1 "));
    assert!(lines.iter().all(|l| l.split(' ').count() == 6 && l.ends_with(" none")));

    let parsed = parse_run(&dir.path().join("out/run.trec")).unwrap();
    let mut rewritten = Vec::new();
    for qid in ["q1", "q2"] {
        let list = mill_core::RankedList { query_id: qid.into(), entries: parsed.ranking(qid).to_vec() };
        mill_core::eval::write_run(&mut rewritten, &list, "none").unwrap();
    }
    assert_eq!(String::from_utf8(rewritten).unwrap(), text);

    let expanded = std::fs::read_to_string(dir.path().join("out/expanded.tsv")).unwrap();
    assert_eq!(expanded, "q1\tcat\nq2\tdogs\n");
}

#[test]
fn eval_and_compare_report() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let o = mill(dir.path(), &["run", "--corpus", "c.tsv", "--queries", "q.tsv", "--output-dir", "mill", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("mill/provenance.jsonl").exists());

    let o = mill(dir.path(), &["eval", "--run", "mill/run.trec", "--qrels", "qrels.txt", "--format", "json"]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(json["mean"]["ndcg@1000"].as_f64().is_some());
    assert!(json["per_query"]["q2"]["recall@100"].as_f64().is_some());

    let o = mill(dir.path(), &["compare", "--run-a", "mill/run.trec", "--run-b", "mill/run.trec", "--qrels", "qrels.txt"]);
    assert!(stdout(&o).contains("verdict\tidentical"));

    std::fs::write(dir.path().join("other.trec"), "q9 Q0 D1 1 1.0 t\n").unwrap();
    let o = mill(dir.path(), &["compare", "--run-a", "mill/run.trec", "--run-b", "other.trec", "--qrels", "qrels.txt"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("q9") && err.contains("q1"), "{err}");
}

#[test]
fn compare_detects_significant_difference() {
    let dir = tempfile::tempdir().unwrap();
    let mut qrels = String::new();
    let mut a = String::new();
    let mut b = String::new();
    // per-query MRR gaps of 1 - 1/r for r = 2..6: varied, all positive
    for i in 0..5 {
        qrels.push_str(&format!("q{i} 0 rel 1\n"));
        a.push_str(&format!("q{i} Q0 rel 1 10 a\n"));
        for j in 0..=i {
            b.push_str(&format!("q{i} Q0 x{j} {} {} b\n", j + 1, 10 - j));
        }
        b.push_str(&format!("q{i} Q0 rel {} 1 b\n", i + 2));
    }
    std::fs::write(dir.path().join("qrels.txt"), qrels).unwrap();
    std::fs::write(dir.path().join("a.trec"), a).unwrap();
    std::fs::write(dir.path().join("b.trec"), b).unwrap();
    let o = mill(dir.path(), &["compare", "--run-a", "a.trec", "--run-b", "b.trec", "--qrels", "qrels.txt", "--metric", "mrr"]);
    let out = stdout(&o);
    assert!(out.contains("verdict\tsignificant"), "{out}");
}

#[test]
fn case_renders_selection() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let o = mill(dir.path(), &["case", "--query-id", "q1", "--corpus", "c.tsv", "--queries", "q.tsv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("generated documents (5)"));
    assert_eq!(out.matches("[selected] s").count(), 3);
    assert_eq!(out.matches("[filtered] s").count(), 2);
    assert!(out.contains("      1. "), "parsed sub-queries are shown");
    assert!(out.contains("selected: 3 generated, 2 retrieved"));

    let o = mill(dir.path(), &["case", "--query-id", "nope", "--corpus", "c.tsv", "--queries", "q.tsv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    std::fs::write(
        dir.path().join("exp.toml"),
        "corpus = \"c.tsv\"\nqueries = \"q.tsv\"\noutput_dir = \"from_file\"\n[expansion]\nmethod = \"mill\"\n",
    )
    .unwrap();
    let o = mill(dir.path(), &["run", "--config", "exp.toml", "--method", "none", "--output-dir", "from_flag"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("from_file").exists());
    let run = std::fs::read_to_string(dir.path().join("from_flag/run.trec")).unwrap();
    assert!(run.lines().all(|l| l.ends_with(" none")));
}
