use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy").join(name)
}

fn semrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semrag"))
        .args(args)
        .env_remove("SEMRAG_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = semrag(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ingested(tmp: &Path) -> (PathBuf, String) {
    let run = tmp.join("run");
    let cfg = toy("config.toml");
    ok(&["ingest", s(&toy("corpus.jsonl")), s(&run), "--config", s(&cfg)]);
    (run, s(&cfg).to_string())
}

#[test]
fn global_query_before_graph_names_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = ingested(tmp.path());
    ok(&["chunk", s(&run), "--config", &cfg]);
    let out = semrag(&["query", s(&run), "Who founded Halvik?", "--mode", "global", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("communities.json"), "{}", stderr(&out));
}

#[test]
fn malformed_corpus_line_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("bad.jsonl");
    std::fs::write(&corpus, "{\"id\":\"a\",\"text\":\"fine.\"}\n{\"id\": \"b\", \"text\": \n{\"id\":\"c\",\"text\":\"x.\"}\n").unwrap();
    let out = semrag(&["ingest", s(&corpus), s(&tmp.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(":2:"), "{}", stderr(&out));
}

#[test]
fn ingest_counts_and_merges() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.jsonl");
    std::fs::write(
        &corpus,
        "{\"id\":\"a\",\"text\":\"Same text.\"}\n{\"id\":\"b\",\"text\":\"Same text.\"}\n{\"id\":\"c\",\"text\":\"Other.\"}\n",
    )
    .unwrap();
    let cfg = tmp.path().join("merge.toml");
    std::fs::write(&cfg, "[ingest]\nmerge_duplicates = true\n").unwrap();
    let run = tmp.path().join("run");
    ok(&["ingest", s(&corpus), s(&run), "--config", s(&cfg)]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"]["ingest"]["counts"]["documents"], 2);
    assert_eq!(manifest["stages"]["ingest"]["counts"]["merged"], 1);

    ok(&["ingest", s(&corpus), s(&run)]);
    let docs = std::fs::read_to_string(run.join("documents.jsonl")).unwrap();
    assert_eq!(docs.lines().count(), 3);
}

#[test]
fn stale_upstream_refused_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = ingested(tmp.path());
    ok(&["chunk", s(&run), "--config", &cfg]);

    let docs = run.join("documents.jsonl");
    let mut text = std::fs::read_to_string(&docs).unwrap();
    text.push_str("{\"id\":\"extra\",\"text\":\"A new document.\"}\n");
    std::fs::write(&docs, text).unwrap();

    let out = semrag(&["chunk", s(&run), "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));
    let out = semrag(&["chunk", s(&run), "--config", &cfg, "--force"]);
    assert!(out.status.success());
    assert!(stderr(&out).contains("warning"));

    // chunks.jsonl is now recorded against the hand-edited documents, but
    // ingest's record is unchanged, so documents.jsonl itself is stale.
    let out = semrag(&["graph", s(&run), "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    ok(&["ingest", s(&toy("corpus.jsonl")), s(&run), "--config", &cfg]);
    let out = semrag(&["graph", s(&run), "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "chunks built from other documents must be refused");
}

#[test]
fn commands_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = ingested(tmp.path());
    let read = |n: &str| std::fs::read(run.join(n)).unwrap();
    ok(&["chunk", s(&run), "--config", &cfg]);
    ok(&["graph", s(&run), "--config", &cfg]);
    let first: Vec<Vec<u8>> = ["documents.jsonl", "chunks.jsonl", "entities.jsonl", "relations.jsonl", "communities.json"]
        .iter()
        .map(|n| read(n))
        .collect();
    ok(&["ingest", s(&toy("corpus.jsonl")), s(&run), "--config", &cfg]);
    ok(&["chunk", s(&run), "--config", &cfg]);
    ok(&["graph", s(&run), "--config", &cfg]);
    let second: Vec<Vec<u8>> = ["documents.jsonl", "chunks.jsonl", "entities.jsonl", "relations.jsonl", "communities.json"]
        .iter()
        .map(|n| read(n))
        .collect();
    assert!(first == second);
}

#[test]
fn query_prints_answer_and_context() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = ingested(tmp.path());
    ok(&["chunk", s(&run), "--config", &cfg]);
    ok(&["graph", s(&run), "--config", &cfg]);
    for mode in ["naive", "local", "global"] {
        let out = ok(&["query", s(&run), "Where does the Marrow River end?", "--mode", mode, "--config", &cfg, "--show-context", "--window-l", "200"]);
        assert!(out.contains("QUESTION: Where does the Marrow River end?"), "{out}");
        assert!(out.contains(&format!("--- context: {mode} mode")), "{out}");
        assert!(out.contains("score="), "{mode}: {out}");
    }
    let out = ok(&["query", s(&run), "Who founded Halvik?", "--mode", "naive", "--config", &cfg]);
    assert!(!out.contains("--- context"));
}

#[test]
fn eval_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = ingested(tmp.path());
    ok(&["chunk", s(&run), "--config", &cfg]);
    ok(&["graph", s(&run), "--config", &cfg]);
    ok(&["eval", s(&run), s(&toy("qa.jsonl")), "--config", &cfg, "--mode", "global"]);
    let csv = std::fs::read_to_string(run.join("eval_global.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("eval_global.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "global");
    assert_eq!(report["examples"], 8);
    let manifest = std::fs::read_to_string(run.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"eval:global\""));
}

#[test]
fn config_from_environment_and_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[chunking]\nbufer_size = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_semrag"))
        .args(["ingest", s(&toy("corpus.jsonl")), s(&tmp.path().join("run"))])
        .env("SEMRAG_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bufer_size"), "{}", stderr(&out));

    let out = semrag(&["ingest", s(&toy("corpus.jsonl")), s(&tmp.path().join("run")), "--tau-e", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn provider_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, _) = ingested(tmp.path());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let cfg = tmp.path().join("remote.toml");
    std::fs::write(
        &cfg,
        format!("[embedding]\nkind = \"remote\"\nendpoint_url = \"http://{addr}\"\nretries = 1\ntimeout_ms = 2000\n"),
    )
    .unwrap();
    let out = semrag(&["chunk", s(&run), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn sweep_rows_match_buffers() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, cfg) = ingested(tmp.path());
    ok(&["sweep", s(&run), s(&toy("qa.jsonl")), "--config", &cfg, "--buffers", "0,2,5"]);
    let csv = std::fs::read_to_string(run.join("sweep.csv")).unwrap();
    let buffers: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(buffers, ["0", "2", "5"]);
}
