use std::fs;
use std::io::Write;
use std::process::{Command, Output, Stdio};

const SUB: &str = r#"SELECT ?article WHERE {
  ?publisher rdf:type <http://example.org/Publisher> .
  ?publisher <http://example.org/publishes> ?article .
  ?article <http://example.org/articleText> ?text .
  FILTER ftcontains(?text, "economic" ftand "crisis")
}"#;

const DOCS: &str = "# doc d1
<http://example.org/p1> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://example.org/Publisher> .
<http://example.org/p1> <http://example.org/publishes> <http://example.org/a1> .
<http://example.org/a1> <http://example.org/articleText> \"The economic crisis deepens\" .
# doc d2
<http://example.org/p1> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://example.org/Publisher> .
<http://example.org/p1> <http://example.org/publishes> <http://example.org/a2> .
<http://example.org/a2> <http://example.org/articleText> \"Economic growth\" .
";

fn ftps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftps")).args(args).output().unwrap()
}

fn files() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let subs = dir.path().join("subs.txt");
    let docs = dir.path().join("docs.nt");
    fs::write(&subs, SUB).unwrap();
    fs::write(&docs, DOCS).unwrap();
    (dir, subs.display().to_string(), docs.display().to_string())
}

#[test]
fn run_writes_notifications_and_stats() {
    let (dir, subs, docs) = files();
    let out = dir.path().join("out.jsonl");
    let stats = dir.path().join("stats.csv");
    for mode in ["det", "metrics", "reorg"] {
        let o = ftps(&[
            "run", "--subs", &subs, "--docs", &docs, "--out", out.to_str().unwrap(),
            "--stats", stats.to_str().unwrap(), "--mode", mode,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(
            fs::read_to_string(&out).unwrap(),
            "{\"sub\":1,\"doc\":\"d1\",\"bindings\":{\"article\":\"<http://example.org/a1>\"}}\n"
        );
        let csv = fs::read_to_string(&stats).unwrap();
        assert!(csv.starts_with("metric,value\n"));
        assert!(csv.contains("subscriptions,1\n"));
    }
}

#[test]
fn subscribe_and_publish_commands() {
    let (_dir, subs, docs) = files();
    let o = ftps(&["subscribe", "-f", &subs]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("1\tline 1\n"));
    let o = ftps(&["publish", "-f", &docs, "--subs", &subs]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1);
    let o = ftps(&["reorg", "now", "--subs", &subs]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("reorganised 1 forests"));
}

#[test]
fn input_errors_exit_with_one() {
    let (dir, _subs, docs) = files();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "SELECT ?x WHERE { ?x <http://e/p> ?y . FILTER ftcontains(?y, ftnot \"a\") }").unwrap();
    let o = ftps(&["subscribe", "-f", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt:1"));
    let o = ftps(&["run", "--subs", "/nonexistent/subs", "--docs", &docs]);
    assert_eq!(o.status.code(), Some(1));
    let o = ftps(&["reorg", "later", "--subs", &docs]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shell_session() {
    let (_dir, subs, docs) = files();
    let mut child = Command::new(env!("CARGO_BIN_EXE_ftps"))
        .args(["shell", "--mode", "reorg"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let script = format!("subscribe-file {subs}\npublish {docs}\nreorg now\nunsubscribe 1\npublish {docs}\nbogus\nstats\naudit\nquit\n");
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("\"doc\":\"d1\"").count(), 1, "{stdout}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown command"));
}

#[test]
fn generators_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let subs = dir.path().join("s.txt");
    let docs = dir.path().join("d.nt");
    let csv = dir.path().join("r.csv");
    let o = ftps(&["gen-subs", "--n", "300", "--seed", "3", "-o", subs.to_str().unwrap()]);
    assert!(o.status.success());
    let first = fs::read(&subs).unwrap();
    ftps(&["gen-subs", "--n", "300", "--seed", "3", "-o", subs.to_str().unwrap()]);
    assert_eq!(first, fs::read(&subs).unwrap());
    let o = ftps(&["gen-docs", "--n", "20", "--seed", "4", "-o", docs.to_str().unwrap()]);
    assert!(o.status.success());
    let o = ftps(&[
        "bench", "--subs", subs.to_str().unwrap(), "--docs", docs.to_str().unwrap(),
        "--sizes", "100,300", "-o", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(&csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("mode,db_size,avg_ms,p50_ms,p95_ms,build_ms,trie_nodes"));
    assert_eq!(lines.count(), 6);
    let o = ftps(&["bench", "--subs", subs.to_str().unwrap(), "--docs", docs.to_str().unwrap(), "--sizes", "301"]);
    assert_eq!(o.status.code(), Some(1));
}
