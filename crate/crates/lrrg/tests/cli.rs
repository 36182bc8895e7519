//! End-to-end runs of the `lrrg` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use lrrg::dataset_file::read_dataset;
use lrrg::fixture::{key_csv, parse_key_csv, retake_fixture, FIXTURE_SEED};
use lrrg::jsonl::{read_jsonl, to_jsonl};
use lrrg::manifest::RunManifest;
use lrrg::metrics_csv;
use lrrg_core::curation::{GraderVerdict, QualityLevel, RetakePair, VerdictSource};
use lrrg_core::{Regime, Split};
use tempfile::TempDir;

const SMALL_DATA: &[&str] = &[
    "data.patients=400",
    "data.std.train=40",
    "data.mild.train=30",
    "data.severe.train=30",
    "data.std.val=5",
    "data.mild.val=5",
    "data.severe.val=5",
    "data.std.test=20",
    "data.mild.test=20",
    "data.severe.test=20",
    "data.aux_test=10",
];

fn lrrg(out: &Path, sub: &str, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrrg"))
        .arg(sub)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("LRRG_GRADER_URL")
        .env_remove("LRRG_GRADER_TOKEN")
        .output()
        .expect("spawn lrrg")
}

fn ok(out: &Path, sub: &str, extra: &[&str]) -> Output {
    let o = lrrg(out, sub, extra);
    assert!(o.status.success(), "lrrg {sub} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Data artifacts only: run manifests record wall-clock timings.
fn without_manifests(files: BTreeMap<String, Vec<u8>>) -> BTreeMap<String, Vec<u8>> {
    files.into_iter().filter(|(k, _)| !k.ends_with("/manifest.json")).collect()
}

fn small_corpus() -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), "gen-data", SMALL_DATA);
    dir
}

#[test]
fn gen_data_defaults_write_requested_counts() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), "gen-data", &[]);
    let data = dir.path().join("data");
    let expected = [[2000, 100, 200], [800, 50, 200], [600, 50, 200]];
    for r in Regime::ALL {
        for s in Split::ALL {
            let d = read_dataset(data.join(format!("{}_{}.lrrg", r.short_name(), s.short_name()))).unwrap();
            assert_eq!(d.studies.len(), expected[r.index()][s.index()], "{r:?} {s:?}");
            assert_eq!(d.regime, Some(r));
        }
    }
    assert_eq!(read_dataset(data.join("aux_test.lrrg")).unwrap().studies.len(), 100);
    assert!(data.join("split_manifest.json").is_file());
    let manifest: RunManifest = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.artifacts.len(), 11);
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let (a, b) = (small_corpus(), small_corpus());
    let fa = without_manifests(files_under(a.path()));
    assert_eq!(fa.len(), 11);
    assert_eq!(fa, without_manifests(files_under(b.path())));
}

#[test]
fn gen_data_zero_count_gives_empty_valid_file() {
    let dir = TempDir::new().unwrap();
    let mut args = SMALL_DATA.to_vec();
    args.push("data.mild.val=0");
    ok(dir.path(), "gen-data", &args);
    let path = dir.path().join("data").join("mild_val.lrrg");
    let d = read_dataset(&path).unwrap();
    assert!(d.studies.is_empty());
    assert_eq!(d.regime, Some(Regime::Mild));
    assert_eq!(fs::metadata(&path).unwrap().len(), 12);
}

#[test]
fn gen_data_rejects_infeasible_request() {
    let dir = TempDir::new().unwrap();
    let o = lrrg(dir.path(), "gen-data", &["data.patients=3"]);
    assert!(!o.status.success());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = lrrg(dir.path(), "gen-data", &["trainer.alhpa=0.1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("trainer.alhpa"), "{}", stderr(&o));
}

const TRAIN: &[&str] = &["trainer.steps=25", "trainer.seeds=2", "model.hidden=4"];

#[test]
fn train_writes_one_log_per_run_and_reruns_identically() {
    let dir = small_corpus();
    ok(dir.path(), "train", TRAIN);
    let train = dir.path().join("train");
    let first = files_under(&train.join("params"));
    assert_eq!(first.len(), 4);
    for mode in ["ERM", "DTS_FirstOrder"] {
        for seed in [0, 1] {
            let log = fs::read_to_string(train.join("logs").join(format!("{mode}_seed{seed}.jsonl"))).unwrap();
            assert_eq!(log.lines().count(), 25, "{mode} seed {seed}");
            let rec: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
            assert_eq!(rec["step"], 24);
        }
    }
    ok(dir.path(), "train", TRAIN);
    assert_eq!(first, files_under(&train.join("params")));
}

#[test]
fn divergent_training_fails_and_keeps_partial_log() {
    let dir = small_corpus();
    let o = lrrg(
        dir.path(),
        "train",
        &["trainer.steps=400", "trainer.outer_lr=1e12", "trainer.modes=ERM", "model.hidden=4"],
    );
    assert!(!o.status.success());
    let log = dir.path().join("train").join("logs").join("ERM_seed0.jsonl");
    let lines = fs::read_to_string(log).unwrap().lines().count();
    assert!(lines < 400, "{lines} lines");
    assert!(dir.path().join("train").join("params").join("ERM_seed0.bin").is_file());
}

#[test]
fn eval_writes_detail_and_aggregate_rows() {
    let dir = small_corpus();
    ok(dir.path(), "train", TRAIN);
    ok(dir.path(), "eval", &[]);
    let text = fs::read_to_string(dir.path().join("eval").join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), metrics_csv::HEADER.join(","));
    let (rows, aggregates) = metrics_csv::parse(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 4);
    assert_eq!(aggregates.len(), 2 * 4);
    for agg in &aggregates {
        let f1: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == agg.mode && r.benchmark == agg.benchmark)
            .map(|r| r.values[5])
            .collect();
        assert_eq!(f1.len(), 2);
        let (m, _) = metrics_csv::mean_std(&f1);
        assert!((m - agg.mean[5]).abs() < 1e-6, "{} {}: {m} vs {}", agg.mode, agg.benchmark, agg.mean[5]);
    }
}

#[test]
fn eval_names_missing_benchmark_file() {
    let dir = small_corpus();
    ok(dir.path(), "train", &["trainer.steps=5", "trainer.modes=ERM", "model.hidden=4"]);
    fs::remove_file(dir.path().join("data").join("severe_test.lrrg")).unwrap();
    let o = lrrg(dir.path(), "eval", &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("severe_test.lrrg"), "{}", stderr(&o));
}

#[test]
fn probe_on_init_params_is_repeatable() {
    let dir = small_corpus();
    ok(dir.path(), "train", &["trainer.steps=1", "trainer.modes=ERM", "model.hidden=4"]);
    ok(dir.path(), "probe", &["probe.batches=4", "probe.batch_size=8"]);
    let probe = dir.path().join("probe");
    let first = fs::read(probe.join("coherence.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);
    for line in text.lines().skip(1) {
        let cos: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!((-1.0..=1.0).contains(&cos), "{line}");
    }
    let gaps = fs::read_to_string(probe.join("gaps.csv")).unwrap();
    assert_eq!(gaps.lines().count(), 1 + 4);
    ok(dir.path(), "probe", &["probe.batches=4", "probe.batch_size=8"]);
    assert_eq!(first, fs::read(probe.join("coherence.csv")).unwrap());
}

#[test]
fn bundled_fixture_matches_generator() {
    let f = retake_fixture(FIXTURE_SEED);
    assert_eq!(fs::read(fixture_dir().join("retake_fixture.jsonl")).unwrap(), to_jsonl(&f.studies));
    assert_eq!(fs::read_to_string(fixture_dir().join("retake_key.csv")).unwrap(), key_csv(&f.key));
}

fn metadata_arg() -> String {
    format!("curate.metadata={}", fixture_dir().join("retake_fixture.jsonl").display())
}

#[test]
fn curate_recovers_planted_pairs() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), "curate", &[&metadata_arg()]);
    let out = dir.path().join("curate");
    let pairs: Vec<(usize, RetakePair)> = read_jsonl(out.join("pairs.jsonl")).unwrap();
    let mut found: Vec<(u64, u64)> = pairs.iter().map(|(_, p)| (p.pre.study_id, p.post.study_id)).collect();
    found.sort_unstable();
    let key = parse_key_csv(&fs::read_to_string(fixture_dir().join("retake_key.csv")).unwrap()).unwrap();
    assert_eq!(found, key);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("consistency.json")).unwrap()).unwrap();
    assert!(report["consistency_rate"].as_f64().unwrap() >= 0.99, "{report}");
}

#[test]
fn curate_without_pairs_writes_empty_outputs() {
    let dir = TempDir::new().unwrap();
    let f = retake_fixture(FIXTURE_SEED);
    let singles: Vec<_> = f
        .studies
        .iter()
        .filter(|s| !f.key.iter().any(|&(a, b)| s.study_id == a || s.study_id == b))
        .cloned()
        .collect();
    let meta = dir.path().join("singles.jsonl");
    // Drop one side of every distractor pair too, so nothing can match.
    let mut seen = std::collections::BTreeSet::new();
    let lone: Vec<_> = singles.into_iter().filter(|s| seen.insert(s.patient_id)).collect();
    fs::write(&meta, to_jsonl(&lone)).unwrap();
    let o = ok(dir.path(), "curate", &[&format!("curate.metadata={}", meta.display())]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("no qualifying retake pairs"));
    assert_eq!(fs::read(dir.path().join("curate").join("pairs.jsonl")).unwrap(), b"");
}

#[test]
fn curate_reports_corrupt_line_number() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(fixture_dir().join("retake_fixture.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[6] = "{\"patient_id\": 1, \"study_id\": ";
    let meta = dir.path().join("corrupt.jsonl");
    fs::write(&meta, lines.join("\n")).unwrap();
    let o = lrrg(dir.path(), "curate", &[&format!("curate.metadata={}", meta.display())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));
}

/// Serves `requests` HTTP requests with a fixed status and body.
fn mock_grader(status: u16, body: &'static str, requests: usize) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut auth = Vec::new();
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth.push(line.trim().to_string());
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            let reason = if status == 200 { "OK" } else { "Internal Server Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
        auth
    });
    (url, handle)
}

fn small_metadata(dir: &Path) -> (PathBuf, usize) {
    let f = retake_fixture(FIXTURE_SEED);
    let keep: Vec<u64> = f.key.iter().take(3).flat_map(|&(a, b)| [a, b]).collect();
    let studies: Vec<_> = f.studies.iter().filter(|s| keep.contains(&s.study_id)).cloned().collect();
    let path = dir.join("three_pairs.jsonl");
    fs::write(&path, to_jsonl(&studies)).unwrap();
    (path, studies.len())
}

#[test]
fn curate_uses_remote_grader() {
    let dir = TempDir::new().unwrap();
    let (meta, n) = small_metadata(dir.path());
    let (url, server) = mock_grader(200, r#"{"choices":[{"message":{"content":"LEVEL: 2"}}]}"#, n);
    ok(
        dir.path(),
        "curate",
        &[&format!("curate.metadata={}", meta.display()), &format!("grader.url={url}"), "grader.token=sekrit"],
    );
    let auth = server.join().unwrap();
    assert_eq!(auth.len(), n);
    assert!(auth.iter().all(|a| a.ends_with("Bearer sekrit")));
    let verdicts: Vec<(usize, GraderVerdict)> = read_jsonl(dir.path().join("curate").join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.len(), n);
    assert!(verdicts.iter().all(|(_, v)| v.source == VerdictSource::Remote && v.level == QualityLevel::Mild));
    let manifest = fs::read_to_string(dir.path().join("curate").join("manifest.json")).unwrap();
    assert!(!manifest.contains("sekrit"));
}

#[test]
fn curate_falls_back_when_remote_fails() {
    let dir = TempDir::new().unwrap();
    let (meta, n) = small_metadata(dir.path());
    let (url, server) = mock_grader(500, "{}", n);
    let o = ok(dir.path(), "curate", &[&format!("curate.metadata={}", meta.display()), &format!("grader.url={url}")]);
    server.join().unwrap();
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let verdicts: Vec<(usize, GraderVerdict)> = read_jsonl(dir.path().join("curate").join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.len(), n);
    assert!(verdicts.iter().all(|(_, v)| v.source == VerdictSource::MockRule));
}

#[test]
fn config_layers_apply_in_order() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# layered\ngrader.model=from-file\ndata.patients=300\ndata.aux_test=7\n").unwrap();
    let mut args: Vec<String> = SMALL_DATA.iter().map(|s| s.to_string()).collect();
    args.retain(|a| !a.starts_with("data.patients") && !a.starts_with("data.aux_test"));
    args.push("data.aux_test=9".into());
    let o = Command::new(env!("CARGO_BIN_EXE_lrrg"))
        .arg("gen-data")
        .arg("--out")
        .arg(dir.path())
        .arg("--config")
        .arg(&cfg)
        .args(&args)
        .env("LRRG_GRADER_URL", "http://env.invalid/")
        .env_remove("LRRG_GRADER_TOKEN")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: RunManifest =
        serde_json::from_slice(&fs::read(dir.path().join("data").join("manifest.json")).unwrap()).unwrap();
    let c = &manifest.config;
    assert_eq!(c["grader.url"], "http://env.invalid/");
    assert_eq!(c["grader.model"], "from-file");
    assert_eq!(c["data.patients"], "300");
    assert_eq!(c["data.aux_test"], "9");
    assert_eq!(c["trainer.steps"], "3000");
}
