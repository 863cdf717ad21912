use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{TimeZone, Utc};
use demfeed_service::{AssignmentPolicy, EventInput, EventKind, Store};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn demfeed(args: &[&str]) -> Output {
    demfeed_env(args, &[])
}

fn demfeed_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_demfeed"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(bytes.last(), Some(&b'\n'), "{} lacks a final newline", path.display());
    bytes
}

const SUBCOMMAND_FLAGS: [(&str, &[&str]); 8] = [
    ("ingest", &["--input", "--format", "--out", "--political-only", "--report"]),
    (
        "sample",
        &["--corpus", "--buckets", "--per-bucket", "--seed", "--out", "--dev-size", "--dev-out", "--test-out"],
    ),
    (
        "rate",
        &[
            "--corpus",
            "--backend",
            "--out",
            "--fixture",
            "--record",
            "--cache",
            "--concurrency",
            "--model",
            "--temperature",
            "--prompt-version",
            "--rater-id",
            "--strict",
            "--requests-per-minute",
            "--failures",
        ],
    ),
    ("import-annotations", &["--input", "--rater-id", "--corpus", "--out", "--report"]),
    ("agreement", &["--a", "--b", "--out", "--format", "--alpha-metric", "--corpus"]),
    (
        "rank",
        &[
            "--condition",
            "--scores",
            "--corpus",
            "--out",
            "--manifest",
            "--feed-size",
            "--threshold",
            "--replacement-ceiling",
            "--seed",
            "--generated-at",
        ],
    ),
    ("serve", &["--experiment", "--bind", "--port", "--data-dir"]),
    ("export-events", &["--data-dir", "--condition", "--from", "--to", "--out"]),
];

#[test]
fn help_documents_every_flag() {
    let top = String::from_utf8(ok(demfeed(&["--help"])).stdout).unwrap();
    for (sub, flags) in SUBCOMMAND_FLAGS {
        assert!(top.contains(sub), "top-level help lacks {sub}");
        let help = String::from_utf8(ok(demfeed(&[sub, "--help"])).stdout).unwrap();
        let listed: Vec<&str> = help
            .lines()
            .filter(|l| l.trim_start().starts_with('-'))
            .filter_map(|l| l.trim_start().split([' ', ',', '=']).find(|w| w.starts_with("--")))
            .filter(|f| *f != "--help" && *f != "--config")
            .collect();
        let mut want: Vec<&str> = flags.to_vec();
        let mut got = listed.clone();
        want.sort();
        got.sort();
        assert_eq!(got, want, "{sub}");
        assert!(help.contains("--config"), "{sub} help lacks the global --config");
        for line in help.lines().filter(|l| l.trim_start().starts_with("--")) {
            let documented = line.split("  ").filter(|s| !s.trim().is_empty()).count() > 1;
            assert!(documented, "{sub}: undocumented `{}`", line.trim());
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = demfeed(&["rank", "--bogus"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&demfeed(&[])), 1);
    assert_eq!(code(&demfeed(&["frobnicate"])), 1);
    assert_eq!(code(&demfeed(&["rate", "--out", "x.csv", "--backend", "carrier-pigeon"])), 1);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(code(&demfeed(&["rate", "--corpus", "/does/not/exist.jsonl", "--out", p(&out)])), 1);
    let corpus = fixture("corpus.jsonl");
    assert_eq!(
        code(&demfeed(&["rate", "--corpus", p(&corpus), "--temperature", "3", "--out", p(&out)])),
        1
    );
    // 50 posts cannot fill a 60-slot feed
    let scores = fixture("manual.csv");
    let feed = dir.path().join("feed.json");
    let out = demfeed(&["rank", "--condition", "engagement", "--scores", p(&scores), "--corpus", p(&corpus), "--out", p(&feed)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("short by 10"));
    assert_eq!(
        code(&demfeed(&["rank", "--condition", "sideways", "--scores", p(&scores), "--corpus", p(&corpus), "--out", p(&feed)])),
        1
    );
}

#[test]
fn replay_misses_are_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("empty.jsonl");
    std::fs::write(&archive, "").unwrap();
    let out_path = dir.path().join("scores.csv");
    let failures = dir.path().join("failures.json");
    let corpus = fixture("corpus.jsonl");
    let out = demfeed(&[
        "rate", "--backend", "replay", "--fixture", p(&archive), "--corpus", p(&corpus), "--out", p(&out_path),
        "--failures", p(&failures),
    ]);
    assert_eq!(code(&out), 2);
    let report: Value = serde_json::from_slice(&read(&failures)).unwrap();
    assert_eq!(report["posts"].as_array().unwrap().len(), 50);
    assert_eq!(report["posts"][0]["failures"][0][1]["kind"], "replay_miss");
    // header only: no post was fully rated
    assert_eq!(read(&out_path).iter().filter(|&&b| b == b'\n').count(), 1);
}

#[test]
fn mock_rating_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.jsonl");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("mock{run}.jsonl"));
        let record = dir.path().join(format!("record{run}.jsonl"));
        let cache = dir.path().join(format!("cache{run}.jsonl"));
        ok(demfeed(&[
            "rate", "--backend", "mock", "--corpus", p(&corpus), "--out", p(&out), "--record", p(&record), "--cache",
            p(&cache), "--concurrency", if run == 0 { "1" } else { "16" },
        ]));
        outputs.push((read(&out), read(&record), read(&cache)));
    }
    assert_eq!(outputs[0], outputs[1]);
    // the recorded archive is the bundled replay fixture
    assert_eq!(outputs[0].1, std::fs::read(fixture("replay.jsonl")).unwrap());
}

#[test]
fn cached_ratings_need_no_backend() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("corpus.jsonl");
    let cache = dir.path().join("cache.jsonl");
    let first = dir.path().join("first.csv");
    ok(demfeed(&["rate", "--backend", "mock", "--corpus", p(&corpus), "--cache", p(&cache), "--out", p(&first)]));
    // an empty replay archive answers nothing, so every rating must come from the cache
    let archive = dir.path().join("empty.jsonl");
    std::fs::write(&archive, "").unwrap();
    let second = dir.path().join("second.csv");
    ok(demfeed(&[
        "rate", "--backend", "replay", "--fixture", p(&archive), "--corpus", p(&corpus), "--cache", p(&cache),
        "--out", p(&second),
    ]));
    assert_eq!(read(&first), read(&second));
}

#[test]
fn agreement_report_has_eight_rows_and_overall() {
    let dir = tempfile::tempdir().unwrap();
    let llm = dir.path().join("llm.jsonl");
    let corpus = fixture("corpus.jsonl");
    ok(demfeed(&["rate", "--backend", "mock", "--corpus", p(&corpus), "--out", p(&llm)]));
    let manual = fixture("manual.csv");
    let mut reports = Vec::new();
    for run in 0..2 {
        let report = dir.path().join(format!("report{run}.json"));
        ok(demfeed(&["agreement", "--a", p(&manual), "--b", p(&llm), "--out", p(&report)]));
        reports.push(read(&report));
    }
    assert_eq!(reports[0], reports[1]);
    let json: Value = serde_json::from_slice(&reports[0]).unwrap();
    let rows = json["per_variable"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for row in rows {
        assert!(row["alpha"].is_number() && row["accuracy"].is_number() && row["f1"].is_number());
    }
    for key in ["alpha", "spearman_rho", "mae"] {
        assert!(json["overall"][key].is_number(), "{key}");
    }
    assert_eq!(json["meta"]["truth_rater"], "manual");
    assert_eq!(json["meta"]["f1_average"], "macro");

    let table = ok(demfeed(&["agreement", "--a", p(&manual), "--b", p(&llm), "--format", "table"])).stdout;
    let table = String::from_utf8(table).unwrap();
    assert!(table.lines().any(|l| l.starts_with("partisan_animosity")));
    assert!(table.lines().any(|l| l.starts_with("total_8_24")));
}

fn totals(scores: &Path) -> std::collections::HashMap<String, u32> {
    let mut reader = csv::Reader::from_path(scores).unwrap();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), (1..=8).map(|i| r[i].parse::<u32>().unwrap()).sum())
        })
        .collect()
}

#[test]
fn rank_downranking_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("demfeed.toml");
    std::fs::write(
        &config,
        format!("corpus = {:?}\nfeed_size = 20\n", fixture("corpus.jsonl")),
    )
    .unwrap();
    let scores = fixture("manual.csv");
    let feed_path = dir.path().join("feed.json");
    let manifest = dir.path().join("manifest.json");
    let mut runs = Vec::new();
    for _ in 0..2 {
        ok(demfeed(&[
            "--config", p(&config), "rank", "--condition", "downranking", "--scores", p(&scores), "--out", p(&feed_path),
            "--manifest", p(&manifest),
        ]));
        runs.push((read(&feed_path), read(&manifest)));
    }
    assert_eq!(runs[0], runs[1]);
    let feed: Value = serde_json::from_slice(&runs[0].0).unwrap();
    assert_eq!(feed["condition"], "downranking");
    let totals = totals(&scores);
    let slot_totals: Vec<u32> = feed["slots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| totals[s["post_id"].as_str().unwrap()])
        .collect();
    assert_eq!(slot_totals.len(), 20);
    assert!(slot_totals.windows(2).all(|w| w[0] <= w[1]), "{slot_totals:?}");
}

#[test]
fn flags_beat_config_beat_environment() {
    let dir = tempfile::tempdir().unwrap();
    let scores = fixture("manual.csv");
    let corpus = fixture("corpus.jsonl");
    let feed_path = dir.path().join("feed.json");
    let slots = |args: &[&str], env: &[(&str, &str)]| {
        let mut full = vec!["rank", "--condition", "engagement", "--scores", p(&scores), "--out", p(&feed_path)];
        full.extend_from_slice(args);
        ok(demfeed_env(&full, env));
        let feed: Value = serde_json::from_slice(&read(&feed_path)).unwrap();
        feed["slots"].as_array().unwrap().len()
    };
    let env = [("DEMFEED_CORPUS", p(&corpus)), ("DEMFEED_FEED_SIZE", "10")];
    assert_eq!(slots(&[], &env), 10);

    let config = dir.path().join("demfeed.json");
    std::fs::write(&config, r#"{"feed_size": 12}"#).unwrap();
    assert_eq!(slots(&["--config", p(&config)], &env), 12);
    assert_eq!(slots(&["--config", p(&config), "--feed-size", "14"], &env), 14);

    // no corpus anywhere
    let out = demfeed(&["rank", "--condition", "engagement", "--scores", p(&scores), "--out", p(&feed_path)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("DEMFEED_CORPUS"));
    let out = demfeed_env(
        &["rank", "--condition", "engagement", "--scores", p(&scores), "--out", p(&feed_path)],
        &[("DEMFEED_CORPUS", p(&corpus)), ("DEMFEED_FEED_SIZE", "lots")],
    );
    assert_eq!(code(&out), 1);
}

const CROWDTANGLE: &str = "\
id,page_name,page_category,message,created_utc,shares,comments,likes,loves,wows,hahas,sads,angrys,cares,ideology
a1,Page A,POLITICAL_ORGANIZATION,First post,2023-01-02 10:00:00 EST,5,0,10,0,0,0,0,0,0,liberal
a2,Page B,POLITICIAN,Second post,2023-01-03T09:00:00Z,1,1,1,1,1,1,1,1,1,conservative
a3,Page C,POLITICAL_CANDIDATE,   ,2023-01-04 10:00:00,1,0,0,0,0,0,0,0,0,
a4,Page D,NEWS_SITE,Fourth post,2023-01-05 10:00:00,0,0,0,0,0,0,0,0,0,
a1,Page A,POLITICAL_ORGANIZATION,Duplicate id,2023-01-06 10:00:00,0,0,0,0,0,0,0,0,0,
";

#[test]
fn ingest_sample_and_import_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("export.csv");
    std::fs::write(&input, CROWDTANGLE).unwrap();
    let mut runs = Vec::new();
    for run in 0..2 {
        let corpus = dir.path().join(format!("corpus{run}.jsonl"));
        let report = dir.path().join(format!("report{run}.json"));
        ok(demfeed(&["ingest", "--input", p(&input), "--out", p(&corpus), "--report", p(&report)]));
        runs.push((read(&corpus), read(&report)));
    }
    assert_eq!(runs[0], runs[1]);
    let report: Value = serde_json::from_slice(&runs[0].1).unwrap();
    assert_eq!((report["kept"].as_u64(), report["dropped"].as_u64(), report["duplicates"].as_u64()), (Some(3), Some(1), Some(1)));
    let first: Value = serde_json::from_str(std::str::from_utf8(&runs[0].0).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["posted_at"], "2023-01-02T15:00:00Z");

    let political = dir.path().join("political.jsonl");
    ok(demfeed(&["ingest", "--input", p(&input), "--out", p(&political), "--political-only", "--report", p(&dir.path().join("r.json"))]));
    assert_eq!(read(&political).iter().filter(|&&b| b == b'\n').count(), 2);

    let corpus = fixture("corpus.jsonl");
    let mut samples = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("sample{run}.jsonl"));
        let dev = dir.path().join(format!("dev{run}.jsonl"));
        let test = dir.path().join(format!("test{run}.jsonl"));
        ok(demfeed(&[
            "sample", "--corpus", p(&corpus), "--buckets", "5", "--per-bucket", "4", "--seed", "3", "--out", p(&out),
            "--dev-size", "12", "--dev-out", p(&dev), "--test-out", p(&test),
        ]));
        samples.push((read(&out), read(&dev), read(&test)));
    }
    assert_eq!(samples[0], samples[1]);
    let lines = |b: &[u8]| b.iter().filter(|&&c| c == b'\n').count();
    assert_eq!((lines(&samples[0].0), lines(&samples[0].1), lines(&samples[0].2)), (20, 12, 8));
    assert_eq!(code(&demfeed(&["sample", "--corpus", p(&corpus), "--buckets", "10", "--per-bucket", "6", "--out", p(&dir.path().join("s.jsonl"))])), 1);

    let manual = fixture("manual.csv");
    let mut imports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("manual{run}.csv"));
        ok(demfeed(&["import-annotations", "--input", p(&manual), "--corpus", p(&corpus), "--out", p(&out)]));
        imports.push(read(&out));
    }
    assert_eq!(imports[0], imports[1]);
    assert_eq!(imports[0], std::fs::read(&manual).unwrap());
}

#[test]
fn import_rejects_bad_rows_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("coded.csv");
    std::fs::write(
        &input,
        "post_id,v1,v2,v3,v4,v5,v6,v7,v8\nfx001,1,1,1,1,1,1,1,1\nfx002,1,1,4,1,1,1,1,1\nghost,3,3,3,3,3,3,3,3\n",
    )
    .unwrap();
    let out = dir.path().join("clean.jsonl");
    let report = dir.path().join("rejected.json");
    let result = demfeed(&[
        "import-annotations", "--input", p(&input), "--corpus", p(&fixture("corpus.jsonl")), "--out", p(&out),
        "--report", p(&report),
    ]);
    assert_eq!(code(&result), 1);
    let report: Value = serde_json::from_slice(&read(&report)).unwrap();
    let lines: Vec<u64> = report["rejected"].as_array().unwrap().iter().map(|r| r["line"].as_u64().unwrap()).collect();
    assert_eq!(lines, [3, 4]);
    let clean = String::from_utf8(read(&out)).unwrap();
    assert_eq!(clean.lines().count(), 1);
    let row: Value = serde_json::from_str(clean.lines().next().unwrap()).unwrap();
    assert_eq!(row["post_id"], "fx001");
}

#[test]
fn export_events_reads_a_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    {
        let store = Store::open(&data, 0).unwrap();
        let policy = AssignmentPolicy::block(5);
        let t0 = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
        for i in 0..7 {
            let s = store.create_session(&format!("u{i}"), &policy, t0 + chrono::Duration::minutes(i)).unwrap();
            let events = [(1, EventKind::FeedOpened, 0), (2, EventKind::FeedClosed, 5000)]
                .map(|(seq, kind, ms)| EventInput {
                    post_id: None,
                    kind,
                    value: None,
                    client_ts: t0 + chrono::Duration::milliseconds(ms),
                    seq,
                });
            store.record_events(&s.session_id, events.to_vec(), |_| true, t0).unwrap();
        }
    }
    let mut dumps = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("events{run}.ndjson"));
        ok(demfeed(&["export-events", "--data-dir", p(&data), "--out", p(&out)]));
        dumps.push(read(&out));
    }
    assert_eq!(dumps[0], dumps[1]);
    let text = String::from_utf8(dumps[0].clone()).unwrap();
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!((header["type"].as_str(), header["sessions"].as_u64(), header["events"].as_u64()), (Some("header"), Some(7), Some(14)));
    assert!(text.lines().any(|l| l.contains("\"open_close_ms\":5000")));

    let filtered = ok(demfeed_env(
        &["export-events", "--condition", "engagement", "--from", "2024-05-01T12:00:00Z"],
        &[("DEMFEED_DATA_DIR", p(&data))],
    ))
    .stdout;
    let header: Value = serde_json::from_str(String::from_utf8(filtered).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["sessions"], 1);
    assert_eq!(code(&demfeed(&["export-events", "--data-dir", p(&dir.path().join("missing"))])), 1);
    assert_eq!(code(&demfeed(&["export-events", "--data-dir", p(&data), "--from", "yesterday"])), 1);
}
