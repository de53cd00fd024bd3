use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn twdb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twdb")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(twdb(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(twdb(&["gen", "--out", "s.jsonl", "--set", "nonsense=1"], dir.path()).status.code(), Some(1));
    assert_eq!(twdb(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn io_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = twdb(&["ingest", "--run-id", "1", "--input", "missing.jsonl", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = twdb(&["gen", "--out", "s.jsonl", "--set", "geo_fraction=2.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = twdb(&["htm", "lookup", "--lon", "0", "--lat", "91"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn end_to_end_through_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = twdb(&["gen", "--out", "s.jsonl.gz", "--truth", "t.json", "--users", "200", "--tweets", "3000"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("t.json")).unwrap()).unwrap();

    let o = twdb(&["ingest", "--run-id", "1", "--input", "s.jsonl.gz", "--out", "ing", "--chunk-docs", "700"], d);
    assert!(o.status.success());
    assert!(stdout(&o).contains(&format!("documents\t{}", truth["documents"])));

    assert!(twdb(&["load", "--root", "wh", "ing/bulk"], d).status.success());
    assert!(twdb(&["merge", "--root", "wh"], d).status.success());
    // indexes were not built yet
    assert_eq!(twdb(&["query", "--root", "wh", "q4", "--run", "1", "--lon", "-74", "--lat", "40.72", "--radius", "10"], d).status.code(), Some(2));
    assert!(twdb(&["index", "--root", "wh", "--unfiltered"], d).status.success());

    let q1 = stdout(&twdb(&["query", "--root", "wh", "q1", "--run", "1"], d));
    let total: u64 = q1.lines().map(|l| l.split('\t').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, truth["statuses"].as_u64().unwrap());

    let q2 = stdout(&twdb(&["query", "--root", "wh", "q2", "--run", "1", "--term", "Network"], d));
    let days = truth["term_daily"].as_object().unwrap();
    assert_eq!(q2.lines().count(), days.len());

    let mutual = twdb(&["query", "--root", "wh", "edges", "--run", "1", "--kind", "mention", "--view", "mutual"], d);
    assert!(mutual.status.success());
    let bad = twdb(&["query", "--root", "wh", "q3", "--run", "1", "--kind", "bogus"], d);
    assert_eq!(bad.status.code(), Some(1));
    let geo = twdb(&["query", "--root", "wh", "export-geo", "--run", "1", "--circle", "-74", "40.72", "10"], d);
    let fc: serde_json::Value = serde_json::from_slice(&geo.stdout).unwrap();
    assert_eq!(fc["type"], "FeatureCollection");

    assert!(twdb(&["cluster", "--root", "wh"], d).status.success());
    let grid = twdb::regions::grid_geojson(-180.0, -80.0, 16.0, 10);
    fs::write(d.join("grid.geojson"), grid).unwrap();
    let loaded = stdout(&twdb(&["regions", "load", "--file", "grid.geojson"], d));
    assert_eq!(loaded.lines().count(), 100);
    assert!(twdb(&["regions", "assign", "--root", "wh", "--file", "grid.geojson"], d).status.success());
    let dump = stdout(&twdb(&["dump", "--root", "wh", "--table", "cluster_summary"], d));
    assert!(!dump.is_empty());
    assert_eq!(twdb(&["dump", "--root", "wh", "--table", "nope"], d).status.code(), Some(1));

    let disc = twdb(&["query", "--root", "wh", "discovery", "--fit-from", "1325376000"], d);
    assert!(disc.status.success());
    assert!(String::from_utf8_lossy(&disc.stderr).contains("t0_days="));

    let lookup = stdout(&twdb(&["htm", "lookup", "--lon", "-74", "--lat", "40.72", "--level", "5"], d));
    let id: u64 = lookup.split('\t').next().unwrap().parse().unwrap();
    // five 2-bit child digits below root N0 (id 12), which spans lon -90..0
    assert_eq!(id >> 10, 12);
    assert!(stdout(&twdb(&["htm", "trixel", &id.to_string()], d)).lines().count() == 3);
    assert!(stdout(&twdb(&["htm", "cover", "--lon", "-74", "--lat", "40.72", "--radius", "10"], d)).lines().count() >= 1);
    let lang = stdout(&twdb(&["langid", "identify", "the quick brown fox jumps over the lazy dog and runs away"], d));
    assert!(lang.starts_with("en\t"), "{lang}");
}

#[test]
fn pipeline_subcommand_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(twdb(&["gen", "--out", "s.jsonl", "--users", "100", "--tweets", "1500"], d).status.success());
    fs::write(d.join("p.conf"), "input = s.jsonl\nroot = wh\nchunk_docs = 400\n").unwrap();
    let o = twdb(&["pipeline", "p.conf", "--set", "fail_at=merge"], d);
    assert_eq!(o.status.code(), Some(2));
    let o = twdb(&["pipeline", "p.conf", "--workers", "1"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("parse\t-\tskipped"));
    assert!(out.lines().any(|l| l.starts_with("merge\t")));
    let log = fs::read_to_string(d.join("wh/work/s.jsonl/run.log")).unwrap();
    assert!(log.starts_with("step\trows\tseconds\n"));
}
