use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn seedtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seedtree")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = seedtree(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

const HEADER: &str = "run_id,c,f,locality,m,access_cost,reconfig_cost,total_cost,mean_attempts,mean_mru_slack,lower_bound,ratio,oblivious_cost,static_opt_cost";

#[test]
fn simulate_writes_header_and_rows() {
    let csv = ok(&["simulate", "--capacity", "2", "--items", "63", "--requests", "2000", "--locality", "0.6", "--repeats", "2"]);
    assert!(csv.starts_with("# seedtree "));
    assert!(csv.contains("# simulate capacity=2"));
    let rows = data_lines(&csv);
    assert_eq!(rows[0], HEADER);
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        let access: u64 = cols[5].parse().unwrap();
        let reconfig: u64 = cols[6].parse().unwrap();
        let total: u64 = cols[7].parse().unwrap();
        assert_eq!(total, access + reconfig);
        let ratio: f64 = cols[11].parse().unwrap();
        assert!(ratio <= 43.0);
    }
}

#[test]
fn output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        ok(&["sweep", "--capacity", "2,4", "--occupancy", "0.5", "--locality", "0.3", "--items", "63", "--requests", "1000", "--output", p.to_str().unwrap()]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn three_by_three_sweep_has_nine_rows_per_repeat() {
    let csv = ok(&[
        "sweep", "--capacity", "2,3,4", "--occupancy", "0.25,0.5,0.75", "--locality", "0.3", "--items", "31", "--requests", "300",
        "--repeats", "2",
    ]);
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 1 + 18);
    let keys: Vec<(usize, String)> = rows[1..]
        .iter()
        .map(|r| {
            let cols: Vec<&str> = r.split(',').collect();
            (cols[1].parse().unwrap(), cols[2].to_string())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.parse::<f64>().unwrap().total_cmp(&b.1.parse::<f64>().unwrap())));
    assert_eq!(keys, sorted);
}

#[test]
fn gen_trace_then_ingest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    ok(&["gen-trace", "--items", "50", "--requests", "400", "--locality", "0", "--seed", "3", "--output", path.to_str().unwrap()]);
    let original = fs::read_to_string(&path).unwrap();
    assert!(original.starts_with("#seedtree-trace v1 n=50"));
    let again = ok(&["ingest", "--trace", path.to_str().unwrap()]);
    assert_eq!(again, original);
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn ingest_pairs_keeps_most_frequent_source() {
    let dir = tempfile::tempdir().unwrap();
    // source 7 sends 4 requests, source 2 sends 3
    let fixture = write(dir.path(), "pairs.csv", "2,10\n7,40\n7,41\n2,11\n7,40\n2,12\n7,42\n");
    let out = ok(&["ingest", "--trace", &fixture, "--format", "pairs"]);
    let body: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(out.starts_with("#seedtree-trace v1 n=3"));
    assert_eq!(body, vec!["0", "1", "0", "2"]);
}

#[test]
fn fresh_export_has_two_plus_c_sections() {
    let dump = ok(&["export-matchings", "--capacity", "3", "--items", "40"]);
    assert!(dump.starts_with("# seedtree-matchings c=3"));
    let sections: Vec<&str> = dump.lines().filter(|l| l.starts_with('[')).collect();
    assert_eq!(sections, vec!["[topo-left]", "[topo-right]", "[membership-0]", "[membership-1]", "[membership-2]"]);
}

#[test]
fn export_after_replay() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    ok(&["gen-trace", "--items", "30", "--requests", "200", "--locality", "0.5", "--output", path.to_str().unwrap()]);
    let dump = ok(&["export-matchings", "--capacity", "2", "--trace", path.to_str().unwrap()]);
    let members = dump
        .split("[membership-")
        .skip(1)
        .map(|s| s.lines().skip(1).filter(|l| !l.is_empty() && !l.starts_with('[')).count())
        .sum::<usize>();
    assert_eq!(members, 30);
}

#[test]
fn errors_exit_nonzero_with_diagnostic() {
    for args in [
        &["simulate", "--capacity", "0"][..],
        &["simulate", "--occupancy", "1.5"],
        &["simulate", "--locality", "0.95", "--items", "10", "--requests", "20"],
        &["ingest", "--trace", "/nonexistent/file"],
        &["sweep", "--capacity", "2,x"],
    ] {
        let out = seedtree(args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.trace", "#seedtree-trace v1 n=2\n0\nnope\n1\n");
    let out = seedtree(&["ingest", "--trace", &bad]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn file_trace_sweep_leaves_locality_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    ok(&["gen-trace", "--items", "20", "--requests", "100", "--output", path.to_str().unwrap()]);
    let csv = ok(&["sweep", "--capacity", "2,4", "--trace", path.to_str().unwrap()]);
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(3) == Some("")));
}
