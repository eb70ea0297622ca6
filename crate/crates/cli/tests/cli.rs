use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ccnsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccnsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ccnsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn topology_of_brooklyn_sized_borough() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["topology", "--synthetic", "n=1004,seed=3", "--out", s(dir.path())]);
    assert_eq!(rows(&dir.path().join("edges.csv")).len(), 1003);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("node_count = 1004"));
    assert!(summary.contains("avg_edge_length_m = "));
}

#[test]
fn single_node_topology() {
    let dir = tempfile::tempdir().unwrap();
    let nodes = dir.path().join("one.csv");
    fs::write(&nodes, "id,lat,lon,density\n7,40.6,-73.9,100\n").unwrap();
    ok(&["topology", "--nodes", s(&nodes), "--out", s(dir.path())]);
    let edges = fs::read_to_string(dir.path().join("edges.csv")).unwrap();
    assert_eq!(edges.trim(), "u,v,weight_m");
    assert!(fs::read_to_string(dir.path().join("summary.txt"))
        .unwrap()
        .contains("edge_count = 0"));
}

#[test]
fn unreadable_input_exits_2() {
    let out = ccnsim(&["topology", "--nodes", "/definitely/missing.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn usage_and_validation_errors_exit_2() {
    assert_eq!(ccnsim(&["explode"]).status.code(), Some(2));
    assert_eq!(ccnsim(&["place", "--synthetic", "n=10", "--k", "11"]).status.code(), Some(2));
    assert_eq!(ccnsim(&["simulate", "--policy", "arc"]).status.code(), Some(2));
    assert_eq!(
        ccnsim(&["sweep", "--axis", "colour", "--values", "1"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "capacity = 0\n").unwrap();
    assert_eq!(ccnsim(&["simulate", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = ccnsim(&["topology", "--synthetic", "n=5", "--out", s(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn place_writes_requested_cdc_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["place", "--synthetic", "n=1004,seed=2", "--k", "25", "--out", s(dir.path())]);
    let placement = rows(&dir.path().join("placement.csv"));
    assert_eq!(placement.len(), 1004);
    let mut cdcs: Vec<&str> = placement.iter().map(|r| r[2].as_str()).collect();
    cdcs.sort_unstable();
    cdcs.dedup();
    assert_eq!(cdcs.len(), 25);
    assert_eq!(rows(&dir.path().join("curve.csv")).len(), 40);

    ok(&["place", "--synthetic", "n=50,seed=2", "--k", "1", "--out", s(dir.path())]);
    let placement = rows(&dir.path().join("placement.csv"));
    assert!(placement.iter().all(|r| r[2] == placement[0][2]));
}

/// Max perpendicular distance to the end-to-end chord, smaller k on ties.
fn chord_elbow(curve: &[(usize, f64)]) -> usize {
    let (x0, y0) = (curve[0].0 as f64, curve[0].1);
    let (x1, y1) = (curve[curve.len() - 1].0 as f64, curve[curve.len() - 1].1);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let mut best = (curve[0].0, -1.0);
    for &(k, y) in curve {
        let d = (dy * (k as f64 - x0) - dx * (y - y0)).abs() / dx.hypot(dy);
        if d > best.1 + 1e-12 {
            best = (k, d);
        }
    }
    best.0
}

#[test]
fn elbow_on_clustered_fixture() {
    // Four dense, far-apart clusters: the cost curve falls steeply to k = 4.
    let dir = tempfile::tempdir().unwrap();
    let nodes = dir.path().join("clusters.csv");
    let mut text = String::from("id,lat,lon,density\n");
    let centers = [(40.58, -74.03), (40.58, -73.87), (40.73, -74.03), (40.73, -73.87)];
    let mut id = 0;
    for (lat, lon) in centers {
        for i in 0..8 {
            let (a, b) = ((i % 3) as f64 * 0.0008, (i / 3) as f64 * 0.0008);
            text.push_str(&format!("{id},{},{},1000\n", lat + a, lon + b));
            id += 1;
        }
    }
    fs::write(&nodes, text).unwrap();
    let out = ok(&[
        "place", "--nodes", s(&nodes), "--k", "elbow", "--set", "k_max=16", "--out", s(dir.path()),
    ]);
    let curve: Vec<(usize, f64)> = rows(&dir.path().join("curve.csv"))
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    let expected = chord_elbow(&curve);
    assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("k = {expected} ")));
    let mut cdcs: Vec<String> = rows(&dir.path().join("placement.csv")).into_iter().map(|r| r[2].clone()).collect();
    cdcs.sort();
    cdcs.dedup();
    assert_eq!(cdcs.len(), expected);
}

fn total_row(path: &Path) -> Vec<String> {
    rows(path).into_iter().find(|r| r[0] == "TOTAL").expect("TOTAL row")
}

const SMALL: [&str; 8] = ["--synthetic", "n=150,seed=4", "--k", "10", "--neighborhood", "9", "--requests", "20000"];

#[test]
fn slfu_beats_lru_at_uniform_popularity() {
    let dir = tempfile::tempdir().unwrap();
    let mut latency = Vec::new();
    for policy in ["lru", "slfu"] {
        let out = dir.path().join(policy);
        let mut args = vec!["simulate", "--policy", policy, "--set", "s_range=0,0", "--out", s(&out)];
        args.extend(SMALL);
        ok(&args);
        latency.push(total_row(&out.join("metrics.csv"))[2].parse::<f64>().unwrap());
    }
    assert!(latency[1] < latency[0], "{latency:?}");
}

#[test]
fn zero_requests_write_header_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--synthetic", "n=40", "--k", "4", "--neighborhood", "3", "--requests", "0", "--out", s(dir.path())]);
    let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(
        text.trim(),
        "window,requests,avg_latency_hops,hit_local,hit_neighbor,origin_ratio,exchanged_records"
    );
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let mut args = vec!["simulate", "--policy", "shat_lfu", "--chart", "--seed", "9", "--out", s(&out)];
        args.extend(SMALL);
        ok(&args);
        files.push((
            fs::read(out.join("metrics.csv")).unwrap(),
            fs::read(out.join("latency.svg")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.cfg");
    fs::write(
        &cfg,
        "# small run\nsynthetic = n=60,seed=1\nk = 5\nneighborhood = 4\nrequests = 5000\nwindow = 50\npolicy = plfu\n",
    )
    .unwrap();
    let out = ok(&["simulate", "--config", s(&cfg), "--policy", "lfu", "--out", s(dir.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("lfu:"));
    // 5000 requests in windows of 50, plus the TOTAL row.
    assert_eq!(rows(&dir.path().join("metrics.csv")).len(), 101);
}

#[test]
fn neighborhood_sweep_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sweep", "--synthetic", "n=400,seed=5", "--k", "25", "--policy", "slfu", "--requests", "40000",
        "--set", "s_range=0,0", "--axis", "neighborhood", "--values", "0,4,8,16,24", "--out", s(dir.path()),
    ]);
    let latency: Vec<f64> = rows(&dir.path().join("sweep.csv")).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(latency.len(), 5);
    assert!(latency.windows(2).all(|w| w[1] <= w[0]), "{latency:?}");
}

#[test]
fn s_sweep_over_all_policies() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sweep", "--synthetic", "n=60,seed=5", "--k", "5", "--neighborhood", "4", "--requests", "2000",
        "--axis", "s", "--values", "0,0.5,1,1.5,2", "--policies", "lru,lfu,fifo,rr,mru,plfu,slfu,shat_lfu",
        "--out", s(dir.path()),
    ]);
    let sweep = rows(&dir.path().join("sweep.csv"));
    assert_eq!(sweep.len(), 5 * 8);
    assert_eq!(sweep[0][..2], ["0".to_string(), "lru".to_string()]);
}

#[test]
fn capacity_sweep_saturates() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--policy", "lru", "--axis", "capacity", "--values", "20,600", "--out", s(dir.path())];
    args.extend(SMALL);
    ok(&args);
    let sweep = rows(&dir.path().join("sweep.csv"));
    let hit = |i: usize| sweep[i][3].parse::<f64>().unwrap();
    assert!(hit(1) >= hit(0));
}
