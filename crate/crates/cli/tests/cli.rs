//! End-to-end checks of the binary: exit codes, report envelopes, and
//! bit-identical reruns.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cubetype"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty() && !l.starts_with("kind,"))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn tmp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("cubetype-test-{}-{name}", std::process::id()))
}

#[test]
fn ratio_l1_grid_is_all_ones() {
    let out = run(&["ratio", "--catalog", "rademacher-l1", "--p", "2", "--n", "2..8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("# cubetype "));
    assert!(text.contains("# seed: 0"));
    assert!(text.contains("# config: {\"command\":\"ratio\""));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 7);
    for row in &rows {
        assert_eq!(row[0], "b");
        let ratio: f64 = row[5].parse().unwrap();
        assert!((ratio - 1.0).abs() <= 1e-9, "ratio column: {row:?}");
    }
}

#[test]
fn ratio_l2_single_point() {
    let out = run(&["ratio", "--catalog", "rademacher-l2", "--p", "2", "--n", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][5], "0.25");
}

#[test]
fn ratio_reruns_are_bit_identical() {
    let args = [
        "ratio", "--catalog", "diag-log", "--p", "1.5,2", "--n", "4..6", "--kind", "b,e,a",
        "--format", "json",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let value: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(value["tool"], "cubetype");
    assert_eq!(value["seed"], 0);
    assert_eq!(value["config"]["command"], "ratio");
    // 3 dimensions x (2 b-rows + 2 e-rows + 1 a-row).
    assert_eq!(value["report"].as_array().unwrap().len(), 15);
}

#[test]
fn ratio_random_records_seed() {
    let out = run(&[
        "ratio", "--catalog", "random", "--space", "l2:3", "--seed", "9", "--p", "2", "--n",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("# seed: 9"));
    let rows = data_rows(&text);
    assert_eq!(rows[0][9], "9", "seed column: {:?}", rows[0]);
}

#[test]
fn ratio_rejects_unknown_family_and_caps() {
    let out = run(&["ratio", "--catalog", "no-such", "--p", "2", "--n", "4"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("rademacher-l1"), "error lists families: {err}");

    let out = run(&["ratio", "--catalog", "rademacher-l1", "--p", "2", "--n", "14"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("--max-n"));
}

#[test]
fn ratio_reads_map_json() {
    let map = cubetype::catalog::canonical_l1(4).unwrap();
    let path = tmp_path("map.json");
    std::fs::write(&path, cubetype::spaces::map_to_json(&map).unwrap()).unwrap();
    let out = run(&["ratio", "--map", path.to_str().unwrap(), "--p", "2", "--n", "4"]);
    std::fs::remove_file(&path).ok();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(data_rows(&stdout(&out))[0][5], "1.0");
}

#[test]
fn rademacher_lq_needs_q() {
    let out = run(&["ratio", "--catalog", "rademacher-lq", "--p", "2", "--n", "4"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&[
        "ratio", "--catalog", "rademacher-lq", "--q", "2", "--p", "2", "--n", "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(data_rows(&stdout(&out))[0][5], "0.25");
}

#[test]
fn catalog_lists_and_describes() {
    let out = run(&["catalog", "list"]);
    assert_eq!(out.status.code(), Some(0));
    let names: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(
        names,
        ["rademacher-l1", "rademacher-l2", "rademacher-lq", "diag-log", "random"]
    );

    let out = run(&["catalog", "describe", "diag-log"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("1/log(i+1)"));

    let out = run(&["catalog", "describe", "random"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("--seed"));

    let out = run(&["catalog", "describe", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("diag-log"));
}

#[test]
fn flat_constant_command() {
    let out = run(&["flat", "--p", "2", "--n", "3", "--Phi", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let phi_star = value["report"]["constant"]["phi_star"].as_f64().unwrap();
    assert!((phi_star - 14.0 / 15.0).abs() <= 1e-9);
    assert_eq!(value["config"]["command"], "flat");
}

#[test]
fn extract_passes_on_canonical_and_writes_file() {
    let path = tmp_path("extract.json");
    let out = run(&[
        "extract", "--catalog", "rademacher-l1", "--tree", "2,2,2", "--D", "2",
        "--theta-frac", "0.5", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert!(text.ends_with('\n'));
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["report"]["verdict"], true);
    assert_eq!(value["report"]["dist_h"], 1.0);
    assert_eq!(value["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn extract_fail_certificate_exits_two() {
    let out = run(&[
        "extract", "--catalog", "rademacher-l2", "--tree", "2,2,2", "--D", "2",
        "--theta-frac", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["verdict"], false);
    assert_eq!(value["report"]["failed_stage"], "near_extremality");
}

#[test]
fn rigidity_hypothesis_fail_exits_two() {
    let out = run(&[
        "rigidity", "--catalog", "rademacher-l2", "--p", "2", "--l", "4", "--a", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["hypothesis_holds"], false);
    // The antipodal moment of the scaled l2 map is T^p/4, and the ratio is
    // taken against (1 - a) T^p.
    let ratio = value["report"]["hypothesis_ratio"].as_f64().unwrap();
    assert!((ratio - 0.25 / 0.9).abs() <= 1e-9, "hypothesis_ratio = {ratio}");
}

#[test]
fn rigidity_passes_on_l1() {
    let out = run(&[
        "rigidity", "--catalog", "rademacher-l1", "--p", "2", "--l", "4", "--a", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["scale"], 2.0);
    assert_eq!(value["report"]["pair_min"], 1.0);
    assert_eq!(value["report"]["pair_max"], 1.0);
}

#[test]
fn extract5_and_concentrate_pass_on_canonical() {
    let out = run(&["extract5", "--catalog", "rademacher-l1", "--l", "2", "--k", "3"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["verdict"], true);
    assert_eq!(value["report"]["witness"], 0);

    let out = run(&["concentrate", "--catalog", "rademacher-l1", "--l", "2", "--k", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["verdict"], true);
    let intervals = value["report"]["intervals"].as_array().unwrap();
    assert_eq!(intervals.len(), 3);
    assert_eq!(intervals[0]["id"], "root");
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["ratio", "--p", "2", "--n", "4"]);
    assert_eq!(out.status.code(), Some(1), "missing source is a usage error");

    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["ratio", "--catalog", "rademacher-l1", "--p", "2", "--n", "0..3"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["flat", "--p", "2", "--n", "3"]);
    assert_eq!(out.status.code(), Some(1), "missing required flag");
}

#[test]
fn extract_reruns_are_bit_identical() {
    let args = [
        "extract", "--catalog", "rademacher-l1", "--tree", "2,2,2", "--D", "2",
        "--theta-frac", "0.5",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
}
