mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use common::*;
use gmap::cli::format::{parse_model_str, write_model};
use proptest::prelude::*;
use rand::Rng;

fn gmap(args: &[&str]) -> (String, String, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_gmap"))
        .args(args)
        .output()
        .unwrap();
    (
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
        out.status.code().unwrap(),
    )
}

fn write_temp(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gmap-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const TWO_VARS: &str = "\
GMAP 1
VARS 2 2
FACTORS 3
1 0
1 0
1 1
0 1
2 0 1
2 0 0 1
STATS 1 ADD
2
1 0
0 1
1 1
0 1
";

#[test]
fn solve_prints_the_optimum() {
    let path = write_temp("two.gmap", TWO_VARS);
    let (out, _, code) = gmap(&[
        "solve",
        path.to_str().unwrap(),
        "--mode",
        "slack",
        "--loss-eta",
        "identity",
    ]);
    assert_eq!(code, 0);
    assert_eq!(out, "p* 4\nF 2\nG 2\ny 1 1\n");
}

#[test]
fn exit_codes() {
    let path = write_temp("codes.gmap", TWO_VARS);
    let file = path.to_str().unwrap();
    let (_, err, code) = gmap(&["solve", file, "--mode", "gate", "--gate", "eq:5"]);
    assert_eq!(code, 2);
    assert_eq!(err.lines().count(), 1);
    let (_, err, code) = gmap(&["solve", "/nonexistent/file.gmap"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error: "));
    assert_eq!(err.lines().count(), 1);
    let bad = write_temp("bad.gmap", "GMAP 1\nVARS 2 2\nFACTORS 1\n1 0\n1 2 3\n");
    let (_, err, code) = gmap(&["solve", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn engine_and_oracle_commands_agree() {
    let mut r = rng(21);
    let base = energy_model(&mut r, Topology::Width2, 6, 3, 0.1);
    let model = with_random_stats(&mut r, &base, 2);
    let path = write_temp("agree.gmap", &write_model(&model, &BTreeMap::new()));
    let file = path.to_str().unwrap();
    for extra in [
        vec!["--mode", "margin", "--loss-eta", "identity"],
        vec!["--mode", "slack", "--loss-eta", "identity"],
        vec!["--mode", "gate", "--gate", "ge:1"],
        vec!["--mode", "general", "--loss-eta", "identity"],
    ] {
        let mut solve = vec!["solve", file];
        solve.extend(&extra);
        let mut oracle = vec!["oracle", file];
        oracle.extend(&extra);
        let a = gmap(&solve);
        let b = gmap(&oracle);
        assert_eq!(a.2, b.2);
        assert_eq!(a.0, b.0, "{extra:?}");
    }
}

#[test]
fn tree_flags_do_not_change_the_answer() {
    let mut r = rng(22);
    let base = energy_model(&mut r, Topology::Star, 8, 2, 0.0);
    let model = with_random_stats(&mut r, &base, 1);
    let path = write_temp("flags.gmap", &write_model(&model, &BTreeMap::new()));
    let file = path.to_str().unwrap();
    let reference = gmap(&["solve", file, "--mode", "slack", "--loss-eta", "identity"]);
    for flag in [["--no-reduce"], ["--reshape"], ["--parallel"], ["--root=2"]] {
        let got = gmap(&[
            "solve",
            file,
            "--mode",
            "slack",
            "--loss-eta",
            "identity",
            flag[0],
        ]);
        assert_eq!(got, reference, "{flag:?}");
    }
}

#[test]
fn json_output_parses() {
    let path = write_temp("json.gmap", TWO_VARS);
    let (out, _, code) = gmap(&["solve", path.to_str().unwrap(), "--json", "--diagnostics"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v.get("y").is_some() && v.get("value").is_some());
}

#[test]
fn kbest_reports_infeasible_round() {
    let path = write_temp("kbest.gmap", TWO_VARS);
    let (out, err, code) = gmap(&[
        "kbest",
        path.to_str().unwrap(),
        "--k",
        "3",
        "--margins",
        "2,2",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("round 3"), "{err}");
    assert!(!out.is_empty());
}

#[test]
fn bench_without_timing_is_reproducible() {
    let args = [
        "bench",
        "zero-one",
        "--M",
        "4:12:4",
        "--reps",
        "2",
        "--no-timing",
    ];
    let a = gmap(&args);
    assert_eq!(a, gmap(&args));
    assert_eq!(a.2, 0);
    assert!(a.0.starts_with("task,M,N,seconds,max_l_states,messages\n"));
    assert_eq!(a.0.lines().count(), 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_files_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.gen_range(1..=6);
        let topology = TOPOLOGIES[r.gen_range(0..3)];
        let base = energy_model(&mut r, topology, m, 3, 0.2);
        let p = r.gen_range(0..=2);
        let model = with_random_stats(&mut r, &base, p);
        let mut h = BTreeMap::new();
        if r.gen_bool(0.5) {
            h.insert("mode".to_string(), "slack".to_string());
        }
        let text = write_model(&model, &h);
        let parsed = parse_model_str(&text).unwrap();
        prop_assert_eq!(&parsed.model, &model);
        prop_assert_eq!(&parsed.h, &h);
        prop_assert_eq!(write_model(&parsed.model, &parsed.h), text);
    }
}
