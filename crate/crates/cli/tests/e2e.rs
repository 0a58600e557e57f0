use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn hamloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamloop"))
        .args(args)
        .output()
        .expect("spawn hamloop")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = hamloop(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}\n{}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Drops the timing column of detect output.
fn without_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
        .collect()
}

fn pairs(csv: &str) -> Vec<(usize, usize, u32)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = hamloop(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = hamloop(&["probe", "--r", "0", "--m", "2", "--d", "2", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let o = hamloop(&["detect", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("[default: 30]"));
}

#[test]
fn probe_small_case() {
    let o = ok(&["probe", "--r", "0", "--m", "2", "--d", "2"]);
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.5);
    // every one of four substrings hit: 4! / 4^4
    let o = ok(&["probe", "--r", "0", "--m", "4", "--d", "4"]);
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 1.0 - 24.0 / 256.0);
}

#[test]
fn probe_monte_carlo_reports_on_stderr() {
    let o = ok(&["--seed", "3", "probe", "--r", "1", "--m", "8", "--d", "20", "--trials", "20000"]);
    let exact: f64 = stdout(&o).trim().parse().unwrap();
    let err = stderr(&o);
    let mc: f64 = err.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((exact - mc).abs() < 0.02, "{exact} vs {err}");
}

#[test]
fn probe_rejects_zero_tables() {
    let o = hamloop(&["probe", "--r", "0", "--m", "0", "--d", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_recommends_eight_tables_radius_two_offline() {
    let o = ok(&["analyze-params", "--min-accuracy", "0.8", "--mode", "offline"]);
    assert!(stderr(&o).contains("recommended (m, r) = (8, 2)"), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("r,m,R,E,E_fixed\n"));
    // r in 0..=3 and m in 4..=32
    assert_eq!(csv.lines().count(), 1 + 4 * 29);
}

#[test]
fn analyze_unreachable_accuracy_is_a_usage_error() {
    let o = hamloop(&["analyze-params", "--min-accuracy", "0.9999", "--max-radius", "0", "--max-tables", "8"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn detect_then_eval_on_mini_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.csv");
    let det = dir.path().join("det.csv");
    let mld = data("mini.mld");
    let gt = data("mini_gt.csv");
    let o = ok(&[
        "detect", "--input", s(&mld), "--window", "10", "--out", s(&det), "--dump-scores", s(&dump),
    ]);
    assert!(stderr(&o).contains("frames=40 skipped=0"));
    let text = fs::read_to_string(&det).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("frame_id,best_candidate,best_score,t_q_us\n"));

    for scores in [&dump, &det] {
        let o = ok(&["eval", "--scores", s(scores), "--gt", s(&gt)]);
        assert!(stderr(&o).contains("recall_at_full_precision=1 gt_queries=3"), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("threshold,precision,recall,tp,fp\n"));
    }
}

#[test]
fn detect_output_does_not_depend_on_thread_count() {
    let mld = data("mini.mld");
    let run = |threads: &str| {
        let o = ok(&["--threads", threads, "detect", "--input", s(&mld), "--window", "10"]);
        without_timing(&stdout(&o))
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn corrupt_descriptor_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mld");
    let bytes = fs::read(data("mini.mld")).unwrap();
    fs::write(&bad, &bytes[..100]).unwrap();
    let o = hamloop(&["detect", "--input", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("offset"), "{}", stderr(&o));

    let missing = dir.path().join("missing.mld");
    let o = hamloop(&["detect", "--input", s(&missing)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_ground_truth_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.csv");
    fs::write(&gt, "query_id,match_id\n14,x\n").unwrap();
    let det = dir.path().join("det.csv");
    ok(&["detect", "--input", s(&data("mini.mld")), "--out", s(&det)]);
    let o = hamloop(&["eval", "--scores", s(&det), "--gt", s(&gt)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sparse_match_agrees_with_brute_force_on_a_revisit() {
    let mld = data("mini.mld");
    let base = ["match", "--frame-a", s(&mld), "--index-a", "0", "--frame-b", s(&mld), "--index-b", "14"];
    let sparse = pairs(&stdout(&ok(&base)));
    let mut brute_args = base.to_vec();
    brute_args.push("--brute-force");
    let brute = pairs(&stdout(&ok(&brute_args)));
    assert!(!sparse.is_empty());
    for m in &sparse {
        assert!(brute.contains(m), "{m:?} not found by brute force");
    }
    let mut mutual_args = base.to_vec();
    mutual_args.push("--mutual");
    let mutual = pairs(&stdout(&ok(&mutual_args)));
    assert!(mutual.iter().all(|m| sparse.contains(m)));
}

#[test]
fn match_out_of_range_frame_is_a_data_error() {
    let mld = data("mini.mld");
    let o = hamloop(&["match", "--frame-a", s(&mld), "--index-a", "40", "--frame-b", s(&mld)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let make = |tag: &str, seed: &str| {
        let out = dir.path().join(format!("{tag}.mld"));
        let gt = dir.path().join(format!("{tag}.csv"));
        ok(&[
            "--seed", seed, "synth", "--out", s(&out), "--gt-out", s(&gt), "--spec",
            "frames=40,features=30,revisits=3,min_gap=11",
        ]);
        (fs::read(out).unwrap(), fs::read_to_string(gt).unwrap())
    };
    let a = make("a", "7");
    assert_eq!(a, make("b", "7"));
    assert_ne!(a.0, make("c", "8").0);
    assert_eq!(a.0, fs::read(data("mini.mld")).unwrap());
    assert_eq!(a.1, fs::read_to_string(data("mini_gt.csv")).unwrap());
}

#[test]
fn synth_flags_override_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.mld");
    let gt = dir.path().join("x.csv");
    let o = ok(&[
        "synth", "--out", s(&out), "--gt-out", s(&gt), "--spec", "frames=40 features=10", "--frames", "20",
        "--revisits", "1", "--min-gap", "5",
    ]);
    assert!(stderr(&o).contains("frames=20 revisits=1"), "{}", stderr(&o));
}

#[test]
fn synth_rejects_unknown_spec_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.mld");
    let gt = dir.path().join("x.csv");
    let o = hamloop(&["synth", "--out", s(&out), "--gt-out", s(&gt), "--spec", "colour=red"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_sets_values_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "d0 = 40\n\n[detect]\nwindow = 10\n").unwrap();
    let mld = data("mini.mld");
    let reference = ok(&["detect", "--input", s(&mld), "--window", "10", "--d0", "40"]);
    let from_file = ok(&["--config", s(&cfg), "detect", "--input", s(&mld)]);
    assert_eq!(without_timing(&stdout(&reference)), without_timing(&stdout(&from_file)));

    let flag_wins = ok(&["--config", s(&cfg), "detect", "--input", s(&mld), "--window", "30", "--d0", "50"]);
    let defaults = ok(&["detect", "--input", s(&mld)]);
    assert_eq!(without_timing(&stdout(&flag_wins)), without_timing(&stdout(&defaults)));
    assert_ne!(without_timing(&stdout(&reference)), without_timing(&stdout(&defaults)));
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[detect]\nnot_a_flag = 1\n").unwrap();
    let o = hamloop(&["--config", s(&cfg), "detect", "--input", s(&data("mini.mld"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not_a_flag") || stderr(&o).contains("not-a-flag"));
}
