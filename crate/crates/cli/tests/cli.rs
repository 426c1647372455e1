use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cpm_core::{fixtures, io, is_feasible, is_g_acceptable};
use tempfile::TempDir;

fn cpm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpm"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CPM_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn fixture_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    io::write_bundle(&fixtures::two_agent_example(), &dir.path().join("fx")).unwrap();
    dir
}

#[test]
fn gen_writes_a_100_agent_bundle() {
    let dir = TempDir::new().unwrap();
    let o = cpm(
        &["gen", "--out", "b", "--n", "100", "--rho-p", "0.5", "--rho-op", "0", "--truncation", "10", "--seed", "7"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("n=100 locations=100"));

    let outcomes = fs::read_to_string(dir.path().join("b/outcomes.csv")).unwrap();
    let lines: Vec<&str> = outcomes.lines().collect();
    assert_eq!(lines.len(), 101);
    assert!(lines.iter().all(|l| l.split(',').count() == 100));

    let prefs = fs::read_to_string(dir.path().join("b/preferences.csv")).unwrap();
    let lines: Vec<&str> = prefs.lines().collect();
    assert_eq!(lines.len(), 101);
    assert_eq!(lines[0].split(',').count(), 10);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 10));
}

#[test]
fn gen_round_trips_and_defaults_seed_to_zero() {
    let dir = TempDir::new().unwrap();
    for (out, seed) in [("a", None), ("b", Some("0"))] {
        let mut args = vec!["gen", "--out", out, "--n", "12", "--rho-p", "0.3", "--rho-op", "-0.5"];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert_eq!(code(&cpm(&args, dir.path())), 0);
    }
    let a = io::read_bundle(&dir.path().join("a")).unwrap();
    let b = io::read_bundle(&dir.path().join("b")).unwrap();
    assert_eq!(a, b);

    let sim = cpm_core::simgen::SimConfig {
        n: 12,
        rho_p: 0.3,
        rho_op: -0.5,
        truncation_k: None,
        seed: 0,
    };
    let direct = io::quantize_instance(&cpm_core::simgen::generate_instance(&sim).unwrap()).unwrap();
    assert_eq!(a, direct);
}

#[test]
fn gen_minimal_instance() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&cpm(&["gen", "--out", "m", "--n", "2"], dir.path())), 0);
    let inst = io::read_bundle(&dir.path().join("m")).unwrap();
    assert_eq!((inst.n(), inst.num_locations()), (2, 2));
}

#[test]
fn gmax_of_fixtures() {
    let dir = fixture_dir();
    let o = cpm(&["gmax", "fx"], dir.path());
    assert_eq!(stdout(&o).trim(), "0.9");

    io::write_bundle(&fixtures::constant_scores(3, &[2, 2], 0.25), &dir.path().join("c")).unwrap();
    assert_eq!(stdout(&cpm(&["gmax", "c"], dir.path())).trim(), "0.25");
}

#[test]
fn gmax_reports_infeasible_bundle() {
    let dir = fixture_dir();
    let meta = dir.path().join("fx/meta.json");
    let text = fs::read_to_string(&meta).unwrap().replace("\"n\": 2", "\"n\": 4");
    fs::write(&meta, text).unwrap();
    let outcomes = dir.path().join("fx/outcomes.csv");
    fs::write(&outcomes, "A,B,C\n0.1,0.5,0.9\n0.1,0.9,0.5\n0.1,0.1,0.1\n0.2,0.2,0.2\n").unwrap();
    let prefs = dir.path().join("fx/preferences.csv");
    fs::write(&prefs, "rank_1\nA\nA\n\n\n").unwrap();
    let o = cpm(&["gmax", "fx"], dir.path());
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("instance infeasible"));
}

#[test]
fn parse_errors_exit_3_with_position() {
    let dir = fixture_dir();
    fs::write(dir.path().join("fx/outcomes.csv"), "A,B,C\n0.1,0.5,0.9\n0.1,oops,0.5\n").unwrap();
    let o = cpm(&["gmax", "fx"], dir.path());
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("outcomes.csv:3:5"), "{err}");
}

#[test]
fn assign_worked_example() {
    let dir = fixture_dir();
    let o = cpm(&["assign", "fx", "--g-bar", "0.45", "--order", "1,2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("matching.csv")).unwrap();
    assert_eq!(
        csv,
        "agent,location,score,rank_of_assigned\n1,A,0.1,1\n2,B,0.9,3\n"
    );
    assert!(dir.path().join("trace.csv").exists());

    let o = cpm(
        &["assign", "fx", "--g-bar", "0.45", "--order", "2,1", "--matching", "m21.csv", "--trace", "t21.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let inst = fixtures::two_agent_example();
    let m = io::read_matching_csv(&dir.path().join("m21.csv"), &inst).unwrap();
    assert_eq!(m.as_slice(), &[2, 0]);
}

#[test]
fn assign_threshold_infeasible_and_clamp() {
    let dir = fixture_dir();
    let o = cpm(&["assign", "fx", "--g-bar", "0.95", "--order", "1,2"], dir.path());
    assert_eq!(code(&o), 2);
    let o = cpm(&["assign", "fx", "--g-bar", "0.95", "--order", "1,2", "--clamp-to-gmax"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("g_bar=0.9 "));
}

#[test]
fn assign_random_order_is_seeded() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&cpm(&["gen", "--out", "b", "--n", "30", "--rho-p", "0.5", "--seed", "4"], dir.path())), 0);
    let run = |name: &str| {
        let o = cpm(
            &["assign", "b", "--g-bar", "0.5", "--order", "random:seed=3", "--matching", name, "--trace", "t.csv"],
            dir.path(),
        );
        assert_eq!(code(&o), 0);
        fs::read_to_string(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("m1.csv"), run("m2.csv"));
}

#[test]
fn emitted_matchings_recheck_on_load() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&cpm(&["gen", "--out", "b", "--n", "40", "--rho-p", "0.5", "--truncation", "5", "--seed", "9"], dir.path())), 0);
    let inst = io::read_bundle(&dir.path().join("b")).unwrap();
    for (g, order) in [("0.3", "identity"), ("0.7", "decreasing_variance"), ("0.75", "pseudo:noise=0.8:seed=1:candidates=10")] {
        let o = cpm(&["assign", "b", "--g-bar", g, "--order", order, "--clamp-to-gmax"], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m = io::read_matching_csv(&dir.path().join("matching.csv"), &inst).unwrap();
        let g_used: f64 = stdout(&o)
            .split_whitespace()
            .find_map(|t| t.strip_prefix("g_bar="))
            .unwrap()
            .parse()
            .unwrap();
        assert!(is_feasible(&m, &inst));
        assert!(is_g_acceptable(&m, &inst, g_used));
    }
}

#[test]
fn sweep_above_gmax_is_all_infeasible() {
    let dir = fixture_dir();
    let o = cpm(&["sweep", "fx", "--grid", "0.95,1.0"], dir.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("false")));
}

#[test]
fn sweep_rows_match_single_runs() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&cpm(&["gen", "--out", "b", "--n", "30", "--rho-p", "0.5", "--seed", "2"], dir.path())), 0);
    let o = cpm(&["sweep", "b", "--grid-steps", "4", "--out", "s.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let batch = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    for row in batch.lines().skip(1) {
        let g = row.split(',').next().unwrap();
        let single = stdout(&cpm(&["sweep", "b", "--grid", g], dir.path()));
        assert_eq!(single.lines().nth(1), Some(row));
    }
}

#[test]
fn reorder_table_structure() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&cpm(&["gen", "--out", "b", "--n", "30", "--rho-p", "0.5", "--seed", "5"], dir.path())), 0);
    let o = cpm(&["reorder", "b", "--grid-steps", "2", "--orders", "7"], dir.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    // 3 grid points, each with 7 random + 2 variance + 3 summary rows.
    assert_eq!(rows.len(), 3 * 12);
    assert_eq!(rows.iter().filter(|r| r[1] == "random").count(), 21);
    assert_eq!(rows.iter().filter(|r| r[1].ends_with("_variance")).count(), 6);
    assert_eq!(rows.iter().filter(|r| r[1].starts_with("random_m")).count(), 9);
}

#[test]
fn verify_passes_and_self_test_fails() {
    let dir = TempDir::new().unwrap();
    let o = cpm(&["verify", "--instances", "40"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains(",fail"));

    for mode in ["sign-flip", "omit-held", "tolerance=0.35"] {
        let o = cpm(&["verify", "--instances", "40", "--self-test", mode], dir.path());
        assert_eq!(code(&o), 4, "{mode}");
        assert!(stdout(&o).contains(",fail"), "{mode}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = fixture_dir();
    fs::write(dir.path().join("c.toml"), "instance = \"fx\"\ng_bar = 0.95\norder = \"2,1\"\n").unwrap();
    assert_eq!(code(&cpm(&["--config", "c.toml", "assign"], dir.path())), 2);
    let o = cpm(&["--config", "c.toml", "assign", "--g-bar", "0.45"], dir.path());
    assert_eq!(code(&o), 0);
    let m = io::read_matching_csv(&dir.path().join("matching.csv"), &fixtures::two_agent_example()).unwrap();
    assert_eq!(m.as_slice(), &[2, 0]);

    fs::write(dir.path().join("bad.toml"), "colour = 1\n").unwrap();
    assert_eq!(code(&cpm(&["--config", "bad.toml", "gmax", "fx"], dir.path())), 1);
}
