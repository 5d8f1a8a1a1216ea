//! End-to-end behaviour of the `dtphs` binary.

use std::path::Path;
use std::process::{Command, Output};

fn dtphs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtphs")).args(args).output().expect("spawn dtphs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn tableau_gauss_two_stage() {
    let out = dtphs(&["tableau", "--scheme", "gauss", "--stages", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("field,i,j,value\n"));
    let r3 = 3f64.sqrt();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.rsplit(',').next().unwrap().parse().unwrap()
    };
    assert!((value("c,1,,") - (0.5 - r3 / 6.0)).abs() < 1e-15);
    assert!((value("A,1,2,") - (0.25 - r3 / 6.0)).abs() < 1e-15);
    assert!((value("b,2,,") - 0.5).abs() < 1e-15);
    assert!(text.contains("c1,,,true"));
}

#[test]
fn tableau_lobatto_dumps_both_coefficient_sets() {
    let out = dtphs(&["tableau", "--scheme", "lobatto", "--stages", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("Ahat,")).count(), 9);
    let m13: f64 = text.lines().find_map(|l| l.strip_prefix("M,1,3,")).unwrap().parse().unwrap();
    assert!((m13 + 1.0 / 30.0).abs() < 1e-15);
    assert!(text.contains("c1,,,false"));
}

#[test]
fn unsupported_stage_count_is_a_usage_error() {
    let out = dtphs(&["tableau", "--scheme", "gauss", "--stages", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let out = dtphs(&["simulate", "--h", "0.7"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dtphs(&["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dtphs(&["converge", "--x0", "1,1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_reports_step() {
    let out = dtphs(&["simulate", "--model", "rigid-body", "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 0"));
}

#[test]
fn lossless_preset_writes_both_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dtphs(&["simulate", "--preset", "lossless", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let traj = read(tmp.path(), "traj.csv");
    assert!(traj.starts_with("t,x1,x2,u,y,H\n"));
    assert_eq!(traj.lines().count(), 182);
    assert!(!traj.contains('\r'));
    let energy = read(tmp.path(), "energy.csv");
    assert!(energy.starts_with("k,t_k,dH_tilde,dH_bar,supplied,dH_exact\n"));
    assert_eq!(energy.lines().count(), 181);
    // Energy before the pulse stays at 1/2.
    let h = column(&traj, "H");
    let t = column(&traj, "t");
    for (t, h) in t.iter().zip(&h) {
        if *t <= 8.0 {
            assert!((h - 0.5).abs() < 1e-14);
        }
    }
}

#[test]
fn damped_energy_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dtphs(&["simulate", "--preset", "damped", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let h = column(&read(tmp.path(), "traj.csv"), "H");
    assert_eq!(h.len(), 101);
    assert!(h.windows(2).all(|w| w[1] <= w[0]));
    let energy = read(tmp.path(), "energy.csv");
    assert!(energy.lines().next().unwrap().ends_with(",dissipated_stagewise"));
}

#[test]
fn rigid_body_energy_is_constant() {
    let out = dtphs(&["simulate", "--model", "rigid-body", "--h", "0.01", "--t-end", "10"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("t,x1,x2,x3,H\n"));
    let h = column(&text, "H");
    assert!(h.iter().all(|v| (v - 11.0 / 12.0).abs() < 1e-11));
}

#[test]
fn retained_stages_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = dtphs(&["simulate", "--scheme", "gauss", "--stages", "3", "--t-end", "1", "--retain-stages", "--out", dir]);
    assert!(out.status.success());
    let stages = read(tmp.path(), "stages.csv");
    assert!(stages.starts_with("k,i,t,x1,x2,f1,f2,e1,e2,u1\n"));
    assert_eq!(stages.lines().count(), 1 + 10 * 3);
}

#[test]
fn check_pass_and_fail() {
    let out = dtphs(&["check", "--model", "rigid-body", "--scheme", "gauss", "--stages", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("condition,C1\n") && text.contains("status,PASS\n"));

    let out = dtphs(&["check", "--model", "rigid-body", "--scheme", "lobatto", "--stages", "3"]);
    assert_eq!(out.status.code(), Some(4));
    let text = stdout(&out);
    assert!(text.contains("condition,none\n") && text.contains("status,FAIL\n"));
    let residual: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max_power_residual,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual > 0.0);
}

#[test]
fn converge_emits_slope_rows() {
    let out = dtphs(&["converge", "--scheme", "gauss", "--h-list", "0.5,0.25,0.1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scheme,s,h,N,dH_tot_ref,dH_tilde_tot,dH_bar_tot,eps_tilde,eps_bar");
    assert_eq!(lines.len(), 1 + 3 * 4);
    assert_eq!(lines.iter().filter(|l| l.contains(",slope,")).count(), 3);
    assert!(lines[1].starts_with("gauss,1,5.0000000000000000e-1,36,"));
}

#[test]
fn output_is_deterministic() {
    let args = ["converge", "--scheme", "lobatto", "--h-list", "0.5,0.25,0.2"];
    let a = dtphs(&args);
    let b = dtphs(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let a = dtphs(&["simulate", "--preset", "damped", "--feedback-mode", "portlevel"]);
    let b = dtphs(&["simulate", "--preset", "damped", "--feedback-mode", "portlevel"]);
    assert_eq!(a.stdout, b.stdout);
}
