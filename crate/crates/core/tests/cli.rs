use std::path::Path;
use std::process::Command;

fn jkoflow(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_jkoflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

const SMALL: &[&str] = &["run", "--preset", "fig4_hard_weighted", "--nx", "12", "--ny", "12", "--steps", "2", "--max-iters", "100"];

#[test]
fn run_writes_snapshots_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--out", "res"]);
    let out = jkoflow(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for k in 0..=2 {
        for name in [format!("snap_{k}.csv"), format!("rho1_{k}.ppm"), format!("rho2_{k}.ppm"), format!("sum_{k}.ppm")] {
            assert!(res.join(&name).exists(), "{name}");
        }
    }
    let ppm = std::fs::read(res.join("sum_2.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n12 12\n255\n"));
    assert_eq!(ppm.len(), b"P6\n12 12\n255\n".len() + 3 * 144);
    let diag = std::fs::read_to_string(res.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 4);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = SMALL.to_vec();
        args.extend(["--out", out]);
        assert!(jkoflow(dir.path(), &args).status.success());
    }
    for name in ["snap_2.csv", "sum_2.ppm", "rho2_1.ppm", "diagnostics.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = jkoflow(dir.path(), &["run", "--preset", "fig9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig6_hard_weighted_obstacle"));

    std::fs::write(
        dir.path().join("crowded.toml"),
        "[energy]\nmode = \"hard\"\n[initial.rho1]\nconstant = 0.6\n[initial.rho2]\nconstant = 0.6\n",
    )
    .unwrap();
    let out = jkoflow(dir.path(), &["run", "--config", "crowded.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1.2"));

    std::fs::write(dir.path().join("typo.toml"), "[alg2]\nrr = 1.0\n").unwrap();
    let out = jkoflow(dir.path(), &["run", "--config", "typo.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rr"));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = jkoflow(dir.path(), &["run", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--preset", "--config", "--out", "--nx", "--ny", "--h", "--steps", "--eps", "--mode", "--m", "--alpha1", "--alpha2",
        "--r", "--nt", "--tol", "--max-iters", "--stride", "--vmax",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}

#[test]
fn oracle_projection_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = jkoflow(dir.path(), &["oracle", "--suite", "projection", "--count", "5"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS projection"));
}
