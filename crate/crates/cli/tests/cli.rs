use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn recon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recon")).args(args).output().expect("failed to launch recon")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "recon failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sphere(dir: &TempDir, count: usize) -> PathBuf {
    let path = dir.path().join("sphere.xyz");
    let n = count.to_string();
    ok(recon(&["gen-sphere", "--count", &n, "--seed", "3", "--output", s(&path)]));
    path
}

#[test]
fn gen_sphere_writes_unit_oriented_points() {
    let dir = TempDir::new().unwrap();
    let path = sphere(&dir, 250);
    let text = fs::read_to_string(&path).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 250);
    for r in &rows {
        assert_eq!(r.len(), 6);
        let p = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let n = (r[3] * r[3] + r[4] * r[4] + r[5] * r[5]).sqrt();
        assert!((p - 1.0).abs() < 1e-12 && (n - 1.0).abs() < 1e-12);
    }
    // same seed, same file
    let again = dir.path().join("again.xyz");
    ok(recon(&["gen-sphere", "--count", "250", "--seed", "3", "--output", s(&again)]));
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn gen_sphere_hole_removes_the_cap() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("hole.xyz");
    ok(recon(&["gen-sphere", "--count", "2000", "--hole-cap-deg", "30", "--seed", "1", "--output", s(&path)]));
    let cos = 30f64.to_radians().cos();
    let text = fs::read_to_string(&path).unwrap();
    let n = text.lines().count();
    assert!(n > 1700 && n < 2000, "{n}");
    for l in text.lines() {
        let z: f64 = l.split_whitespace().nth(2).unwrap().parse().unwrap();
        assert!(z < cos);
    }
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let input = sphere(&dir, 300);
    let mut meshes = Vec::new();
    for threads in ["1", "4", "1"] {
        let out = dir.path().join(format!("m{}.obj", meshes.len()));
        let stdout = ok(recon(&[
            "--input", s(&input), "--output", s(&out), "--grid", "33", "--lambda", "0.01", "--threads", threads,
        ]));
        assert!(stdout.contains("converged"), "{stdout}");
        meshes.push(fs::read(&out).unwrap());
    }
    assert!(!meshes[0].is_empty());
    assert!(meshes.iter().all(|m| *m == meshes[0]));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let input = sphere(&dir, 300);
    let from_file = dir.path().join("file.obj");
    let from_flag = dir.path().join("flag.obj");
    let reference = dir.path().join("ref.obj");
    let log = dir.path().join("energy.csv");
    let report = dir.path().join("report.tsv");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# small run\ninput = {}\noutput = {}\ngrid = 25\nmax_iters = 400\nlambda = 0.01\nlog = {}\nreport = {}\n",
            s(&input),
            s(&from_file),
            s(&log),
            s(&report)
        ),
    )
    .unwrap();

    let stdout = ok(recon(&["--config", s(&cfg)]));
    assert!(stdout.contains("grid           25x"), "{stdout}");
    assert!(fs::read_to_string(&log).unwrap().starts_with("iteration,energy\n"));
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 6);

    // the flag replaces the file's grid and output
    let stdout = ok(recon(&["--config", s(&cfg), "--grid", "33", "--output", s(&from_flag)]));
    assert!(stdout.contains("grid           33x"), "{stdout}");
    ok(recon(&[
        "--input", s(&input), "--output", s(&reference), "--grid", "33", "--max-iters", "400", "--lambda", "0.01",
    ]));
    assert_eq!(fs::read(&from_flag).unwrap(), fs::read(&reference).unwrap());
    assert_ne!(fs::read(&from_flag).unwrap(), fs::read(&from_file).unwrap());
}

#[test]
fn ply_output_and_view_direction() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("plane.xyz");
    // positions only; a single view direction orients them
    let mut text = String::new();
    for i in 0..12 {
        for j in 0..12 {
            text.push_str(&format!("{} {} 0\n", i as f64 / 11.0, j as f64 / 11.0));
        }
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("plane.ply");
    let stdout = ok(recon(&[
        "--input", s(&input), "--output", s(&out), "--grid", "20", "--viewdir", "0,0,-1", "--max-iters", "200",
    ]));
    assert!(stdout.contains("samples        144"), "{stdout}");
    assert!(fs::read(&out).unwrap().starts_with(b"ply\nformat binary_little_endian 1.0\n"));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("none.xyz");
    let out = dir.path().join("o.obj");
    let r = recon(&["--input", s(&missing), "--output", s(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("error:"));
    assert!(!out.exists());

    let bad = dir.path().join("bad.xyz");
    fs::write(&bad, "1 2\n").unwrap();
    assert!(!recon(&["--input", s(&bad), "--output", s(&out)]).status.success());

    let input = sphere(&dir, 50);
    for args in [
        vec!["--mode", "l1"],
        vec!["--lambda", "-1"],
        vec!["--threads", "0"],
        vec!["--viewdir", "0,0"],
    ] {
        let mut full = vec!["--input", s(&input), "--output", s(&out), "--grid", "9"];
        full.extend(args.iter());
        assert!(!recon(&full).status.success(), "{args:?} was accepted");
    }
    let cfg = dir.path().join("typo.cfg");
    fs::write(&cfg, "gird = 32\n").unwrap();
    let r = recon(&["--config", s(&cfg), "--input", s(&input), "--output", s(&out)]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown key"));
    // no output at all
    assert!(!recon(&["--input", s(&input)]).status.success());
    // the subcommand does not mix with reconstruction flags
    assert!(!recon(&["--grid", "9", "gen-sphere", "--count", "5", "--seed", "1", "--output", "x"]).status.success());
}
