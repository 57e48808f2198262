use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn roa(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roa"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("ROA_SOLVER")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest written");
    serde_json::from_str(&text).unwrap()
}

fn output_hashes(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

/// The predator-prey model with one line of its text replaced.
fn variant(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = std::fs::read_to_string(example("predator_prey.toy")).unwrap();
    assert!(text.contains(from));
    let path = dir.join("variant.toy");
    std::fs::write(&path, text.replace(from, to)).unwrap();
    path
}

#[test]
fn check_passes_on_predator_prey() {
    let dir = tempfile::tempdir().unwrap();
    let model = example("predator_prey.toy");
    let o = roa(dir.path(), &["check", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    for row in ["stability", "reach/reach", "seed/seed-decrease", "archimedean-d"] {
        let line = out.lines().find(|l| l.starts_with(row)).expect(row);
        assert!(line.contains(" pass "), "{line}");
    }
    let m = manifest(dir.path());
    assert_eq!(m["subcommand"], "check");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["seeds"]["run"], 42);
    let hash = m["inputs"][model.to_str().unwrap()].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(dir.path().join("check.json").exists());
}

#[test]
fn unstable_origin_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let model = variant(dir.path(), "\"0.5*x1 - x1*x2\"", "\"1.5*x1 - x1*x2\"");
    let o = roa(&dir.path().join("out"), &["check", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let line = stdout(&o).lines().find(|l| l.starts_with("stability")).unwrap().to_string();
    assert!(line.contains(" fail "), "{line}");
}

#[test]
fn missing_disturbance_ball_warns_with_radius() {
    let dir = tempfile::tempdir().unwrap();
    let model = variant(dir.path(), "h = [\"d1^2 - 0.01\"]", "h = [\"d1 - 0.1\", \"-d1 - 0.1\"]");
    let o = roa(&dir.path().join("out"), &["check", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let err = stderr(&o);
    assert!(err.contains("warning: archimedean-d"), "{err}");
    assert!(err.contains("R_D = 0.010000"), "{err}");
}

#[test]
fn usage_and_parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = roa(dir.path(), &["solve", "--degree"]);
    assert_eq!(o.status.code(), Some(2));
    let o = roa(dir.path(), &["oracle", example("predator_prey.toy").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "oracle needs --vi or --sim");

    let bad = dir.path().join("bad.toy");
    std::fs::write(&bad, "name = \"x\"\n[system]\nn = 2\nm = 1\nf = [\"x1 +* x2\", \"x2\"]\n").unwrap();
    let o = roa(&dir.path().join("out"), &["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(manifest(&dir.path().join("out"))["exit_code"], 2);

    let o = roa(dir.path(), &["check", "/definitely/not/here.toy"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_roa"))
        .args(["--out-dir", dir.path().to_str().unwrap(), "solve"])
        .arg(example("predator_prey.toy"))
        .env("ROA_SOLVER", "no-such-backend")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-backend"));
}

#[test]
fn solve_refuses_failed_checks_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let model = example("lotka_volterra3.toy");
    let o = roa(dir.path(), &["solve", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    assert!(!dir.path().join("cert.json").exists());
}

#[test]
fn unfinished_solve_exits_1_and_compile_artifacts_are_reproducible() {
    let model = example("predator_prey.toy");
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let o = roa(
                dir.path(),
                &["solve", model.to_str().unwrap(), "--degree", "4", "--max-iterations", "2", "--emit-sdp"],
            );
            assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
            assert!(stdout(&o).contains("status      unknown"));
            dir
        })
        .collect();
    let (a, b) = (output_hashes(runs[0].path()), output_hashes(runs[1].path()));
    let names: Vec<&str> = a.iter().map(|(p, _)| p.as_str()).collect();
    assert_eq!(names, ["sdp.txt", "sdp.json", "cert.json"]);
    assert_eq!(a, b);
}

#[test]
fn solve_certify_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let model = example("predator_prey.toy");
    let model = model.to_str().unwrap();
    let solve_dir = dir.path().join("solve");
    let o = roa(&solve_dir, &["solve", model, "--degree", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("objective   p* = "), "{out}");
    let timings = manifest(&solve_dir)["timings"].clone();
    let stages: Vec<&str> = timings.as_array().unwrap().iter().map(|t| t[0].as_str().unwrap()).collect();
    for s in ["build", "compile", "solve", "extract"] {
        assert!(stages.contains(&s), "{stages:?}");
    }
    let cert = solve_dir.join("cert.json");
    let cert = cert.to_str().unwrap();

    let cdir = dir.path().join("certify");
    let o = roa(&cdir, &["certify", cert, model, "--samples", "50", "--policies", "5", "--horizon", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict     pass"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(cdir.join("certify.json")).unwrap()).unwrap();
    assert_eq!(report["states_tested"], 50);
    assert_eq!(report["stayed_in_x"], report["trajectories"]);

    let pdir = dir.path().join("plot");
    let o = roa(
        &pdir,
        &["plot-data", cert, model, "--resolution", "41", "--overlay", "--overlay-points", "21"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let grid = std::fs::read_to_string(pdir.join("sign_k4.csv")).unwrap();
    assert_eq!(grid.lines().count(), 42);
    assert!(grid.lines().nth(21).unwrap().split(',').any(|c| c == "1"));
    let overlay = std::fs::read_to_string(pdir.join("overlay.csv")).unwrap();
    assert_eq!(overlay.lines().next(), Some("x1,x2,k4,oracle"));
    assert_eq!(overlay.lines().count(), 1 + 21 * 21);

    // A certificate is tied to the model text it was computed from.
    let other = example("lotka_volterra3.toy");
    let o = roa(&dir.path().join("mismatch"), &["certify", cert, other.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_outputs_are_reproducible_across_thread_counts() {
    let model = example("predator_prey.toy");
    let hashes: Vec<_> = ["1", "3"]
        .iter()
        .map(|t| {
            let dir = tempfile::tempdir().unwrap();
            let o = roa(
                dir.path(),
                &["--threads", t, "oracle", model.to_str().unwrap(), "--sim", "--points", "31", "--random-policies", "5"],
            );
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            let log = std::fs::read_to_string(dir.path().join("vi_log.csv")).unwrap();
            assert!(log.starts_with("iteration,delta\n"));
            let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("vi.json")).unwrap()).unwrap();
            assert_eq!(summary["converged"], true);
            assert_eq!(summary["v_at_origin_node"], 0.0);
            output_hashes(dir.path())
        })
        .collect();
    assert_eq!(hashes[0].len(), 4);
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn slices_of_a_three_state_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = example("lotka_volterra3.toy");
    let o = roa(
        dir.path(),
        &[
            "oracle",
            model.to_str().unwrap(),
            "--sim",
            "--points",
            "11",
            "--random-policies",
            "2",
            "--slice",
            "x1=0",
            "--slice",
            "3=0",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["sim_mask_x1_0.csv", "sim_mask_x3_0.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().count(), 12, "{f}");
    }
}
