use std::path::Path;
use std::process::Command;

const BALL: &str = "name = ball\nmode = unnormalized\nn = 2\n[grid]\nm = 201\n[presets]\ndomain = ball(1)\n\
                    initial = euclidean(0.5)\n[solver]\nhorizon = 0.5\n[continuation]\neps_ladder = 0.1, 0.05, 0.025\n";

fn kflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kflow")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(dir: &Path, scenario: &str, out: &str, extra: &[&str]) -> std::process::Output {
    let file = write(dir, "s.kfs", scenario);
    let out = dir.join(out);
    let mut args = vec!["run", file.as_str(), "--quiet", "--out", out.to_str().unwrap()];
    args.extend(extra);
    kflow(&args)
}

#[test]
fn presets_lists_registry() {
    let out = kflow(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["ball(R)", "perturbed-ball(a,R)", "hyperbolic-bg"] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn run_passes_and_check_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), BALL, "res", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for f in ["report.json", "report.txt", "scenario.kfs", "unnormalized_eps0.025.csv", "unnormalized_eps0.1.json"] {
        assert!(res.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(res.join("unnormalized_eps0.05.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with(&format!("# kflow {}", env!("CARGO_PKG_VERSION"))) && first.contains("fingerprint="));

    let check = kflow(&["check", res.to_str().unwrap(), "--quiet"]);
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stderr));
}

#[test]
fn rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), BALL, "a", &[]).status.code(), Some(0));
    assert_eq!(run(dir.path(), BALL, "b", &[]).status.code(), Some(0));
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for name in names {
        let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn zero_horizon_is_not_applicable() {
    let dir = tempfile::tempdir().unwrap();
    let text = BALL.replace("horizon = 0.5", "horizon = 0");
    assert_eq!(run(dir.path(), &text, "z", &[]).status.code(), Some(0));
    let report = std::fs::read_to_string(dir.path().join("z/report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    for c in report["checks"].as_array().unwrap() {
        let name = c["name"].as_str().unwrap();
        if ["c0_precise", "time_derivative_upper", "schwarz_lemma", "completeness", "epsilon_cauchy"].contains(&name) {
            assert_eq!(c["status"], "not-applicable", "{name}");
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("z/unnormalized_eps0.1.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "y,rho,u@t=0.0,udot@t=0.0");
}

#[test]
fn invalid_scenario_lists_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = BALL.replace("n = 2", "n = 9").replace("0.1, 0.05, 0.025", "0.05, 0.1");
    let out = run(dir.path(), &text, "x", &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("dimension out of range [1,4]"), "{err}");
    assert!(err.contains("strictly decreasing"), "{err}");
}

#[test]
fn eps_ladder_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), BALL, "l", &["--eps-ladder", "0.2,0.1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("l/unnormalized_eps0.2.csv").exists());
    assert!(!dir.path().join("l/unnormalized_eps0.025.csv").exists());
    let bad = run(dir.path(), BALL, "l2", &["--eps-ladder", "0.1,0.2"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn newton_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = "mode = normalized\nn = 2\n[grid]\nm = 51\n[presets]\ndomain = ball(1)\ninitial = euclidean(0.5)\n\
                [solver]\ndt_max = 1.0\nnewton_max_iter = 1\nnewton_tol = 1e-13\nhorizon = 5\n\
                [continuation]\neps_ladder = 0.1\n";
    let out = run(dir.path(), text, "f", &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("Newton failure") && err.contains("halvings"), "{err}");
}

#[test]
fn oracle_writes_limit() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "o.kfs", &BALL.replace("ball(1)\n", "perturbed-ball(0.5, 1)\n"));
    let out_dir = dir.path().join("o");
    let out = kflow(&["oracle", &file, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("oracle.csv")).unwrap();
    assert!(csv.starts_with("y,rho,u@t=inf"));
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn missing_directory_is_io_failure() {
    assert_eq!(kflow(&["check", "/nonexistent/kflow-dir", "--quiet"]).status.code(), Some(4));
}

#[test]
fn bundled_scenarios_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        kahler_flow::scenario::parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert_eq!(count, 3);
}
