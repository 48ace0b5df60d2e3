use std::fs;
use std::process::{Command, Output};

fn se2sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_se2sim"))
        .args(args)
        .output()
        .expect("spawn se2sim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = se2sim(&["run", "example1", "--out", out, "--duration", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("example1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,node,theta,x,y,omega,vx,vy,u_theta,u_x,err_pose,err_twist"));
    // two nodes, 1001 samples each
    assert_eq!(lines.count(), 2 * 1001);
}

#[test]
fn run_reads_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.scenario");
    fs::write(
        &path,
        r#"
[scenario]
name = "pair"
mode = "consensus"
duration = 0.5
dt = 0.001
output = "custom.csv"

[[nodes]]
id = 0
theta = 0.0
x = 0.0
y = 0.0
vx = 1.0

[[nodes]]
id = 1
theta = "pi/4"
x = -3.0
y = 2.0
"#,
    )
    .unwrap();
    let o = se2sim(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("custom.csv").exists());
}

#[test]
fn verify_passes_and_fails_by_tolerance() {
    let ok = se2sim(&["verify", "example1", "--check", "terminal_err", "--tol", "7.1"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("PASS"));
    let bad = se2sim(&["verify", "example1", "--check", "terminal_err", "--tol", "1e-6"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn validation_errors_exit_one() {
    let missing = se2sim(&["run", "/nonexistent/nothing.scenario"]);
    assert_eq!(missing.status.code(), Some(1));
    let metric = se2sim(&["verify", "example1", "--check", "no_such_metric", "--tol", "1"]);
    assert_eq!(metric.status.code(), Some(1));
    let dt = se2sim(&["run", "example1", "--dt=-1", "--out", "/tmp"]);
    assert_eq!(dt.status.code(), Some(1));
    let usage = se2sim(&["run"]);
    assert_eq!(usage.status.code(), Some(1));
    assert_eq!(se2sim(&["--help"]).status.code(), Some(0));
}

#[test]
fn divergence_exits_two() {
    // the shipped gains are far too stiff for a 0.5 s step
    let dir = tempfile::tempdir().unwrap();
    let o = se2sim(&["run", "example5", "--dt", "0.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn examples_lists_shipped_scenarios() {
    let o = se2sim(&["examples"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in ["example1", "example2", "example3_pos_pi", "example3_neg_pi", "example4", "example5"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
    assert!(text.contains("terminal_err"));
}
