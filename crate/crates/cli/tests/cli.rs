use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn socnav() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_socnav"));
    c.env_remove("SOCNAV_OUT_DIR");
    c
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_fixtures() {
    for name in ["warehouse.yaml", "cafe.yaml", "head_on.yaml"] {
        let o = socnav().args(["validate", "--scenario"]).arg(scenarios().join(name)).output().unwrap();
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(stdout(&o).contains(": ok ("), "{}", stdout(&o));
    }
}

#[test]
fn validate_reports_offending_agent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.yaml");
    std::fs::write(
        &path,
        "map: {empty: {width: 10, height: 10, resolution: 0.1}}\nagents:\n  - {id: 1, pose: '1,1,0'}\n  - {id: 5, pose: '2,2,0', desired_speed: -1}\n",
    )
    .unwrap();
    let o = socnav().args(["validate", "--scenario"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("agent 5"), "{}", stderr(&o));
}

#[test]
fn missing_scenario_file_fails() {
    let o = socnav().args(["validate", "--scenario", "/nonexistent/x.yaml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    for args in [vec!["run", "--bogus"], vec!["frobnicate"], vec!["serve"], vec!["serve", "--tcp", "1", "--stdio"]] {
        let o = socnav().args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn list_metrics_prints_the_suite() {
    let o = socnav().arg("list-metrics").output().unwrap();
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(|l| l.split_whitespace().next().unwrap().to_string()).collect();
    assert!(names.len() >= 28, "{} metrics", names.len());
    for n in ["path_length", "social_work", "min_time_to_collision", "surprise_event_count"] {
        assert!(names.iter().any(|m| m == n), "{n}");
    }
}

#[test]
fn list_nodes_covers_registry() {
    let o = socnav().arg("list-nodes").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    for n in ["GoTo", "ConversationFormation", "FollowAgent", "SaySomething", "IsSpeaking", "IsLookingAtMe"] {
        assert!(text.lines().any(|l| l.starts_with(n)), "{n} missing");
    }
}

#[test]
fn run_then_eval_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let o = socnav()
        .args(["run", "--scenario"])
        .arg(scenarios().join("head_on.yaml"))
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["trajectories.csv", "events.csv", "metrics.yaml"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let eval_dir = dir.path().join("eval");
    let o = socnav()
        .arg("eval")
        .arg("--log")
        .arg(run_dir.join("trajectories.csv"))
        .arg("--events")
        .arg(run_dir.join("events.csv"))
        .arg("--scenario")
        .arg(scenarios().join("head_on.yaml"))
        .arg("--out")
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read(run_dir.join("metrics.yaml")).unwrap();
    let b = std::fs::read(eval_dir.join("metrics.yaml")).unwrap();
    assert!(a == b, "eval metrics.yaml differs from the run's");
}

#[test]
fn run_overrides_and_record_windows() {
    let dir = tempfile::tempdir().unwrap();
    let o = socnav()
        .args(["run", "--scenario"])
        .arg(scenarios().join("head_on.yaml"))
        .args(["--duration", "4", "--seed", "9", "--robot-policy", "static", "--metrics", "path_length"])
        .args(["--record", "1:2", "--record", "3:4"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.matches("window [").count(), 2, "{text}");
    assert!(text.contains("path_length"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",-1,")).count(), 81);

    let o = socnav()
        .args(["run", "--scenario"])
        .arg(scenarios().join("head_on.yaml"))
        .args(["--record", "5:2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let o = socnav()
        .env("SOCNAV_OUT_DIR", &out)
        .args(["run", "--duration", "1", "--scenario"])
        .arg(scenarios().join("head_on.yaml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("metrics.yaml").is_file());
}

#[test]
fn eval_prints_yaml_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = socnav()
        .args(["run", "--duration", "2", "--scenario"])
        .arg(scenarios().join("head_on.yaml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = socnav()
        .arg("eval")
        .arg("--log")
        .arg(dir.path().join("trajectories.csv"))
        .arg("--events")
        .arg(dir.path().join("events.csv"))
        .args(["--metrics", "path_length,avg_speed"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("path_length") && text.contains("avg_speed"), "{text}");
    assert!(!text.contains("social_work"), "{text}");
}

#[test]
fn serve_stdio_speaks_the_protocol() {
    use std::io::Write;
    use std::process::Stdio;
    let dir = tempfile::tempdir().unwrap();
    let scenario = std::fs::read_to_string(scenarios().join("head_on.yaml")).unwrap();
    let init = format!(
        "{{\"type\":\"init\",\"scenario\":{}}}",
        serde_json_string(&scenario)
    );
    let mut child = socnav()
        .args(["serve", "--stdio", "--out"])
        .arg(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        writeln!(stdin, "{init}").unwrap();
        writeln!(stdin, r#"{{"type":"step","t":0,"dt":0.05,"robot":{{"x":2,"y":3,"yaw":0}},"agents":[]}}"#).unwrap();
        writeln!(stdin, r#"{{"type":"bye"}}"#).unwrap();
    }
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3, "{lines:?}");
    assert!(lines[0].contains("\"ack\"") && lines[0].contains("\"agents\":1"), "{}", lines[0]);
    assert!(lines[1].contains("\"agents_reply\""), "{}", lines[1]);
    assert_eq!(lines[2], r#"{"type":"bye"}"#);
    assert!(dir.path().join("trajectories.csv").is_file());
}

/// Minimal JSON string escaping for the fixture text.
fn serde_json_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
