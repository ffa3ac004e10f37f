use super::*;
use crate::harness::{run, RunConfig};

const SCENARIO: &str = r#"
name: pass
map: {empty: {width: 12, height: 6, resolution: 0.1}}
dt: 0.05
duration: 5
seed: 3
robot: {pose: "1,3,0", policy: {type: straight, velocity: "0.8,0"}}
agents:
  - id: 4
    pose: "10,3.2,3.14159"
    goals: ["2,3.2"]
  - id: 9
    pose: "6,1,1.57"
    goals: ["6,5"]
"#;

fn init_line() -> String {
    serde_json::to_string(&Request::Init {
        scenario: ScenarioPayload::Yaml(SCENARIO.into()),
        base_dir: None,
        out_dir: None,
    })
    .unwrap()
}

const STEP0: &str = r#"{"type":"step","t":0,"dt":0.05,"robot":{"x":1,"y":3,"yaw":0},"agents":[]}"#;

#[test]
fn init_acks_with_agent_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(dir.path());
    assert_eq!(
        s.handle_line(&init_line()),
        Response::Ack {
            agents: Some(2),
            report: None
        }
    );
    assert!(matches!(s.handle_line(&init_line()), Response::Error { .. }));
}

#[test]
fn step_before_init_is_uninitialized() {
    let mut s = Session::new("unused");
    assert_eq!(s.handle_line(STEP0), Response::error("uninitialized"));
    assert_eq!(
        s.handle_line(r#"{"type":"command","command":"finish"}"#),
        Response::error("uninitialized")
    );
}

#[test]
fn step_replies_for_every_agent_with_ids_preserved() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(dir.path());
    s.handle_line(&init_line());
    let line = r#"{"type":"step","t":0,"dt":0.05,"robot":{"x":1,"y":3,"yaw":0},
        "agents":[{"id":9,"x":6,"y":1,"yaw":1.57},{"id":4,"x":10,"y":3.2,"yaw":3.14159}]}"#
        .replace('\n', "");
    match s.handle_line(&line) {
        Response::AgentsReply { t, agents } => {
            assert_eq!(t, 0.05);
            assert_eq!(agents.iter().map(|a| a.id).collect::<Vec<_>>(), vec![4, 9]);
            assert!(agents.iter().all(|a| a.animation == "walk" || a.animation == "idle"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn backwards_time_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(dir.path());
    s.handle_line(&init_line());
    let at = |t: f64| STEP0.replace("\"t\":0", &format!("\"t\":{t}"));
    assert!(matches!(s.handle_line(&at(1.0)), Response::AgentsReply { .. }));
    match s.handle_line(&at(0.5)) {
        Response::Error { message } => assert!(message.starts_with("non-monotonic time"), "{message}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(s.handle_line(&at(1.05)), Response::AgentsReply { .. }));
}

#[test]
fn malformed_and_unknown_input_keep_session_alive() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(dir.path());
    s.handle_line(&init_line());
    for bad in ["{", r#"{"type":"dance"}"#, r#"{"type":"step","t":0}"#] {
        match s.handle_line(bad) {
            Response::Error { message } => assert!(message.starts_with("malformed message"), "{message}"),
            other => panic!("{other:?}"),
        }
    }
    let unknown = STEP0.replace("[]", r#"[{"id":77,"x":1,"y":1,"yaw":0}]"#);
    assert_eq!(s.handle_line(&unknown), Response::error("unknown agent id 77"));
    assert!(matches!(s.handle_line(STEP0), Response::AgentsReply { .. }));
}

#[test]
fn invalid_scenario_is_reported() {
    let mut s = Session::new("unused");
    let line = serde_json::to_string(&Request::Init {
        scenario: ScenarioPayload::Yaml(SCENARIO.replace("dt: 0.05", "dt: 0.5")),
        base_dir: None,
        out_dir: None,
    })
    .unwrap();
    match s.handle_line(&line) {
        Response::Error { message } => assert!(message.contains("dt must be in"), "{message}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scenario_object_payload_is_accepted() {
    let scenario = parse_scenario(SCENARIO, None).unwrap();
    let mut s = Session::new("unused");
    let r = s.handle(Request::Init {
        scenario: ScenarioPayload::Object(Box::new(scenario)),
        base_dir: None,
        out_dir: None,
    });
    assert!(matches!(r, Response::Ack { agents: Some(2), .. }));
}

fn in_process(session: &mut Session) -> impl FnMut(&Request) -> Result<Response, BridgeError> + '_ {
    // Round-trip through the wire format so the test covers serialization too.
    move |req| Ok(session.handle_line(&serde_json::to_string(req).unwrap()))
}

#[test]
fn scripted_bridge_run_matches_harness_bytes() {
    let bridge_dir = tempfile::tempdir().unwrap();
    let harness_dir = tempfile::tempdir().unwrap();
    let mut session = Session::new(bridge_dir.path());
    let report = drive_scripted(SCENARIO, None, in_process(&mut session)).unwrap();
    assert!(Path::new(&report).exists());

    let scenario = parse_scenario(SCENARIO, None).unwrap();
    let cfg = RunConfig {
        out_dir: Some(harness_dir.path().to_path_buf()),
        ..Default::default()
    };
    run(&scenario, SCENARIO, &cfg).unwrap();
    for file in ["trajectories.csv", "metrics.yaml"] {
        let a = std::fs::read(bridge_dir.path().join(file)).unwrap();
        let b = std::fs::read(harness_dir.path().join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn replaying_a_transcript_gives_identical_replies() {
    let transcript = |dir: &Path| {
        let mut s = Session::new(dir);
        let mut replies = Vec::new();
        drive_scripted(SCENARIO, None, |req| {
            let line = serde_json::to_string(req).unwrap();
            let r = s.handle_line(&line);
            replies.push(serde_json::to_string(&r).unwrap());
            Ok(r)
        })
        .unwrap();
        replies
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = transcript(d1.path());
    let b = transcript(d2.path());
    assert_eq!(a.len(), b.len());
    // The finish ack names the output directory, which differs; everything else matches.
    let n = a.len();
    assert_eq!(a[..n - 2], b[..n - 2]);
    assert_eq!(a[n - 1], b[n - 1]);
}

#[test]
fn eof_mid_run_flushes_partial_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = Session::new(dir.path());
    let input = format!("{}\n{STEP0}\n", init_line());
    let mut out = Vec::new();
    let end = run_session(input.as_bytes(), &mut out, &mut session).unwrap();
    assert!(matches!(end, SessionEnd::Disconnected { flushed: Some(_) }));
    let text = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
}

#[test]
fn bye_ends_session_with_one_reply_each() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = Session::new(dir.path());
    let input = format!("{}\n\n{STEP0}\n{{\"type\":\"bye\"}}\n{STEP0}\n", init_line());
    let mut out = Vec::new();
    let end = run_session(input.as_bytes(), &mut out, &mut session).unwrap();
    assert!(matches!(end, SessionEnd::Bye { flushed: Some(_) }));
    let lines: Vec<String> = String::from_utf8(out).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2], r#"{"type":"bye"}"#);
}

#[test]
fn tcp_serves_one_session_and_refuses_a_second() {
    let dir = tempfile::tempdir().unwrap();
    let listener = bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let out = dir.path().to_path_buf();
    let server = thread::spawn(move || {
        let mut session = Session::new(out);
        serve_tcp(listener, &mut session)
    });
    let mut first = TcpClient::connect(addr).unwrap();
    assert!(matches!(first.request(&serde_json::from_str(&init_line()).unwrap()).unwrap(), Response::Ack { .. }));
    let mut second = TcpClient::connect(addr).unwrap();
    assert_eq!(second.read_response().unwrap(), Response::error(BUSY_MESSAGE));
    let report = drive_scripted_after_init(&mut first);
    assert!(Path::new(&report).exists());
    assert!(matches!(server.join().unwrap().unwrap(), SessionEnd::Bye { .. }));
}

fn drive_scripted_after_init(c: &mut TcpClient) -> String {
    let step: Request = serde_json::from_str(STEP0).unwrap();
    assert!(matches!(c.request(&step).unwrap(), Response::AgentsReply { .. }));
    let r = c
        .request(&Request::Command {
            command: Command::Finish,
        })
        .unwrap();
    let Response::Ack { report: Some(p), .. } = r else { panic!("{r:?}") };
    assert_eq!(c.request(&Request::Bye).unwrap(), Response::Bye);
    p
}

#[test]
fn bind_failure_names_address() {
    let taken = bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let err = bind(addr.as_str()).unwrap_err();
    assert!(err.to_string().starts_with(&format!("cannot bind {addr}")), "{err}");
}

#[test]
fn record_commands_open_windows() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(dir.path());
    s.handle_line(&init_line());
    s.handle_line(STEP0);
    assert!(matches!(
        s.handle_line(r#"{"type":"command","command":"record_start"}"#),
        Response::Ack { .. }
    ));
    assert!(matches!(
        s.handle_line(r#"{"type":"command","command":"record_start"}"#),
        Response::Error { .. }
    ));
    assert!(matches!(
        s.handle_line(r#"{"type":"command","command":"record_stop"}"#),
        Response::Ack { .. }
    ));
}
