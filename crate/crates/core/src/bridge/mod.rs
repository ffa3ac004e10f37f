//! Newline-delimited JSON protocol through which an external simulator drives
//! the engine.
//!
//! One JSON object per line, UTF-8, tagged by `"type"`. Every request gets
//! exactly one reply. The external simulator is authoritative for poses: each
//! `step` reports the world at `t` and the reply carries the agents' states
//! for `t + dt`.
//!
//! ```text
//! > {"type":"init","scenario":"<scenario yaml>"}
//! < {"type":"ack","agents":2}
//! > {"type":"step","t":0.0,"dt":0.05,"robot":{"x":1,"y":1,"yaw":0,"vx":0,"vy":0},"agents":[...]}
//! < {"type":"agents_reply","t":0.05,"agents":[{"id":1,"x":..,"animation":"walk"}, ...]}
//! > {"type":"command","command":"finish"}
//! < {"type":"ack","report":"out/metrics.yaml"}
//! > {"type":"bye"}
//! < {"type":"bye"}
//! ```

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{write_report, EvalError, MetricRegistry};
use crate::harness::{scenario_hash, step_count, Engine, HarnessError, ObservedAgent, RobotController};
use crate::scenario_io::{parse_scenario, serialize_scenario, Scenario};
use crate::world::{AgentState, Pose2D, RobotState, Vec2};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("protocol: {0}")]
    Protocol(String),
}

/// Robot pose and velocity on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotWire {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
}

impl RobotWire {
    pub fn from_state(r: &RobotState) -> Self {
        Self {
            x: r.pose.x,
            y: r.pose.y,
            yaw: r.pose.yaw(),
            vx: r.velocity.x,
            vy: r.velocity.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentWire {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
}

impl From<AgentWire> for ObservedAgent {
    fn from(a: AgentWire) -> Self {
        ObservedAgent {
            id: a.id,
            x: a.x,
            y: a.y,
            yaw: a.yaw,
            vx: a.vx,
            vy: a.vy,
        }
    }
}

/// Next state of one agent plus an animation hint ("walk", "wait", "talk", "idle").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReply {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub animation: String,
}

impl AgentReply {
    fn from_state(a: &AgentState) -> Self {
        Self {
            id: a.id,
            x: a.pose.x,
            y: a.pose.y,
            yaw: a.pose.yaw(),
            vx: a.velocity.x,
            vy: a.velocity.y,
            animation: a.behavior_status.animation_hint(a.speed()).to_string(),
        }
    }

    pub fn to_wire(&self) -> AgentWire {
        AgentWire {
            id: self.id,
            x: self.x,
            y: self.y,
            yaw: self.yaw,
            vx: self.vx,
            vy: self.vy,
        }
    }
}

/// Scenario carried by `init`: YAML text or a JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioPayload {
    Yaml(String),
    Object(Box<Scenario>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    RecordStart,
    RecordStop,
    Finish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Init {
        scenario: ScenarioPayload,
        /// Resolves relative `bt_file`, map and replay paths.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base_dir: Option<PathBuf>,
        /// Report directory; the server default otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_dir: Option<PathBuf>,
    },
    Step {
        t: f64,
        dt: f64,
        robot: RobotWire,
        #[serde(default)]
        agents: Vec<AgentWire>,
    },
    Command {
        command: Command,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agents: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report: Option<String>,
    },
    AgentsReply {
        t: f64,
        agents: Vec<AgentReply>,
    },
    Error {
        message: String,
    },
    Bye,
}

impl Response {
    fn error(message: impl Into<String>) -> Self {
        Response::Error {
            message: message.into(),
        }
    }
}

/// Protocol state of one client session.
pub struct Session {
    default_out: PathBuf,
    out_dir: PathBuf,
    scenario: Option<Scenario>,
    engine: Option<Engine>,
    /// Steps or markers since the report was last written.
    dirty: bool,
}

impl Session {
    pub fn new(default_out: impl Into<PathBuf>) -> Self {
        let default_out = default_out.into();
        Self {
            out_dir: default_out.clone(),
            default_out,
            scenario: None,
            engine: None,
            dirty: false,
        }
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.as_ref()
    }

    /// Parses one line and handles it. Malformed input yields an error reply.
    pub fn handle_line(&mut self, line: &str) -> Response {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Response::error(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Init {
                scenario,
                base_dir,
                out_dir,
            } => self.init(scenario, base_dir, out_dir),
            Request::Step { t, dt, robot, agents } => self.step(t, dt, robot, &agents),
            Request::Command { command } => self.command(command),
            Request::Bye => Response::Bye,
        }
    }

    fn init(&mut self, payload: ScenarioPayload, base_dir: Option<PathBuf>, out_dir: Option<PathBuf>) -> Response {
        if self.engine.is_some() {
            return Response::error("already initialized");
        }
        let parsed = match payload {
            ScenarioPayload::Yaml(text) => parse_scenario(&text, base_dir.as_deref()).map(|s| (s, text)),
            ScenarioPayload::Object(s) => {
                let mut s = *s;
                s.base_dir = base_dir;
                s.validate().map(|()| {
                    let text = serialize_scenario(&s);
                    (s, text)
                })
            }
        };
        let (scenario, text) = match parsed {
            Ok(v) => v,
            Err(e) => return Response::error(format!("invalid scenario: {e}")),
        };
        match Engine::new(&scenario, scenario_hash(&text)) {
            Ok(engine) => {
                let n = scenario.agents.len();
                self.engine = Some(engine);
                self.scenario = Some(scenario);
                self.out_dir = out_dir.unwrap_or_else(|| self.default_out.clone());
                self.dirty = true;
                Response::Ack {
                    agents: Some(n),
                    report: None,
                }
            }
            Err(e) => Response::error(format!("invalid scenario: {e}")),
        }
    }

    fn step(&mut self, t: f64, dt: f64, robot: RobotWire, agents: &[AgentWire]) -> Response {
        let Some(engine) = self.engine.as_mut() else {
            return Response::error("uninitialized");
        };
        if let Some(a) = agents.iter().find(|a| !engine.agents().any(|s| s.id == a.id)) {
            return Response::error(format!("unknown agent id {}", a.id));
        }
        let robot = RobotState {
            pose: Pose2D::new(robot.x, robot.y, robot.yaw),
            velocity: Vec2::new(robot.vx, robot.vy),
            radius: engine.robot().radius,
        };
        let observed: Vec<ObservedAgent> = agents.iter().map(|&a| a.into()).collect();
        match engine.step_external(t, dt, robot, &observed) {
            Ok(next) => {
                self.dirty = true;
                Response::AgentsReply {
                    t: t + dt,
                    agents: next.iter().map(AgentReply::from_state).collect(),
                }
            }
            Err(HarnessError::Eval(EvalError::NonMonotonic { prev, next })) => {
                Response::error(format!("non-monotonic time: t={next} after t={prev}"))
            }
            Err(e) => Response::error(e.to_string()),
        }
    }

    fn command(&mut self, command: Command) -> Response {
        let Some(engine) = self.engine.as_mut() else {
            return Response::error("uninitialized");
        };
        let result = match command {
            Command::RecordStart => engine.record_start().map(|()| None),
            Command::RecordStop => engine.record_stop().map(|()| None),
            Command::Finish => match self.write_report(true) {
                Ok(path) => return ack_report(path),
                Err(e) => return Response::error(e.to_string()),
            },
        };
        match result {
            Ok(report) => {
                self.dirty = true;
                Response::Ack { agents: None, report }
            }
            Err(e) => Response::error(e.to_string()),
        }
    }

    /// Writes trajectories, events and (if computable) metrics. With
    /// `strict`, a metric failure is an error; otherwise the partial report
    /// is written without `metrics.yaml`.
    fn write_report(&mut self, strict: bool) -> Result<PathBuf, BridgeError> {
        let (Some(engine), Some(scenario)) = (&self.engine, &self.scenario) else {
            return Err(BridgeError::Protocol("uninitialized".into()));
        };
        let log = engine.log();
        let report = match MetricRegistry::builtin().evaluate(log, &scenario.metrics, Some(engine.grid())) {
            Ok(r) => Some(r),
            Err(e) if strict => return Err(HarnessError::Eval(e).into()),
            Err(_) => None,
        };
        let path = write_report(log, report.as_ref(), &self.out_dir).map_err(HarnessError::Eval)?;
        self.dirty = false;
        Ok(path)
    }

    /// Flushes whatever was recorded since the last report. Used on `bye`,
    /// end of input and disconnects.
    pub fn flush_partial(&mut self) -> Result<Option<PathBuf>, BridgeError> {
        if self.engine.is_none() || !self.dirty {
            return Ok(None);
        }
        self.write_report(false).map(Some)
    }
}

fn ack_report(path: PathBuf) -> Response {
    Response::Ack {
        agents: None,
        report: Some(path.display().to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionEnd {
    /// Client said `bye`.
    Bye { flushed: Option<PathBuf> },
    /// Input ended or the connection dropped without `bye`.
    Disconnected { flushed: Option<PathBuf> },
}

/// Serves one session over a line reader/writer pair.
pub fn run_session<R: BufRead, W: Write>(
    mut reader: R,
    mut writer: W,
    session: &mut Session,
) -> Result<SessionEnd, BridgeError> {
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => {
                return Ok(SessionEnd::Disconnected {
                    flushed: session.flush_partial()?,
                })
            }
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(line.trim_end());
        let bye = reply == Response::Bye;
        let mut text = serde_json::to_string(&reply).map_err(|e| BridgeError::Protocol(e.to_string()))?;
        text.push('\n');
        let sent = writer.write_all(text.as_bytes()).and_then(|()| writer.flush());
        if sent.is_err() {
            return Ok(SessionEnd::Disconnected {
                flushed: session.flush_partial()?,
            });
        }
        if bye {
            return Ok(SessionEnd::Bye {
                flushed: session.flush_partial()?,
            });
        }
    }
}

pub fn serve_stdio(session: &mut Session) -> Result<SessionEnd, BridgeError> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    run_session(stdin.lock(), stdout.lock(), session)
}

pub fn bind(addr: impl ToSocketAddrs + std::fmt::Display) -> Result<TcpListener, BridgeError> {
    TcpListener::bind(&addr).map_err(|source| BridgeError::Bind {
        addr: addr.to_string(),
        source,
    })
}

pub const BUSY_MESSAGE: &str = "server busy: only one session is served at a time";

/// Serves exactly one TCP session. Connections arriving while it runs get a
/// single error line and are closed.
pub fn serve_tcp(listener: TcpListener, session: &mut Session) -> Result<SessionEnd, BridgeError> {
    let (stream, _) = listener.accept()?;
    stream.set_nonblocking(false)?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let refuser = {
        let stop = stop.clone();
        thread::spawn(move || refuse_while(&listener, &stop))
    };
    let result = run_session(BufReader::new(stream.try_clone()?), &stream, session);
    stop.store(true, Ordering::Relaxed);
    let _ = refuser.join();
    result
}

fn refuse_while(listener: &TcpListener, stop: &AtomicBool) {
    let busy = serde_json::to_string(&Response::error(BUSY_MESSAGE)).expect("static message serializes");
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((mut s, _)) => {
                let _ = s.set_nonblocking(false);
                let _ = writeln!(s, "{busy}");
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => break,
        }
    }
}

/// Line-oriented TCP client, mainly for tests and scripted drivers.
pub struct TcpClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpClient {
    pub fn connect(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        let writer = TcpStream::connect(addr)?;
        Ok(Self {
            reader: BufReader::new(writer.try_clone()?),
            writer,
        })
    }

    pub fn request(&mut self, req: &Request) -> Result<Response, BridgeError> {
        let mut text = serde_json::to_string(req).map_err(|e| BridgeError::Protocol(e.to_string()))?;
        text.push('\n');
        self.writer.write_all(text.as_bytes())?;
        self.read_response()
    }

    pub fn read_response(&mut self) -> Result<Response, BridgeError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(BridgeError::Protocol("connection closed".into()));
        }
        serde_json::from_str(&line).map_err(|e| BridgeError::Protocol(format!("bad reply: {e}")))
    }
}

/// Plays the scenario's scripted robot policy against a bridge, the way an
/// external simulator would: init, one step per tick from t = 0 through the
/// full duration (adopting each reply as the next observed state), finish,
/// bye. Returns the path reported by `finish`.
pub fn drive_scripted<F>(scenario_text: &str, base_dir: Option<&Path>, mut send: F) -> Result<String, BridgeError>
where
    F: FnMut(&Request) -> Result<Response, BridgeError>,
{
    let scenario = parse_scenario(scenario_text, base_dir)?;
    let expect_ok = |r: Response| match r {
        Response::Error { message } => Err(BridgeError::Protocol(message)),
        other => Ok(other),
    };
    expect_ok(send(&Request::Init {
        scenario: ScenarioPayload::Yaml(scenario_text.to_string()),
        base_dir: base_dir.map(Path::to_path_buf),
        out_dir: None,
    })?)?;
    let mut controller = RobotController::new(&scenario.robot.policy, base_dir).map_err(HarnessError::Eval)?;
    let mut robot = controller.initial(&RobotState {
        pose: scenario.robot.pose,
        velocity: Vec2::zeros(),
        radius: scenario.robot.radius,
    });
    let mut agents: Vec<AgentWire> = scenario
        .agents
        .iter()
        .map(|a| AgentWire {
            id: a.id,
            x: a.pose.x,
            y: a.pose.y,
            yaw: a.pose.yaw(),
            vx: 0.0,
            vy: 0.0,
        })
        .collect();
    let dt = scenario.dt;
    for k in 0..=step_count(scenario.duration, dt) {
        let t = k as f64 * dt;
        let reply = expect_ok(send(&Request::Step {
            t,
            dt,
            robot: RobotWire::from_state(&robot),
            agents: agents.clone(),
        })?)?;
        let Response::AgentsReply { agents: next, .. } = reply else {
            return Err(BridgeError::Protocol(format!("expected agents_reply, got {reply:?}")));
        };
        agents = next.iter().map(AgentReply::to_wire).collect();
        robot = controller.next(&robot, t, dt);
    }
    let report = match expect_ok(send(&Request::Command {
        command: Command::Finish,
    })?)? {
        Response::Ack { report: Some(p), .. } => p,
        other => return Err(BridgeError::Protocol(format!("expected report ack, got {other:?}"))),
    };
    expect_ok(send(&Request::Bye)?)?;
    Ok(report)
}

impl From<crate::scenario_io::ScenarioError> for BridgeError {
    fn from(e: crate::scenario_io::ScenarioError) -> Self {
        BridgeError::Harness(HarnessError::Scenario(e))
    }
}

#[cfg(test)]
mod tests;
