//! Trajectory recording and the social-navigation metric suite.
//!
//! A [`TrajectoryLog`] holds one [`Frame`] per simulation step plus the event
//! log. Metrics are pure functions of the frames inside a recording window;
//! they are looked up by name in a [`MetricRegistry`]. The built-in suite has
//! 29 metrics in four families:
//!
//! | family     | metrics |
//! |------------|---------|
//! | navigation | success, time_to_goal, path_length, cumulative_heading_change, speed/acceleration/jerk avg+max |
//! | proxemics  | per-zone intrusion count and time, distances, human and obstacle collisions |
//! | force      | social work and the robot/human social-force averages and maxima |
//! | danger     | min time-to-collision, danger index, surprise events, cumulative danger |
//!
//! Distances to humans are surface distances: center distance minus both
//! radii.

mod io;
mod metrics;

pub use io::{
    read_events, read_trajectories, render_metrics_yaml, write_events, write_metrics_yaml, write_report,
    write_trajectories,
};
pub use metrics::{
    danger_index, surface_distance, time_to_collision, ApproachState, COLLISION_HYSTERESIS, DANGER_LENGTH,
    DANGER_SPEED, INTIMATE_RADIUS, PERSONAL_RADIUS, SOCIAL_RADIUS, SURPRISE_FOV_HALF, SURPRISE_RANGE,
    SURPRISE_SPEED,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::scenario_io::MetricSelection;
use crate::world::{Event, EventKind, OccupancyGrid, Vec2, WorldSnapshot};

/// Timestamps closer than this are treated as equal when slicing windows.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("record_stop without record_start (t={0})")]
    StopWithoutStart(f64),
    #[error("record_start at t={0} while a window is already open")]
    AlreadyRecording(f64),
    #[error("recording markers must be non-decreasing in time (t={0})")]
    MarkerOrder(f64),
    #[error("timestamps must be strictly increasing: {prev} then {next}")]
    NonMonotonic { prev: f64, next: f64 },
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("empty trajectory log")]
    EmptyLog,
    #[error("{0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Pose and velocity of one entity at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: Vec2,
    pub yaw: f64,
    pub velocity: Vec2,
}

impl Kinematics {
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub robot: Kinematics,
    /// Humans present at `t`, ascending id.
    pub humans: Vec<(u32, Kinematics)>,
}

impl Frame {
    pub fn from_snapshot(s: &WorldSnapshot) -> Self {
        let mut humans: Vec<(u32, Kinematics)> = s
            .agents
            .iter()
            .map(|a| {
                (
                    a.id,
                    Kinematics {
                        position: a.position(),
                        yaw: a.pose.yaw(),
                        velocity: a.velocity,
                    },
                )
            })
            .collect();
        humans.sort_by_key(|(id, _)| *id);
        Frame {
            t: s.t,
            robot: Kinematics {
                position: s.robot.position(),
                yaw: s.robot.pose.yaw(),
                velocity: s.robot.velocity,
            },
            humans,
        }
    }
}

/// Run-level metadata, stored in the `meta` event of `events.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub seed: u64,
    pub scenario_hash: String,
    pub dt: f64,
    pub robot_goal: Option<Vec2>,
}

impl RunMeta {
    /// `seed=7;scenario=ab12..;dt=0.05[;robot_goal=x,y]`
    pub fn to_detail(&self) -> String {
        let mut s = format!("seed={};scenario={};dt={}", self.seed, self.scenario_hash, self.dt);
        if let Some(g) = self.robot_goal {
            s.push_str(&format!(";robot_goal={},{}", g.x, g.y));
        }
        s
    }

    pub fn from_detail(detail: &str) -> Result<Self, String> {
        let mut seed = None;
        let mut hash = None;
        let mut dt = None;
        let mut goal = None;
        for part in detail.split(';').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("bad meta field '{part}'"))?;
            match k {
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| format!("bad seed '{v}'"))?),
                "scenario" => hash = Some(v.to_string()),
                "dt" => dt = Some(v.parse::<f64>().map_err(|_| format!("bad dt '{v}'"))?),
                "robot_goal" => goal = Some(crate::scenario_io::text::parse_point(v)?),
                _ => {}
            }
        }
        Ok(RunMeta {
            seed: seed.ok_or("meta: missing seed")?,
            scenario_hash: hash.ok_or("meta: missing scenario")?,
            dt: dt.ok_or("meta: missing dt")?,
            robot_goal: goal,
        })
    }
}

/// Everything recorded during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub meta: RunMeta,
    pub robot_radius: f64,
    pub human_radii: BTreeMap<u32, f64>,
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
}

impl TrajectoryLog {
    pub fn new(meta: RunMeta, robot_radius: f64) -> Self {
        Self {
            meta,
            robot_radius,
            human_radii: BTreeMap::new(),
            frames: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn push_frame(&mut self, frame: Frame) -> Result<(), EvalError> {
        if let Some(last) = self.frames.last() {
            if !(frame.t > last.t) {
                return Err(EvalError::NonMonotonic {
                    prev: last.t,
                    next: frame.t,
                });
            }
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn human_radius(&self, id: u32) -> f64 {
        self.human_radii.get(&id).copied().unwrap_or(crate::scenario_io::DEFAULT_AGENT_RADIUS)
    }

    /// Time of the first robot-goal arrival, if any.
    pub fn goal_reached_at(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::RobotGoalReached)
            .map(|e| e.t)
    }

    /// Recording windows implied by the `record_start`/`record_stop` events;
    /// the whole run when there are none.
    pub fn windows(&self) -> Result<Vec<Window>, EvalError> {
        let (first, last) = match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => return Err(EvalError::EmptyLog),
        };
        let mut rc = RecordingControl::default();
        for e in &self.events {
            match e.kind {
                EventKind::RecordStart => rc.start(e.t)?,
                EventKind::RecordStop => rc.stop(e.t)?,
                _ => {}
            }
        }
        Ok(rc.windows(first, last))
    }

    /// Frames with `start <= t <= end`.
    pub fn slice(&self, w: Window) -> &[Frame] {
        let lo = self.frames.partition_point(|f| f.t < w.start - TIME_EPS);
        let hi = self.frames.partition_point(|f| f.t <= w.end + TIME_EPS);
        &self.frames[lo..hi.max(lo)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

/// Start/stop markers. Several disjoint windows are allowed; at most one is
/// open at a time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordingControl {
    closed: Vec<Window>,
    open: Option<f64>,
    last_t: Option<f64>,
}

impl RecordingControl {
    fn check_order(&mut self, t: f64) -> Result<(), EvalError> {
        if let Some(prev) = self.last_t {
            if t < prev {
                return Err(EvalError::MarkerOrder(t));
            }
        }
        self.last_t = Some(t);
        Ok(())
    }

    pub fn start(&mut self, t: f64) -> Result<(), EvalError> {
        if self.open.is_some() {
            return Err(EvalError::AlreadyRecording(t));
        }
        self.check_order(t)?;
        self.open = Some(t);
        Ok(())
    }

    pub fn stop(&mut self, t: f64) -> Result<(), EvalError> {
        let start = self.open.ok_or(EvalError::StopWithoutStart(t))?;
        self.check_order(t)?;
        self.open = None;
        self.closed.push(Window { start, end: t });
        Ok(())
    }

    pub fn is_recording(&self) -> bool {
        self.open.is_some()
    }

    pub fn was_used(&self) -> bool {
        self.open.is_some() || !self.closed.is_empty()
    }

    /// Closed windows, plus the open one ending at `run_end`; `[run_start,
    /// run_end]` when no marker was ever given.
    pub fn windows(&self, run_start: f64, run_end: f64) -> Vec<Window> {
        if !self.was_used() {
            return vec![Window {
                start: run_start,
                end: run_end,
            }];
        }
        let mut out = self.closed.clone();
        if let Some(start) = self.open {
            out.push(Window { start, end: run_end });
        }
        out
    }
}

/// A metric result: a number, or the reason it cannot be computed.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Value(f64),
    Inapplicable(String),
}

impl MetricValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(*v),
            MetricValue::Inapplicable(_) => None,
        }
    }
}

/// What a metric sees: the frames of one window and the run context.
pub struct MetricInput<'a> {
    pub log: &'a TrajectoryLog,
    pub window: Window,
    pub frames: &'a [Frame],
    pub grid: Option<&'a OccupancyGrid>,
}

impl MetricInput<'_> {
    pub fn dt(&self) -> f64 {
        self.log.meta.dt
    }
}

pub type MetricFn = Arc<dyn Fn(&MetricInput) -> MetricValue + Send + Sync>;

#[derive(Clone)]
pub struct MetricDef {
    pub name: String,
    pub unit: String,
    /// Versioned identifier of the formula, e.g. `danger.ttc.v1`.
    pub definition_id: String,
    pub description: String,
    pub compute: MetricFn,
}

impl std::fmt::Debug for MetricDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricDef")
            .field("name", &self.name)
            .field("unit", &self.unit)
            .field("definition_id", &self.definition_id)
            .finish()
    }
}

/// Ordered name → metric table.
#[derive(Debug, Clone, Default)]
pub struct MetricRegistry {
    defs: Vec<MetricDef>,
}

impl MetricRegistry {
    pub fn builtin() -> Self {
        let mut r = MetricRegistry::default();
        for d in metrics::builtin_defs() {
            r.register(d);
        }
        r
    }

    /// Adds or replaces a metric.
    pub fn register(&mut self, def: MetricDef) {
        match self.defs.iter_mut().find(|d| d.name == def.name) {
            Some(slot) => *slot = def,
            None => self.defs.push(def),
        }
    }

    pub fn get(&self, name: &str) -> Option<&MetricDef> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn defs(&self) -> &[MetricDef] {
        &self.defs
    }

    pub fn names(&self) -> Vec<&str> {
        self.defs.iter().map(|d| d.name.as_str()).collect()
    }

    fn select(&self, sel: &MetricSelection) -> Result<Vec<&MetricDef>, EvalError> {
        match sel {
            MetricSelection::All => Ok(self.defs.iter().collect()),
            MetricSelection::Names(names) => names
                .iter()
                .map(|n| self.get(n).ok_or_else(|| EvalError::UnknownMetric(n.clone())))
                .collect(),
        }
    }

    /// Computes the selected metrics over every recording window of `log`.
    pub fn evaluate(
        &self,
        log: &TrajectoryLog,
        selection: &MetricSelection,
        grid: Option<&OccupancyGrid>,
    ) -> Result<MetricsReport, EvalError> {
        let defs = self.select(selection)?;
        let windows = log
            .windows()?
            .into_iter()
            .map(|window| {
                let input = MetricInput {
                    log,
                    window,
                    frames: log.slice(window),
                    grid,
                };
                let entries = defs
                    .iter()
                    .map(|d| MetricEntry {
                        name: d.name.clone(),
                        unit: d.unit.clone(),
                        definition_id: d.definition_id.clone(),
                        value: if input.frames.is_empty() {
                            MetricValue::Inapplicable("no frames in window".into())
                        } else {
                            (d.compute)(&input)
                        },
                    })
                    .collect();
                WindowReport { window, entries }
            })
            .collect();
        Ok(MetricsReport {
            meta: log.meta.clone(),
            windows,
        })
    }
}

static BUILTIN_NAMES: std::sync::OnceLock<Vec<String>> = std::sync::OnceLock::new();

/// True for the names of the built-in suite.
pub fn is_known_metric(name: &str) -> bool {
    BUILTIN_NAMES
        .get_or_init(|| MetricRegistry::builtin().names().into_iter().map(String::from).collect())
        .iter()
        .any(|n| n == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricEntry {
    pub name: String,
    pub unit: String,
    pub definition_id: String,
    pub value: MetricValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub window: Window,
    pub entries: Vec<MetricEntry>,
}

impl WindowReport {
    pub fn get(&self, name: &str) -> Option<&MetricValue> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.value)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(MetricValue::value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub meta: RunMeta,
    pub windows: Vec<WindowReport>,
}

impl MetricsReport {
    /// The first (usually only) window.
    pub fn primary(&self) -> &WindowReport {
        &self.windows[0]
    }
}

#[cfg(test)]
mod tests;
