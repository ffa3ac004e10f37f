//! Report files: `trajectories.csv`, `events.csv`, `metrics.yaml`.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values and re-evaluation reproduces the report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_yaml::{Mapping, Value};

use super::{EvalError, Frame, Kinematics, MetricValue, MetricsReport, RunMeta, TrajectoryLog};
use crate::world::{Event, EventKind, Vec2};

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "id", "x", "y", "yaw", "vx", "vy"];
pub const EVENT_HEADER: [&str; 5] = ["t", "agent_id", "kind", "name", "detail"];
pub const ROBOT_ID: i64 = -1;

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, EvalError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn row(t: f64, id: i64, k: &Kinematics) -> [String; 7] {
    [
        t.to_string(),
        id.to_string(),
        k.position.x.to_string(),
        k.position.y.to_string(),
        k.yaw.to_string(),
        k.velocity.x.to_string(),
        k.velocity.y.to_string(),
    ]
}

/// One row per entity per frame; the robot (id −1) first, then humans by id.
pub fn write_trajectories(frames: &[Frame], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| io_err(path, e);
    w.write_record(TRAJECTORY_HEADER).map_err(err)?;
    for f in frames {
        w.write_record(row(f.t, ROBOT_ID, &f.robot)).map_err(err)?;
        for (id, h) in &f.humans {
            w.write_record(row(f.t, *id as i64, h)).map_err(err)?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_events(events: &[Event], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| io_err(path, e);
    w.write_record(EVENT_HEADER).map_err(err)?;
    for e in events {
        let id = e.agent_id.map(|i| i.to_string()).unwrap_or_default();
        w.write_record([e.t.to_string(), id, e.kind.as_str().to_string(), e.name.clone(), e.detail.clone()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn report_yaml(report: &MetricsReport) -> Value {
    let mut root = Mapping::new();
    root.insert("scenario_hash".into(), report.meta.scenario_hash.clone().into());
    root.insert("seed".into(), report.meta.seed.into());
    root.insert("dt".into(), report.meta.dt.into());
    let windows: Vec<Value> = report
        .windows
        .iter()
        .map(|w| {
            let mut m = Mapping::new();
            m.insert("start".into(), w.window.start.into());
            m.insert("end".into(), w.window.end.into());
            let mut entries = Mapping::new();
            for e in &w.entries {
                let mut em = Mapping::new();
                match &e.value {
                    MetricValue::Value(v) => em.insert("value".into(), (*v).into()),
                    MetricValue::Inapplicable(r) => em.insert("inapplicable".into(), r.clone().into()),
                };
                em.insert("unit".into(), e.unit.clone().into());
                em.insert("definition".into(), e.definition_id.clone().into());
                entries.insert(e.name.clone().into(), Value::Mapping(em));
            }
            m.insert("metrics".into(), Value::Mapping(entries));
            Value::Mapping(m)
        })
        .collect();
    root.insert("windows".into(), Value::Sequence(windows));
    Value::Mapping(root)
}

/// The `metrics.yaml` document as text.
pub fn render_metrics_yaml(report: &MetricsReport) -> Result<String, EvalError> {
    serde_yaml::to_string(&report_yaml(report)).map_err(|e| EvalError::Format(e.to_string()))
}

pub fn write_metrics_yaml(report: &MetricsReport, path: &Path) -> Result<(), EvalError> {
    std::fs::write(path, render_metrics_yaml(report)?).map_err(|e| io_err(path, e))
}

/// Writes all three report files into `dir` (created if needed) and returns
/// the path of `metrics.yaml`.
pub fn write_report(log: &TrajectoryLog, report: Option<&MetricsReport>, dir: &Path) -> Result<PathBuf, EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_trajectories(&log.frames, &dir.join("trajectories.csv"))?;
    write_events(&log.events, &dir.join("events.csv"))?;
    let metrics = dir.join("metrics.yaml");
    if let Some(r) = report {
        write_metrics_yaml(r, &metrics)?;
    }
    Ok(metrics)
}

fn reader(path: &Path) -> Result<csv::Reader<File>, EvalError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, path: &Path, line: u64) -> Result<T, EvalError> {
    let raw = rec.get(k).unwrap_or("");
    raw.parse().map_err(|_| {
        EvalError::Format(format!("{}:{line}: bad value '{raw}' in column {}", path.display(), k + 1))
    })
}

/// Reads `trajectories.csv`, grouping rows into frames by timestamp.
pub fn read_trajectories(path: &Path) -> Result<Vec<Frame>, EvalError> {
    let mut r = reader(path)?;
    let headers = r.headers().map_err(|e| io_err(path, e))?.clone();
    if headers.iter().ne(TRAJECTORY_HEADER) {
        return Err(EvalError::Format(format!("{}: expected header {}", path.display(), TRAJECTORY_HEADER.join(","))));
    }
    let mut frames: Vec<Frame> = Vec::new();
    let mut robot_seen = false;
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let t: f64 = field(&rec, 0, path, line)?;
        let id: i64 = field(&rec, 1, path, line)?;
        let k = Kinematics {
            position: Vec2::new(field(&rec, 2, path, line)?, field(&rec, 3, path, line)?),
            yaw: field(&rec, 4, path, line)?,
            velocity: Vec2::new(field(&rec, 5, path, line)?, field(&rec, 6, path, line)?),
        };
        if frames.last().is_none_or(|f| f.t != t) {
            if let Some(prev) = frames.last() {
                if !robot_seen {
                    return Err(EvalError::Format(format!("{}: frame t={} has no robot row", path.display(), prev.t)));
                }
                if t < prev.t {
                    return Err(EvalError::NonMonotonic { prev: prev.t, next: t });
                }
            }
            frames.push(Frame {
                t,
                robot: k,
                humans: Vec::new(),
            });
            robot_seen = false;
        }
        let f = frames.last_mut().expect("frame pushed above");
        if id == ROBOT_ID {
            f.robot = k;
            robot_seen = true;
        } else {
            let id = u32::try_from(id)
                .map_err(|_| EvalError::Format(format!("{}:{line}: bad agent id {id}", path.display())))?;
            f.humans.push((id, k));
        }
    }
    if !frames.is_empty() && !robot_seen {
        return Err(EvalError::Format(format!("{}: last frame has no robot row", path.display())));
    }
    Ok(frames)
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, EvalError> {
    let mut r = reader(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let t: f64 = field(&rec, 0, path, line)?;
        let id = match rec.get(1).unwrap_or("") {
            "" => None,
            s => Some(s.parse::<i64>().map_err(|_| {
                EvalError::Format(format!("{}:{line}: bad agent id '{s}'", path.display()))
            })?),
        };
        let kind: EventKind = rec
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|e: String| EvalError::Format(format!("{}:{line}: {e}", path.display())))?;
        out.push(Event {
            t,
            agent_id: id,
            kind,
            name: rec.get(3).unwrap_or("").to_string(),
            detail: rec.get(4).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

impl TrajectoryLog {
    /// Rebuilds a log from saved report files. Run metadata comes from the
    /// `meta` event and radii from the `spawn` events.
    pub fn from_files(trajectories: &Path, events: &Path) -> Result<Self, EvalError> {
        let frames = read_trajectories(trajectories)?;
        let events = read_events(events)?;
        let meta_event = events
            .iter()
            .find(|e| e.kind == EventKind::Meta)
            .ok_or_else(|| EvalError::Format("events: no meta event".into()))?;
        let meta = RunMeta::from_detail(&meta_event.detail).map_err(EvalError::Format)?;
        let mut robot_radius = None;
        let mut human_radii = BTreeMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::Spawn) {
            let r: f64 = e
                .detail
                .strip_prefix("radius=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| EvalError::Format(format!("events: bad spawn detail '{}'", e.detail)))?;
            match e.agent_id {
                Some(ROBOT_ID) => robot_radius = Some(r),
                Some(id) if id >= 0 => {
                    human_radii.insert(id as u32, r);
                }
                _ => return Err(EvalError::Format("events: spawn without entity id".into())),
            }
        }
        let mut log = TrajectoryLog::new(meta, robot_radius.ok_or_else(|| EvalError::Format("events: no robot spawn".into()))?);
        log.human_radii = human_radii;
        log.events = events;
        for f in frames {
            log.push_frame(f)?;
        }
        Ok(log)
    }
}
