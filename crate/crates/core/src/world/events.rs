use std::fmt;
use std::str::FromStr;

/// Kinds of entries in a run's event log (`events.csv`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Run metadata (`seed=..;scenario=..;dt=..`).
    Meta,
    /// Entity registration; detail carries `radius=<m>`.
    Spawn,
    LeafStart,
    LeafEnd,
    /// Condition leaf whose result changed since its previous tick.
    Condition,
    Speech,
    RecordStart,
    RecordStop,
    RobotGoalReached,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Meta => "meta",
            EventKind::Spawn => "spawn",
            EventKind::LeafStart => "leaf_start",
            EventKind::LeafEnd => "leaf_end",
            EventKind::Condition => "condition",
            EventKind::Speech => "speech",
            EventKind::RecordStart => "record_start",
            EventKind::RecordStop => "record_stop",
            EventKind::RobotGoalReached => "robot_goal_reached",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "meta" => EventKind::Meta,
            "spawn" => EventKind::Spawn,
            "leaf_start" => EventKind::LeafStart,
            "leaf_end" => EventKind::LeafEnd,
            "condition" => EventKind::Condition,
            "speech" => EventKind::Speech,
            "record_start" => EventKind::RecordStart,
            "record_stop" => EventKind::RecordStop,
            "robot_goal_reached" => EventKind::RobotGoalReached,
            other => return Err(format!("unknown event kind '{other}'")),
        })
    }
}

/// One event-log row. `agent_id` is `-1` for the robot and `None` for
/// run-level events.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub agent_id: Option<i64>,
    pub kind: EventKind,
    pub name: String,
    pub detail: String,
}

impl Event {
    pub fn new(t: f64, agent_id: Option<i64>, kind: EventKind, name: impl Into<String>) -> Self {
        Self {
            t,
            agent_id,
            kind,
            name: name.into(),
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}
