//! Scenario files (YAML), behavior trees (XML) and occupancy maps.
//!
//! A scenario describes the map, timing, the robot and every simulated
//! human. Points are written `"x,y"` and poses `"x,y,yaw"`; fields that hold
//! their default value are omitted when writing.
//!
//! ```yaml
//! map:
//!   inline:
//!     resolution: 0.5
//!     origin: "0,0,0"
//!     rows: ["########", "#......#", "########"]
//! duration: 60
//! seed: 7
//! robot:
//!   pose: "1,1,0"
//!   policy: {type: straight, velocity: "0.5,0"}
//! agents:
//!   - id: 1
//!     pose: "3,1,3.14"
//!     goals: ["1,1", "3,1"]
//!     behavior: {preset: regular}
//!     sfm: {mode: random, seed: 3}
//! ```

mod bt_xml;
mod map;
pub mod text;

pub use bt_xml::{parse_bt, write_bt, BtParseError};
pub use map::load_map;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behaviors::{build_reaction_preset, registry, ReactionPreset};
use crate::bt::BtNode;
use crate::sfm::{default_params, sample_params, ParamMode, RobotMode, SfmParams};
use crate::world::{OccupancyGrid, Pose2D, Vec2};

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_DURATION: f64 = 120.0;
pub const DEFAULT_AGENT_RADIUS: f64 = 0.3;
pub const DEFAULT_DESIRED_SPEED: f64 = 1.0;
pub const DEFAULT_MAX_SPEED: f64 = 1.5;
pub const DEFAULT_ROBOT_RADIUS: f64 = 0.3;
pub const DEFAULT_GOAL_TOLERANCE: f64 = 0.3;
pub const MIN_AGENT_RADIUS: f64 = 0.2;
pub const MAX_AGENT_RADIUS: f64 = 0.6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// YAML syntax or schema error; the message carries line/column context.
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineMap {
    pub resolution: f64,
    #[serde(with = "text::pose", default)]
    pub origin: Pose2D,
    /// ASCII rows, top row first: `#` occupied, `.` or space free.
    pub rows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmptyMap {
    pub width: f64,
    pub height: f64,
    pub resolution: f64,
    #[serde(with = "text::pose", default)]
    pub origin: Pose2D,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapSource {
    Inline(InlineMap),
    /// Map-server YAML descriptor, relative to the scenario file.
    File(String),
    /// Obstacle-free rectangle.
    Empty(EmptyMap),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inline: Option<InlineMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    empty: Option<EmptyMap>,
}

impl TryFrom<RawMap> for MapSource {
    type Error = String;

    fn try_from(raw: RawMap) -> Result<Self, Self::Error> {
        match (raw.inline, raw.file, raw.empty) {
            (Some(m), None, None) => Ok(MapSource::Inline(m)),
            (None, Some(f), None) => Ok(MapSource::File(f)),
            (None, None, Some(e)) => Ok(MapSource::Empty(e)),
            _ => Err("map needs exactly one of 'inline', 'file' or 'empty'".into()),
        }
    }
}

impl From<MapSource> for RawMap {
    fn from(m: MapSource) -> Self {
        match m {
            MapSource::Inline(i) => RawMap {
                inline: Some(i),
                ..Default::default()
            },
            MapSource::File(f) => RawMap {
                file: Some(f),
                ..Default::default()
            },
            MapSource::Empty(e) => RawMap {
                empty: Some(e),
                ..Default::default()
            },
        }
    }
}

impl Serialize for MapSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawMap::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MapSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        MapSource::try_from(RawMap::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BehaviorSpec {
    Preset(ReactionPreset),
    /// BT XML file, relative to the scenario file.
    BtFile(String),
    BtInline(String),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBehavior {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bt_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bt_inline: Option<String>,
}

impl Serialize for BehaviorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = match self {
            BehaviorSpec::Preset(p) => RawBehavior {
                preset: Some(p.as_str().into()),
                ..Default::default()
            },
            BehaviorSpec::BtFile(f) => RawBehavior {
                bt_file: Some(f.clone()),
                ..Default::default()
            },
            BehaviorSpec::BtInline(x) => RawBehavior {
                bt_inline: Some(x.clone()),
                ..Default::default()
            },
        };
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BehaviorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawBehavior::deserialize(d)?;
        match (raw.preset, raw.bt_file, raw.bt_inline) {
            (Some(p), None, None) => p
                .parse()
                .map(BehaviorSpec::Preset)
                .map_err(serde::de::Error::custom),
            (None, Some(f), None) => Ok(BehaviorSpec::BtFile(f)),
            (None, None, Some(x)) => Ok(BehaviorSpec::BtInline(x)),
            _ => Err(serde::de::Error::custom(
                "behavior needs exactly one of 'preset', 'bt_file' or 'bt_inline'",
            )),
        }
    }
}

impl Default for BehaviorSpec {
    fn default() -> Self {
        BehaviorSpec::Preset(ReactionPreset::Regular)
    }
}

/// Partial SFM parameter set; unset fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfmOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_desired: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_obstacle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_obstacle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_social: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_group_gaze: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_group_coherence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_group_repulsion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception_radius: Option<f64>,
}

impl SfmOverrides {
    pub fn is_empty(&self) -> bool {
        *self == SfmOverrides::default()
    }

    pub fn apply(&self, base: &SfmParams) -> SfmParams {
        let mut p = *base;
        let pairs: [(&mut f64, Option<f64>); 13] = [
            (&mut p.k_desired, self.k_desired),
            (&mut p.relaxation_time, self.relaxation_time),
            (&mut p.k_obstacle, self.k_obstacle),
            (&mut p.b_obstacle, self.b_obstacle),
            (&mut p.k_social, self.k_social),
            (&mut p.lambda, self.lambda),
            (&mut p.gamma, self.gamma),
            (&mut p.n, self.n),
            (&mut p.n_prime, self.n_prime),
            (&mut p.k_group_gaze, self.k_group_gaze),
            (&mut p.k_group_coherence, self.k_group_coherence),
            (&mut p.k_group_repulsion, self.k_group_repulsion),
            (&mut p.perception_radius, self.perception_radius),
        ];
        for (field, v) in pairs {
            if let Some(v) = v {
                *field = v;
            }
        }
        p
    }
}

fn mode_is_default(m: &SfmMode) -> bool {
    *m == SfmMode::Default
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SfmMode {
    #[default]
    Default,
    Custom,
    Random,
}

impl From<SfmMode> for ParamMode {
    fn from(m: SfmMode) -> Self {
        match m {
            SfmMode::Default => ParamMode::Default,
            SfmMode::Custom => ParamMode::Custom,
            SfmMode::Random => ParamMode::Random,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfmSpec {
    #[serde(default, skip_serializing_if = "mode_is_default")]
    pub mode: SfmMode,
    #[serde(default, skip_serializing_if = "SfmOverrides::is_empty")]
    pub overrides: SfmOverrides,
    /// Noise seed for `random` mode; derived from the scenario seed when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SfmSpec {
    fn is_default(&self) -> bool {
        *self == SfmSpec::default()
    }

    /// Resolves the agent's parameters. `derived_seed` is used in random mode
    /// when no explicit seed is given.
    pub fn params(&self, derived_seed: u64) -> SfmParams {
        match self.mode {
            SfmMode::Default => default_params(),
            SfmMode::Custom => {
                let mut p = self.overrides.apply(&default_params());
                p.mode = ParamMode::Custom;
                p
            }
            SfmMode::Random => sample_params(&self.overrides.apply(&default_params()), self.seed.unwrap_or(derived_seed)),
        }
    }
}

fn is_default_radius(r: &f64) -> bool {
    *r == DEFAULT_AGENT_RADIUS
}
fn is_default_desired(v: &f64) -> bool {
    *v == DEFAULT_DESIRED_SPEED
}
fn is_default_max(v: &f64) -> bool {
    *v == DEFAULT_MAX_SPEED
}
fn default_radius() -> f64 {
    DEFAULT_AGENT_RADIUS
}
fn default_desired() -> f64 {
    DEFAULT_DESIRED_SPEED
}
fn default_max() -> f64 {
    DEFAULT_MAX_SPEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    #[serde(with = "text::pose")]
    pub pose: Pose2D,
    #[serde(default = "default_radius", skip_serializing_if = "is_default_radius")]
    pub radius: f64,
    #[serde(default = "default_desired", skip_serializing_if = "is_default_desired")]
    pub desired_speed: f64,
    #[serde(default = "default_max", skip_serializing_if = "is_default_max")]
    pub max_speed: f64,
    #[serde(default, with = "text::points", skip_serializing_if = "Vec::is_empty")]
    pub goals: Vec<Vec2>,
    #[serde(default)]
    pub behavior: BehaviorSpec,
    #[serde(default, skip_serializing_if = "SfmSpec::is_default")]
    pub sfm: SfmSpec,
}

impl AgentSpec {
    pub fn new(id: u32, pose: Pose2D) -> Self {
        Self {
            id,
            pose,
            radius: DEFAULT_AGENT_RADIUS,
            desired_speed: DEFAULT_DESIRED_SPEED,
            max_speed: DEFAULT_MAX_SPEED,
            goals: Vec::new(),
            behavior: BehaviorSpec::default(),
            sfm: SfmSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub id: u32,
    pub members: Vec<u32>,
}

/// Scripted robot motion.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RobotPolicySpec {
    #[default]
    Static,
    /// Constant world-frame velocity.
    Straight {
        #[serde(with = "text::point")]
        velocity: Vec2,
    },
    /// Visit the points in order at `speed`, then stop.
    Waypoints {
        #[serde(with = "text::points")]
        points: Vec<Vec2>,
        speed: f64,
    },
    /// Follow the robot rows (id −1) of a trajectories CSV, relative to the
    /// scenario file.
    Replay { file: String },
}

impl RobotPolicySpec {
    fn is_static(&self) -> bool {
        *self == RobotPolicySpec::Static
    }

    /// Parses the command-line form: `static`, `straight:vx,vy`,
    /// `waypoints:speed:x1,y1;x2,y2;...` or `replay:path`.
    pub fn parse_cli(s: &str) -> Result<Self, String> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "static" if rest.is_empty() => Ok(RobotPolicySpec::Static),
            "straight" => Ok(RobotPolicySpec::Straight {
                velocity: text::parse_point(rest)?,
            }),
            "waypoints" => {
                let (speed, pts) = rest
                    .split_once(':')
                    .ok_or("expected waypoints:SPEED:x1,y1;x2,y2")?;
                let speed: f64 = speed.trim().parse().map_err(|_| format!("bad speed '{speed}'"))?;
                let points = pts
                    .split(';')
                    .filter(|p| !p.trim().is_empty())
                    .map(text::parse_point)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(RobotPolicySpec::Waypoints { points, speed })
            }
            "replay" if !rest.is_empty() => Ok(RobotPolicySpec::Replay { file: rest.into() }),
            _ => Err(format!(
                "unknown robot policy '{s}' (expected static, straight:vx,vy, waypoints:speed:x,y;..., replay:file)"
            )),
        }
    }
}

fn is_default_robot_radius(r: &f64) -> bool {
    *r == DEFAULT_ROBOT_RADIUS
}
fn default_robot_radius() -> f64 {
    DEFAULT_ROBOT_RADIUS
}
fn is_default_tolerance(r: &f64) -> bool {
    *r == DEFAULT_GOAL_TOLERANCE
}
fn default_tolerance() -> f64 {
    DEFAULT_GOAL_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    #[serde(with = "text::pose")]
    pub pose: Pose2D,
    #[serde(default = "default_robot_radius", skip_serializing_if = "is_default_robot_radius")]
    pub radius: f64,
    #[serde(default, skip_serializing_if = "RobotPolicySpec::is_static")]
    pub policy: RobotPolicySpec,
    /// Goal whose arrival is reported as success by the evaluator.
    #[serde(default, with = "text::opt_point", skip_serializing_if = "Option::is_none")]
    pub goal: Option<Vec2>,
    #[serde(default = "default_tolerance", skip_serializing_if = "is_default_tolerance")]
    pub goal_tolerance: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            pose: Pose2D::default(),
            radius: DEFAULT_ROBOT_RADIUS,
            policy: RobotPolicySpec::Static,
            goal: None,
            goal_tolerance: DEFAULT_GOAL_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum MetricSelection {
    #[default]
    All,
    Names(Vec<String>),
}

impl MetricSelection {
    fn is_all(&self) -> bool {
        *self == MetricSelection::All
    }

    /// Parses `all` or a comma-separated list.
    pub fn parse_cli(s: &str) -> Self {
        if s.trim() == "all" {
            MetricSelection::All
        } else {
            MetricSelection::Names(s.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect())
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawMetrics {
    Keyword(String),
    Names(Vec<String>),
}

impl Serialize for MetricSelection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MetricSelection::All => RawMetrics::Keyword("all".into()).serialize(s),
            MetricSelection::Names(n) => RawMetrics::Names(n.clone()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for MetricSelection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawMetrics::deserialize(d)? {
            RawMetrics::Keyword(k) if k == "all" => Ok(MetricSelection::All),
            RawMetrics::Keyword(k) => Ok(MetricSelection::Names(vec![k])),
            RawMetrics::Names(n) => Ok(MetricSelection::Names(n)),
        }
    }
}

fn is_default_dt(v: &f64) -> bool {
    *v == DEFAULT_DT
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn is_default_duration(v: &f64) -> bool {
    *v == DEFAULT_DURATION
}
fn default_duration() -> f64 {
    DEFAULT_DURATION
}
fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub map: MapSource,
    #[serde(default = "default_dt", skip_serializing_if = "is_default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration", skip_serializing_if = "is_default_duration")]
    pub duration: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub seed: u64,
    #[serde(default)]
    pub robot: RobotSpec,
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupSpec>,
    #[serde(default, skip_serializing_if = "MetricSelection::is_all")]
    pub metrics: MetricSelection,
    /// Directory that relative file references resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    fn resolve_path(&self, rel: &str) -> PathBuf {
        match &self.base_dir {
            Some(d) => d.join(rel),
            None => PathBuf::from(rel),
        }
    }

    /// Builds the occupancy grid.
    pub fn build_grid(&self) -> Result<Arc<OccupancyGrid>, ScenarioError> {
        let grid = match &self.map {
            MapSource::Inline(m) => OccupancyGrid::from_ascii(&m.rows, m.resolution, m.origin)
                .map_err(|e| invalid(format!("map: {e}")))?,
            MapSource::Empty(m) => OccupancyGrid::empty(m.width, m.height, m.resolution, m.origin)
                .map_err(|e| invalid(format!("map: {e}")))?,
            MapSource::File(f) => {
                let path = self.resolve_path(f);
                load_map(&path).map_err(|message| ScenarioError::Io {
                    path: path.display().to_string(),
                    message,
                })?
            }
        };
        Ok(Arc::new(grid))
    }

    /// The agent's behavior tree and robot handling.
    pub fn agent_behavior(&self, agent: &AgentSpec) -> Result<(BtNode, RobotMode), ScenarioError> {
        let tree_err = |e: BtParseError| match e {
            BtParseError::UnknownNode { name, path } => {
                invalid(format!("unknown BT node '{name}' (agent {}) at {path}", agent.id))
            }
            other => invalid(format!("agent {}: behavior tree: {other}", agent.id)),
        };
        match &agent.behavior {
            BehaviorSpec::Preset(p) => {
                let b = build_reaction_preset(*p);
                Ok((b.tree, b.robot_mode))
            }
            BehaviorSpec::BtInline(xml) => Ok((parse_bt(xml, registry()).map_err(tree_err)?, RobotMode::AsPedestrian)),
            BehaviorSpec::BtFile(f) => {
                let path = self.resolve_path(f);
                let xml = std::fs::read_to_string(&path).map_err(|e| ScenarioError::Io {
                    path: path.display().to_string(),
                    message: format!("agent {}: {e}", agent.id),
                })?;
                Ok((parse_bt(&xml, registry()).map_err(tree_err)?, RobotMode::AsPedestrian))
            }
        }
    }

    /// Group id of every grouped agent.
    pub fn group_of(&self) -> BTreeMap<u32, u32> {
        let mut out = BTreeMap::new();
        for g in &self.groups {
            for &m in &g.members {
                out.insert(m, g.id);
            }
        }
        out
    }

    /// Checks every cross-reference, loads the map and parses every behavior
    /// tree, so that a validated scenario cannot fail name resolution later.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.dt > 0.0 && self.dt <= crate::sfm::MAX_DT) {
            return Err(invalid(format!("dt must be in (0, {}], got {}", crate::sfm::MAX_DT, self.dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(format!("duration must be positive, got {}", self.duration)));
        }
        let grid = self.build_grid()?;

        let r = &self.robot;
        if !(r.radius > 0.0) {
            return Err(invalid(format!("robot: radius must be > 0, got {}", r.radius)));
        }
        if !(r.goal_tolerance > 0.0) {
            return Err(invalid(format!("robot: goal_tolerance must be > 0, got {}", r.goal_tolerance)));
        }
        if !grid.contains(r.pose.position()) {
            return Err(invalid(format!("robot: start ({}, {}) is outside map", r.pose.x, r.pose.y)));
        }
        match &r.policy {
            RobotPolicySpec::Waypoints { points, speed } => {
                if points.is_empty() {
                    return Err(invalid("robot: waypoints policy needs at least one point"));
                }
                if !(*speed > 0.0) {
                    return Err(invalid(format!("robot: waypoint speed must be > 0, got {speed}")));
                }
            }
            RobotPolicySpec::Replay { file } => {
                let path = self.resolve_path(file);
                if !path.is_file() {
                    return Err(ScenarioError::Io {
                        path: path.display().to_string(),
                        message: "robot: replay file not found".into(),
                    });
                }
            }
            RobotPolicySpec::Static | RobotPolicySpec::Straight { .. } => {}
        }

        let mut seen = HashSet::new();
        for a in &self.agents {
            if !seen.insert(a.id) {
                return Err(invalid(format!("duplicate agent id {}", a.id)));
            }
            let id = a.id;
            if !(MIN_AGENT_RADIUS..=MAX_AGENT_RADIUS).contains(&a.radius) {
                return Err(invalid(format!(
                    "agent {id}: radius must be in [{MIN_AGENT_RADIUS}, {MAX_AGENT_RADIUS}], got {}",
                    a.radius
                )));
            }
            if !(a.desired_speed > 0.0) {
                return Err(invalid(format!("agent {id}: desired_speed must be > 0, got {}", a.desired_speed)));
            }
            if !(a.max_speed >= a.desired_speed) {
                return Err(invalid(format!(
                    "agent {id}: max_speed {} must be >= desired_speed {}",
                    a.max_speed, a.desired_speed
                )));
            }
            if !grid.contains(a.pose.position()) {
                return Err(invalid(format!("agent {id}: start ({}, {}) is outside map", a.pose.x, a.pose.y)));
            }
            for g in &a.goals {
                if !grid.contains(*g) {
                    return Err(invalid(format!("agent {id}: goal ({}, {}) is outside map", g.x, g.y)));
                }
            }
            if a.sfm.mode == SfmMode::Default && !a.sfm.overrides.is_empty() {
                return Err(invalid(format!("agent {id}: sfm overrides require mode custom or random")));
            }
            a.sfm
                .overrides
                .apply(&default_params())
                .validate()
                .map_err(|e| invalid(format!("agent {id}: {e}")))?;
            let (tree, _) = self.agent_behavior(a)?;
            for leaf in tree.leaves() {
                registry()
                    .check_leaf(leaf)
                    .map_err(|e| invalid(format!("agent {id}: {e}")))?;
            }
        }

        let mut grouped = HashSet::new();
        let mut group_ids = HashSet::new();
        for g in &self.groups {
            if !group_ids.insert(g.id) {
                return Err(invalid(format!("duplicate group id {}", g.id)));
            }
            if g.members.len() < 2 {
                return Err(invalid(format!("group {} requires >= 2 members", g.id)));
            }
            for m in &g.members {
                if !seen.contains(m) {
                    return Err(invalid(format!("group {} references unknown agent {m}", g.id)));
                }
                if !grouped.insert(*m) {
                    return Err(invalid(format!("agent {m} belongs to more than one group")));
                }
            }
        }

        if let MetricSelection::Names(names) = &self.metrics {
            for n in names {
                if !crate::evaluator::is_known_metric(n) {
                    return Err(invalid(format!("unknown metric '{n}'")));
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a scenario. Relative paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let mut s: Scenario = serde_yaml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    s.base_dir = base_dir.map(Path::to_path_buf);
    s.validate()?;
    Ok(s)
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<(Scenario, String), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let s = parse_scenario(&text, path.parent())?;
    Ok((s, text))
}

pub fn serialize_scenario(s: &Scenario) -> String {
    serde_yaml::to_string(s).expect("scenario model serializes")
}
