//! Leaf-node catalog and robot-reaction presets.
//!
//! Every leaf is described by a [`NodeSpec`]: its canonical name, whether it is
//! an action or a condition, a typed parameter schema with defaults, and the
//! tick function. [`registry`] returns the standard catalog; behavior trees
//! reference leaves by name (or by one of the accepted aliases).

mod leaves;
mod presets;

pub use presets::{build_reaction_preset, PresetBehavior, ReactionPreset};

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use crate::bt::{
    Blackboard, LeafDispatch, LeafEvent, LeafMemory, LeafNode, ParamValue, Params, SpeechChannel, Status, Utterance,
};
use crate::world::{AgentState, Event, EventKind, Vec2, WorldSnapshot};

/// Distance over which moving leaves scale their speed down on arrival (m).
pub const ARRIVAL_RADIUS: f64 = 1.0;
/// Default field of view used by visibility conditions (rad).
pub const DEFAULT_FOV: f64 = 2.0 * std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Action,
    Condition,
}

impl LeafKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LeafKind::Action => "action",
            LeafKind::Condition => "condition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Number,
    /// "x,y"
    Point,
    Text,
    Id,
    /// Comma-separated ids.
    IdList,
}

impl ParamType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamType::Number => "number",
            ParamType::Point => "point",
            ParamType::Text => "string",
            ParamType::Id => "id",
            ParamType::IdList => "id_list",
        }
    }

    pub fn parse(&self, raw: &str) -> Result<ParamValue, String> {
        let s = raw.trim();
        let number = |t: &str| -> Result<f64, String> {
            let v: f64 = t.trim().parse().map_err(|_| format!("expected a number, got '{t}'"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("expected a finite number, got '{t}'"))
            }
        };
        let id = |t: &str| -> Result<u32, String> {
            t.trim().parse().map_err(|_| format!("expected an agent id, got '{t}'"))
        };
        match self {
            ParamType::Number => number(s).map(ParamValue::Number),
            ParamType::Point => {
                let parts: Vec<&str> = s.split(',').collect();
                if parts.len() != 2 {
                    return Err(format!("expected a point \"x,y\", got '{raw}'"));
                }
                Ok(ParamValue::Point(Vec2::new(number(parts[0])?, number(parts[1])?)))
            }
            ParamType::Text => Ok(ParamValue::Text(raw.to_string())),
            ParamType::Id => id(s).map(ParamValue::Id),
            ParamType::IdList => {
                if s.is_empty() {
                    return Err("expected at least one agent id".into());
                }
                s.split(',').map(id).collect::<Result<Vec<_>, _>>().map(ParamValue::IdList)
            }
        }
    }
}

/// Formats a parameter value in the textual form accepted by [`ParamType::parse`].
pub fn format_param(value: &ParamValue) -> String {
    match value {
        ParamValue::Number(v) => format!("{v}"),
        ParamValue::Point(p) => format!("{},{}", p.x, p.y),
        ParamValue::Text(s) => s.clone(),
        ParamValue::Id(v) => v.to_string(),
        ParamValue::IdList(v) => v.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub ty: ParamType,
    /// Textual default; `None` with `required == false` means "absent".
    pub default: Option<&'static str>,
    pub required: bool,
}

const fn req(name: &'static str, ty: ParamType) -> ParamSpec {
    ParamSpec {
        name,
        ty,
        default: None,
        required: true,
    }
}

const fn opt(name: &'static str, ty: ParamType) -> ParamSpec {
    ParamSpec {
        name,
        ty,
        default: None,
        required: false,
    }
}

const fn def(name: &'static str, ty: ParamType, default: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        ty,
        default: Some(default),
        required: false,
    }
}

pub type TickFn = fn(&mut LeafContext<'_>, &Params, &mut LeafMemory) -> Status;

#[derive(Clone, Copy)]
pub struct NodeSpec {
    pub name: &'static str,
    pub kind: LeafKind,
    pub params: &'static [ParamSpec],
    /// Quiet leaves emit no events.
    pub quiet: bool,
    pub summary: &'static str,
    pub tick: TickFn,
}

impl fmt::Debug for NodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .finish()
    }
}

impl NodeSpec {
    /// One-line signature, e.g. `GoTo(goal: point?, tolerance: number = 0.3)`.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| match (p.default, p.required) {
                (Some(d), _) => format!("{}: {} = {d}", p.name, p.ty.as_str()),
                (None, true) => format!("{}: {}", p.name, p.ty.as_str()),
                (None, false) => format!("{}: {}?", p.name, p.ty.as_str()),
            })
            .collect();
        format!("{}({})", self.name, params.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LeafBuildError {
    #[error("unknown BT node '{0}'")]
    UnknownNode(String),
    #[error("{node}: unknown parameter '{param}'")]
    UnknownParam { node: String, param: String },
    #[error("{node}: missing required parameter '{param}'")]
    MissingParam { node: String, param: String },
    #[error("{node}: parameter '{param}': {message}")]
    BadValue { node: String, param: String, message: String },
}

/// Alternative spellings accepted for leaf names.
const ALIASES: &[(&str, &str)] = &[
    ("LookingAtPoint", "LookAtPoint"),
    ("LookingAtAgent", "LookAtAgent"),
    ("LookingAtRobot", "LookAtRobot"),
    ("isAtPosition", "IsAtPosition"),
    ("isSpeaking", "IsSpeaking"),
    ("isLookingAtMe", "IsLookingAtMe"),
    ("isRobotVisible", "IsRobotVisible"),
    ("isRobotNearby", "IsRobotNearby"),
    ("isAgentNearby", "IsAgentNearby"),
];

#[derive(Debug)]
pub struct NodeRegistry {
    specs: Vec<NodeSpec>,
    index: HashMap<&'static str, usize>,
}

impl NodeRegistry {
    fn from_specs(specs: Vec<NodeSpec>) -> Self {
        let index = specs.iter().enumerate().map(|(i, s)| (s.name, i)).collect();
        Self { specs, index }
    }

    pub fn specs(&self) -> &[NodeSpec] {
        &self.specs
    }

    /// Looks up a leaf by canonical name or alias.
    pub fn resolve(&self, name: &str) -> Option<&NodeSpec> {
        let canonical = ALIASES
            .iter()
            .find(|(alias, _)| *alias == name)
            .map(|(_, c)| *c)
            .unwrap_or(name);
        self.index.get(canonical).map(|&i| &self.specs[i])
    }

    pub fn get(&self, canonical: &str) -> Option<&NodeSpec> {
        self.index.get(canonical).map(|&i| &self.specs[i])
    }

    /// Builds a leaf from its XML tag and raw attributes, filling defaults.
    pub fn build_leaf<K: AsRef<str>, V: AsRef<str>>(
        &self,
        name: &str,
        attrs: &[(K, V)],
    ) -> Result<(LeafNode, LeafKind), LeafBuildError> {
        let spec = self
            .resolve(name)
            .ok_or_else(|| LeafBuildError::UnknownNode(name.to_string()))?;
        let mut params = Params::new();
        for (k, v) in attrs {
            let (k, v) = (k.as_ref(), v.as_ref());
            let p = spec
                .params
                .iter()
                .find(|p| p.name == k)
                .ok_or_else(|| LeafBuildError::UnknownParam {
                    node: spec.name.into(),
                    param: k.into(),
                })?;
            let value = p.ty.parse(v).map_err(|message| LeafBuildError::BadValue {
                node: spec.name.into(),
                param: k.into(),
                message,
            })?;
            params.insert(p.name, value);
        }
        self.complete_params(spec, &mut params)?;
        Ok((LeafNode::new(spec.name, params), spec.kind))
    }

    /// Builds a leaf from already-typed parameters, filling defaults and
    /// checking types.
    pub fn leaf(&self, name: &str, given: Params) -> Result<(LeafNode, LeafKind), LeafBuildError> {
        let spec = self
            .resolve(name)
            .ok_or_else(|| LeafBuildError::UnknownNode(name.to_string()))?;
        for (k, v) in given.iter() {
            let p = spec
                .params
                .iter()
                .find(|p| p.name == k)
                .ok_or_else(|| LeafBuildError::UnknownParam {
                    node: spec.name.into(),
                    param: k.clone(),
                })?;
            // Re-parse the textual form to enforce the declared type.
            p.ty.parse(&format_param(v)).map_err(|message| LeafBuildError::BadValue {
                node: spec.name.into(),
                param: k.clone(),
                message,
            })?;
        }
        let mut params = given;
        self.complete_params(spec, &mut params)?;
        Ok((LeafNode::new(spec.name, params), spec.kind))
    }

    fn complete_params(&self, spec: &NodeSpec, params: &mut Params) -> Result<(), LeafBuildError> {
        for p in spec.params {
            if params.get(p.name).is_some() {
                continue;
            }
            match p.default {
                Some(d) => params.insert(p.name, p.ty.parse(d).expect("registry defaults parse")),
                None if p.required => {
                    return Err(LeafBuildError::MissingParam {
                        node: spec.name.into(),
                        param: p.name.into(),
                    })
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Checks a leaf that is already part of a tree.
    pub fn check_leaf(&self, leaf: &LeafNode) -> Result<(), LeafBuildError> {
        self.leaf(&leaf.name, leaf.params.clone()).map(|_| ())
    }
}

/// The standard leaf catalog.
pub fn registry() -> &'static NodeRegistry {
    static REGISTRY: OnceLock<NodeRegistry> = OnceLock::new();
    REGISTRY.get_or_init(|| NodeRegistry::from_specs(leaves::standard_specs()))
}

/// Everything a leaf may read or write while one agent's tree is ticked.
///
/// World reads go to `snapshot` (the state at the start of the step); writes go
/// to `agent` (this agent's working copy), its blackboard, `said` (utterances
/// published after all agents have ticked) and `events`.
pub struct LeafContext<'a> {
    pub registry: &'a NodeRegistry,
    pub snapshot: &'a WorldSnapshot,
    pub agent: &'a mut AgentState,
    pub blackboard: &'a mut Blackboard,
    pub speech: &'a SpeechChannel,
    pub said: &'a mut Vec<Utterance>,
    pub events: &'a mut Vec<Event>,
}

impl LeafContext<'_> {
    fn log(&mut self, kind: EventKind, name: &str, detail: &str) {
        self.events
            .push(Event::new(self.snapshot.t, Some(self.agent.id as i64), kind, name).with_detail(detail));
    }
}

impl LeafDispatch for LeafContext<'_> {
    fn now(&self) -> f64 {
        self.snapshot.t
    }

    fn tick_leaf(&mut self, leaf: &LeafNode, _is_condition: bool, memory: &mut LeafMemory) -> Status {
        match self.registry.get(&leaf.name) {
            Some(spec) => (spec.tick)(self, &leaf.params, memory),
            None => Status::Failure,
        }
    }

    fn on_event(&mut self, leaf: &LeafNode, event: LeafEvent) {
        if self.registry.get(&leaf.name).is_some_and(|s| s.quiet) {
            return;
        }
        match event {
            LeafEvent::Started => self.log(EventKind::LeafStart, &leaf.name, ""),
            LeafEvent::Finished(s) => self.log(EventKind::LeafEnd, &leaf.name, s.as_str()),
            LeafEvent::Halted => self.log(EventKind::LeafEnd, &leaf.name, "HALTED"),
            LeafEvent::ConditionChanged(s) => self.log(EventKind::Condition, &leaf.name, s.as_str()),
        }
    }
}
