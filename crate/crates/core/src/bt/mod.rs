//! Behavior-tree interpreter.
//!
//! Trees are immutable [`BtNode`] definitions; all per-agent execution state
//! (running-child cursors, repeat counters, timers, leaf memory) lives in a
//! [`BehaviorTree`] instance. Leaves are executed through the [`LeafDispatch`]
//! trait so the interpreter stays independent of the leaf catalog.

mod blackboard;
mod runtime;

pub use blackboard::{BbValue, Blackboard, SpeechChannel, Utterance, SPEECH_TTL};
pub use runtime::{BehaviorTree, LeafDispatch, LeafEvent, LeafMemory};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::world::Vec2;

/// Slack for comparisons between accumulated simulated times.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Success,
    Failure,
    Running,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Success => "SUCCESS",
            Status::Failure => "FAILURE",
            Status::Running => "RUNNING",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BtError {
    #[error("{path}: {message}")]
    Structure { path: String, message: String },
}

impl BtError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        BtError::Structure {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

/// Typed leaf parameter value.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Number(f64),
    Point(Vec2),
    Text(String),
    Id(u32),
    IdList(Vec<u32>),
}

/// Named leaf parameters, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params(BTreeMap<String, ParamValue>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ParamValue) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.0.iter()
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        match self.0.get(name) {
            Some(ParamValue::Number(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn point(&self, name: &str) -> Option<Vec2> {
        match self.0.get(name) {
            Some(ParamValue::Point(p)) => Some(*p),
            _ => None,
        }
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        match self.0.get(name) {
            Some(ParamValue::Text(s)) => Some(s),
            _ => None,
        }
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        match self.0.get(name) {
            Some(ParamValue::Id(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn ids(&self, name: &str) -> Option<&[u32]> {
        match self.0.get(name) {
            Some(ParamValue::IdList(v)) => Some(v),
            _ => None,
        }
    }
}

impl<S: Into<String>> FromIterator<(S, ParamValue)> for Params {
    fn from_iter<I: IntoIterator<Item = (S, ParamValue)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafNode {
    /// Canonical registry name.
    pub name: String,
    pub params: Params,
}

impl LeafNode {
    pub fn new(name: impl Into<String>, params: Params) -> Self {
        Self {
            name: name.into(),
            params,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepeatCount {
    Times(u32),
    Forever,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Sequence with memory: resumes from the running child.
    Sequence,
    /// Re-evaluates from the first child on every tick.
    ReactiveSequence,
    /// Fallback with memory.
    Fallback,
    Parallel { success_threshold: usize },
    Inverter,
    Repeat(RepeatCount),
    Timeout { seconds: f64 },
    Action(LeafNode),
    Condition(LeafNode),
}

impl NodeKind {
    pub fn tag(&self) -> &str {
        match self {
            NodeKind::Sequence => "Sequence",
            NodeKind::ReactiveSequence => "ReactiveSequence",
            NodeKind::Fallback => "Fallback",
            NodeKind::Parallel { .. } => "Parallel",
            NodeKind::Inverter => "Inverter",
            NodeKind::Repeat(_) => "Repeat",
            NodeKind::Timeout { .. } => "Timeout",
            NodeKind::Action(l) | NodeKind::Condition(l) => &l.name,
        }
    }

    pub fn is_decorator(&self) -> bool {
        matches!(self, NodeKind::Inverter | NodeKind::Repeat(_) | NodeKind::Timeout { .. })
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Action(_) | NodeKind::Condition(_))
    }

    pub fn leaf(&self) -> Option<&LeafNode> {
        match self {
            NodeKind::Action(l) | NodeKind::Condition(l) => Some(l),
            _ => None,
        }
    }
}

/// Immutable behavior-tree definition.
#[derive(Debug, Clone, PartialEq)]
pub struct BtNode {
    pub kind: NodeKind,
    pub children: Vec<BtNode>,
}

impl BtNode {
    pub fn new(kind: NodeKind, children: Vec<BtNode>) -> Self {
        Self { kind, children }
    }

    pub fn sequence(children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Sequence, children)
    }

    pub fn reactive_sequence(children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::ReactiveSequence, children)
    }

    pub fn fallback(children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Fallback, children)
    }

    pub fn parallel(success_threshold: usize, children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Parallel { success_threshold }, children)
    }

    pub fn inverter(child: BtNode) -> Self {
        Self::new(NodeKind::Inverter, vec![child])
    }

    pub fn repeat(count: RepeatCount, child: BtNode) -> Self {
        Self::new(NodeKind::Repeat(count), vec![child])
    }

    pub fn timeout(seconds: f64, child: BtNode) -> Self {
        Self::new(NodeKind::Timeout { seconds }, vec![child])
    }

    pub fn action(leaf: LeafNode) -> Self {
        Self::new(NodeKind::Action(leaf), Vec::new())
    }

    pub fn condition(leaf: LeafNode) -> Self {
        Self::new(NodeKind::Condition(leaf), Vec::new())
    }

    /// Number of nodes in this subtree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(BtNode::size).sum::<usize>()
    }

    /// Leaves in pre-order.
    pub fn leaves(&self) -> Vec<&LeafNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a LeafNode>) {
        if let Some(l) = self.kind.leaf() {
            out.push(l);
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    pub fn leaf_names(&self) -> std::collections::BTreeSet<String> {
        self.leaves().into_iter().map(|l| l.name.clone()).collect()
    }

    /// Checks arities and decorator parameters. Leaf names are resolved
    /// separately against the node registry.
    pub fn validate_structure(&self) -> Result<(), BtError> {
        self.validate_at(&format!("/{}", self.kind.tag()))
    }

    fn validate_at(&self, path: &str) -> Result<(), BtError> {
        let n = self.children.len();
        match &self.kind {
            k if k.is_leaf() => {
                if n != 0 {
                    return Err(BtError::at(path, "leaf nodes take no children"));
                }
            }
            k if k.is_decorator() => {
                if n != 1 {
                    return Err(BtError::at(path, format!("decorator requires exactly 1 child, found {n}")));
                }
            }
            _ => {
                if n == 0 {
                    return Err(BtError::at(path, "control node requires at least 1 child"));
                }
            }
        }
        match self.kind {
            NodeKind::Parallel { success_threshold } if success_threshold < 1 || success_threshold > n => {
                return Err(BtError::at(
                    path,
                    format!("success_threshold {success_threshold} outside [1, {n}]"),
                ));
            }
            NodeKind::Repeat(RepeatCount::Times(0)) => {
                return Err(BtError::at(path, "num_cycles must be >= 1"));
            }
            NodeKind::Timeout { seconds } if !(seconds > 0.0 && seconds.is_finite()) => {
                return Err(BtError::at(path, format!("timeout must be positive, got {seconds}")));
            }
            _ => {}
        }
        for (k, c) in self.children.iter().enumerate() {
            c.validate_at(&format!("{path}[{k}]/{}", c.kind.tag()))?;
        }
        Ok(())
    }
}
