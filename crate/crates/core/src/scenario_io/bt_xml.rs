//! Behavior-tree XML dialect.
//!
//! Tags are node kinds or leaf names and attributes are parameters:
//!
//! ```xml
//! <BehaviorTree>
//!   <Sequence>
//!     <GoTo goal="3.0,2.0"/>
//!     <StopAndWaitTimer duration="2"/>
//!   </Sequence>
//! </BehaviorTree>
//! ```
//!
//! Control nodes: `Sequence`, `ReactiveSequence`, `Fallback`,
//! `Parallel success_threshold="k"` (default: all children), `Inverter`,
//! `Repeat num_cycles="n"` (`-1` = forever, the default) and
//! `Timeout seconds="s"`. An optional `<root>` and/or `<BehaviorTree>`
//! wrapper is accepted. A `name` attribute is allowed on every node and
//! ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::behaviors::{format_param, LeafBuildError, LeafKind, NodeRegistry};
use crate::bt::{BtNode, NodeKind, RepeatCount};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BtParseError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("unknown BT node '{name}' at {path}")]
    UnknownNode { name: String, path: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl BtParseError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        BtParseError::Invalid {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

const CONTROL_TAGS: [&str; 7] = [
    "Sequence",
    "ReactiveSequence",
    "Fallback",
    "Parallel",
    "Inverter",
    "Repeat",
    "Timeout",
];

pub fn parse_bt(xml: &str, registry: &NodeRegistry) -> Result<BtNode, BtParseError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| BtParseError::Xml(e.to_string()))?;
    let mut node = doc.root_element();
    for wrapper in ["root", "BehaviorTree"] {
        if node.tag_name().name() == wrapper {
            let kids: Vec<_> = node.children().filter(|c| c.is_element()).collect();
            node = match (wrapper, kids.as_slice()) {
                ("root", _) => *kids
                    .iter()
                    .find(|k| k.tag_name().name() == "BehaviorTree")
                    .or(kids.first())
                    .ok_or_else(|| BtParseError::at("/root", "empty document"))?,
                (_, [only]) => *only,
                _ => {
                    return Err(BtParseError::at(
                        "/BehaviorTree",
                        format!("expected exactly 1 root node, found {}", kids.len()),
                    ))
                }
            };
        }
    }
    let path = format!("/{}", node.tag_name().name());
    let tree = parse_node(node, &path, registry)?;
    tree.validate_structure().map_err(|e| match e {
        crate::bt::BtError::Structure { path, message } => BtParseError::Invalid { path, message },
    })?;
    Ok(tree)
}

fn attrs_except_name<'a>(node: roxmltree::Node<'a, 'a>) -> Vec<(&'a str, &'a str)> {
    node.attributes()
        .filter(|a| a.name() != "name")
        .map(|a| (a.name(), a.value()))
        .collect()
}

fn parse_node(node: roxmltree::Node, path: &str, registry: &NodeRegistry) -> Result<BtNode, BtParseError> {
    let tag = node.tag_name().name();
    let element_kids: Vec<_> = node.children().filter(|c| c.is_element()).collect();
    let attrs = attrs_except_name(node);

    if !CONTROL_TAGS.contains(&tag) {
        if !element_kids.is_empty() {
            if registry.resolve(tag).is_none() {
                return Err(BtParseError::UnknownNode {
                    name: tag.to_string(),
                    path: path.to_string(),
                });
            }
            return Err(BtParseError::at(path, "leaf nodes take no children"));
        }
        let (leaf, kind) = registry.build_leaf(tag, &attrs).map_err(|e| match e {
            LeafBuildError::UnknownNode(name) => BtParseError::UnknownNode {
                name,
                path: path.to_string(),
            },
            other => BtParseError::at(path, other.to_string()),
        })?;
        return Ok(match kind {
            LeafKind::Action => BtNode::action(leaf),
            LeafKind::Condition => BtNode::condition(leaf),
        });
    }

    let allowed: &[&str] = match tag {
        "Parallel" => &["success_threshold", "success_count"],
        "Repeat" => &["num_cycles"],
        "Timeout" => &["seconds", "msec"],
        _ => &[],
    };
    if let Some((k, _)) = attrs.iter().find(|(k, _)| !allowed.contains(k)) {
        return Err(BtParseError::at(path, format!("unknown attribute '{k}'")));
    }
    let attr = |names: &[&str]| attrs.iter().find(|(k, _)| names.contains(k)).map(|(k, v)| (*k, *v));
    let number = |name: &str, raw: &str| -> Result<f64, BtParseError> {
        raw.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| BtParseError::at(path, format!("attribute '{name}': expected a number, got '{raw}'")))
    };
    let integer = |name: &str, raw: &str| -> Result<i64, BtParseError> {
        raw.trim()
            .parse::<i64>()
            .map_err(|_| BtParseError::at(path, format!("attribute '{name}': expected an integer, got '{raw}'")))
    };

    let kind = match tag {
        "Sequence" => NodeKind::Sequence,
        "ReactiveSequence" => NodeKind::ReactiveSequence,
        "Fallback" => NodeKind::Fallback,
        "Inverter" => NodeKind::Inverter,
        "Parallel" => {
            let threshold = match attr(&["success_threshold", "success_count"]) {
                Some((k, v)) => {
                    let n = integer(k, v)?;
                    usize::try_from(n)
                        .map_err(|_| BtParseError::at(path, format!("attribute '{k}' must be >= 1, got {n}")))?
                }
                None => element_kids.len(),
            };
            NodeKind::Parallel {
                success_threshold: threshold,
            }
        }
        "Repeat" => match attr(&["num_cycles"]) {
            None => NodeKind::Repeat(RepeatCount::Forever),
            Some((_, v)) if v.trim() == "forever" => NodeKind::Repeat(RepeatCount::Forever),
            Some((k, v)) => match integer(k, v)? {
                -1 => NodeKind::Repeat(RepeatCount::Forever),
                n if n >= 0 && n <= u32::MAX as i64 => NodeKind::Repeat(RepeatCount::Times(n as u32)),
                n => return Err(BtParseError::at(path, format!("attribute '{k}' out of range: {n}"))),
            },
        },
        "Timeout" => match attr(&["seconds", "msec"]) {
            Some(("msec", v)) => NodeKind::Timeout {
                seconds: number("msec", v)? / 1000.0,
            },
            Some((k, v)) => NodeKind::Timeout { seconds: number(k, v)? },
            None => return Err(BtParseError::at(path, "missing attribute 'seconds'")),
        },
        _ => unreachable!("control tag list"),
    };
    let n = element_kids.len();
    if kind.is_decorator() && n != 1 {
        return Err(BtParseError::at(path, format!("decorator requires exactly 1 child, found {n}")));
    }
    if n == 0 {
        return Err(BtParseError::at(path, "control node requires at least 1 child"));
    }
    let children = element_kids
        .iter()
        .enumerate()
        .map(|(k, c)| parse_node(*c, &format!("{path}[{k}]/{}", c.tag_name().name()), registry))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BtNode::new(kind, children))
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

/// Serializes a tree in the dialect read by [`parse_bt`], wrapped in
/// `<BehaviorTree>`.
pub fn write_bt(tree: &BtNode) -> String {
    let mut out = String::from("<BehaviorTree>\n");
    write_node(tree, 1, &mut out);
    out.push_str("</BehaviorTree>\n");
    out
}

fn write_node(node: &BtNode, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    let tag = node.kind.tag();
    let mut attrs = String::new();
    match &node.kind {
        NodeKind::Parallel { success_threshold } => {
            let _ = write!(attrs, " success_threshold=\"{success_threshold}\"");
        }
        NodeKind::Repeat(RepeatCount::Forever) => attrs.push_str(" num_cycles=\"-1\""),
        NodeKind::Repeat(RepeatCount::Times(n)) => {
            let _ = write!(attrs, " num_cycles=\"{n}\"");
        }
        NodeKind::Timeout { seconds } => {
            let _ = write!(attrs, " seconds=\"{seconds}\"");
        }
        NodeKind::Action(leaf) | NodeKind::Condition(leaf) => {
            for (k, v) in leaf.params.iter() {
                let _ = write!(attrs, " {k}=\"{}\"", escape_attr(&format_param(v)));
            }
        }
        _ => {}
    }
    if node.children.is_empty() {
        let _ = writeln!(out, "{indent}<{tag}{attrs}/>");
    } else {
        let _ = writeln!(out, "{indent}<{tag}{attrs}>");
        for c in &node.children {
            write_node(c, depth + 1, out);
        }
        let _ = writeln!(out, "{indent}</{tag}>");
    }
}
