use std::fmt;
use std::str::FromStr;

use super::{registry, LeafKind};
use crate::bt::{BtNode, ParamValue, Params, RepeatCount};
use crate::sfm::RobotMode;

/// Social-force weight of the robot for scared agents.
pub const SCARED_ROBOT_FACTOR: f64 = 2.5;
/// Desired-speed boost of scared agents while the robot is close.
pub const SCARED_SPEED_BOOST: f64 = 1.25;
const SCARED_RANGE: f64 = 3.0;
const SURPRISED_RANGE: f64 = 4.0;
const SURPRISED_WAIT: f64 = 2.0;
const CURIOUS_RANGE: f64 = 5.0;
const CURIOUS_STOP: f64 = 1.5;
const CURIOUS_OBSERVE: f64 = 4.0;
const THREAT_RANGE: f64 = 5.0;
/// Blackboard flag set once a curious agent has inspected the robot.
pub const ENCOUNTER_FLAG: &str = "robot_encountered";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReactionPreset {
    Regular,
    Impassive,
    Surprised,
    Curious,
    Scared,
    Threatening,
}

impl ReactionPreset {
    pub const ALL: [ReactionPreset; 6] = [
        ReactionPreset::Regular,
        ReactionPreset::Impassive,
        ReactionPreset::Surprised,
        ReactionPreset::Curious,
        ReactionPreset::Scared,
        ReactionPreset::Threatening,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReactionPreset::Regular => "regular",
            ReactionPreset::Impassive => "impassive",
            ReactionPreset::Surprised => "surprised",
            ReactionPreset::Curious => "curious",
            ReactionPreset::Scared => "scared",
            ReactionPreset::Threatening => "threatening",
        }
    }
}

impl fmt::Display for ReactionPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReactionPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown reaction preset '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetBehavior {
    pub tree: BtNode,
    pub robot_mode: RobotMode,
}

fn leaf(name: &str, params: &[(&str, ParamValue)]) -> BtNode {
    let given: Params = params.iter().cloned().collect();
    let (leaf, kind) = registry().leaf(name, given).expect("preset leaves are valid");
    match kind {
        LeafKind::Action => BtNode::action(leaf),
        LeafKind::Condition => BtNode::condition(leaf),
    }
}

fn num(name: &'static str, v: f64) -> (&'static str, ParamValue) {
    (name, ParamValue::Number(v))
}

fn flag(name: &'static str) -> (&'static str, ParamValue) {
    ("key", ParamValue::Text(name.to_string()))
}

/// Walk the agent's goal list forever, resuming at its current goal.
fn goal_loop() -> BtNode {
    BtNode::repeat(RepeatCount::Forever, leaf("GoTo", &[]))
}

/// Ticks `first` every tick; `second` runs only while `first` fails and is
/// interrupted as soon as `first` becomes active again.
fn reactive_fallback(first: BtNode, second: BtNode) -> BtNode {
    BtNode::inverter(BtNode::reactive_sequence(vec![
        BtNode::inverter(first),
        BtNode::inverter(second),
    ]))
}

fn robot_visible(range: f64) -> BtNode {
    leaf("IsRobotVisible", &[num("range", range)])
}

/// Behavior tree and robot handling for one of the six robot reactions. The
/// goal loop reads the agent's own goal list at tick time.
pub fn build_reaction_preset(kind: ReactionPreset) -> PresetBehavior {
    let (tree, robot_mode) = match kind {
        ReactionPreset::Regular => (goal_loop(), RobotMode::AsPedestrian),
        ReactionPreset::Impassive => (goal_loop(), RobotMode::Ignored),
        ReactionPreset::Scared => {
            let boost = BtNode::fallback(vec![
                BtNode::inverter(leaf("IsRobotNearby", &[num("range", SCARED_RANGE)])),
                leaf("SetSpeedFactor", &[num("factor", SCARED_SPEED_BOOST)]),
            ]);
            let tree = BtNode::repeat(
                RepeatCount::Forever,
                BtNode::reactive_sequence(vec![boost, leaf("GoTo", &[])]),
            );
            (tree, RobotMode::CustomFactor(SCARED_ROBOT_FACTOR))
        }
        ReactionPreset::Surprised => {
            let react = BtNode::reactive_sequence(vec![
                robot_visible(SURPRISED_RANGE),
                leaf("LookAtRobot", &[]),
                leaf("StopAndWaitTimer", &[num("duration", SURPRISED_WAIT)]),
            ]);
            (reactive_fallback(react, goal_loop()), RobotMode::AsPedestrian)
        }
        ReactionPreset::Curious => {
            let inspect = BtNode::reactive_sequence(vec![
                robot_visible(CURIOUS_RANGE),
                BtNode::inverter(leaf("IsFlagSet", &[flag(ENCOUNTER_FLAG)])),
                leaf(
                    "ApproachRobot",
                    &[num("stop_distance", CURIOUS_STOP), num("observe_time", CURIOUS_OBSERVE)],
                ),
                leaf("SetFlag", &[flag(ENCOUNTER_FLAG)]),
            ]);
            // Losing sight of the robot ends the encounter.
            let forget = BtNode::fallback(vec![
                robot_visible(CURIOUS_RANGE),
                leaf("ClearFlag", &[flag(ENCOUNTER_FLAG)]),
            ]);
            let tree = BtNode::inverter(BtNode::reactive_sequence(vec![
                BtNode::inverter(inspect),
                forget,
                BtNode::inverter(goal_loop()),
            ]));
            (tree, RobotMode::AsPedestrian)
        }
        ReactionPreset::Threatening => {
            let block = BtNode::reactive_sequence(vec![robot_visible(THREAT_RANGE), leaf("BlockRobot", &[])]);
            (reactive_fallback(block, goal_loop()), RobotMode::AsPedestrian)
        }
    };
    PresetBehavior { tree, robot_mode }
}
