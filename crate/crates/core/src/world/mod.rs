//! Geometric primitives, agent/robot state and the occupancy grid shared by
//! every other module.

mod events;
mod grid;

pub use events::{Event, EventKind};
pub use grid::{OccupancyGrid, WorldError};

use std::f64::consts::PI;
use std::sync::Arc;

/// Planar vector in meters (positions) or m/s (velocities).
pub type Vec2 = nalgebra::Vector2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Bearing of `to` as seen from `from`, in radians.
pub fn bearing(from: Vec2, to: Vec2) -> f64 {
    let d = to - from;
    d.y.atan2(d.x)
}

/// Unit vector toward `to`, or zero when the points coincide.
pub fn unit_toward(from: Vec2, to: Vec2) -> Vec2 {
    let d = to - from;
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        Vec2::zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn set_yaw(&mut self, yaw: f64) {
        self.yaw = wrap_angle(yaw);
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn set_position(&mut self, p: Vec2) {
        self.x = p.x;
        self.y = p.y;
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.yaw.cos(), self.yaw.sin())
    }
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BehaviorStatus {
    #[default]
    Idle,
    Navigating,
    Waiting,
    Interacting,
}

impl BehaviorStatus {
    /// Animation hint handed to external simulators.
    pub fn animation_hint(&self, speed: f64) -> &'static str {
        match self {
            BehaviorStatus::Interacting => "talk",
            _ if speed > 0.05 => "walk",
            BehaviorStatus::Waiting => "wait",
            _ => "idle",
        }
    }
}

/// Per-tick motion command written by behavior-tree leaves and consumed by the
/// locomotion step. Cleared before every tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Steering {
    /// Point the desired force pulls toward; `None` means "come to rest".
    pub target: Option<Vec2>,
    /// Multiplier on the agent's desired speed.
    pub speed_scale: f64,
}

impl Default for Steering {
    fn default() -> Self {
        Self {
            target: None,
            speed_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub pose: Pose2D,
    pub velocity: Vec2,
    pub desired_speed: f64,
    pub max_speed: f64,
    pub radius: f64,
    pub group_id: Option<u32>,
    pub gaze_target: Option<Vec2>,
    pub goals: Vec<Vec2>,
    pub current_goal_index: usize,
    pub behavior_status: BehaviorStatus,
    pub steering: Steering,
}

impl AgentState {
    /// Agent at rest with walking defaults (1.0 m/s desired, 1.5 m/s max).
    pub fn new(id: u32, pose: Pose2D, radius: f64) -> Self {
        Self {
            id,
            pose,
            velocity: Vec2::zeros(),
            desired_speed: 1.0,
            max_speed: 1.5,
            radius,
            group_id: None,
            gaze_target: None,
            goals: Vec::new(),
            current_goal_index: 0,
            behavior_status: BehaviorStatus::Idle,
            steering: Steering::default(),
        }
    }

    pub fn position(&self) -> Vec2 {
        self.pose.position()
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Gaze direction: toward the gaze target if one is set, else the heading.
    pub fn gaze_direction(&self) -> Vec2 {
        match self.gaze_target {
            Some(g) if (g - self.position()).norm() > 1e-9 => unit_toward(self.position(), g),
            _ => self.pose.heading(),
        }
    }

    pub fn current_goal(&self) -> Option<Vec2> {
        self.goals.get(self.current_goal_index).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub pose: Pose2D,
    pub velocity: Vec2,
    pub radius: f64,
}

impl RobotState {
    pub fn position(&self) -> Vec2 {
        self.pose.position()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub group_id: u32,
    pub member_ids: Vec<u32>,
}

/// Time-stamped state of the whole world; the unit of recording and of the
/// bridge protocol.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub t: f64,
    pub robot: RobotState,
    pub agents: Vec<AgentState>,
    pub grid: Option<Arc<OccupancyGrid>>,
}

impl WorldSnapshot {
    pub fn agent(&self, id: u32) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }
}

/// True iff `target` lies within the `fov`-wide cone centered on the
/// observer's yaw. A target on top of the observer counts as visible.
pub fn in_fov(observer: &Pose2D, target: Vec2, fov: f64) -> bool {
    let p = observer.position();
    if (target - p).norm() == 0.0 {
        return true;
    }
    wrap_angle(bearing(p, target) - observer.yaw()).abs() <= fov / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn pose_yaw_normalized_after_mutation() {
        let mut p = Pose2D::new(0.0, 0.0, 7.0);
        assert!(p.yaw() > -PI && p.yaw() <= PI);
        p.set_yaw(-10.0);
        assert!(p.yaw() > -PI && p.yaw() <= PI);
    }

    #[test]
    fn fov_examples() {
        let east = Pose2D::new(0.0, 0.0, 0.0);
        assert!(in_fov(&east, Vec2::new(3.0, 0.0), PI / 2.0));
        assert!(!in_fov(&east, Vec2::new(0.0, 3.0), PI / 2.0));
        let west = Pose2D::new(0.0, 0.0, PI);
        assert!(in_fov(&west, Vec2::new(-2.0, 0.0), 0.1));
        assert!(in_fov(&east, Vec2::new(0.0, 0.0), 0.1));
    }

    proptest! {
        #[test]
        fn full_circle_fov_sees_everything(
            x in -10.0..10.0f64, y in -10.0..10.0f64, yaw in -4.0..4.0f64,
            tx in -10.0..10.0f64, ty in -10.0..10.0f64,
        ) {
            let o = Pose2D::new(x, y, yaw);
            prop_assert!(in_fov(&o, Vec2::new(tx, ty), 2.0 * PI));
        }

        #[test]
        fn wrap_is_idempotent(a in -100.0..100.0f64) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!((wrap_angle(w) - w).abs() < 1e-12);
        }
    }
}
