//! Scripted robot motion.

use std::path::Path;

use crate::evaluator::{read_trajectories, EvalError, Kinematics};
use crate::scenario_io::RobotPolicySpec;
use crate::world::{wrap_angle, Pose2D, RobotState, Vec2};

/// Stateful controller for a [`RobotPolicySpec`]. Given the robot state at `t`
/// it returns the state at `t + dt`.
#[derive(Debug, Clone)]
pub struct RobotController {
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Static,
    Straight(Vec2),
    Waypoints { points: Vec<Vec2>, speed: f64, next: usize },
    Replay(Vec<(f64, Kinematics)>),
}

impl RobotController {
    /// `base_dir` resolves a relative replay file.
    pub fn new(spec: &RobotPolicySpec, base_dir: Option<&Path>) -> Result<Self, EvalError> {
        let kind = match spec {
            RobotPolicySpec::Static => Kind::Static,
            RobotPolicySpec::Straight { velocity } => Kind::Straight(*velocity),
            RobotPolicySpec::Waypoints { points, speed } => Kind::Waypoints {
                points: points.clone(),
                speed: *speed,
                next: 0,
            },
            RobotPolicySpec::Replay { file } => {
                let path = base_dir.map(|d| d.join(file)).unwrap_or_else(|| file.into());
                let track: Vec<(f64, Kinematics)> = read_trajectories(&path)?.into_iter().map(|f| (f.t, f.robot)).collect();
                if track.is_empty() {
                    return Err(EvalError::Format(format!("{}: no robot rows", path.display())));
                }
                Kind::Replay(track)
            }
        };
        Ok(Self { kind })
    }

    pub fn next(&mut self, robot: &RobotState, t: f64, dt: f64) -> RobotState {
        let mut out = *robot;
        match &mut self.kind {
            Kind::Static => out.velocity = Vec2::zeros(),
            Kind::Straight(v) => {
                out.velocity = *v;
                out.pose.set_position(robot.position() + *v * dt);
                if v.norm() > 0.0 {
                    out.pose.set_yaw(v.y.atan2(v.x));
                }
            }
            Kind::Waypoints { points, speed, next } => {
                let p = robot.position();
                while *next < points.len() && (points[*next] - p).norm() < 1e-9 {
                    *next += 1;
                }
                match points.get(*next) {
                    None => out.velocity = Vec2::zeros(),
                    Some(&target) => {
                        let d = target - p;
                        let step = (*speed * dt).min(d.norm());
                        let dir = d / d.norm();
                        let q = if step >= d.norm() { target } else { p + dir * step };
                        out.pose.set_position(q);
                        out.velocity = (q - p) / dt;
                        out.pose.set_yaw(dir.y.atan2(dir.x));
                        if q == target {
                            *next += 1;
                        }
                    }
                }
            }
            Kind::Replay(track) => {
                let k = interpolate(track, t + dt);
                out.pose = Pose2D::new(k.position.x, k.position.y, k.yaw);
                out.velocity = k.velocity;
            }
        }
        out
    }

    /// Replay policies dictate the initial pose too.
    pub fn initial(&self, robot: &RobotState) -> RobotState {
        match &self.kind {
            Kind::Replay(track) => {
                let k = interpolate(track, track[0].0);
                RobotState {
                    pose: Pose2D::new(k.position.x, k.position.y, k.yaw),
                    velocity: k.velocity,
                    radius: robot.radius,
                }
            }
            _ => *robot,
        }
    }
}

/// Linear interpolation of a time-sorted track; clamps outside its span and
/// reports zero velocity after the end.
fn interpolate(track: &[(f64, Kinematics)], t: f64) -> Kinematics {
    let i = track.partition_point(|(tk, _)| *tk <= t);
    if i == 0 {
        return track[0].1;
    }
    if i == track.len() {
        let mut k = track[i - 1].1;
        if t > track[i - 1].0 + 1e-9 {
            k.velocity = Vec2::zeros();
        }
        return k;
    }
    let (t0, a) = track[i - 1];
    let (t1, b) = track[i];
    let s = (t - t0) / (t1 - t0);
    Kinematics {
        position: a.position + (b.position - a.position) * s,
        yaw: wrap_angle(a.yaw + wrap_angle(b.yaw - a.yaw) * s),
        velocity: a.velocity + (b.velocity - a.velocity) * s,
    }
}
