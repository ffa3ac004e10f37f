//! Social Force Model locomotion.
//!
//! Every agent is driven by the sum of four mass-normalised forces:
//!
//! - **desired**: `k_desired · (v0·ê_goal − v) / τ`
//! - **obstacle**: `k_obstacle · exp((r − d) / B) · n̂`, with `d`, `n̂` from the
//!   grid distance field
//! - **social**: for each neighbor `j` with offset `d = p_j − p_i` and
//!   `ê = d/|d|`, the interaction vector is `D = λ(v_i − v_j) + ê`, its range
//!   `B = γ|D|`, its direction `t̂ = D/|D|` and `θ` the signed angle from `t̂`
//!   to `ê`; the pair contributes
//!   `k_social · (f_v·t̂ + f_θ·n̂⊥)` with
//!   `f_v = −exp(−|d|/B − (n′Bθ)²)`, `f_θ = −sign(θ)·exp(−|d|/B − (nBθ)²)`
//!   and `n̂⊥` the left normal of `t̂`
//! - **group**: gaze, coherence and repulsion terms relative to the centroid
//!   of the other group members
//!
//! Integration is semi-implicit Euler with a speed clamp and a yaw-rate limit.

mod params;

pub use params::{default_params, sample_params, ParamMode, SfmParams, NOISE_REL_SIGMA, NOISE_TRUNCATION};

use std::f64::consts::PI;

use thiserror::Error;

use crate::world::{bearing, unit_toward, wrap_angle, AgentState, Group, OccupancyGrid, Vec2, WorldSnapshot};

/// Largest admissible integration step (s).
pub const MAX_DT: f64 = 0.2;
/// Maximum yaw rate (rad/s).
pub const MAX_YAW_RATE: f64 = PI;
/// Below this speed the heading is not derived from the velocity (m/s).
pub const HEADING_SPEED_THRESHOLD: f64 = 0.05;
/// Extra clearance under which group members repel each other (m).
pub const GROUP_REPULSION_MARGIN: f64 = 0.2;
/// |θ| at or below this counts as head-on in the social force (rad).
pub const THETA_DEADBAND: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SfmError {
    #[error("invalid SFM parameters: {0}")]
    InvalidParams(String),
    #[error("dt must be in (0, {MAX_DT}], got {0}")]
    InvalidDt(f64),
    #[error("group requires ≥2 members (group {0})")]
    SingletonGroup(u32),
    #[error("non-finite force on agent {agent}: {breakdown:?}")]
    NonFinite { agent: u32, breakdown: ForceBreakdown },
}

/// How the robot enters an agent's social force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobotMode {
    /// The robot is one more pedestrian.
    AsPedestrian,
    /// The robot exerts no social force.
    Ignored,
    /// The robot's pairwise contribution is scaled by the factor.
    CustomFactor(f64),
}

impl RobotMode {
    fn weight(&self) -> Option<f64> {
        match self {
            RobotMode::AsPedestrian => Some(1.0),
            RobotMode::Ignored => None,
            RobotMode::CustomFactor(k) => Some(*k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceBreakdown {
    pub desired: Vec2,
    pub obstacle: Vec2,
    pub social: Vec2,
    pub group: Vec2,
    pub total: Vec2,
    /// The robot's share of `social`, as applied (after the robot-mode weight).
    pub social_from_robot: Vec2,
    /// Neighbor pairs skipped because positions coincided.
    pub coincident_pairs: u32,
}

impl ForceBreakdown {
    fn new(desired: Vec2, obstacle: Vec2, social: Vec2, group: Vec2) -> Self {
        Self {
            desired,
            obstacle,
            social,
            group,
            total: desired + obstacle + social + group,
            social_from_robot: Vec2::zeros(),
            coincident_pairs: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.desired, self.obstacle, self.social, self.group, self.total]
            .iter()
            .all(|v| v.x.is_finite() && v.y.is_finite())
    }
}

/// Attraction toward `goal` at the agent's scaled desired speed. With no goal
/// (or a goal on top of the agent) the force only relaxes the velocity to zero.
pub fn desired_force(agent: &AgentState, goal: Option<Vec2>, params: &SfmParams) -> Vec2 {
    let v0 = agent.desired_speed * agent.steering.speed_scale;
    let e = goal.map(|g| unit_toward(agent.position(), g)).unwrap_or_else(Vec2::zeros);
    (e * v0 - agent.velocity) * (params.k_desired / params.relaxation_time)
}

/// Exponential repulsion from the nearest occupied cell. Zero on obstacle-free
/// maps and for agents outside the grid.
pub fn obstacle_force(agent: &AgentState, grid: &OccupancyGrid, params: &SfmParams) -> Vec2 {
    match grid.distance_to_nearest_obstacle(agent.position()) {
        Ok((d, away)) if d.is_finite() => {
            away * (params.k_obstacle * ((agent.radius - d) / params.b_obstacle).exp())
        }
        _ => Vec2::zeros(),
    }
}

/// Interaction force exerted on an agent at `(p_i, v_i)` by one neighbor.
/// `None` when the positions coincide.
pub fn pair_social_force(p_i: Vec2, v_i: Vec2, p_j: Vec2, v_j: Vec2, params: &SfmParams) -> Option<Vec2> {
    let d = p_j - p_i;
    let dist = d.norm();
    if dist == 0.0 {
        return None;
    }
    let e = d / dist;
    let big_d = (v_i - v_j) * params.lambda + e;
    let d_norm = big_d.norm();
    if d_norm == 0.0 {
        return Some(Vec2::zeros());
    }
    let t = big_d / d_norm;
    let b = params.gamma * d_norm;
    let theta = wrap_angle(e.y.atan2(e.x) - t.y.atan2(t.x));
    // Parallel directions give θ = ±1e-17 from rounding; without the band the
    // tangential term would switch fully on or off on noise.
    let sign = if theta > THETA_DEADBAND {
        1.0
    } else if theta < -THETA_DEADBAND {
        -1.0
    } else {
        0.0
    };
    let f_v = -(-dist / b - (params.n_prime * b * theta).powi(2)).exp();
    let f_theta = -sign * (-dist / b - (params.n * b * theta).powi(2)).exp();
    let normal = Vec2::new(-t.y, t.x);
    Some((t * f_v + normal * f_theta) * params.k_social)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialForce {
    pub force: Vec2,
    pub coincident_pairs: u32,
}

/// Sum of pairwise interactions with `others` (position, velocity), ignoring
/// neighbors beyond the perception radius.
pub fn social_force(agent: &AgentState, others: &[(Vec2, Vec2)], params: &SfmParams) -> SocialForce {
    let p = agent.position();
    let mut out = SocialForce {
        force: Vec2::zeros(),
        coincident_pairs: 0,
    };
    for &(pj, vj) in others {
        if (pj - p).norm() > params.perception_radius {
            continue;
        }
        match pair_social_force(p, agent.velocity, pj, vj, params) {
            Some(f) => out.force += f,
            None => out.coincident_pairs += 1,
        }
    }
    out
}

/// Group gaze, coherence and repulsion on `agent`. Members missing from
/// `states` are skipped.
pub fn group_forces(
    agent: &AgentState,
    group: &Group,
    states: &[AgentState],
    params: &SfmParams,
) -> Result<Vec2, SfmError> {
    if group.member_ids.len() < 2 {
        return Err(SfmError::SingletonGroup(group.group_id));
    }
    let others: Vec<&AgentState> = group
        .member_ids
        .iter()
        .filter(|&&id| id != agent.id)
        .filter_map(|&id| states.iter().find(|s| s.id == id))
        .collect();
    if others.is_empty() {
        return Ok(Vec2::zeros());
    }
    let p = agent.position();
    let centroid = others.iter().map(|s| s.position()).sum::<Vec2>() / others.len() as f64;
    let to_centroid = unit_toward(p, centroid);

    let beta = wrap_angle(bearing(p, centroid) - agent.pose.yaw()).abs();
    let gaze = to_centroid * (params.k_group_gaze * (beta - PI / 2.0).max(0.0));

    let n_members = others.len() + 1;
    let coherence = if (p - centroid).norm() > (n_members as f64 - 1.0) / 2.0 {
        to_centroid * params.k_group_coherence
    } else {
        Vec2::zeros()
    };

    let mut repulsion = Vec2::zeros();
    for o in &others {
        if (o.position() - p).norm() < agent.radius + o.radius + GROUP_REPULSION_MARGIN {
            repulsion -= unit_toward(p, o.position()) * params.k_group_repulsion;
        }
    }
    Ok(gaze + coherence + repulsion)
}

/// Advances one agent by `dt` against the previous `snapshot`.
///
/// The agent passed in carries the steering written by this tick's behavior
/// leaves; its stale copy inside `snapshot` is ignored.
pub fn step_agent(
    agent: &AgentState,
    snapshot: &WorldSnapshot,
    params: &SfmParams,
    dt: f64,
    robot_mode: RobotMode,
) -> Result<(AgentState, ForceBreakdown), SfmError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(SfmError::InvalidDt(dt));
    }
    let desired = desired_force(agent, agent.steering.target, params);
    let obstacle = snapshot
        .grid
        .as_deref()
        .map(|g| obstacle_force(agent, g, params))
        .unwrap_or_else(Vec2::zeros);

    let neighbors: Vec<(Vec2, Vec2)> = snapshot
        .agents
        .iter()
        .filter(|a| a.id != agent.id)
        .map(|a| (a.position(), a.velocity))
        .collect();
    let humans = social_force(agent, &neighbors, params);
    let mut coincident = humans.coincident_pairs;
    let mut from_robot = Vec2::zeros();
    if let Some(w) = robot_mode.weight() {
        let r = &snapshot.robot;
        let f = social_force(agent, &[(r.position(), r.velocity)], params);
        from_robot = f.force * w;
        coincident += f.coincident_pairs;
    }

    let group = match agent.group_id {
        Some(gid) => {
            let members: Vec<AgentState> = snapshot
                .agents
                .iter()
                .filter(|a| a.group_id == Some(gid))
                .map(|a| if a.id == agent.id { agent.clone() } else { a.clone() })
                .collect();
            if members.len() >= 2 {
                let g = Group {
                    group_id: gid,
                    member_ids: members.iter().map(|m| m.id).collect(),
                };
                group_forces(agent, &g, &members, params)?
            } else {
                Vec2::zeros()
            }
        }
        None => Vec2::zeros(),
    };

    let mut breakdown = ForceBreakdown::new(desired, obstacle, humans.force + from_robot, group);
    breakdown.social_from_robot = from_robot;
    breakdown.coincident_pairs = coincident;
    if !breakdown.is_finite() {
        return Err(SfmError::NonFinite {
            agent: agent.id,
            breakdown,
        });
    }

    let mut next = agent.clone();
    let mut v = agent.velocity + breakdown.total * dt;
    let speed = v.norm();
    if speed > agent.max_speed {
        v *= agent.max_speed / speed;
    }
    next.velocity = v;
    next.pose.set_position(agent.position() + v * dt);

    let p = next.position();
    let heading = match agent.gaze_target {
        Some(g) if (g - p).norm() > 1e-6 => Some(bearing(p, g)),
        _ if v.norm() > HEADING_SPEED_THRESHOLD => Some(v.y.atan2(v.x)),
        _ => None,
    };
    if let Some(h) = heading {
        let max_turn = MAX_YAW_RATE * dt;
        let turn = wrap_angle(h - agent.pose.yaw()).clamp(-max_turn, max_turn);
        next.pose.set_yaw(agent.pose.yaw() + turn);
    }
    Ok((next, breakdown))
}

#[cfg(test)]
mod tests;
