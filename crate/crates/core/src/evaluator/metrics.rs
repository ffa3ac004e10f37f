//! Built-in metric definitions.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::{Frame, Kinematics, MetricDef, MetricInput, MetricValue, TIME_EPS};
use crate::sfm::{default_params, pair_social_force, SfmParams};
use crate::world::{in_fov, wrap_angle, Pose2D};

/// Upper bounds (exclusive) of the proxemic zones, surface distance in m.
pub const INTIMATE_RADIUS: f64 = 0.45;
pub const PERSONAL_RADIUS: f64 = 1.2;
pub const SOCIAL_RADIUS: f64 = 3.6;
/// A new collision is counted only after separation exceeds this (m).
pub const COLLISION_HYSTERESIS: f64 = 0.05;
/// Distance scale of the danger index (m).
pub const DANGER_LENGTH: f64 = 1.5;
/// Speed normalization of the danger index (m/s).
pub const DANGER_SPEED: f64 = 1.0;
pub const SURPRISE_RANGE: f64 = 2.5;
/// Half-angle of the human's field of view for surprise events (rad).
pub const SURPRISE_FOV_HALF: f64 = 50.0 * PI / 180.0;
/// Minimum approach speed for a surprise event (m/s).
pub const SURPRISE_SPEED: f64 = 0.5;

pub fn surface_distance(a: &Kinematics, ra: f64, b: &Kinematics, rb: f64) -> f64 {
    (b.position - a.position).norm() - ra - rb
}

/// Earliest `t > 0` at which two constant-velocity discs touch: the smallest
/// positive root of `|p_rel + v_rel·t| = r_sum`. Zero when already touching,
/// `+∞` when they never do.
pub fn time_to_collision(p_rel: crate::world::Vec2, v_rel: crate::world::Vec2, r_sum: f64) -> f64 {
    let c = p_rel.dot(&p_rel) - r_sum * r_sum;
    if c <= 0.0 {
        return 0.0;
    }
    let a = v_rel.dot(&v_rel);
    let b = 2.0 * p_rel.dot(&v_rel);
    if a == 0.0 || b >= 0.0 {
        return f64::INFINITY;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    // b < 0, so q > 0 and both roots are positive; c/q is the smaller one.
    let q = -0.5 * (b - disc.sqrt());
    (c / q).min(q / a)
}

/// Robot–human relation at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachState {
    /// Surface distance (m).
    pub distance: f64,
    /// `−d(distance)/dt` (m/s); positive while closing.
    pub approach_speed: f64,
    pub ttc: f64,
}

impl ApproachState {
    pub fn between(robot: &Kinematics, r_robot: f64, human: &Kinematics, r_human: f64) -> Self {
        let p_rel = human.position - robot.position;
        let v_rel = human.velocity - robot.velocity;
        let n = p_rel.norm();
        let approach_speed = if n > 0.0 { -p_rel.dot(&v_rel) / n } else { 0.0 };
        ApproachState {
            distance: n - r_robot - r_human,
            approach_speed,
            ttc: time_to_collision(p_rel, v_rel, r_robot + r_human),
        }
    }
}

/// `exp(−d/1.5 m) · max(0, v_approach)/1 m/s`.
pub fn danger_index(distance: f64, approach_speed: f64) -> f64 {
    (-distance / DANGER_LENGTH).exp() * approach_speed.max(0.0) / DANGER_SPEED
}

fn approaches(input: &MetricInput, f: &Frame) -> Vec<(u32, ApproachState)> {
    let rr = input.log.robot_radius;
    f.humans
        .iter()
        .map(|(id, h)| (*id, ApproachState::between(&f.robot, rr, h, input.log.human_radius(*id))))
        .collect()
}

fn has_humans(input: &MetricInput) -> bool {
    input.frames.iter().any(|f| !f.humans.is_empty())
}

fn no_humans() -> MetricValue {
    MetricValue::Inapplicable("no humans in window".into())
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn max(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    xs.into_iter().fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x))))
}

/// Trapezoidal integral of per-frame samples over the frame times.
fn integrate(frames: &[Frame], ys: &[f64]) -> f64 {
    frames
        .windows(2)
        .zip(ys.windows(2))
        .map(|(f, y)| 0.5 * (y[0] + y[1]) * (f[1].t - f[0].t))
        .sum()
}

fn speeds(frames: &[Frame]) -> Vec<f64> {
    frames.iter().map(|f| f.robot.speed()).collect()
}

fn accelerations(frames: &[Frame]) -> Vec<f64> {
    let s = speeds(frames);
    frames
        .windows(2)
        .zip(s.windows(2))
        .map(|(f, s)| (s[1] - s[0]) / (f[1].t - f[0].t))
        .collect()
}

fn jerks(frames: &[Frame]) -> Vec<f64> {
    let a = accelerations(frames);
    frames
        .windows(3)
        .zip(a.windows(2))
        .map(|(f, a)| (a[1] - a[0]) / (0.5 * (f[2].t - f[0].t)))
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Zone {
    Intimate,
    Personal,
    Social,
}

fn zone_of(d: f64) -> Option<Zone> {
    if d < INTIMATE_RADIUS {
        Some(Zone::Intimate)
    } else if d < PERSONAL_RADIUS {
        Some(Zone::Personal)
    } else if d < SOCIAL_RADIUS {
        Some(Zone::Social)
    } else {
        None
    }
}

/// Per-human zone entries and time in zone. A step's duration is charged to
/// the zone occupied at its start.
fn zone_stats(input: &MetricInput, zone: Zone) -> (f64, f64) {
    let mut entries = 0usize;
    let mut time = 0.0;
    let mut prev: BTreeMap<u32, Option<Zone>> = BTreeMap::new();
    for (k, f) in input.frames.iter().enumerate() {
        let step = input.frames.get(k + 1).map(|n| n.t - f.t).unwrap_or(0.0);
        let mut now = BTreeMap::new();
        for (id, a) in approaches(input, f) {
            let z = zone_of(a.distance);
            if z == Some(zone) {
                if prev.get(&id).copied().flatten() != Some(zone) {
                    entries += 1;
                }
                time += step;
            }
            now.insert(id, z);
        }
        prev = now;
    }
    (entries as f64, time)
}

fn closest_distances(input: &MetricInput) -> Vec<f64> {
    input
        .frames
        .iter()
        .filter_map(|f| {
            approaches(input, f)
                .into_iter()
                .map(|(_, a)| a.distance)
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
        })
        .collect()
}

fn human_collisions(input: &MetricInput) -> f64 {
    let mut armed: BTreeMap<u32, bool> = BTreeMap::new();
    let mut count = 0usize;
    for f in input.frames {
        for (id, a) in approaches(input, f) {
            let arm = armed.entry(id).or_insert(true);
            if a.distance <= 0.0 && *arm {
                count += 1;
                *arm = false;
            } else if a.distance > COLLISION_HYSTERESIS {
                *arm = true;
            }
        }
    }
    count as f64
}

fn obstacle_collisions(input: &MetricInput) -> MetricValue {
    let Some(grid) = input.grid else {
        return MetricValue::Inapplicable("no occupancy grid".into());
    };
    let r = input.log.robot_radius;
    let mut armed = true;
    let mut count = 0usize;
    for f in input.frames {
        // Frames outside the map are skipped.
        let Ok((d, _)) = grid.distance_to_nearest_obstacle(f.robot.position) else {
            continue;
        };
        if d < r && armed {
            count += 1;
            armed = false;
        } else if d > r + COLLISION_HYSTERESIS {
            armed = true;
        }
    }
    MetricValue::Value(count as f64)
}

/// Per-frame `(|F on robot|, Σ_h |F on h from robot|)` under default SFM
/// parameters, with the robot treated as a pedestrian.
fn social_terms(input: &MetricInput) -> Vec<(f64, f64)> {
    let p: SfmParams = default_params();
    input
        .frames
        .iter()
        .map(|f| {
            let r = &f.robot;
            let mut on_robot = crate::world::Vec2::zeros();
            let mut on_humans = 0.0;
            for (_, h) in &f.humans {
                if (h.position - r.position).norm() > p.perception_radius {
                    continue;
                }
                if let Some(force) = pair_social_force(r.position, r.velocity, h.position, h.velocity, &p) {
                    on_robot += force;
                }
                if let Some(force) = pair_social_force(h.position, h.velocity, r.position, r.velocity, &p) {
                    on_humans += force.norm();
                }
            }
            (on_robot.norm(), on_humans)
        })
        .collect()
}

fn frame_danger(input: &MetricInput) -> Vec<f64> {
    input
        .frames
        .iter()
        .map(|f| {
            approaches(input, f)
                .iter()
                .map(|(_, a)| danger_index(a.distance, a.approach_speed))
                .fold(0.0, f64::max)
        })
        .collect()
}

fn is_surprise(f: &Frame, h: &Kinematics, a: &ApproachState) -> bool {
    let observer = Pose2D::new(h.position.x, h.position.y, h.yaw);
    a.distance <= SURPRISE_RANGE
        && !in_fov(&observer, f.robot.position, 2.0 * SURPRISE_FOV_HALF)
        && a.approach_speed > SURPRISE_SPEED
}

fn surprises(input: &MetricInput) -> f64 {
    let mut prev: BTreeMap<u32, bool> = BTreeMap::new();
    let mut count = 0usize;
    for f in input.frames {
        let mut now = BTreeMap::new();
        for ((id, h), (_, a)) in f.humans.iter().zip(approaches(input, f)) {
            let s = is_surprise(f, h, &a);
            if s && !prev.get(id).copied().unwrap_or(false) {
                count += 1;
            }
            now.insert(*id, s);
        }
        prev = now;
    }
    count as f64
}

fn value(v: f64) -> MetricValue {
    MetricValue::Value(v)
}

fn def(
    name: &str,
    unit: &str,
    id: &str,
    description: &str,
    f: impl Fn(&MetricInput) -> MetricValue + Send + Sync + 'static,
) -> MetricDef {
    MetricDef {
        name: name.into(),
        unit: unit.into(),
        definition_id: id.into(),
        description: description.into(),
        compute: Arc::new(f),
    }
}

fn needs_humans(f: impl Fn(&MetricInput) -> f64 + Send + Sync + 'static) -> impl Fn(&MetricInput) -> MetricValue + Send + Sync {
    move |i| if has_humans(i) { value(f(i)) } else { no_humans() }
}

fn needs_frames(
    min: usize,
    f: impl Fn(&MetricInput) -> f64 + Send + Sync + 'static,
) -> impl Fn(&MetricInput) -> MetricValue + Send + Sync {
    move |i| {
        if i.frames.len() >= min {
            value(f(i))
        } else {
            MetricValue::Inapplicable(format!("window shorter than {min} frames"))
        }
    }
}

pub(super) fn builtin_defs() -> Vec<MetricDef> {
    let zone = |z: Zone, name: &str| {
        let n = name.to_string();
        [
            def(
                &format!("{n}_intrusions"),
                "count",
                &format!("prox.{n}_intrusions.v1"),
                &format!("entries of the robot into a human's {n} zone, summed over humans"),
                needs_humans(move |i| zone_stats(i, z).0),
            ),
            def(
                &format!("{n}_intrusion_time"),
                "s",
                &format!("prox.{n}_time.v1"),
                &format!("time spent in a human's {n} zone, summed over humans"),
                needs_humans(move |i| zone_stats(i, z).1),
            ),
        ]
    };

    let mut out = vec![
        def("success", "bool", "nav.success.v1", "1 if the robot reached its goal by the end of the window", |i| {
            if i.log.meta.robot_goal.is_none() {
                return MetricValue::Inapplicable("no robot goal".into());
            }
            let reached = i.log.goal_reached_at().is_some_and(|t| t <= i.window.end + TIME_EPS);
            value(if reached { 1.0 } else { 0.0 })
        }),
        def("time_to_goal", "s", "nav.time_to_goal.v1", "goal arrival time minus window start", |i| {
            if i.log.meta.robot_goal.is_none() {
                return MetricValue::Inapplicable("no robot goal".into());
            }
            match i.log.goal_reached_at() {
                Some(t) if t < i.window.start - TIME_EPS => {
                    MetricValue::Inapplicable("goal reached before window".into())
                }
                Some(t) if t <= i.window.end + TIME_EPS => value(t - i.window.start),
                _ => MetricValue::Inapplicable("goal not reached".into()),
            }
        }),
        def("path_length", "m", "nav.path_length.v1", "sum of robot displacements", |i| {
            value(i.frames.windows(2).map(|f| (f[1].robot.position - f[0].robot.position).norm()).sum())
        }),
        def(
            "cumulative_heading_change",
            "rad",
            "nav.heading_change.v1",
            "sum of absolute wrapped robot yaw increments",
            |i| value(i.frames.windows(2).map(|f| wrap_angle(f[1].robot.yaw - f[0].robot.yaw).abs()).sum()),
        ),
        def("avg_speed", "m/s", "nav.avg_speed.v1", "mean robot speed over frames", |i| {
            value(mean(speeds(i.frames)).unwrap_or(0.0))
        }),
        def("max_speed", "m/s", "nav.max_speed.v1", "maximum robot speed", |i| {
            value(max(speeds(i.frames)).unwrap_or(0.0))
        }),
        def(
            "avg_acceleration",
            "m/s^2",
            "nav.avg_accel.v1",
            "mean |Δspeed/Δt| over steps",
            needs_frames(2, |i| mean(accelerations(i.frames).into_iter().map(f64::abs)).unwrap_or(0.0)),
        ),
        def(
            "max_acceleration",
            "m/s^2",
            "nav.max_accel.v1",
            "maximum |Δspeed/Δt|",
            needs_frames(2, |i| max(accelerations(i.frames).into_iter().map(f64::abs)).unwrap_or(0.0)),
        ),
        def(
            "avg_jerk",
            "m/s^3",
            "nav.avg_jerk.v1",
            "mean |Δaccel/Δt| (second difference of speed)",
            needs_frames(3, |i| mean(jerks(i.frames).into_iter().map(f64::abs)).unwrap_or(0.0)),
        ),
        def(
            "max_jerk",
            "m/s^3",
            "nav.max_jerk.v1",
            "maximum |Δaccel/Δt|",
            needs_frames(3, |i| max(jerks(i.frames).into_iter().map(f64::abs)).unwrap_or(0.0)),
        ),
    ];
    out.extend(zone(Zone::Intimate, "intimate"));
    out.extend(zone(Zone::Personal, "personal"));
    out.extend(zone(Zone::Social, "social"));
    out.extend([
        def(
            "min_distance_to_human",
            "m",
            "prox.min_distance.v1",
            "minimum robot-human surface distance",
            needs_humans(|i| closest_distances(i).into_iter().fold(f64::INFINITY, f64::min)),
        ),
        def(
            "avg_distance_to_closest_human",
            "m",
            "prox.avg_closest.v1",
            "mean over frames of the closest surface distance",
            needs_humans(|i| mean(closest_distances(i)).unwrap_or(f64::INFINITY)),
        ),
        def(
            "human_collision_count",
            "count",
            "prox.human_collisions.v1",
            "contacts (surface distance <= 0); re-armed after separation > 0.05 m",
            needs_humans(human_collisions),
        ),
        def(
            "robot_obstacle_collision_count",
            "count",
            "prox.obstacle_collisions.v1",
            "episodes with obstacle clearance < robot radius; re-armed after clearance > radius + 0.05 m",
            obstacle_collisions,
        ),
        def(
            "social_work",
            "m^2/s",
            "force.social_work.v1",
            "∫ (|F on robot| + Σ_h |F on h from robot|) dt, default SFM parameters",
            |i| {
                let y: Vec<f64> = social_terms(i).into_iter().map(|(a, b)| a + b).collect();
                value(integrate(i.frames, &y))
            },
        ),
        def(
            "avg_robot_social_force",
            "m/s^2",
            "force.robot_avg.v1",
            "mean social force on the robot",
            |i| value(mean(social_terms(i).into_iter().map(|t| t.0)).unwrap_or(0.0)),
        ),
        def(
            "max_robot_social_force",
            "m/s^2",
            "force.robot_max.v1",
            "maximum social force on the robot",
            |i| value(max(social_terms(i).into_iter().map(|t| t.0)).unwrap_or(0.0)),
        ),
        def(
            "avg_social_force_on_humans",
            "m/s^2",
            "force.humans_avg.v1",
            "mean over frames of Σ_h |F on h from robot|",
            |i| value(mean(social_terms(i).into_iter().map(|t| t.1)).unwrap_or(0.0)),
        ),
        def(
            "max_social_force_on_humans",
            "m/s^2",
            "force.humans_max.v1",
            "maximum over frames of Σ_h |F on h from robot|",
            |i| value(max(social_terms(i).into_iter().map(|t| t.1)).unwrap_or(0.0)),
        ),
        def(
            "min_time_to_collision",
            "s",
            "danger.ttc.v1",
            "minimum constant-velocity time to contact over frames and humans",
            needs_humans(|i| {
                i.frames
                    .iter()
                    .flat_map(|f| approaches(i, f))
                    .map(|(_, a)| a.ttc)
                    .fold(f64::INFINITY, f64::min)
            }),
        ),
        def(
            "mean_danger_index",
            "1",
            "danger.index_mean.v1",
            "time average of max_h exp(-d/1.5 m)·max(0, v_approach)/(1 m/s)",
            needs_humans(|i| mean(frame_danger(i)).unwrap_or(0.0)),
        ),
        def(
            "surprise_event_count",
            "count",
            "danger.surprise.v1",
            "rising edges of: within 2.5 m, outside the human's ±50° view, approaching > 0.5 m/s",
            needs_humans(surprises),
        ),
        def(
            "cumulative_danger",
            "s",
            "danger.cumulative.v1",
            "∫ danger index dt",
            needs_humans(|i| integrate(i.frames, &frame_danger(i))),
        ),
    ]);
    out
}
