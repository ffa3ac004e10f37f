use std::f64::consts::PI;

use super::{def, opt, req, LeafContext, LeafKind, NodeSpec, ParamSpec, ParamType as T, TickFn, ARRIVAL_RADIUS};
use crate::bt::{BbValue, LeafMemory, Params, Status, Utterance, TIME_EPS};
use crate::world::{bearing, in_fov, unit_toward, wrap_angle, BehaviorStatus, EventKind, Pose2D, Vec2};

/// Minimum improvement that counts as progress for stall detection (m).
const PROGRESS_EPS: f64 = 0.05;
const GOTO_STALL: f64 = 10.0;
const APPROACH_STALL: f64 = 20.0;
/// Entering the observation phase of ApproachRobot at this multiple of the stop distance.
const APPROACH_SLACK: f64 = 1.1;
const FORMATION_POS_TOL: f64 = 0.2;
const FORMATION_YAW_TOL: f64 = 0.3;
/// A participant must also have slowed to this speed before the formation holds.
const FORMATION_SETTLE_SPEED: f64 = 0.1;
/// FollowAgent aims this many seconds ahead of the followed agent's slot.
const FOLLOW_LEAD: f64 = 1.0;
const FLEE_STEP: f64 = 2.0;

macro_rules! ps {
    ($($p:expr),* $(,)?) => {{
        const P: &[ParamSpec] = &[$($p),*];
        P
    }};
}

pub(super) fn standard_specs() -> Vec<NodeSpec> {
    use LeafKind::{Action, Condition};
    let spec = |name: &'static str, kind: LeafKind, params: &'static [ParamSpec], summary: &'static str, tick: TickFn| NodeSpec {
        name,
        kind,
        params,
        quiet: false,
        summary,
        tick,
    };
    let quiet = |name: &'static str, kind: LeafKind, params: &'static [ParamSpec], summary: &'static str, tick: TickFn| NodeSpec {
        name,
        kind,
        params,
        quiet: true,
        summary,
        tick,
    };
    vec![
        spec(
            "GoTo",
            Action,
            ps![opt("goal", T::Point), def("tolerance", T::Number, "0.3")],
            "walk to `goal`, or to the agent's next goal (cycling) when omitted",
            go_to,
        ),
        spec("LookAtPoint", Action, ps![req("point", T::Point)], "gaze at a point", look_at_point),
        spec("LookAtAgent", Action, ps![req("agent_id", T::Id)], "gaze at another agent", look_at_agent),
        spec("LookAtRobot", Action, ps![], "gaze at the robot", look_at_robot),
        spec(
            "StopAndWaitTimer",
            Action,
            ps![req("duration", T::Number)],
            "stop and wait for `duration` seconds",
            stop_and_wait,
        ),
        spec(
            "ApproachRobot",
            Action,
            ps![def("stop_distance", T::Number, "1.5"), def("observe_time", T::Number, "3")],
            "walk up to the robot and watch it",
            approach_robot,
        ),
        spec(
            "ConversationFormation",
            Action,
            ps![req("partner_ids", T::IdList), def("circle_radius", T::Number, "0.9")],
            "take a slot on a conversation circle and face its center",
            conversation_formation,
        ),
        spec(
            "FollowAgent",
            Action,
            ps![req("target_id", T::Id), def("follow_distance", T::Number, "1.2")],
            "walk behind another agent",
            follow_agent,
        ),
        spec(
            "SaySomething",
            Action,
            ps![def("message", T::Text, "")],
            "publish an utterance on the speech channel",
            say_something,
        ),
        spec(
            "BlockRobot",
            Action,
            ps![def("distance", T::Number, "1")],
            "stand in front of the robot, facing it",
            block_robot,
        ),
        spec(
            "FleeFromRobot",
            Action,
            ps![def("safe_distance", T::Number, "5")],
            "walk away from the robot until far enough",
            flee_from_robot,
        ),
        spec(
            "IsAtPosition",
            Condition,
            ps![opt("agent_id", T::Id), req("point", T::Point), def("tolerance", T::Number, "0.5")],
            "agent (default: self) within `tolerance` of `point`",
            is_at_position,
        ),
        spec(
            "IsAgentNearby",
            Condition,
            ps![req("agent_id", T::Id), def("range", T::Number, "2")],
            "another agent within `range`",
            is_agent_nearby,
        ),
        spec(
            "IsRobotNearby",
            Condition,
            ps![def("range", T::Number, "2")],
            "robot within `range`",
            is_robot_nearby,
        ),
        spec(
            "IsRobotVisible",
            Condition,
            ps![def("range", T::Number, "5"), def("fov", T::Number, "2.0943951023931957")],
            "robot within `range`, inside the field of view and in line of sight",
            is_robot_visible,
        ),
        spec(
            "IsSpeaking",
            Condition,
            ps![opt("speaker_id", T::Id), opt("message", T::Text)],
            "a matching utterance was made in the last 5 s",
            is_speaking,
        ),
        spec(
            "IsLookingAtMe",
            Condition,
            ps![req("observer_id", T::Id), def("cone", T::Number, "1.0471975511965976")],
            "the observer's gaze points at this agent",
            is_looking_at_me,
        ),
        spec(
            "TimeExpired",
            Condition,
            ps![req("duration", T::Number)],
            "`duration` seconds elapsed since first tick",
            time_expired,
        ),
        quiet("SetFlag", Action, ps![req("key", T::Text)], "set a blackboard flag", set_flag),
        quiet("ClearFlag", Action, ps![req("key", T::Text)], "clear a blackboard flag", clear_flag),
        quiet("IsFlagSet", Condition, ps![req("key", T::Text)], "blackboard flag is set", is_flag_set),
        quiet(
            "SetSpeedFactor",
            Action,
            ps![req("factor", T::Number)],
            "scale the desired speed for this tick",
            set_speed_factor,
        ),
    ]
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Success
    } else {
        Status::Failure
    }
}

fn arrival_scale(dist: f64) -> f64 {
    (dist / ARRIVAL_RADIUS).min(1.0)
}

fn steer(ctx: &mut LeafContext<'_>, target: Vec2, scale: f64) {
    ctx.agent.steering.target = Some(target);
    ctx.agent.steering.speed_scale *= scale;
}

/// Returns true once `metric` has not improved by `PROGRESS_EPS` for `window` seconds.
fn stalled(m: &mut LeafMemory, now: f64, metric: f64, window: f64) -> bool {
    match (m.progress_value, m.progress_t) {
        (Some(best), Some(since)) => {
            if metric < best - PROGRESS_EPS {
                m.progress_value = Some(metric);
                m.progress_t = Some(now);
                false
            } else {
                now - since >= window - TIME_EPS
            }
        }
        _ => {
            m.progress_value = Some(metric);
            m.progress_t = Some(now);
            false
        }
    }
}

fn elapsed_since_first_tick(m: &mut LeafMemory, now: f64) -> f64 {
    now - *m.started_at.get_or_insert(now)
}

/// Position of agent `id`, reading this agent's own working copy for itself.
fn agent_position(ctx: &LeafContext<'_>, id: u32) -> Option<Vec2> {
    if id == ctx.agent.id {
        Some(ctx.agent.position())
    } else {
        ctx.snapshot.agent(id).map(|a| a.position())
    }
}

fn clear_line(ctx: &LeafContext<'_>, a: Vec2, b: Vec2) -> bool {
    match &ctx.snapshot.grid {
        Some(g) => g.line_of_sight(a, b).unwrap_or(false),
        None => true,
    }
}

fn is_visible(ctx: &LeafContext<'_>, observer: &Pose2D, target: Vec2, range: f64, fov: f64) -> bool {
    (target - observer.position()).norm() <= range
        && in_fov(observer, target, fov)
        && clear_line(ctx, observer.position(), target)
}

fn go_to(ctx: &mut LeafContext<'_>, p: &Params, m: &mut LeafMemory) -> Status {
    let explicit = p.point("goal");
    let Some(goal) = explicit.or_else(|| ctx.agent.current_goal()) else {
        return Status::Failure;
    };
    let tol = p.number("tolerance").unwrap_or(0.3);
    let pos = ctx.agent.position();
    ctx.agent.gaze_target = None;
    ctx.agent.behavior_status = BehaviorStatus::Navigating;
    let dist = (goal - pos).norm();
    if dist <= tol {
        let next = if explicit.is_none() {
            let n = ctx.agent.goals.len();
            ctx.agent.current_goal_index = (ctx.agent.current_goal_index + 1) % n;
            ctx.agent.current_goal().unwrap_or(goal)
        } else {
            goal
        };
        // Keep walking toward the next target until another leaf takes over.
        steer(ctx, next, 1.0);
        return Status::Success;
    }
    if stalled(m, ctx.snapshot.t, dist, GOTO_STALL) {
        return Status::Failure;
    }
    steer(ctx, goal, 1.0);
    Status::Running
}

fn look_at_point(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    match p.point("point") {
        Some(pt) => {
            ctx.agent.gaze_target = Some(pt);
            Status::Success
        }
        None => Status::Failure,
    }
}

fn look_at_agent(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let target = p.id("agent_id").filter(|&id| id != ctx.agent.id);
    match target.and_then(|id| ctx.snapshot.agent(id)).map(|a| a.position()) {
        Some(pt) => {
            ctx.agent.gaze_target = Some(pt);
            Status::Success
        }
        None => Status::Failure,
    }
}

fn look_at_robot(ctx: &mut LeafContext<'_>, _p: &Params, _m: &mut LeafMemory) -> Status {
    ctx.agent.gaze_target = Some(ctx.snapshot.robot.position());
    Status::Success
}

fn stop_and_wait(ctx: &mut LeafContext<'_>, p: &Params, m: &mut LeafMemory) -> Status {
    let duration = p.number("duration").unwrap_or(0.0);
    if duration <= 0.0 {
        return Status::Failure;
    }
    ctx.agent.steering.target = None;
    ctx.agent.behavior_status = BehaviorStatus::Waiting;
    if elapsed_since_first_tick(m, ctx.snapshot.t) >= duration - TIME_EPS {
        Status::Success
    } else {
        Status::Running
    }
}

fn approach_robot(ctx: &mut LeafContext<'_>, p: &Params, m: &mut LeafMemory) -> Status {
    let stop = p.number("stop_distance").unwrap_or(1.5);
    let observe = p.number("observe_time").unwrap_or(3.0);
    let robot = ctx.snapshot.robot;
    if stop <= robot.radius + ctx.agent.radius {
        return Status::Failure;
    }
    let now = ctx.snapshot.t;
    let pos = ctx.agent.position();
    let r = robot.position();
    ctx.agent.gaze_target = Some(r);
    let dist = (pos - r).norm();
    if m.phase == 0 && dist <= stop * APPROACH_SLACK {
        m.phase = 1;
        m.phase_t = Some(now);
    }
    if m.phase == 1 {
        ctx.agent.steering.target = None;
        ctx.agent.behavior_status = BehaviorStatus::Interacting;
        let since = m.phase_t.unwrap_or(now);
        return if now - since >= observe - TIME_EPS {
            Status::Success
        } else {
            Status::Running
        };
    }
    if stalled(m, now, dist, APPROACH_STALL) {
        return Status::Failure;
    }
    let away = if dist > 0.0 { (pos - r) / dist } else { -ctx.agent.pose.heading() };
    let goal = r + away * stop;
    ctx.agent.behavior_status = BehaviorStatus::Navigating;
    steer(ctx, goal, arrival_scale((goal - pos).norm()));
    Status::Running
}

/// Slot of `me` on a circle of `radius` around the participants' centroid.
/// Slots are equally spaced by ascending id, starting at the bearing of the
/// lowest-id participant as seen from the centroid.
pub(crate) fn formation_slot(participants: &[(u32, Vec2)], me: u32, radius: f64) -> Option<(Vec2, Vec2)> {
    let mut ps = participants.to_vec();
    ps.sort_by_key(|(id, _)| *id);
    ps.dedup_by_key(|(id, _)| *id);
    let n = ps.len();
    if n < 2 {
        return None;
    }
    let rank = ps.iter().position(|(id, _)| *id == me)?;
    let centroid = ps.iter().map(|(_, p)| *p).sum::<Vec2>() / n as f64;
    let first = ps[0].1;
    let base = if (first - centroid).norm() > 1e-9 {
        bearing(centroid, first)
    } else {
        0.0
    };
    let angle = base + 2.0 * PI * rank as f64 / n as f64;
    Some((centroid + Vec2::new(angle.cos(), angle.sin()) * radius, centroid))
}

fn conversation_formation(ctx: &mut LeafContext<'_>, p: &Params, m: &mut LeafMemory) -> Status {
    let radius = p.number("circle_radius").unwrap_or(0.9);
    let Some(partners) = p.ids("partner_ids") else {
        return Status::Failure;
    };
    let me = ctx.agent.id;
    let mut participants = vec![(me, ctx.agent.position())];
    for &id in partners {
        if id == me {
            continue;
        }
        match ctx.snapshot.agent(id) {
            Some(a) => participants.push((id, a.position())),
            None => return Status::Failure,
        }
    }
    let Some((slot, centroid)) = formation_slot(&participants, me, radius) else {
        return Status::Failure;
    };
    let pos = ctx.agent.position();
    ctx.agent.gaze_target = Some(centroid);
    ctx.agent.behavior_status = BehaviorStatus::Interacting;
    let to_slot = (slot - pos).norm();
    steer(ctx, slot, arrival_scale(to_slot));
    let facing = wrap_angle(bearing(pos, centroid) - ctx.agent.pose.yaw()).abs() < FORMATION_YAW_TOL;
    let settled = ctx.agent.speed() <= FORMATION_SETTLE_SPEED;
    if to_slot <= FORMATION_POS_TOL && facing && settled {
        m.latched = true;
    }
    if m.latched {
        Status::Success
    } else {
        Status::Running
    }
}

fn follow_agent(ctx: &mut LeafContext<'_>, p: &Params, m: &mut LeafMemory) -> Status {
    let fd = p.number("follow_distance").unwrap_or(1.2);
    let target = p
        .id("target_id")
        .filter(|&id| id != ctx.agent.id)
        .and_then(|id| ctx.snapshot.agent(id));
    let Some(target) = target else {
        // A target that disappears mid-follow ends the action normally.
        return status(m.latched);
    };
    m.latched = true;
    let heading = if target.speed() > 0.05 {
        target.velocity / target.speed()
    } else {
        target.pose.heading()
    };
    let slot = target.position() - heading * fd;
    let lead = slot + target.velocity * FOLLOW_LEAD;
    let pos = ctx.agent.position();
    ctx.agent.gaze_target = None;
    ctx.agent.behavior_status = BehaviorStatus::Navigating;
    steer(ctx, lead, arrival_scale((lead - pos).norm()));
    Status::Running
}

fn say_something(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let message = p.text("message").unwrap_or("").to_string();
    ctx.agent.behavior_status = BehaviorStatus::Interacting;
    ctx.said.push(Utterance {
        t: ctx.snapshot.t,
        speaker: ctx.agent.id,
        message: message.clone(),
    });
    ctx.log(EventKind::Speech, "SaySomething", &message);
    Status::Success
}

fn block_robot(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let distance = p.number("distance").unwrap_or(1.0);
    let robot = ctx.snapshot.robot;
    let front = robot.position() + robot.pose.heading() * distance;
    let pos = ctx.agent.position();
    ctx.agent.gaze_target = Some(robot.position());
    ctx.agent.behavior_status = BehaviorStatus::Interacting;
    steer(ctx, front, arrival_scale((front - pos).norm()));
    Status::Running
}

fn flee_from_robot(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let safe = p.number("safe_distance").unwrap_or(5.0);
    let r = ctx.snapshot.robot.position();
    let pos = ctx.agent.position();
    if (pos - r).norm() >= safe {
        return Status::Success;
    }
    let away = if (pos - r).norm() > 0.0 {
        unit_toward(r, pos)
    } else {
        -ctx.agent.pose.heading()
    };
    ctx.agent.gaze_target = None;
    ctx.agent.behavior_status = BehaviorStatus::Navigating;
    steer(ctx, pos + away * FLEE_STEP, 1.0);
    Status::Running
}

fn is_at_position(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let id = p.id("agent_id").unwrap_or(ctx.agent.id);
    let (Some(pt), Some(pos)) = (p.point("point"), agent_position(ctx, id)) else {
        return Status::Failure;
    };
    status((pos - pt).norm() <= p.number("tolerance").unwrap_or(0.5))
}

fn is_agent_nearby(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let other = p.id("agent_id").filter(|&id| id != ctx.agent.id);
    match other.and_then(|id| ctx.snapshot.agent(id)) {
        Some(a) => status((a.position() - ctx.agent.position()).norm() <= p.number("range").unwrap_or(2.0)),
        None => Status::Failure,
    }
}

fn is_robot_nearby(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let d = (ctx.snapshot.robot.position() - ctx.agent.position()).norm();
    status(d <= p.number("range").unwrap_or(2.0))
}

fn is_robot_visible(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let range = p.number("range").unwrap_or(5.0);
    let fov = p.number("fov").unwrap_or(super::DEFAULT_FOV);
    let pose = ctx.agent.pose;
    status(is_visible(ctx, &pose, ctx.snapshot.robot.position(), range, fov))
}

fn is_speaking(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let speaker = p.id("speaker_id");
    let message = p.text("message");
    let hit = ctx
        .speech
        .active(ctx.snapshot.t)
        .any(|u| speaker.is_none_or(|s| s == u.speaker) && message.is_none_or(|msg| msg == u.message));
    status(hit)
}

fn is_looking_at_me(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    let cone = p.number("cone").unwrap_or(PI / 3.0);
    let observer = p.id("observer_id").filter(|&id| id != ctx.agent.id);
    let Some(obs) = observer.and_then(|id| ctx.snapshot.agent(id)) else {
        return Status::Failure;
    };
    let me = ctx.agent.position();
    let to_me = me - obs.position();
    if to_me.norm() == 0.0 {
        return Status::Success;
    }
    let gaze = obs.gaze_direction();
    let angle = wrap_angle(to_me.y.atan2(to_me.x) - gaze.y.atan2(gaze.x)).abs();
    status(angle <= cone / 2.0 && clear_line(ctx, obs.position(), me))
}

fn time_expired(ctx: &mut LeafContext<'_>, p: &Params, m: &mut LeafMemory) -> Status {
    let duration = p.number("duration").unwrap_or(0.0);
    status(elapsed_since_first_tick(m, ctx.snapshot.t) >= duration - TIME_EPS)
}

fn set_flag(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    match p.text("key") {
        Some(k) => {
            ctx.blackboard.set(k, BbValue::Flag(true));
            Status::Success
        }
        None => Status::Failure,
    }
}

fn clear_flag(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    if let Some(k) = p.text("key") {
        ctx.blackboard.remove(k);
    }
    Status::Success
}

fn is_flag_set(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    status(p.text("key").is_some_and(|k| ctx.blackboard.flag(k)))
}

fn set_speed_factor(ctx: &mut LeafContext<'_>, p: &Params, _m: &mut LeafMemory) -> Status {
    match p.number("factor") {
        Some(f) if f >= 0.0 => {
            ctx.agent.steering.speed_scale *= f;
            Status::Success
        }
        _ => Status::Failure,
    }
}
