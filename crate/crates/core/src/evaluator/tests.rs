use super::*;
use crate::world::Vec2;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

const DT: f64 = 0.05;

fn kin(x: f64, y: f64, yaw: f64, vx: f64, vy: f64) -> Kinematics {
    Kinematics {
        position: Vec2::new(x, y),
        yaw,
        velocity: Vec2::new(vx, vy),
    }
}

fn still(x: f64, y: f64, yaw: f64) -> Kinematics {
    kin(x, y, yaw, 0.0, 0.0)
}

fn meta() -> RunMeta {
    RunMeta {
        seed: 1,
        scenario_hash: "test".into(),
        dt: DT,
        robot_goal: None,
    }
}

/// `steps + 1` frames at `DT` spacing; humans all have radius 0.3, robot 0.3.
fn synth(steps: usize, robot: impl Fn(f64) -> Kinematics, humans: &[(u32, &dyn Fn(f64) -> Kinematics)]) -> TrajectoryLog {
    let mut log = TrajectoryLog::new(meta(), 0.3);
    for (id, _) in humans {
        log.human_radii.insert(*id, 0.3);
    }
    for k in 0..=steps {
        let t = k as f64 * DT;
        log.push_frame(Frame {
            t,
            robot: robot(t),
            humans: humans.iter().map(|(id, f)| (*id, f(t))).collect(),
        })
        .unwrap();
    }
    log
}

fn eval(log: &TrajectoryLog) -> WindowReport {
    MetricRegistry::builtin()
        .evaluate(log, &MetricSelection::All, None)
        .unwrap()
        .primary()
        .clone()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol || (a.is_infinite() && a == b)
}

#[test]
fn registry_has_the_full_suite() {
    let r = MetricRegistry::builtin();
    let names = r.names();
    assert_eq!(names.len(), 29);
    assert!(names.len() >= 28);
    let unique: std::collections::BTreeSet<_> = names.iter().collect();
    assert_eq!(unique.len(), names.len());
    for n in [
        "min_time_to_collision",
        "mean_danger_index",
        "surprise_event_count",
        "cumulative_danger",
        "social_work",
        "intimate_intrusions",
        "human_collision_count",
    ] {
        assert!(is_known_metric(n), "{n}");
    }
    assert!(!is_known_metric("bogus"));
}

#[test]
fn custom_metric_can_be_registered() {
    let mut r = MetricRegistry::builtin();
    r.register(MetricDef {
        name: "frame_count".into(),
        unit: "count".into(),
        definition_id: "custom.frames.v1".into(),
        description: "frames in window".into(),
        compute: std::sync::Arc::new(|i| MetricValue::Value(i.frames.len() as f64)),
    });
    let log = synth(10, |_| still(0.0, 0.0, 0.0), &[]);
    let rep = r.evaluate(&log, &MetricSelection::Names(vec!["frame_count".into()]), None).unwrap();
    assert_eq!(rep.primary().value("frame_count"), Some(11.0));
    assert_eq!(r.names().len(), 30);
    let err = r.evaluate(&log, &MetricSelection::Names(vec!["nope".into()]), None).unwrap_err();
    assert_eq!(err, EvalError::UnknownMetric("nope".into()));
}

#[test]
fn straight_line_navigation() {
    let log = synth(200, |t| kin(t, 0.0, 0.0, 1.0, 0.0), &[]);
    let r = eval(&log);
    assert!(close(r.value("path_length").unwrap(), 10.0, 1e-9));
    assert_eq!(r.value("cumulative_heading_change"), Some(0.0));
    assert!(close(r.value("avg_speed").unwrap(), 1.0, 1e-12));
    assert!(close(r.value("max_acceleration").unwrap(), 0.0, 1e-12));
    assert!(close(r.value("max_jerk").unwrap(), 0.0, 1e-12));
    // No goal configured and no humans.
    assert!(matches!(r.get("success"), Some(MetricValue::Inapplicable(_))));
    assert!(matches!(r.get("min_distance_to_human"), Some(MetricValue::Inapplicable(_))));
    assert!(matches!(r.get("robot_obstacle_collision_count"), Some(MetricValue::Inapplicable(_))));
}

/// Open square 4 × 5 m traversed at 1 m/s; yaw follows the current edge.
fn square_pose(t: f64) -> Kinematics {
    let edges = [(Vec2::new(1.0, 0.0), 4.0), (Vec2::new(0.0, 1.0), 5.0), (Vec2::new(-1.0, 0.0), 4.0), (Vec2::new(0.0, -1.0), 5.0)];
    let mut p = Vec2::zeros();
    let mut rem = t;
    for (k, (dir, len)) in edges.iter().enumerate() {
        if rem <= *len + 1e-9 || k == edges.len() - 1 {
            let q = p + dir * rem.min(*len);
            return kin(q.x, q.y, dir.y.atan2(dir.x), dir.x, dir.y);
        }
        p += dir * *len;
        rem -= len;
    }
    unreachable!()
}

#[test]
fn open_square_heading_change() {
    // 18 s covers all four edges: three corners.
    let log = synth(359, square_pose, &[]);
    let r = eval(&log);
    assert!(close(r.value("cumulative_heading_change").unwrap(), 3.0 * FRAC_PI_2, 1e-9));
    assert!(close(r.value("path_length").unwrap(), 17.95, 1e-9));
}

#[test]
fn static_robot() {
    let log = synth(100, |_| still(1.0, 1.0, 0.3), &[]);
    let r = eval(&log);
    for m in ["path_length", "avg_speed", "max_speed", "avg_acceleration", "max_acceleration", "avg_jerk", "max_jerk"] {
        assert_eq!(r.value(m), Some(0.0), "{m}");
    }
}

#[test]
fn jerk_needs_three_frames() {
    let log = synth(1, |t| kin(t, 0.0, 0.0, 1.0, 0.0), &[]);
    let r = eval(&log);
    assert!(matches!(r.get("avg_jerk"), Some(MetricValue::Inapplicable(_))));
    assert_eq!(r.value("avg_acceleration"), Some(0.0));
}

#[test]
fn goal_metrics() {
    let mut log = synth(100, |t| kin(t, 0.0, 0.0, 1.0, 0.0), &[]);
    log.meta.robot_goal = Some(Vec2::new(3.0, 0.0));
    let r = eval(&log);
    assert_eq!(r.value("success"), Some(0.0));
    assert!(matches!(r.get("time_to_goal"), Some(MetricValue::Inapplicable(_))));
    log.events.push(Event::new(3.0, Some(-1), EventKind::RobotGoalReached, "robot"));
    let r = eval(&log);
    assert_eq!(r.value("success"), Some(1.0));
    assert_eq!(r.value("time_to_goal"), Some(3.0));
}

#[test]
fn fixed_intimate_distance() {
    // Surface distance 0.3 m for 5 s.
    let log = synth(100, |_| still(0.0, 0.0, 0.0), &[(1, &|_| still(0.9, 0.0, PI))]);
    let r = eval(&log);
    assert_eq!(r.value("intimate_intrusions"), Some(1.0));
    assert!(close(r.value("intimate_intrusion_time").unwrap(), 5.0, 1e-9));
    for m in ["personal_intrusions", "personal_intrusion_time", "social_intrusions", "social_intrusion_time"] {
        assert_eq!(r.value(m), Some(0.0), "{m}");
    }
    assert!(close(r.value("min_distance_to_human").unwrap(), 0.3, 1e-12));
}

#[test]
fn flyby_min_distance_closed_form() {
    // Robot on y = 0 from x = −10 to 10 at 1 m/s, human static at lateral
    // offset h. Closed form: min surface distance = h − r_robot − r_human.
    let h = 2.6;
    let log = synth(400, |t| kin(t - 10.0, 0.0, 0.0, 1.0, 0.0), &[(1, &|_| still(0.0, h, 0.0))]);
    let r = eval(&log);
    let oracle = h - 0.3 - 0.3;
    assert!(close(r.value("min_distance_to_human").unwrap(), oracle, 1e-9));
    assert!(close(oracle, 2.0, 1e-12));
    assert_eq!(r.value("social_intrusions"), Some(1.0));
    assert_eq!(r.value("personal_intrusions"), Some(0.0));
    assert_eq!(r.value("intimate_intrusions"), Some(0.0));
}

#[test]
fn collision_hysteresis() {
    // Overlap on frames 5..=7, then separation 1 m.
    let human = |t: f64| {
        let k = (t / DT).round() as i64;
        still(if (5..=7).contains(&k) { 0.5 } else { 1.6 }, 0.0, 0.0)
    };
    let log = synth(20, |_| still(0.0, 0.0, 0.0), &[(1, &human)]);
    assert_eq!(eval(&log).value("human_collision_count"), Some(1.0));

    // Chatter inside the hysteresis band counts once.
    let chatter = |t: f64| {
        let k = (t / DT).round() as i64;
        still(if k % 2 == 0 { 0.59 } else { 0.63 }, 0.0, 0.0)
    };
    let log = synth(20, |_| still(0.0, 0.0, 0.0), &[(1, &chatter)]);
    assert_eq!(eval(&log).value("human_collision_count"), Some(1.0));

    // Two separated contacts count twice.
    let twice = |t: f64| {
        let k = (t / DT).round() as i64;
        still(if k == 3 || k == 10 { 0.55 } else { 1.0 }, 0.0, 0.0)
    };
    let log = synth(20, |_| still(0.0, 0.0, 0.0), &[(1, &twice)]);
    assert_eq!(eval(&log).value("human_collision_count"), Some(2.0));
}

#[test]
fn obstacle_collisions_with_grid() {
    let rows = ["#.........", "..........", ".........."];
    let grid = crate::world::OccupancyGrid::from_ascii(&rows, 1.0, crate::world::Pose2D::default()).unwrap();
    // Obstacle cell center (0.5, 2.5). Robot passes at 0.2 m, leaves, returns.
    let log = synth(30, |t| {
        let k = (t / DT).round() as i64;
        let x = if !(10..20).contains(&k) { 0.7 } else { 3.0 };
        still(x, 2.5, 0.0)
    }, &[]);
    let rep = MetricRegistry::builtin().evaluate(&log, &MetricSelection::All, Some(&grid)).unwrap();
    assert_eq!(rep.primary().value("robot_obstacle_collision_count"), Some(2.0));
}

#[test]
fn social_work_zero_when_far() {
    let log = synth(100, |t| kin(t, 0.0, 0.0, 1.0, 0.0), &[(1, &|_| still(0.0, 50.0, 0.0))]);
    let r = eval(&log);
    assert_eq!(r.value("social_work"), Some(0.0));
    assert_eq!(r.value("max_robot_social_force"), Some(0.0));
}

#[test]
fn social_work_halves_with_window() {
    // Time-symmetric log: the robot sweeps x = t − 5 past a human at (0, 1)
    // with zero recorded velocity, so each force sample depends on geometry
    // alone and the series is mirror-symmetric about t = 5.
    let mut log = synth(200, |t| still(t - 5.0, 0.0, 0.0), &[(1, &|_| still(0.0, 1.0, 0.0))]);
    let full = eval(&log).value("social_work").unwrap();
    assert!(full > 0.0);
    log.events.push(Event::new(0.0, None, EventKind::RecordStart, ""));
    log.events.push(Event::new(5.0, None, EventKind::RecordStop, ""));
    let half = eval(&log).value("social_work").unwrap();
    assert!(close(half, full / 2.0, 1e-9 * full), "{half} vs {full}");
}

#[test]
fn social_work_head_on_exceeds_offset() {
    // Both approach at 1 m/s; head-on on the same line vs 3 m lateral offset.
    let run = |offset: f64| {
        let human = move |t: f64| kin(5.0 - t, offset, PI, -1.0, 0.0);
        let log = synth(60, |t| kin(t - 5.0, 0.0, 0.0, 1.0, 0.0), &[(1, &human)]);
        eval(&log).value("social_work").unwrap()
    };
    let (head_on, offset) = (run(0.0), run(3.0));
    assert!(head_on > offset, "{head_on} <= {offset}");
}

#[test]
fn receding_is_harmless() {
    let log = synth(100, |t| kin(-t, 0.0, PI, -1.0, 0.0), &[(1, &|t| kin(2.0 + t, 0.0, 0.0, 1.0, 0.0))]);
    let r = eval(&log);
    assert_eq!(r.value("mean_danger_index"), Some(0.0));
    assert_eq!(r.value("cumulative_danger"), Some(0.0));
    assert_eq!(r.value("min_time_to_collision"), Some(f64::INFINITY));
    assert_eq!(r.value("surprise_event_count"), Some(0.0));
}

#[test]
fn head_on_approach_ttc_and_fov() {
    // Surface distance 5 m at t = 0: centers 5.6 m apart.
    let robot = |t: f64| kin(t, 0.0, 0.0, 1.0, 0.0);
    let first = |log: &TrajectoryLog| {
        let f = &log.frames[0];
        ApproachState::between(&f.robot, 0.3, &f.humans[0].1, 0.3)
    };
    // Human faces the robot.
    let facing = synth(60, robot, &[(1, &|_| still(5.6, 0.0, PI))]);
    let a = first(&facing);
    assert!(close(a.distance, 5.0, 1e-12));
    assert!(close(a.ttc, 5.0, 1e-12));
    assert_eq!(eval(&facing).value("surprise_event_count"), Some(0.0));
    // Robot comes from directly behind.
    let behind = synth(60, robot, &[(1, &|_| still(5.6, 0.0, 0.0))]);
    assert_eq!(eval(&behind).value("surprise_event_count"), Some(1.0));
    let r = eval(&behind);
    assert!(r.value("mean_danger_index").unwrap() > 0.0);
    assert!(close(r.value("min_time_to_collision").unwrap(), 2.0, 1e-9));
}

#[test]
fn recording_control() {
    let log = synth(2400, |t| kin(t, 0.0, 0.0, 1.0, 0.0), &[]);
    let w = log.windows().unwrap();
    assert_eq!(w, vec![Window { start: 0.0, end: 120.0 }]);

    let mut rc = RecordingControl::default();
    rc.start(10.0).unwrap();
    rc.stop(20.0).unwrap();
    let w = rc.windows(0.0, 120.0);
    assert_eq!(w.len(), 1);
    let frames = log.slice(w[0]);
    assert_eq!(frames.len() - 1, 200);
    assert!(close(frames[0].t, 10.0, 1e-9) && close(frames[200].t, 20.0, 1e-9));

    let mut rc = RecordingControl::default();
    assert_eq!(rc.stop(1.0), Err(EvalError::StopWithoutStart(1.0)));
    rc.start(1.0).unwrap();
    assert_eq!(rc.start(2.0), Err(EvalError::AlreadyRecording(2.0)));
    rc.stop(3.0).unwrap();
    rc.start(5.0).unwrap();
    assert_eq!(rc.windows(0.0, 9.0), vec![Window { start: 1.0, end: 3.0 }, Window { start: 5.0, end: 9.0 }]);
}

#[test]
fn report_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = synth(100, |t| kin(t, 0.0, 0.0, 1.0, 0.0), &[(2, &|t| kin(3.0, 1.0 - 0.1 * t, -FRAC_PI_2, 0.0, -0.1))]);
    log.meta.robot_goal = Some(Vec2::new(4.0, 0.0));
    log.events.insert(0, Event::new(0.0, None, EventKind::Meta, "run").with_detail(log.meta.to_detail()));
    log.events.insert(1, Event::new(0.0, Some(-1), EventKind::Spawn, "robot").with_detail("radius=0.3"));
    log.events.insert(2, Event::new(0.0, Some(2), EventKind::Spawn, "agent").with_detail("radius=0.3"));
    log.events.push(Event::new(1.0, Some(2), EventKind::Speech, "SaySomething").with_detail("hello, \"you\""));
    let report = MetricRegistry::builtin().evaluate(&log, &MetricSelection::All, None).unwrap();
    write_report(&log, Some(&report), dir.path()).unwrap();

    let back = TrajectoryLog::from_files(&dir.path().join("trajectories.csv"), &dir.path().join("events.csv")).unwrap();
    assert_eq!(back.frames.len(), log.frames.len());
    assert_eq!(back, log);

    let text = std::fs::read_to_string(dir.path().join("metrics.yaml")).unwrap();
    for n in MetricRegistry::builtin().names() {
        assert!(text.contains(&format!("{n}:")), "{n} missing");
    }
    let again = MetricRegistry::builtin().evaluate(&back, &MetricSelection::All, None).unwrap();
    let p2 = dir.path().join("again.yaml");
    write_metrics_yaml(&again, &p2).unwrap();
    assert_eq!(std::fs::read_to_string(p2).unwrap(), text);
}

#[test]
fn trajectory_reader_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    std::fs::write(&p, "t,id,x,y,yaw,vx,vy\n0,-1,0,0,0,0,0\n0.05,-1,zz,0,0,0,0\n").unwrap();
    let e = read_trajectories(&p).unwrap_err().to_string();
    assert!(e.contains(":3: bad value 'zz'"), "{e}");
    std::fs::write(&p, "a,b\n").unwrap();
    assert!(read_trajectories(&p).is_err());
}

// ---------------------------------------------------------------------------
// Independent oracles.

/// Brute-force zone scan: classify every (frame, human) by surface distance,
/// then count maximal runs per human.
fn oracle_zones(log: &TrajectoryLog, lo: f64, hi: f64) -> (usize, f64) {
    let ids: std::collections::BTreeSet<u32> = log.frames.iter().flat_map(|f| f.humans.iter().map(|h| h.0)).collect();
    let mut runs = 0;
    let mut steps = 0;
    for id in ids {
        let inside: Vec<bool> = log
            .frames
            .iter()
            .map(|f| {
                f.humans.iter().find(|h| h.0 == id).is_some_and(|(_, h)| {
                    let d = (h.position - f.robot.position).norm() - 0.6;
                    d >= lo && d < hi
                })
            })
            .collect();
        runs += inside.iter().enumerate().filter(|(k, &b)| b && (*k == 0 || !inside[k - 1])).count();
        steps += inside[..inside.len() - 1].iter().filter(|&&b| b).count();
    }
    (runs, steps as f64 * DT)
}

fn random_log(seed: u64, humans: usize, steps: usize) -> TrajectoryLog {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut log = TrajectoryLog::new(meta(), 0.3);
    let mut robot = (Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)), 0.0f64);
    let mut hs: Vec<(Vec2, f64)> = (0..humans)
        .map(|_| (Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)), rng.random_range(-PI..PI)))
        .collect();
    for id in 0..humans {
        log.human_radii.insert(id as u32, 0.3);
    }
    for k in 0..=steps {
        let rv = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let frame = Frame {
            t: k as f64 * DT,
            robot: Kinematics {
                position: robot.0,
                yaw: robot.1,
                velocity: rv,
            },
            humans: hs
                .iter()
                .enumerate()
                .map(|(id, (p, yaw))| {
                    (
                        id as u32,
                        Kinematics {
                            position: *p,
                            yaw: *yaw,
                            velocity: Vec2::new(yaw.cos(), yaw.sin()) * 0.8,
                        },
                    )
                })
                .collect(),
        };
        log.push_frame(frame).unwrap();
        robot.0 += rv * DT;
        robot.1 = crate::world::wrap_angle(robot.1 + rng.random_range(-0.3..0.3));
        for (p, yaw) in hs.iter_mut() {
            *p += Vec2::new(yaw.cos(), yaw.sin()) * 0.8 * DT;
            *yaw = crate::world::wrap_angle(*yaw + rng.random_range(-0.2..0.2));
        }
    }
    log
}

#[test]
fn zone_counts_match_brute_force_on_random_logs() {
    for seed in 0..100 {
        let log = random_log(seed, 1 + (seed % 4) as usize, 150);
        let r = eval(&log);
        for (name, lo, hi) in [
            ("intimate", f64::NEG_INFINITY, INTIMATE_RADIUS),
            ("personal", INTIMATE_RADIUS, PERSONAL_RADIUS),
            ("social", PERSONAL_RADIUS, SOCIAL_RADIUS),
        ] {
            let (runs, time) = oracle_zones(&log, lo, hi);
            assert_eq!(r.value(&format!("{name}_intrusions")), Some(runs as f64), "seed {seed} {name}");
            assert!(close(r.value(&format!("{name}_intrusion_time")).unwrap(), time, 1e-9), "seed {seed} {name}");
        }
    }
}

fn transform(log: &TrajectoryLog, angle: f64, shift: Vec2) -> TrajectoryLog {
    let rot = nalgebra::Rotation2::new(angle);
    let tk = |k: &Kinematics| Kinematics {
        position: rot * k.position + shift,
        yaw: crate::world::wrap_angle(k.yaw + angle),
        velocity: rot * k.velocity,
    };
    let mut out = log.clone();
    for f in &mut out.frames {
        f.robot = tk(&f.robot);
        for h in &mut f.humans {
            h.1 = tk(&h.1);
        }
    }
    out
}

#[test]
fn metrics_are_rigid_motion_invariant() {
    for seed in 0..20 {
        let log = random_log(1000 + seed, 3, 120);
        let base = eval(&log);
        let moved = eval(&transform(&log, 0.7 + seed as f64, Vec2::new(-40.0, 13.5)));
        for (a, b) in base.entries.iter().zip(&moved.entries) {
            match (&a.value, &b.value) {
                (MetricValue::Value(x), MetricValue::Value(y)) => {
                    assert!(close(*x, *y, 1e-6), "seed {seed} {}: {x} vs {y}", a.name)
                }
                (x, y) => assert_eq!(x, y, "{}", a.name),
            }
        }
    }
}

#[test]
fn window_metrics_depend_only_on_window_frames() {
    let mut log = random_log(77, 2, 200);
    log.events.push(Event::new(2.0, None, EventKind::RecordStart, ""));
    log.events.push(Event::new(6.0, None, EventKind::RecordStop, ""));
    let windowed = eval(&log);
    let mut cut = log.clone();
    cut.events.clear();
    cut.frames.retain(|f| f.t >= 2.0 - 1e-9 && f.t <= 6.0 + 1e-9);
    let direct = eval(&cut);
    assert_eq!(windowed.entries, direct.entries);
}

proptest! {
    /// Constant-velocity TTC equals the textbook quadratic root.
    #[test]
    fn ttc_matches_quadratic(px in -10.0f64..10.0, py in -10.0f64..10.0, vx in -3.0f64..3.0, vy in -3.0f64..3.0, r in 0.4f64..1.2) {
        let p = Vec2::new(px, py);
        let v = Vec2::new(vx, vy);
        let got = time_to_collision(p, v, r);
        let (a, b, c) = (vx * vx + vy * vy, 2.0 * (px * vx + py * vy), px * px + py * py - r * r);
        let disc = b * b - 4.0 * a * c;
        let want = if c <= 0.0 {
            0.0
        } else if a == 0.0 || disc < 0.0 {
            f64::INFINITY
        } else {
            let t1 = (-b - disc.sqrt()) / (2.0 * a);
            if t1 > 0.0 { t1 } else { f64::INFINITY }
        };
        prop_assert!(close(got, want, 1e-9 * want.max(1.0)), "{got} vs {want}");
        if got.is_finite() && got > 0.0 {
            prop_assert!(((p + v * got).norm() - r).abs() < 1e-6);
        }
    }

    /// min_time_to_collision on a constant-velocity log is the first frame's
    /// closed-form TTC, since TTC shrinks linearly along the log.
    #[test]
    fn log_ttc_constant_velocity(y in -1.0f64..1.0, speed in 0.2f64..2.0) {
        let human = move |t: f64| kin(8.0 - speed * t, y, PI, -speed, 0.0);
        let log = synth(40, |_| still(0.0, 0.0, 0.0), &[(1, &human)]);
        let want = time_to_collision(Vec2::new(8.0, y), Vec2::new(-speed, 0.0), 0.6) - 2.0;
        let got = eval(&log).value("min_time_to_collision").unwrap();
        prop_assert!(close(got, want.max(0.0), 1e-9), "{got} vs {want}");
    }
}
