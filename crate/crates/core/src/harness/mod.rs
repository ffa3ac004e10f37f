//! Fixed-timestep simulation loop.
//!
//! Each step reads the snapshot from the start of the step and runs, in order:
//! robot policy, every agent's behavior tree (ascending id), every agent's SFM
//! step, recording. Agents never see each other's same-step updates, so the
//! result does not depend on agent order.

mod policy;

pub use policy::RobotController;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::behaviors::{registry, LeafContext};
use crate::bt::{BehaviorTree, Blackboard, SpeechChannel, Utterance};
use crate::evaluator::{
    write_report, EvalError, Frame, MetricRegistry, MetricsReport, RecordingControl, RunMeta, TrajectoryLog,
};
use crate::scenario_io::{MetricSelection, RobotPolicySpec, Scenario, ScenarioError};
use crate::sfm::{step_agent, RobotMode, SfmError, SfmParams, MAX_DT};
use crate::world::{AgentState, Event, EventKind, OccupancyGrid, RobotState, Steering, Vec2, WorldSnapshot};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("step {step} (t={t}): {source}\n{dump}")]
    Sfm {
        step: u64,
        t: f64,
        source: SfmError,
        dump: String,
    },
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of one agent: `splitmix64(splitmix64(seed) ^ id)`. Depends only
/// on the scenario seed and the agent's own id, so adding an agent leaves the
/// others' draws untouched.
pub fn agent_seed(scenario_seed: u64, agent_id: u32) -> u64 {
    splitmix64(splitmix64(scenario_seed) ^ agent_id as u64)
}

/// Hex SHA-256 of the scenario text.
pub fn scenario_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

struct AgentRuntime {
    state: AgentState,
    tree: BehaviorTree,
    blackboard: Blackboard,
    params: SfmParams,
    robot_mode: RobotMode,
}

/// Pose and velocity of one agent as reported by an external simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedAgent {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
}

/// A running simulation.
pub struct Engine {
    dt: f64,
    step_index: u64,
    t: f64,
    grid: Arc<OccupancyGrid>,
    robot: RobotState,
    controller: RobotController,
    robot_goal: Option<(Vec2, f64)>,
    goal_reached: bool,
    agents: Vec<AgentRuntime>,
    speech: SpeechChannel,
    recording: RecordingControl,
    log: TrajectoryLog,
    last_external_t: Option<f64>,
}

impl Engine {
    /// Builds the engine for a validated scenario and records the t = 0 frame.
    pub fn new(scenario: &Scenario, scenario_hash: String) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let grid = scenario.build_grid()?;
        let groups = scenario.group_of();
        let mut agents = Vec::new();
        for spec in &scenario.agents {
            let (tree, robot_mode) = scenario.agent_behavior(spec)?;
            let mut state = AgentState::new(spec.id, spec.pose, spec.radius);
            state.desired_speed = spec.desired_speed;
            state.max_speed = spec.max_speed;
            state.goals = spec.goals.clone();
            state.group_id = groups.get(&spec.id).copied();
            agents.push(AgentRuntime {
                state,
                tree: BehaviorTree::new(tree),
                blackboard: Blackboard::new(),
                params: spec.sfm.params(agent_seed(scenario.seed, spec.id)),
                robot_mode,
            });
        }
        agents.sort_by_key(|a| a.state.id);

        let controller = RobotController::new(&scenario.robot.policy, scenario.base_dir.as_deref())?;
        let robot = controller.initial(&RobotState {
            pose: scenario.robot.pose,
            velocity: Vec2::zeros(),
            radius: scenario.robot.radius,
        });
        let meta = RunMeta {
            seed: scenario.seed,
            scenario_hash,
            dt: scenario.dt,
            robot_goal: scenario.robot.goal,
        };
        let mut log = TrajectoryLog::new(meta.clone(), robot.radius);
        log.events.push(Event::new(0.0, None, EventKind::Meta, "run").with_detail(meta.to_detail()));
        log.events
            .push(Event::new(0.0, Some(-1), EventKind::Spawn, "robot").with_detail(format!("radius={}", robot.radius)));
        for a in &agents {
            log.human_radii.insert(a.state.id, a.state.radius);
            log.events.push(
                Event::new(0.0, Some(a.state.id as i64), EventKind::Spawn, "agent")
                    .with_detail(format!("radius={}", a.state.radius)),
            );
        }
        let mut engine = Engine {
            dt: scenario.dt,
            step_index: 0,
            t: 0.0,
            grid,
            robot,
            controller,
            robot_goal: scenario.robot.goal.map(|g| (g, scenario.robot.goal_tolerance)),
            goal_reached: false,
            agents,
            speech: SpeechChannel::new(),
            recording: RecordingControl::default(),
            log,
            last_external_t: None,
        };
        engine.record()?;
        Ok(engine)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().map(|a| &a.state)
    }

    pub fn agent_params(&self, id: u32) -> Option<&SfmParams> {
        self.agents.iter().find(|a| a.state.id == id).map(|a| &a.params)
    }

    pub fn speech(&self) -> &SpeechChannel {
        &self.speech
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            t: self.t,
            robot: self.robot,
            agents: self.agents.iter().map(|a| a.state.clone()).collect(),
            grid: Some(self.grid.clone()),
        }
    }

    fn record(&mut self) -> Result<(), EvalError> {
        let frame = Frame::from_snapshot(&self.snapshot());
        match self.log.frames.last_mut() {
            Some(last) if last.t == frame.t => *last = frame,
            _ => self.log.push_frame(frame)?,
        }
        if let Some((goal, tol)) = self.robot_goal {
            if !self.goal_reached && (self.robot.position() - goal).norm() <= tol {
                self.goal_reached = true;
                self.log
                    .events
                    .push(Event::new(self.t, Some(-1), EventKind::RobotGoalReached, "robot"));
            }
        }
        Ok(())
    }

    pub fn record_start(&mut self) -> Result<(), EvalError> {
        self.recording.start(self.t)?;
        self.log.events.push(Event::new(self.t, None, EventKind::RecordStart, ""));
        Ok(())
    }

    pub fn record_stop(&mut self) -> Result<(), EvalError> {
        self.recording.stop(self.t)?;
        self.log.events.push(Event::new(self.t, None, EventKind::RecordStop, ""));
        Ok(())
    }

    /// Ticks every behavior tree and SFM step against the current snapshot and
    /// returns the agents' next states. Speech said this step is published
    /// after all trees have ticked.
    fn next_agents(&mut self) -> Result<Vec<AgentState>, HarnessError> {
        let snapshot = self.snapshot();
        let mut said: Vec<Utterance> = Vec::new();
        let mut events = Vec::new();
        let mut next = Vec::with_capacity(self.agents.len());
        for a in &mut self.agents {
            let mut working = a.state.clone();
            working.steering = Steering::default();
            let mut ctx = LeafContext {
                registry: registry(),
                snapshot: &snapshot,
                agent: &mut working,
                blackboard: &mut a.blackboard,
                speech: &self.speech,
                said: &mut said,
                events: &mut events,
            };
            a.tree.tick(&mut ctx);
            let (stepped, _) = step_agent(&working, &snapshot, &a.params, self.dt, a.robot_mode).map_err(|source| {
                HarnessError::Sfm {
                    step: self.step_index,
                    t: self.t,
                    source,
                    dump: dump(&snapshot),
                }
            })?;
            next.push(stepped);
        }
        for u in said {
            self.speech
                .push(u.t, u.speaker, u.message)
                .map_err(|e| HarnessError::Config(format!("speech: {e}")))?;
        }
        self.log.events.extend(events);
        Ok(next)
    }

    /// Advances one step with the scripted robot policy.
    pub fn step(&mut self) -> Result<(), HarnessError> {
        let robot_next = self.controller.next(&self.robot, self.t, self.dt);
        let agents_next = self.next_agents()?;
        self.robot = robot_next;
        for (a, s) in self.agents.iter_mut().zip(agents_next) {
            a.state = s;
        }
        self.step_index += 1;
        self.t = self.step_index as f64 * self.dt;
        self.record()?;
        Ok(())
    }

    /// One step driven by an external simulator: adopts the observed robot and
    /// agent states at `t` (recording them as the frame for `t`), then returns
    /// the agents' states for `t + dt`. Agents missing from `observed` keep the
    /// engine's own state.
    pub fn step_external(
        &mut self,
        t: f64,
        dt: f64,
        robot: RobotState,
        observed: &[ObservedAgent],
    ) -> Result<Vec<AgentState>, HarnessError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(HarnessError::Config(format!("dt must be in (0, {MAX_DT}], got {dt}")));
        }
        let prev = self.last_external_t.or(self.log.frames.last().map(|f| f.t));
        if let Some(prev) = prev {
            if t < prev || (t == prev && self.last_external_t.is_some()) || !t.is_finite() {
                return Err(EvalError::NonMonotonic { prev, next: t }.into());
            }
        }
        let by_id: BTreeMap<u32, &ObservedAgent> = observed.iter().map(|o| (o.id, o)).collect();
        for a in &mut self.agents {
            if let Some(o) = by_id.get(&a.state.id) {
                a.state.pose = crate::world::Pose2D::new(o.x, o.y, o.yaw);
                a.state.velocity = Vec2::new(o.vx, o.vy);
            }
        }
        self.robot = RobotState {
            radius: self.robot.radius,
            ..robot
        };
        self.t = t;
        self.dt = dt;
        self.last_external_t = Some(t);
        self.record()?;
        let next = self.next_agents()?;
        for (a, s) in self.agents.iter_mut().zip(&next) {
            a.state = s.clone();
        }
        self.step_index += 1;
        Ok(next)
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }
}

fn dump(s: &WorldSnapshot) -> String {
    let mut out = format!(
        "  robot: p=({:.4}, {:.4}) v=({:.4}, {:.4})",
        s.robot.pose.x, s.robot.pose.y, s.robot.velocity.x, s.robot.velocity.y
    );
    for a in &s.agents {
        out.push_str(&format!(
            "\n  agent {}: p=({:.4}, {:.4}) v=({:.4}, {:.4}) goal={:?}",
            a.id,
            a.pose.x,
            a.pose.y,
            a.velocity.x,
            a.velocity.y,
            a.current_goal().map(|g| (g.x, g.y))
        ));
    }
    out
}

/// Overrides applied on top of a scenario for one run.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub metrics: Option<MetricSelection>,
    pub robot_policy: Option<RobotPolicySpec>,
    /// Recording windows `(start, stop)` in seconds.
    pub record: Vec<(f64, f64)>,
    /// Directory for `trajectories.csv`, `events.csv` and `metrics.yaml`.
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Applies the overrides and re-validates.
    pub fn apply(&self, scenario: &Scenario) -> Result<Scenario, HarnessError> {
        let mut s = scenario.clone();
        if let Some(dt) = self.dt {
            s.dt = dt;
        }
        if let Some(d) = self.duration {
            s.duration = d;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(m) = &self.metrics {
            s.metrics = m.clone();
        }
        if let Some(p) = &self.robot_policy {
            s.robot.policy = p.clone();
        }
        s.validate()?;
        let mut prev_stop = f64::NEG_INFINITY;
        for &(a, b) in &self.record {
            if !(a < b) || a < 0.0 || b > s.duration + 1e-9 || a < prev_stop {
                return Err(HarnessError::Config(format!(
                    "record window {a}:{b} must satisfy 0 <= start < stop <= duration and not overlap"
                )));
            }
            prev_stop = b;
        }
        Ok(s)
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub report: MetricsReport,
    /// `metrics.yaml`, when an output directory was given.
    pub metrics_path: Option<PathBuf>,
}

/// Number of steps covering `duration` at `dt`.
pub fn step_count(duration: f64, dt: f64) -> u64 {
    (duration / dt - 1e-9).ceil().max(0.0) as u64
}

/// Runs a scenario to completion, computes its metrics and, if an output
/// directory is configured, writes the report files.
pub fn run(scenario: &Scenario, scenario_text: &str, config: &RunConfig) -> Result<RunOutput, HarnessError> {
    let s = config.apply(scenario)?;
    let mut engine = Engine::new(&s, scenario_hash(scenario_text))?;
    let mut markers: Vec<(f64, bool)> = config.record.iter().flat_map(|&(a, b)| [(a, true), (b, false)]).collect();
    markers.reverse();
    let fire = |engine: &mut Engine, markers: &mut Vec<(f64, bool)>| -> Result<(), EvalError> {
        while let Some(&(t, start)) = markers.last() {
            if t > engine.t() + 1e-9 {
                break;
            }
            markers.pop();
            if start {
                engine.record_start()?;
            } else {
                engine.record_stop()?;
            }
        }
        Ok(())
    };
    fire(&mut engine, &mut markers)?;
    for _ in 0..step_count(s.duration, s.dt) {
        engine.step()?;
        fire(&mut engine, &mut markers)?;
    }
    let grid = engine.grid.clone();
    let log = engine.into_log();
    let report = MetricRegistry::builtin().evaluate(&log, &s.metrics, Some(&grid))?;
    let metrics_path = match &config.out_dir {
        Some(dir) => Some(write_report(&log, Some(&report), dir)?),
        None => None,
    };
    Ok(RunOutput {
        log,
        report,
        metrics_path,
    })
}

/// Loads a scenario file and runs it.
pub fn run_file(path: &Path, config: &RunConfig) -> Result<RunOutput, HarnessError> {
    let (scenario, text) = crate::scenario_io::load_scenario(path)?;
    run(&scenario, &text, config)
}
