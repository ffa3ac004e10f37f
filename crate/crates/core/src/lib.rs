//! Headless, deterministic 2-D simulator of human navigation behavior for
//! developing and benchmarking human-aware robot navigation.
//!
//! The crate is organised by subsystem:
//!
//! - [`world`]: poses, agent/robot state, occupancy grid, visibility queries
//! - [`sfm`]: social-force locomotion with parameter noise
//! - [`bt`]: behavior-tree interpreter and blackboard
//! - [`behaviors`]: the leaf-node catalog and robot-reaction presets
//! - [`scenario_io`]: scenario YAML, behavior-tree XML and map loading
//! - [`evaluator`]: trajectory logs and the social-navigation metric suite
//! - [`harness`]: fixed-timestep simulation loop and scripted robot policies
//! - [`bridge`]: newline-delimited JSON protocol for external simulators

pub mod behaviors;
pub mod bridge;
pub mod bt;
pub mod evaluator;
pub mod harness;
pub mod scenario_io;
pub mod sfm;
pub mod world;

pub use world::{AgentState, OccupancyGrid, Pose2D, RobotState, Vec2, WorldSnapshot};
