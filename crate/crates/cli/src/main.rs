//! `socnav` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use socnav_core::behaviors::registry;
use socnav_core::bridge::{bind, serve_stdio, serve_tcp, Session, SessionEnd};
use socnav_core::evaluator::{render_metrics_yaml, write_metrics_yaml, MetricRegistry, MetricValue, TrajectoryLog};
use socnav_core::harness::{run, RunConfig};
use socnav_core::scenario_io::{load_scenario, MetricSelection, RobotPolicySpec};

/// `println!` that tolerates a closed stdout (e.g. piping into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const OUT_ENV: &str = "SOCNAV_OUT_DIR";
const DEFAULT_OUT: &str = "socnav-out";

#[derive(Parser)]
#[command(name = "socnav", version, about = "Deterministic 2-D human navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectories, events and metrics.
    Run(RunArgs),
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Recompute metrics from saved trajectories and events.
    Eval(EvalArgs),
    /// List behavior-tree leaf nodes and their parameters.
    ListNodes,
    /// List available metrics.
    ListMetrics,
    /// Serve the bridge protocol to an external simulator (one session).
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// static | straight:VX,VY | waypoints:SPEED:X,Y;X,Y;... | replay:FILE
    #[arg(long, value_parser = RobotPolicySpec::parse_cli)]
    robot_policy: Option<RobotPolicySpec>,
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    out: PathBuf,
    /// `all` or comma-separated metric names.
    #[arg(long)]
    metrics: Option<String>,
    /// Recording window START:STOP in seconds; repeatable.
    #[arg(long, value_parser = parse_window)]
    record: Vec<(f64, f64)>,
}

#[derive(Args)]
struct EvalArgs {
    /// trajectories.csv of a previous run.
    #[arg(long)]
    log: PathBuf,
    /// events.csv of the same run.
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value = "all")]
    metrics: String,
    /// Scenario whose map enables obstacle metrics.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory to write metrics.yaml into; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Endpoint {
    /// Listen on this TCP port.
    #[arg(long)]
    tcp: Option<u16>,
    /// Speak the protocol on stdin/stdout.
    #[arg(long)]
    stdio: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    endpoint: Endpoint,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    out: PathBuf,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:STOP")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad time '{v}'"));
    Ok((num(a)?, num(b)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => cmd_run(a),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Eval(a) => cmd_eval(a),
        Command::ListNodes => {
            list_nodes();
            Ok(())
        }
        Command::ListMetrics => {
            for d in MetricRegistry::builtin().defs() {
                out!("{:<36} {:<8} {}", d.name, d.unit, d.description);
            }
            Ok(())
        }
        Command::Serve(a) => cmd_serve(a),
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let (scenario, text) = load_scenario(&a.scenario)?;
    let config = RunConfig {
        dt: a.dt,
        duration: a.duration,
        seed: a.seed,
        metrics: a.metrics.as_deref().map(MetricSelection::parse_cli),
        robot_policy: a.robot_policy,
        record: a.record,
        out_dir: Some(a.out.clone()),
    };
    let out = run(&scenario, &text, &config)?;
    out!(
        "{}: {} frames, {} events -> {}",
        scenario.name.as_deref().unwrap_or("scenario"),
        out.log.frames.len(),
        out.log.events.len(),
        a.out.display()
    );
    for w in &out.report.windows {
        out!("window [{}, {}]", w.window.start, w.window.end);
        for e in &w.entries {
            match &e.value {
                MetricValue::Value(v) => out!("  {:<36} {v} {}", e.name, e.unit),
                MetricValue::Inapplicable(r) => out!("  {:<36} n/a ({r})", e.name),
            }
        }
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<()> {
    let (scenario, _) = load_scenario(path)?;
    out!(
        "{}: ok ({} agents, {} groups, dt={}, duration={})",
        path.display(),
        scenario.agents.len(),
        scenario.groups.len(),
        scenario.dt,
        scenario.duration
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let log = TrajectoryLog::from_files(&a.log, &a.events)?;
    let grid = match &a.scenario {
        Some(p) => Some(load_scenario(p)?.0.build_grid()?),
        None => None,
    };
    let selection = MetricSelection::parse_cli(&a.metrics);
    let report = MetricRegistry::builtin().evaluate(&log, &selection, grid.as_deref())?;
    match a.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("metrics.yaml");
            write_metrics_yaml(&report, &path)?;
            out!("{}", path.display());
        }
        None => out!("{}", render_metrics_yaml(&report)?.trim_end()),
    }
    Ok(())
}

fn list_nodes() {
    for spec in registry().specs() {
        let params: Vec<String> = spec
            .params
            .iter()
            .map(|p| match (p.required, p.default) {
                (true, _) => format!("{}:{}", p.name, p.ty.as_str()),
                (false, Some(d)) => format!("{}:{}={d}", p.name, p.ty.as_str()),
                (false, None) => format!("{}:{}?", p.name, p.ty.as_str()),
            })
            .collect();
        out!("{:<28} {:<9} {:<48} {}", spec.name, spec.kind.as_str(), params.join(" "), spec.summary);
    }
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let mut session = Session::new(&a.out);
    let end = if a.endpoint.stdio {
        serve_stdio(&mut session)?
    } else {
        let Some(port) = a.endpoint.tcp else { bail!("no endpoint given") };
        let listener = bind(format!("{}:{port}", a.host))?;
        eprintln!("listening on {}", listener.local_addr()?);
        serve_tcp(listener, &mut session)?
    };
    match end {
        SessionEnd::Bye { flushed } | SessionEnd::Disconnected { flushed } => {
            if let Some(p) = flushed {
                eprintln!("report flushed to {}", p.parent().unwrap_or(&p).display());
            }
        }
    }
    Ok(())
}
