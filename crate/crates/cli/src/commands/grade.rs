//! Replay a pose-log CSV through the run supervisor: deterministic grading,
//! event-log export, and a leaderboard append.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use mirage_core::supervisor::{
    append_leaderboard, write_event_log, LeaderboardRecord, RunState, Supervisor,
};
use mirage_core::transport::PoseSample;

use super::{CliError, CliResult};
use crate::config::ScenarioConfig;

#[derive(Debug, Args)]
pub struct GradeArgs {
    /// Scenario config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Pose trace CSV (t_ns,x,y,z,qw,qx,qy,qz).
    #[arg(long)]
    pub trace: PathBuf,
    /// Override the event-log output path from the config.
    #[arg(long)]
    pub out_events: Option<PathBuf>,
    /// Override the team name from the config.
    #[arg(long)]
    pub team: Option<String>,
    /// Skip the leaderboard append (dry run).
    #[arg(long)]
    pub no_leaderboard: bool,
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    status: &'a str,
    stages_completed: usize,
    elapsed_s: Option<f64>,
    t_start_ns: Option<u64>,
    t_end_ns: Option<u64>,
    events: usize,
    land_commands: usize,
}

pub fn run(args: &GradeArgs) -> CliResult {
    let cfg = ScenarioConfig::load(&args.config).map_err(CliError::input)?;
    let scenario = cfg.build_scenario().map_err(CliError::input)?;
    let trace = mirage_core::eval::read_trajectory_csv(&args.trace)
        .map_err(|e| CliError::input(anyhow::anyhow!("trace {}: {e}", args.trace.display())))?;

    let mut supervisor = Supervisor::new(scenario);
    let mut land_commands = 0usize;
    for (i, s) in trace.samples().iter().enumerate() {
        let sample = PoseSample::new(i as u32, s.timestamp_ns, s.position, s.quat);
        if supervisor.step(&sample).is_some() {
            land_commands += 1;
        }
    }
    let state: &RunState = supervisor.state();

    let events_path = args.out_events.clone().unwrap_or_else(|| cfg.event_log.clone());
    let file = std::fs::File::create(&events_path).map_err(CliError::internal)?;
    write_event_log(&state.events, std::io::BufWriter::new(file)).map_err(CliError::internal)?;

    if !args.no_leaderboard {
        let team = args.team.clone().unwrap_or_else(|| cfg.team.clone());
        let record = LeaderboardRecord::from_run(team, state);
        append_leaderboard(&record, &cfg.leaderboard).map_err(CliError::internal)?;
    }

    let report = RunReport {
        status: state.status.as_str(),
        stages_completed: state.stages_completed(),
        elapsed_s: state.elapsed_s(),
        t_start_ns: state.t_start_ns,
        t_end_ns: state.t_end_ns,
        events: state.events.len(),
        land_commands,
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(CliError::internal)?);
    Ok(())
}
