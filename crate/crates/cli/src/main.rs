//! mirage: hardware-in-the-loop sensor engine CLI.
//!
//! Subcommands: `serve` the live engine, `snapshot` a single render,
//! `bench` render throughput, `grid` occupancy export, `grade` a pose log,
//! `eval` trajectory error, and `sim` the stand-in drone client.
//!
//! Exit codes: 0 ok, 1 internal error, 2 config/input error,
//! 3 insufficient data.

mod commands;
mod config;

use clap::{Parser, Subcommand};

use commands::{bench, eval_cmd, grade, grid, serve, sim, snapshot};

#[derive(Parser)]
#[command(name = "mirage", version, about = "Pose-driven RGBD sensor engine with collision grading")]
struct Cli {
    #[command(subcommand)]
    command: CommandLine,
}

#[derive(Subcommand)]
enum CommandLine {
    /// Run the engine: pose ingest, render loop, frame server, supervisor.
    Serve(serve::ServeArgs),
    /// Render one pose to rgb/depth PNG files.
    Snapshot(snapshot::SnapshotArgs),
    /// Measure render throughput.
    Bench(bench::BenchArgs),
    /// Build and export the occupancy grid of a scene.
    Grid(grid::GridArgs),
    /// Grade a recorded pose log against a scenario.
    Grade(grade::GradeArgs),
    /// Absolute trajectory error between two trajectory files.
    Eval(eval_cmd::EvalArgs),
    /// Simulated drone client (mocap emitter + command listener).
    Sim(sim::SimArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        CommandLine::Serve(args) => serve::run(args),
        CommandLine::Snapshot(args) => snapshot::run(args),
        CommandLine::Bench(args) => bench::run(args),
        CommandLine::Grid(args) => grid::run(args),
        CommandLine::Grade(args) => grade::run(args),
        CommandLine::Eval(args) => eval_cmd::run(args),
        CommandLine::Sim(args) => sim::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
