//! Absolute Trajectory Error between an estimated trajectory and ground
//! truth.

use std::path::PathBuf;

use clap::Args;

use mirage_core::eval::{compute_ate, read_trajectory_csv, EvalError};

use super::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated trajectory CSV.
    #[arg(long)]
    pub est: PathBuf,
    /// Ground-truth trajectory CSV.
    #[arg(long)]
    pub gt: PathBuf,
    /// Association window, seconds.
    #[arg(long, default_value_t = 0.02)]
    pub max_dt: f64,
    /// Estimate a similarity (Sim(3)) alignment instead of rigid SE(3).
    #[arg(long)]
    pub with_scale: bool,
}

pub fn run(args: &EvalArgs) -> CliResult {
    let est = read_trajectory_csv(&args.est)
        .map_err(|e| CliError::input(anyhow::anyhow!("est {}: {e}", args.est.display())))?;
    let gt = read_trajectory_csv(&args.gt)
        .map_err(|e| CliError::input(anyhow::anyhow!("gt {}: {e}", args.gt.display())))?;
    let report = compute_ate(&est, &gt, args.max_dt, args.with_scale).map_err(|e| match e {
        EvalError::InsufficientOverlap(_) => CliError::insufficient(e),
        other => CliError::input(other),
    })?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(CliError::internal)?);
    Ok(())
}
