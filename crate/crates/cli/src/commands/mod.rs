pub mod bench;
pub mod eval_cmd;
pub mod grade;
pub mod grid;
pub mod serve;
pub mod sim;
pub mod snapshot;

use std::fmt;

/// Error with the process exit code it maps to: 1 internal, 2 config/input,
/// 3 insufficient data.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub source: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn internal(e: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, source: e.into() }
    }

    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, source: e.into() }
    }

    pub fn insufficient(e: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, source: e.into() }
    }
}

pub type CliResult = Result<(), CliError>;

/// Parse "x,y,z,qw,qx,qy,qz" into a pose.
pub fn parse_pose_arg(s: &str) -> Result<mirage_core::Pose6D, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("pose must be 7 comma-separated numbers: {e}"))?;
    if parts.len() != 7 {
        return Err(format!("pose needs 7 values (x,y,z,qw,qx,qy,qz), got {}", parts.len()));
    }
    mirage_core::Pose6D::from_parts(
        nalgebra::Vector3::new(parts[0], parts[1], parts[2]),
        [parts[3], parts[4], parts[5], parts[6]],
    )
    .ok_or_else(|| "invalid pose quaternion (zero norm or non-finite)".to_string())
}

/// Parse "r,g,b" floats in [0,1].
pub fn parse_color_arg(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("color must be r,g,b: {e}"))?;
    if parts.len() != 3 {
        return Err(format!("color needs 3 values, got {}", parts.len()));
    }
    Ok([parts[0], parts[1], parts[2]])
}
