//! Build the occupancy grid from a scene and export it for debugging.

use std::path::PathBuf;

use clap::Args;

use mirage_core::world::build_grid;
use mirage_core::SplatSceneF64;

use super::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Output grid file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub voxel_size: f64,
    #[arg(long, default_value_t = 0.0)]
    pub padding: f64,
    #[arg(long, default_value_t = 0.5)]
    pub opacity_min: f64,
}

pub fn run(args: &GridArgs) -> CliResult {
    let scene: SplatSceneF64 = mirage_core::scene::load_scene(&args.scene)
        .map_err(|e| CliError::input(anyhow::anyhow!("scene {}: {e}", args.scene.display())))?;
    let points = scene.export_pointcloud(args.opacity_min);
    if points.is_empty() {
        return Err(CliError::insufficient(anyhow::anyhow!(
            "no Gaussians pass opacity_min = {}",
            args.opacity_min
        )));
    }
    let grid = build_grid(&points, args.voxel_size, args.padding).map_err(CliError::input)?;
    grid.write_file(&args.out).map_err(CliError::internal)?;
    let dims = grid.dims();
    println!(
        "grid {}x{}x{} voxels ({} occupied from {} points) -> {}",
        dims[0],
        dims[1],
        dims[2],
        grid.occupied_count(),
        points.len(),
        args.out.display()
    );
    Ok(())
}
