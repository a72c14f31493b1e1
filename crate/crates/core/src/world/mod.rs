//! World model: static voxel occupancy from the scene point cloud, sphere
//! collision queries, the geofence, and the time-varying window obstacle.

mod geofence;
mod grid;
mod window;

pub use geofence::{check_geofence, Geofence, GeofenceStatus};
pub use grid::{build_grid, check_collision, OccupancyGrid};
pub use window::{
    overlay_hand, plane_homography, DynamicOccupancy, DynamicWindow, OverlayStyle,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot build a grid from an empty point cloud")]
    EmptyPointCloud,
    #[error("voxel size must be positive, got {0}")]
    BadVoxelSize(f64),
    #[error("grid of {0} voxels exceeds the supported size")]
    GridTooLarge(u128),
    #[error("geofence corners must satisfy min < max componentwise")]
    BadGeofence,
    #[error("invalid window geometry: {0}")]
    BadWindow(&'static str),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad grid file: {0}")]
    BadGridFile(&'static str),
}
