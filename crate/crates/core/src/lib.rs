//! mirage-core: a hardware-in-the-loop sensor engine.
//!
//! Takes a live 6-DoF pose stream and synthesizes photorealistic RGBD camera
//! frames from a Gaussian-splat scene, while running collision detection,
//! geofencing, a time-varying window obstacle, and an auto-grading run
//! supervisor. A simulated drone client and trajectory-evaluation tools make
//! the whole closed loop testable on a desk.
//!
//! Numeric code is generic over the [`num::Real`] scalar; the aliases below
//! pin the concrete types the engine uses: `f32` for the render fast path,
//! `f64` everywhere precision matters more than throughput.

pub mod eval;
pub mod geom;
pub mod num;
pub mod render;
pub mod scene;
pub mod sim;
pub mod supervisor;
pub mod transport;
pub mod world;

#[cfg(feature = "testutil")]
pub mod testutil;

pub use geom::Pose6D;
pub use num::{real, Real};

/// Scene in render precision (matches the 32-bit file storage).
pub type SplatSceneF32 = scene::SplatScene<f32>;
/// Scene in double precision, for oracle tests and world-model derivation.
pub type SplatSceneF64 = scene::SplatScene<f64>;
/// Render-precision Gaussian.
pub type Gaussian3DF32 = scene::Gaussian3D<f32>;
/// Double-precision Gaussian.
pub type Gaussian3DF64 = scene::Gaussian3D<f64>;
/// Camera model in render precision.
pub type CameraIntrinsicsF32 = render::CameraIntrinsics<f32>;
/// Camera model in double precision.
pub type CameraIntrinsicsF64 = render::CameraIntrinsics<f64>;
/// Sensor rig in render precision.
pub type SensorRigF32 = render::SensorRig<f32>;

/// Occupancy grid in world precision.
pub type OccupancyGridF64 = world::OccupancyGrid<f64>;
/// Geofence in world precision.
pub type GeofenceF64 = world::Geofence<f64>;
/// Dynamic window in world precision.
pub type DynamicWindowF64 = world::DynamicWindow<f64>;
/// Simulated drone in world precision.
pub type SimDroneF64 = sim::SimDrone<f64>;
