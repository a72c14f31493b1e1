//! Scenario configuration: one JSON document describes one course —
//! scene, world model, gates, dynamic window, sensor rig, ports, and rates.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use mirage_core::geom::{isometry_from_mat16, isometry_from_wxyz};
use mirage_core::render::{CameraIntrinsics, Sensor, SensorRig};
use mirage_core::supervisor::{Gate, GateKind, Scenario, SupervisorParams};
use mirage_core::world::{build_grid, DynamicWindow, Geofence};
use mirage_core::{SplatSceneF32, SplatSceneF64};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Path to the splat scene file, relative to the config file.
    pub scene: PathBuf,
    #[serde(default = "default_voxel_size")]
    pub voxel_size: f64,
    #[serde(default = "default_collision_radius")]
    pub collision_radius: f64,
    #[serde(default = "default_opacity_min")]
    pub opacity_min: f64,
    #[serde(default)]
    pub padding: f64,
    pub geofence: GeofenceConfig,
    #[serde(default)]
    pub gates: Vec<GateConfig>,
    #[serde(default)]
    pub window: Option<WindowConfig>,
    pub rig: Vec<SensorConfig>,
    #[serde(default)]
    pub ports: PortsConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    /// Background color, linear RGB in [0, 1].
    #[serde(default)]
    pub background: [f64; 3],
    #[serde(default = "default_hand_color")]
    pub hand_color: [u8; 3],
    #[serde(default = "default_takeoff_z")]
    pub takeoff_z: f64,
    #[serde(default = "default_team")]
    pub team: String,
    #[serde(default = "default_leaderboard")]
    pub leaderboard: PathBuf,
    #[serde(default = "default_event_log")]
    pub event_log: PathBuf,
    /// Where land commands are sent (the drone's command port).
    #[serde(default = "default_command_dest")]
    pub command_dest: String,
}

fn default_voxel_size() -> f64 {
    0.1
}
fn default_collision_radius() -> f64 {
    0.2
}
fn default_opacity_min() -> f64 {
    0.5
}
fn default_hand_color() -> [u8; 3] {
    [220, 30, 30]
}
fn default_takeoff_z() -> f64 {
    0.15
}
fn default_team() -> String {
    "solo".into()
}
fn default_leaderboard() -> PathBuf {
    "leaderboard.csv".into()
}
fn default_event_log() -> PathBuf {
    "events.jsonl".into()
}
fn default_command_dest() -> String {
    "127.0.0.1:5157".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeofenceConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateConfig {
    /// Gate pose in the world (plane z = 0 in the gate frame, crossing
    /// direction along +z).
    pub position: [f64; 3],
    pub quat_wxyz: [f64; 4],
    pub half_extents: [f64; 2],
    pub kind: GateKindConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKindConfig {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowConfig {
    pub position: [f64; 3],
    pub quat_wxyz: [f64; 4],
    pub aperture_half: [f64; 2],
    pub hand_length: f64,
    pub hand_width: f64,
    #[serde(default = "default_border_width")]
    pub border_width: f64,
    /// rad/s.
    pub omega: f64,
    #[serde(default)]
    pub theta0: f64,
}

fn default_border_width() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorConfig {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_far")]
    pub far: f64,
    /// Row-major 4x4 rigid transform body -> camera.
    #[serde(default = "identity_mat16")]
    pub extrinsic: [f64; 16],
    /// Stream depth to subscribers of this sensor id.
    #[serde(default = "default_true")]
    pub depth: bool,
}

fn default_near() -> f64 {
    0.05
}
fn default_far() -> f64 {
    50.0
}
fn default_true() -> bool {
    true
}
pub fn identity_mat16() -> [f64; 16] {
    let mut m = [0.0; 16];
    for i in 0..4 {
        m[i * 4 + i] = 1.0;
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortsConfig {
    #[serde(default = "default_pose_port")]
    pub pose: u16,
    #[serde(default = "default_frame_port")]
    pub frames: u16,
    #[serde(default = "default_command_port")]
    pub commands: u16,
}

impl Default for PortsConfig {
    fn default() -> Self {
        Self {
            pose: default_pose_port(),
            frames: default_frame_port(),
            commands: default_command_port(),
        }
    }
}

fn default_pose_port() -> u16 {
    mirage_core::transport::DEFAULT_POSE_PORT
}
fn default_frame_port() -> u16 {
    mirage_core::transport::DEFAULT_FRAME_PORT
}
fn default_command_port() -> u16 {
    mirage_core::transport::DEFAULT_COMMAND_PORT
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatesConfig {
    #[serde(default = "default_render_hz")]
    pub render_hz: f64,
    #[serde(default = "default_supervisor_hz")]
    pub supervisor_hz: f64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self { render_hz: default_render_hz(), supervisor_hz: default_supervisor_hz() }
    }
}

fn default_render_hz() -> f64 {
    100.0
}
fn default_supervisor_hz() -> f64 {
    100.0
}

impl ScenarioConfig {
    /// Parse and validate; relative paths are resolved against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.scene.is_relative() {
            cfg.scene = base.join(&cfg.scene);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scene.exists() {
            bail!("field 'scene': file {} does not exist", self.scene.display());
        }
        for (name, v) in [
            ("voxel_size", self.voxel_size),
            ("collision_radius", self.collision_radius),
            ("takeoff_z", self.takeoff_z),
        ] {
            if !(v > 0.0) {
                bail!("field '{name}' must be positive, got {v}");
            }
        }
        if !(0.0..1.0).contains(&self.opacity_min) {
            bail!("field 'opacity_min' must lie in [0, 1), got {}", self.opacity_min);
        }
        if self.rates.render_hz <= 0.0 || self.rates.supervisor_hz <= 0.0 {
            bail!("field 'rates': rates must be positive");
        }
        for (i, s) in self.rig.iter().enumerate() {
            isometry_from_mat16(&s.extrinsic)
                .map_err(|e| anyhow::anyhow!("field 'rig[{i}].extrinsic': {e}"))?;
            CameraIntrinsics::new(s.fx, s.fy, s.cx, s.cy, s.width, s.height, s.near, s.far)
                .map_err(|e| anyhow::anyhow!("field 'rig[{i}]': {e}"))?;
        }
        if self.gates.iter().any(|g| g.kind == GateKindConfig::Dynamic) && self.window.is_none() {
            bail!("field 'gates': a dynamic gate requires a 'window'");
        }
        Ok(())
    }

    pub fn geofence(&self) -> Result<Geofence<f64>> {
        Geofence::new(Vector3::from(self.geofence.min), Vector3::from(self.geofence.max))
            .map_err(|e| anyhow::anyhow!("field 'geofence': {e}"))
    }

    pub fn dynamic_window(&self) -> Result<Option<DynamicWindow<f64>>> {
        match &self.window {
            None => Ok(None),
            Some(w) => {
                let pose = isometry_from_wxyz(Vector3::from(w.position), w.quat_wxyz);
                DynamicWindow::from_world_pose(
                    pose,
                    Vector2::new(w.aperture_half[0], w.aperture_half[1]),
                    w.hand_length,
                    w.hand_width,
                    w.border_width,
                    w.omega,
                    w.theta0,
                )
                .map(Some)
                .map_err(|e| anyhow::anyhow!("field 'window': {e}"))
            }
        }
    }

    pub fn gate_list(&self) -> Result<Vec<Gate<f64>>> {
        self.gates
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let pose = isometry_from_wxyz(Vector3::from(g.position), g.quat_wxyz);
                let kind = match g.kind {
                    GateKindConfig::Static => GateKind::Static,
                    GateKindConfig::Dynamic => GateKind::Dynamic,
                };
                Gate::from_world_pose(pose, Vector2::new(g.half_extents[0], g.half_extents[1]), kind)
                    .map_err(|e| anyhow::anyhow!("field 'gates[{i}]': {e}"))
            })
            .collect()
    }

    /// Load the scene at render precision.
    pub fn load_scene_f32(&self) -> Result<SplatSceneF32> {
        mirage_core::scene::load_scene(&self.scene)
            .with_context(|| format!("field 'scene': {}", self.scene.display()))
    }

    /// Build the full grading scenario (double precision world model).
    pub fn build_scenario(&self) -> Result<Scenario<f64>> {
        let scene: SplatSceneF64 = mirage_core::scene::load_scene(&self.scene)
            .with_context(|| format!("field 'scene': {}", self.scene.display()))?;
        let points = scene.export_pointcloud(self.opacity_min);
        let grid = build_grid(&points, self.voxel_size, self.padding)
            .map_err(|e| anyhow::anyhow!("occupancy grid: {e}"))?;
        Ok(Scenario {
            grid,
            fence: self.geofence()?,
            gates: self.gate_list()?,
            window: self.dynamic_window()?,
            params: SupervisorParams {
                z_takeoff: self.takeoff_z,
                collision_radius: self.collision_radius,
                dynamic_voxel_size: self.voxel_size,
            },
        })
    }

    /// Render rig at render precision.
    pub fn build_rig(&self) -> Result<SensorRig<f32>> {
        let sensors = self
            .rig
            .iter()
            .map(|s| {
                let iso = isometry_from_mat16(&s.extrinsic)
                    .map_err(|e| anyhow::anyhow!("field 'rig.extrinsic': {e}"))?;
                Ok(Sensor {
                    id: s.id.clone(),
                    intrinsics: CameraIntrinsics::new(
                        s.fx as f32,
                        s.fy as f32,
                        s.cx as f32,
                        s.cy as f32,
                        s.width,
                        s.height,
                        s.near as f32,
                        s.far as f32,
                    )?,
                    cam_from_body: mirage_core::geom::Pose6D::new(
                        iso.translation.vector,
                        iso.rotation,
                    )
                    .isometry_cast::<f32>(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SensorRig::new(sensors).map_err(|e| anyhow::anyhow!("field 'rig': {e}"))
    }

    /// Port numbers after environment overrides (`MIRAGE_POSE_PORT`,
    /// `MIRAGE_FRAME_PORT`, `MIRAGE_COMMAND_PORT`).
    pub fn effective_ports(&self) -> Result<PortsConfig> {
        let mut ports = self.ports.clone();
        for (var, slot) in [
            ("MIRAGE_POSE_PORT", &mut ports.pose),
            ("MIRAGE_FRAME_PORT", &mut ports.frames),
            ("MIRAGE_COMMAND_PORT", &mut ports.commands),
        ] {
            if let Ok(v) = std::env::var(var) {
                *slot = v
                    .parse::<u16>()
                    .with_context(|| format!("environment variable {var}={v}"))?;
            }
        }
        Ok(ports)
    }
}
