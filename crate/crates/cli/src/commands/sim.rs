//! Simulated drone client: stands in for the mocap system and the real
//! robot. Emits pose datagrams, obeys command datagrams, and can close the
//! loop itself with a depth-driven potential-field autonomy mode.

use std::net::UdpSocket;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, ValueEnum};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use mirage_core::eval::{Trajectory, TrajectorySample};
use mirage_core::render::CameraIntrinsics;
use mirage_core::sim::{
    potential_field_velocity, trajectory_point, DroneMode, PotentialFieldParams, SimDrone,
    SimParams, TrajectoryKind, TrajectorySpec,
};
use mirage_core::transport::{
    decode_command, encode_pose, Command, FrameStreamReader, PoseSample, SensorConfigDoc,
};

use super::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// Fly a scripted reference trajectory.
    Trajectory,
    /// Subscribe to the engine's depth stream and avoid obstacles while
    /// flying toward a goal direction.
    PotentialField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Square,
    Spiral,
    Lemniscate,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, value_enum, default_value_t = SimMode::Trajectory)]
    pub mode: SimMode,
    #[arg(long, value_enum, default_value_t = KindArg::Lemniscate)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 1.5)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 0.8)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.2)]
    pub height: f64,
    #[arg(long, default_value_t = 0.0)]
    pub radial_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub climb_rate: f64,
    /// Flight duration after takeoff, seconds.
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    /// Engine pose ingest address.
    #[arg(long, default_value = "127.0.0.1:5155")]
    pub pose_dest: String,
    /// UDP port this drone listens on for commands.
    #[arg(long, default_value_t = 5157)]
    pub command_port: u16,
    /// Pose stream rate, Hz.
    #[arg(long, default_value_t = 200.0)]
    pub pose_rate: f64,
    /// Integration step, seconds.
    #[arg(long, default_value_t = 0.005)]
    pub dt: f64,
    /// Write the flown trajectory as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Engine frame-stream address (potential-field mode).
    #[arg(long, default_value = "127.0.0.1:5156")]
    pub frames_addr: String,
    /// World-frame goal direction x,y,z (potential-field mode).
    #[arg(long, default_value = "1,0,0")]
    pub goal: String,
    /// Start position x,y,z on the ground.
    #[arg(long, default_value = "0,0,0")]
    pub start: String,
    /// Run faster than wall clock (testing).
    #[arg(long)]
    pub no_pacing: bool,
}

fn parse_vec3(s: &str) -> Result<Vector3<f64>, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::input(anyhow::anyhow!("expected x,y,z: {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::input(anyhow::anyhow!("expected 3 components, got {}", parts.len())));
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

/// Forward camera mount: body +x is the optical axis, image y points down.
fn forward_cam_from_body() -> nalgebra::Isometry3<f64> {
    let rot = Rotation3::from_matrix_unchecked(Matrix3::new(
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0,
    ));
    nalgebra::Isometry3::from_parts(
        nalgebra::Translation3::new(0.0, 0.0, 0.0),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

struct DroneLink {
    socket: UdpSocket,
    dest: String,
    command_socket: UdpSocket,
    seq: u32,
    flown: Vec<TrajectorySample>,
}

impl DroneLink {
    fn open(pose_dest: &str, command_port: u16) -> Result<Self, CliError> {
        let socket = UdpSocket::bind("0.0.0.0:0").map_err(CliError::internal)?;
        let command_socket = UdpSocket::bind(("0.0.0.0", command_port))
            .map_err(|e| CliError::input(anyhow::anyhow!("command port {command_port}: {e}")))?;
        command_socket.set_nonblocking(true).map_err(CliError::internal)?;
        Ok(Self {
            socket,
            dest: pose_dest.to_string(),
            command_socket,
            seq: 0,
            flown: Vec::new(),
        })
    }

    fn emit_pose(&mut self, drone: &SimDrone<f64>, t_ns: u64) {
        self.seq = self.seq.wrapping_add(1);
        let quat = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), drone.yaw);
        let sample = PoseSample::new(self.seq, t_ns, drone.position, quat);
        let _ = self.socket.send_to(&encode_pose(&sample), self.dest.as_str());
        self.flown.push(TrajectorySample { timestamp_ns: t_ns, position: drone.position, quat });
    }

    /// Latest pending command, if any.
    fn poll_command(&self) -> Option<Command> {
        let mut buf = [0u8; 64];
        let mut latest = None;
        while let Ok(n) = self.command_socket.recv(&mut buf) {
            if let Ok(cmd) = decode_command(&buf[..n]) {
                latest = Some(cmd);
            }
        }
        latest
    }

    fn write_log(&self, path: &PathBuf) -> CliResult {
        if self.flown.len() >= 2 {
            let traj = Trajectory::new(self.flown.clone()).map_err(CliError::internal)?;
            mirage_core::eval::write_trajectory_csv(&traj, path).map_err(CliError::internal)?;
            println!("wrote {} samples to {}", self.flown.len(), path.display());
        }
        Ok(())
    }
}

pub fn run(args: &SimArgs) -> CliResult {
    match args.mode {
        SimMode::Trajectory => run_trajectory(args),
        SimMode::PotentialField => run_potential_field(args),
    }
}

fn run_trajectory(args: &SimArgs) -> CliResult {
    let kind = match args.kind {
        KindArg::Square => TrajectoryKind::Square,
        KindArg::Spiral => TrajectoryKind::Spiral,
        KindArg::Lemniscate => TrajectoryKind::Lemniscate,
    };
    let mut spec = TrajectorySpec::new(kind, args.amplitude, args.omega, args.height, args.duration)
        .map_err(CliError::input)?;
    spec.radial_rate = args.radial_rate;
    spec.climb_rate = args.climb_rate;

    let start = parse_vec3(&args.start)?;
    let mut link = DroneLink::open(&args.pose_dest, args.command_port)?;
    let mut drone = SimDrone::grounded_at(start, SimParams::default());
    drone.apply_command(&Command::Takeoff { timestamp_ns: 0 });

    let dt = args.dt;
    let emit_every = (1.0 / (args.pose_rate * dt)).round().max(1.0) as usize;
    let mut t_sim = 0.0f64;
    let mut flight_t: Option<f64> = None; // time since takeoff climb finished
    let wall_start = Instant::now();
    let mut step: usize = 0;

    println!(
        "sim drone flying a {:?} trajectory for {} s, poses -> {}",
        args.kind, args.duration, args.pose_dest
    );
    loop {
        if let Some(cmd) = link.poll_command() {
            drone.apply_command(&cmd);
            if matches!(cmd, Command::Land { .. }) {
                println!("[sim] land command received at t = {t_sim:.2} s");
            }
        }

        match flight_t {
            None => {
                // Climbing; hand over to tracking once near the reference
                // start altitude.
                if drone.mode == DroneMode::Flying && drone.position.z >= args.height.min(1.0) {
                    flight_t = Some(0.0);
                }
            }
            Some(ft) if drone.mode == DroneMode::Flying => {
                let t_ref = ft.min(args.duration);
                let here = trajectory_point(&spec, t_ref).map_err(CliError::internal)?;
                let ahead = trajectory_point(&spec, (t_ref + dt).min(args.duration))
                    .map_err(CliError::internal)?;
                let offset = here + start; // trajectory centered on the pad
                let feedforward = (ahead - here) / dt;
                let v = feedforward + (offset - drone.position) * 1.5;
                drone.apply_command(&Command::Velocity {
                    v,
                    yaw_rate: 0.0,
                    timestamp_ns: (t_sim * 1e9) as u64,
                });
                if ft >= args.duration {
                    drone.apply_command(&Command::Land { timestamp_ns: (t_sim * 1e9) as u64 });
                }
                flight_t = Some(ft + dt);
            }
            _ => {}
        }

        drone.step(dt);
        t_sim += dt;
        step += 1;
        if step % emit_every == 0 {
            link.emit_pose(&drone, (t_sim * 1e9) as u64);
        }

        if drone.mode == DroneMode::Grounded && flight_t.is_some() {
            println!("[sim] landed at t = {t_sim:.2} s");
            break;
        }
        if t_sim > args.duration + 30.0 {
            println!("[sim] timeout");
            break;
        }
        if !args.no_pacing {
            let target = Duration::from_secs_f64(t_sim);
            let elapsed = wall_start.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }
    }

    if let Some(log) = &args.log {
        link.write_log(log)?;
    }
    Ok(())
}

fn run_potential_field(args: &SimArgs) -> CliResult {
    let goal_world = parse_vec3(&args.goal)?;
    let goal_world = goal_world
        .try_normalize(1e-9)
        .ok_or_else(|| CliError::input(anyhow::anyhow!("goal direction must be non-zero")))?;
    let start = parse_vec3(&args.start)?;

    let cam_from_body = forward_cam_from_body();
    let (width, height) = (64u32, 48u32);
    let k = CameraIntrinsics::<f64>::new(
        48.0,
        48.0,
        (width - 1) as f64 / 2.0,
        (height - 1) as f64 / 2.0,
        width,
        height,
        0.05,
        60.0,
    )
    .map_err(CliError::input)?;

    let mut extrinsic = [0.0; 16];
    let m = cam_from_body.to_homogeneous();
    for i in 0..4 {
        for j in 0..4 {
            extrinsic[i * 4 + j] = m[(i, j)];
        }
    }
    let mut reader = FrameStreamReader::connect(
        args.frames_addr.as_str(),
        &SensorConfigDoc {
            sensor_id: "pf-front".into(),
            width,
            height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            extrinsic,
            depth: true,
        },
    )
    .map_err(|e| CliError::input(anyhow::anyhow!("frame stream {}: {e}", args.frames_addr)))?;

    let mut link = DroneLink::open(&args.pose_dest, args.command_port)?;
    let mut drone = SimDrone::grounded_at(start, SimParams::default());
    drone.apply_command(&Command::Takeoff { timestamp_ns: 0 });
    let pf = PotentialFieldParams { v_max: 3.0, ..Default::default() };

    let dt = args.dt;
    let emit_every = (1.0 / (args.pose_rate * dt)).round().max(1.0) as usize;
    let mut t_sim = 0.0f64;
    let wall_start = Instant::now();
    let mut step = 0usize;
    let body_quat = UnitQuaternion::identity();

    println!(
        "sim drone avoiding via depth stream from {}, goal {:?}",
        args.frames_addr, goal_world
    );
    // Prime the engine with the initial pose so the first frame exists.
    link.emit_pose(&drone, 0);

    loop {
        if let Some(cmd) = link.poll_command() {
            let was_land = matches!(cmd, Command::Land { .. });
            drone.apply_command(&cmd);
            if was_land {
                println!("[sim] land command received at t = {t_sim:.2} s");
            }
        }

        if drone.mode == DroneMode::Flying && drone.position.z >= 0.95 {
            // Non-blocking-ish frame poll: rely on the engine's rate.
            match reader.next_frame() {
                Ok(frame) => {
                    if let Some(depth) = frame.depth {
                        let v_cam = potential_field_velocity(
                            &depth,
                            &k,
                            cam_from_body.rotation * (body_quat.inverse() * goal_world),
                            &pf,
                        );
                        let v_body = cam_from_body.rotation.inverse() * v_cam;
                        let v_world = body_quat * v_body;
                        drone.apply_command(&Command::Velocity {
                            v: v_world,
                            yaw_rate: 0.0,
                            timestamp_ns: (t_sim * 1e9) as u64,
                        });
                    }
                }
                Err(e) => {
                    println!("[sim] frame stream ended: {e}");
                    drone.apply_command(&Command::Land { timestamp_ns: (t_sim * 1e9) as u64 });
                }
            }
        }

        drone.step(dt);
        t_sim += dt;
        step += 1;
        if step % emit_every == 0 {
            link.emit_pose(&drone, (t_sim * 1e9) as u64);
        }
        if drone.mode == DroneMode::Grounded && t_sim > 1.0 {
            println!("[sim] landed at t = {t_sim:.2} s");
            break;
        }
        if t_sim >= args.duration {
            println!("[sim] duration reached");
            break;
        }
        if !args.no_pacing {
            let target = Duration::from_secs_f64(t_sim);
            let elapsed = wall_start.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }
    }

    if let Some(log) = &args.log {
        link.write_log(log)?;
    }
    Ok(())
}
