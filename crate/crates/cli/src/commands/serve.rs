//! The engine service: pose ingest via UDP, a fixed-rate render loop over
//! the rig plus any client-defined sensors, a TCP frame server, the run
//! supervisor, and once-per-second rate reporting.

use std::collections::HashMap;
use std::net::{TcpListener, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use clap::Args;
use nalgebra::Isometry3;

use mirage_core::geom::Pose6D;
use mirage_core::num::real;
use mirage_core::render::{quantize, render_image, CameraIntrinsics, RenderOptions};
use mirage_core::supervisor::{append_leaderboard, write_event_log, LeaderboardRecord, Supervisor};
use mirage_core::transport::{
    encode_command, read_sensor_config, serve_connection, spawn_pose_ingest, write_error_frame,
    FrameSlot, PoseCell,
};
use mirage_core::world::{overlay_hand, OverlayStyle};
use mirage_core::SplatSceneF32;

use super::{CliError, CliResult};
use crate::config::ScenarioConfig;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scenario config JSON.
    pub config: PathBuf,
    /// Exit on their own after this many seconds (otherwise runs until
    /// SIGINT/SIGTERM).
    #[arg(long)]
    pub duration_s: Option<f64>,
}

/// One renderable sensor: either from the config rig or registered by a
/// connected client.
struct LiveSensor {
    id: String,
    k32: CameraIntrinsics<f32>,
    k64: CameraIntrinsics<f64>,
    cam_from_body32: Isometry3<f32>,
    cam_from_body64: Isometry3<f64>,
    slot: Arc<FrameSlot>,
}

static SIGNAL_STOP: OnceLock<Arc<AtomicBool>> = OnceLock::new();

extern "C" fn on_signal(_sig: libc::c_int) {
    if let Some(stop) = SIGNAL_STOP.get() {
        stop.store(true, Ordering::SeqCst);
    }
}

fn install_signal_handlers(stop: Arc<AtomicBool>) {
    let _ = SIGNAL_STOP.set(stop);
    let handler: extern "C" fn(libc::c_int) = on_signal;
    unsafe {
        libc::signal(libc::SIGINT, handler as usize as libc::sighandler_t);
        libc::signal(libc::SIGTERM, handler as usize as libc::sighandler_t);
    }
}

pub fn run(args: &ServeArgs) -> CliResult {
    let cfg = ScenarioConfig::load(&args.config).map_err(CliError::input)?;
    let scene: Arc<SplatSceneF32> = Arc::new(cfg.load_scene_f32().map_err(CliError::input)?);
    let scenario = cfg.build_scenario().map_err(CliError::input)?;
    cfg.build_rig().map_err(CliError::input)?; // unique ids, valid intrinsics
    let window = scenario.window;
    let ports = cfg.effective_ports().map_err(CliError::input)?;

    let pose_socket = UdpSocket::bind(("0.0.0.0", ports.pose))
        .map_err(|e| CliError::input(anyhow::anyhow!("pose port {}: {e}", ports.pose)))?;
    let listener = TcpListener::bind(("0.0.0.0", ports.frames))
        .map_err(|e| CliError::input(anyhow::anyhow!("frame port {}: {e}", ports.frames)))?;
    listener.set_nonblocking(true).map_err(CliError::internal)?;
    let command_socket = UdpSocket::bind("0.0.0.0:0").map_err(CliError::internal)?;

    let stop = Arc::new(AtomicBool::new(false));
    install_signal_handlers(stop.clone());

    let pose_cell = Arc::new(PoseCell::new());
    let ingest = spawn_pose_ingest(
        pose_socket.try_clone().map_err(CliError::internal)?,
        pose_cell.clone(),
        stop.clone(),
    );

    // Sensor registry: rig sensors live forever, client sensors come and go.
    let registry: Arc<Mutex<HashMap<u64, Arc<LiveSensor>>>> = Arc::new(Mutex::new(HashMap::new()));
    let next_id = Arc::new(AtomicU64::new(0));
    {
        let mut reg = registry.lock().unwrap();
        for s in &cfg.rig {
            let iso64 = mirage_core::geom::isometry_from_mat16(&s.extrinsic)
                .map_err(|e| CliError::input(anyhow::anyhow!("rig extrinsic: {e}")))?;
            let sensor = LiveSensor {
                id: s.id.clone(),
                k32: CameraIntrinsics::new(
                    s.fx as f32,
                    s.fy as f32,
                    s.cx as f32,
                    s.cy as f32,
                    s.width,
                    s.height,
                    s.near as f32,
                    s.far as f32,
                )
                .map_err(CliError::input)?,
                k64: CameraIntrinsics::new(
                    s.fx, s.fy, s.cx, s.cy, s.width, s.height, s.near, s.far,
                )
                .map_err(CliError::input)?,
                cam_from_body32: Pose6D::new(iso64.translation.vector, iso64.rotation)
                    .isometry_cast::<f32>(),
                cam_from_body64: iso64,
                slot: Arc::new(FrameSlot::new()),
            };
            reg.insert(next_id.fetch_add(1, Ordering::Relaxed), Arc::new(sensor));
        }
    }

    // Shared clock origin for the dynamic window: first pose timestamp.
    let epoch_ns: Arc<OnceLock<u64>> = Arc::new(OnceLock::new());

    // Render loop.
    let render_thread = {
        let scene = scene.clone();
        let registry = registry.clone();
        let pose_cell = pose_cell.clone();
        let stop = stop.clone();
        let epoch_ns = epoch_ns.clone();
        let render_hz = cfg.rates.render_hz;
        let background = cfg.background;
        let hand_color = cfg.hand_color;
        std::thread::spawn(move || {
            let mut opts = RenderOptions::<f32>::default();
            opts.background = nalgebra::Vector3::new(
                real(background[0]),
                real(background[1]),
                real(background[2]),
            );
            let tick = Duration::from_secs_f64(1.0 / render_hz);
            let start = Instant::now();
            let mut next = start;
            let mut seq: u32 = 0;
            let mut stamps: Vec<u64> = Vec::new();
            let mut last_report = start;
            let mut waiting_logged = false;
            while !stop.load(Ordering::Relaxed) {
                next += tick;
                let now = Instant::now();
                if next > now {
                    std::thread::sleep(next - now);
                } else {
                    next = now; // fell behind; do not bank ticks
                }

                let Some(sample) = pose_cell.latest() else {
                    if !waiting_logged {
                        println!("[render] waiting for first pose datagram");
                        waiting_logged = true;
                    }
                    continue;
                };
                let epoch = *epoch_ns.get_or_init(|| sample.timestamp_ns);
                let t = sample.timestamp_ns.saturating_sub(epoch) as f64 / 1e9;
                seq = seq.wrapping_add(1);

                let sensors: Vec<Arc<LiveSensor>> =
                    registry.lock().unwrap().values().cloned().collect();
                let body_iso32 = sample.pose.isometry_cast::<f32>();
                for sensor in sensors {
                    let cam_from_world = sensor.cam_from_body32 * body_iso32.inverse();
                    let img = render_image(&scene, &cam_from_world, &sensor.k32, &opts);
                    let mut frame = quantize(&img, sample.pose, sample.timestamp_ns, seq);
                    if let Some(w) = &window {
                        let world_from_cam =
                            sample.pose.isometry() * sensor.cam_from_body64.inverse();
                        let cam_pose =
                            Pose6D::new(world_from_cam.translation.vector, world_from_cam.rotation);
                        frame = overlay_hand(
                            &frame,
                            &cam_pose,
                            &sensor.k64,
                            w,
                            t,
                            OverlayStyle { color: hand_color },
                        );
                    }
                    sensor.slot.publish(Arc::new(frame));
                }

                stamps.push(start.elapsed().as_nanos() as u64);
                if last_report.elapsed() >= Duration::from_secs(1) {
                    last_report = Instant::now();
                    let cutoff = start.elapsed().as_nanos() as u64 - 1_000_000_000;
                    stamps.retain(|&s| s >= cutoff);
                    match mirage_core::transport::measure_rate(&stamps, 1.0) {
                        Ok(stats) => println!("[render] {stats}"),
                        Err(_) => println!("[render] 0.0 Hz (no frames in window)"),
                    }
                }
            }
        })
    };

    // Supervisor loop.
    let supervisor_thread = {
        let pose_cell = pose_cell.clone();
        let stop = stop.clone();
        let epoch_ns = epoch_ns.clone();
        let dest = cfg.command_dest.clone();
        let leaderboard = cfg.leaderboard.clone();
        let event_log = cfg.event_log.clone();
        let team = cfg.team.clone();
        let hz = cfg.rates.supervisor_hz;
        std::thread::spawn(move || {
            let mut supervisor = Supervisor::new(scenario);
            let tick = Duration::from_secs_f64(1.0 / hz);
            let mut last_seq: Option<u32> = None;
            let mut reported = false;
            while !stop.load(Ordering::Relaxed) {
                std::thread::sleep(tick);
                let Some(sample) = pose_cell.latest() else { continue };
                if last_seq == Some(sample.seq) {
                    continue;
                }
                last_seq = Some(sample.seq);
                if let Some(epoch) = epoch_ns.get() {
                    supervisor.set_epoch_ns(*epoch);
                }
                if let Some(cmd) = supervisor.step(&sample) {
                    let bytes = encode_command(&cmd);
                    if let Err(e) = command_socket.send_to(&bytes, dest.as_str()) {
                        eprintln!("[supervisor] command send failed: {e}");
                    } else {
                        println!("[supervisor] land command sent to {dest}");
                    }
                }
                if supervisor.state().status.is_terminal() && !reported {
                    reported = true;
                    let state = supervisor.state();
                    println!(
                        "[run] {} after {} stages in {:.2} s",
                        state.status.as_str(),
                        state.stages_completed(),
                        state.elapsed_s().unwrap_or(0.0)
                    );
                    let record = LeaderboardRecord::from_run(team.clone(), state);
                    if let Err(e) = append_leaderboard(&record, &leaderboard) {
                        eprintln!("[run] leaderboard append failed: {e}");
                    }
                    match std::fs::File::create(&event_log) {
                        Ok(f) => {
                            if let Err(e) = write_event_log(&state.events, std::io::BufWriter::new(f)) {
                                eprintln!("[run] event log write failed: {e}");
                            }
                        }
                        Err(e) => eprintln!("[run] event log create failed: {e}"),
                    }
                }
            }
        })
    };

    // Frame-server accept loop (this thread).
    println!(
        "serving: pose {}/udp, frames {}/tcp, commands -> {} ({} rig sensors, {} gaussians)",
        ports.pose,
        ports.frames,
        cfg.command_dest,
        cfg.rig.len(),
        scene.len()
    );
    let deadline = args.duration_s.map(|s| Instant::now() + Duration::from_secs_f64(s));
    let mut conn_threads = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        if let Some(d) = deadline {
            if Instant::now() >= d {
                stop.store(true, Ordering::Relaxed);
                break;
            }
        }
        match listener.accept() {
            Ok((mut stream, peer)) => {
                stream.set_nodelay(true).ok();
                stream.set_read_timeout(Some(Duration::from_secs(5))).ok();
                match read_sensor_config(&mut stream) {
                    Ok(doc) => {
                        let valid = CameraIntrinsics::<f32>::new(
                            doc.fx as f32,
                            doc.fy as f32,
                            doc.cx as f32,
                            doc.cy as f32,
                            doc.width,
                            doc.height,
                            0.05,
                            60.0,
                        )
                        .map_err(|e| e.to_string())
                        .and_then(|k32| {
                            mirage_core::geom::isometry_from_mat16(&doc.extrinsic)
                                .map(|iso| (k32, iso))
                        });
                        match valid {
                            Ok((k32, iso64)) => {
                                let sensor = Arc::new(LiveSensor {
                                    id: doc.sensor_id.clone(),
                                    k64: k32.convert::<f64>(),
                                    k32,
                                    cam_from_body32: Pose6D::new(
                                        iso64.translation.vector,
                                        iso64.rotation,
                                    )
                                    .isometry_cast::<f32>(),
                                    cam_from_body64: iso64,
                                    slot: Arc::new(FrameSlot::new()),
                                });
                                let id = next_id.fetch_add(1, Ordering::Relaxed);
                                registry.lock().unwrap().insert(id, sensor.clone());
                                println!(
                                    "[frames] {peer} subscribed sensor {:?} {}x{} depth={}",
                                    sensor.id, doc.width, doc.height, doc.depth
                                );
                                let registry = registry.clone();
                                let stop = stop.clone();
                                let slot = sensor.slot.clone();
                                conn_threads.push(std::thread::spawn(move || {
                                    let _ = serve_connection(stream, slot, doc.depth, stop);
                                    registry.lock().unwrap().remove(&id);
                                    println!("[frames] {peer} disconnected");
                                }));
                            }
                            Err(msg) => {
                                let _ = write_error_frame(&mut stream, &msg);
                            }
                        }
                    }
                    Err(e) => {
                        let _ = write_error_frame(&mut stream, &e.to_string());
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => {
                eprintln!("[frames] accept failed: {e}");
                std::thread::sleep(Duration::from_millis(100));
            }
        }
    }

    stop.store(true, Ordering::Relaxed);
    ingest.join().ok();
    render_thread.join().ok();
    supervisor_thread.join().ok();
    for t in conn_threads {
        t.join().ok();
    }
    println!("shutdown complete");
    Ok(())
}
