//! Render-throughput benchmark: frames at random poses inside the scene
//! bounds, reported as Hz with frame-time percentiles, plus a scaling table
//! across synthetic scene sizes.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mirage_core::geom::Pose6D;
use mirage_core::render::{render, CameraIntrinsics, RenderOptions};
use mirage_core::scene::{Gaussian3D, SplatScene, SH_COEFFS};
use mirage_core::transport::measure_rate;
use mirage_core::SplatSceneF32;

use super::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark an existing scene file.
    #[arg(long, conflicts_with = "synthetic")]
    pub scene: Option<PathBuf>,
    /// Benchmark a generated scene with this many Gaussians.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    /// Frames to time (after warmup). Must be at least 100.
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Run the scaling table over these synthetic sizes instead.
    #[arg(long, value_delimiter = ',')]
    pub tiers: Option<Vec<usize>>,
    /// Emit machine-readable JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub gaussians: usize,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub hz: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
}

#[derive(Debug, Serialize)]
struct TierReport {
    threads: usize,
    tiers: Vec<BenchReport>,
}

pub fn run(args: &BenchArgs) -> CliResult {
    if args.frames < 100 {
        return Err(CliError::input(anyhow::anyhow!(
            "--frames must be at least 100, got {}",
            args.frames
        )));
    }

    if let Some(tiers) = &args.tiers {
        let reports: Vec<BenchReport> = tiers
            .iter()
            .map(|&n| {
                let scene = synthetic_scene(n, args.seed);
                bench_scene(&scene, args)
            })
            .collect::<Result<_, _>>()?;
        let out = TierReport {
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            tiers: reports,
        };
        if args.json {
            println!("{}", serde_json::to_string_pretty(&out).map_err(CliError::internal)?);
        } else {
            println!("threads: {}", out.threads);
            println!("{:>10} {:>10} {:>10} {:>10}", "gaussians", "hz", "p50 ms", "p99 ms");
            for t in &out.tiers {
                println!("{:>10} {:>10.1} {:>10.2} {:>10.2}", t.gaussians, t.hz, t.p50_ms, t.p99_ms);
            }
        }
        return Ok(());
    }

    let scene = match (&args.scene, args.synthetic) {
        (Some(path), None) => mirage_core::scene::load_scene(path)
            .map_err(|e| CliError::input(anyhow::anyhow!("scene {}: {e}", path.display())))?,
        (None, Some(n)) => synthetic_scene(n, args.seed),
        _ => {
            return Err(CliError::input(anyhow::anyhow!(
                "exactly one of --scene or --synthetic is required"
            )))
        }
    };
    let report = bench_scene(&scene, args)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(CliError::internal)?);
    } else {
        println!(
            "{} gaussians at {}x{}: {:.1} Hz (p50 {:.2} ms, p99 {:.2} ms over {} frames)",
            report.gaussians, report.width, report.height, report.hz, report.p50_ms, report.p99_ms, report.frames
        );
    }
    Ok(())
}

fn bench_scene(scene: &SplatSceneF32, args: &BenchArgs) -> Result<BenchReport, CliError> {
    let k = CameraIntrinsics::<f32>::new(
        args.width as f32 * 0.75,
        args.width as f32 * 0.75,
        (args.width - 1) as f32 / 2.0,
        (args.height - 1) as f32 / 2.0,
        args.width,
        args.height,
        0.05,
        60.0,
    )
    .map_err(CliError::input)?;
    let opts = RenderOptions::<f32>::default();

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x9E3779B97F4A7C15);
    let poses: Vec<Pose6D> = (0..args.frames + WARMUP)
        .map(|_| random_pose_in_aabb(scene, &mut rng))
        .collect();

    for pose in poses.iter().take(WARMUP) {
        std::hint::black_box(render(scene, pose, &k, &opts, 0, 0));
    }

    let start = Instant::now();
    let mut stamps = Vec::with_capacity(args.frames + 1);
    stamps.push(0u64);
    for (i, pose) in poses.iter().skip(WARMUP).enumerate() {
        std::hint::black_box(render(scene, pose, &k, &opts, i as u64, i as u32));
        stamps.push(start.elapsed().as_nanos() as u64);
    }
    let span_s = (*stamps.last().unwrap() as f64) / 1e9;
    let stats = measure_rate(&stamps[1..], span_s).map_err(CliError::internal)?;

    Ok(BenchReport {
        gaussians: scene.len(),
        width: args.width,
        height: args.height,
        frames: args.frames,
        hz: stats.hz,
        p50_ms: stats.p50_gap_ms,
        p99_ms: stats.p99_gap_ms,
    })
}

const WARMUP: usize = 20;

/// Random camera pose inside the scene bounds (shrunk 20% to stay off the
/// walls), with random yaw and a mild pitch.
fn random_pose_in_aabb(scene: &SplatSceneF32, rng: &mut ChaCha8Rng) -> Pose6D {
    let aabb = scene.aabb();
    let center = aabb.center();
    let half = aabb.extent() * 0.5 * 0.8;
    let p = Vector3::new(
        center.x + half.x * rng.gen_range(-1.0f32..1.0),
        center.y + half.y * rng.gen_range(-1.0f32..1.0),
        center.z + half.z * rng.gen_range(-1.0f32..1.0),
    );
    let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let pitch = rng.gen_range(-0.35..0.35);
    let quat = UnitQuaternion::from_euler_angles(0.0, pitch, yaw);
    Pose6D::new(Vector3::new(p.x as f64, p.y as f64, p.z as f64), quat)
}

/// Room-shaped synthetic scene: six walls of splats around an 8 x 6 x 3 m
/// volume plus interior clutter. Opacities and scales sit in the range real
/// reconstructions produce, so termination behaves realistically.
pub fn synthetic_scene(n: usize, seed: u64) -> SplatSceneF32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hx, hy, hz) = (4.0f32, 3.0f32, 1.5f32);
    let n_wall = n * 7 / 10;
    let mut gaussians = Vec::with_capacity(n.max(1));
    for i in 0..n.max(1) {
        let mean = if i < n_wall {
            // Pick a face weighted by area, jitter slightly off-plane.
            let face = rng.gen_range(0..6);
            let u = rng.gen_range(-1.0f32..1.0);
            let v = rng.gen_range(-1.0f32..1.0);
            let d = rng.gen_range(-0.03f32..0.03);
            match face {
                0 => Vector3::new(hx + d, u * hy, (v + 1.0) * hz),
                1 => Vector3::new(-hx + d, u * hy, (v + 1.0) * hz),
                2 => Vector3::new(u * hx, hy + d, (v + 1.0) * hz),
                3 => Vector3::new(u * hx, -hy + d, (v + 1.0) * hz),
                4 => Vector3::new(u * hx, v * hy, d), // floor
                _ => Vector3::new(u * hx, v * hy, 2.0 * hz + d),
            }
        } else {
            Vector3::new(
                rng.gen_range(-hx * 0.7..hx * 0.7),
                rng.gen_range(-hy * 0.7..hy * 0.7),
                rng.gen_range(0.1..2.0 * hz * 0.8),
            )
        };
        let axis = nalgebra::Unit::new_normalize(Vector3::new(
            rng.gen_range(-1.0f32..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
        let mut sh = [Vector3::zeros(); SH_COEFFS];
        sh[0] = Vector3::new(
            rng.gen_range(-0.8f32..0.8),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
        );
        for c in sh.iter_mut().skip(1).take(3) {
            *c = Vector3::new(
                rng.gen_range(-0.1f32..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            );
        }
        gaussians.push(Gaussian3D {
            mean,
            scale: Vector3::new(
                rng.gen_range(0.02f32..0.08),
                rng.gen_range(0.02..0.08),
                rng.gen_range(0.02..0.08),
            ),
            rotation: UnitQuaternion::from_axis_angle(&axis, rng.gen_range(-3.1..3.1)),
            opacity: rng.gen_range(0.6f32..0.98),
            sh,
        });
    }
    SplatScene::new(gaussians).expect("non-empty synthetic scene")
}
