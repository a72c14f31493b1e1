//! Render one RGB + depth-visualization snapshot to PNG files.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use mirage_core::num::real;
use mirage_core::render::{render, CameraIntrinsics, FrameRgbd, RenderOptions};
use mirage_core::SplatSceneF32;

use super::{parse_color_arg, parse_pose_arg, CliError, CliResult};

#[derive(Debug, Args)]
pub struct SnapshotArgs {
    /// Splat scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Camera pose in the world: x,y,z,qw,qx,qy,qz.
    #[arg(long, value_parser = parse_pose_arg)]
    pub pose: mirage_core::Pose6D,
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    #[arg(long, default_value_t = 240.0)]
    pub fx: f64,
    #[arg(long, default_value_t = 240.0)]
    pub fy: f64,
    /// Defaults to (width - 1) / 2.
    #[arg(long)]
    pub cx: Option<f64>,
    /// Defaults to (height - 1) / 2.
    #[arg(long)]
    pub cy: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub near: f64,
    #[arg(long, default_value_t = 50.0)]
    pub far: f64,
    /// Background color r,g,b in [0,1].
    #[arg(long, value_parser = parse_color_arg, default_value = "0,0,0")]
    pub background: [f64; 3],
    /// Output prefix: writes <out>_rgb.png and <out>_depth.png.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SnapshotArgs) -> CliResult {
    let scene: SplatSceneF32 =
        mirage_core::scene::load_scene(&args.scene).map_err(|e| {
            CliError::input(anyhow::anyhow!("scene {}: {e}", args.scene.display()))
        })?;
    let k = CameraIntrinsics::<f32>::new(
        args.fx as f32,
        args.fy as f32,
        args.cx.unwrap_or((args.width - 1) as f64 / 2.0) as f32,
        args.cy.unwrap_or((args.height - 1) as f64 / 2.0) as f32,
        args.width,
        args.height,
        args.near as f32,
        args.far as f32,
    )
    .map_err(CliError::input)?;
    let mut opts = RenderOptions::<f32>::default();
    opts.background =
        nalgebra::Vector3::new(real(args.background[0]), real(args.background[1]), real(args.background[2]));

    let frame = render(&scene, &args.pose, &k, &opts, 0, 0);
    write_frame_pngs(&frame, args.near as f32, args.far as f32, &args.out).map_err(CliError::internal)?;
    println!(
        "wrote {}_rgb.png and {}_depth.png ({}x{})",
        args.out.display(),
        args.out.display(),
        args.width,
        args.height
    );
    Ok(())
}

/// Write `<prefix>_rgb.png` and `<prefix>_depth.png`. The depth image maps
/// [near, far] to [255, 0] grayscale; invalid depth renders as 0.
pub fn write_frame_pngs(
    frame: &FrameRgbd,
    near: f32,
    far: f32,
    prefix: &std::path::Path,
) -> anyhow::Result<()> {
    let rgb_path = png_path(prefix, "rgb");
    let depth_path = png_path(prefix, "depth");

    let rgb = image::RgbImage::from_raw(frame.width, frame.height, frame.rgb.clone())
        .context("rgb buffer size mismatch")?;
    rgb.save(&rgb_path).with_context(|| format!("writing {}", rgb_path.display()))?;

    let depth_pixels: Vec<u8> = frame
        .depth
        .iter()
        .map(|&d| {
            if d == 0.0 {
                0
            } else {
                let t = ((d - near) / (far - near)).clamp(0.0, 1.0);
                (255.0 * (1.0 - t)).round() as u8
            }
        })
        .collect();
    let depth = image::GrayImage::from_raw(frame.width, frame.height, depth_pixels)
        .context("depth buffer size mismatch")?;
    depth.save(&depth_path).with_context(|| format!("writing {}", depth_path.display()))?;
    Ok(())
}

fn png_path(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(format!("_{suffix}.png"));
    prefix.with_file_name(name)
}
