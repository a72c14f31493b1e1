//! Pose-dependent RGBD rendering of splat scenes: project, depth-sort, tile,
//! alpha-composite front-to-back, and form alpha-weighted metric depth.
//!
//! The rasterizer is a deterministic CPU implementation: 16x16 pixel tiles,
//! one global per-frame depth sort (key: camera-space z), parallel over
//! tiles with a fixed reduction order within every pixel.

mod project;
pub mod sh;

pub use project::{project_gaussian, ProjectedSplat};
pub use sh::eval_sh_color;

use nalgebra::{Isometry3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Pose6D;
use crate::num::{real, to_f64, Real};
use crate::scene::SplatScene;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(&'static str),
    #[error("sensor rig is empty")]
    EmptyRig,
    #[error("duplicate sensor id {0:?}")]
    DuplicateSensor(String),
}

/// Pinhole camera model plus the usable depth range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<S: Real> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
    pub near: S,
    pub far: S,
}

impl<S: Real> CameraIntrinsics<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: S,
        fy: S,
        cx: S,
        cy: S,
        width: u32,
        height: u32,
        near: S,
        far: S,
    ) -> Result<Self, RenderError> {
        if !(fx > S::zero() && fy > S::zero()) {
            return Err(RenderError::BadIntrinsics("focal lengths must be positive"));
        }
        if !(S::zero() < near && near < far) {
            return Err(RenderError::BadIntrinsics("need 0 < near < far"));
        }
        if width < 8 || height < 8 {
            return Err(RenderError::BadIntrinsics("image must be at least 8x8"));
        }
        Ok(Self { fx, fy, cx, cy, width, height, near, far })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn convert<T: Real>(&self) -> CameraIntrinsics<T> {
        CameraIntrinsics {
            fx: real::<T>(to_f64(self.fx)),
            fy: real::<T>(to_f64(self.fy)),
            cx: real::<T>(to_f64(self.cx)),
            cy: real::<T>(to_f64(self.cy)),
            width: self.width,
            height: self.height,
            near: real::<T>(to_f64(self.near)),
            far: real::<T>(to_f64(self.far)),
        }
    }
}

/// One camera on the body: identity-checked extrinsic `cam_from_body`.
#[derive(Debug, Clone)]
pub struct Sensor<S: Real> {
    pub id: String,
    pub intrinsics: CameraIntrinsics<S>,
    pub cam_from_body: Isometry3<S>,
}

/// A set of rigidly mounted sensors with unique ids.
#[derive(Debug, Clone)]
pub struct SensorRig<S: Real> {
    sensors: Vec<Sensor<S>>,
}

impl<S: Real> SensorRig<S> {
    pub fn new(sensors: Vec<Sensor<S>>) -> Result<Self, RenderError> {
        if sensors.is_empty() {
            return Err(RenderError::EmptyRig);
        }
        for (i, s) in sensors.iter().enumerate() {
            if sensors[..i].iter().any(|o| o.id == s.id) {
                return Err(RenderError::DuplicateSensor(s.id.clone()));
            }
        }
        Ok(Self { sensors })
    }

    pub fn sensors(&self) -> &[Sensor<S>] {
        &self.sensors
    }
}

/// Compositing parameters. Defaults follow the reference splatting
/// conventions; everything is configurable.
#[derive(Debug, Clone, Copy)]
pub struct RenderOptions<S: Real> {
    /// Tile edge in pixels.
    pub tile_size: usize,
    /// Screen-space covariance dilation, px^2, added to the diagonal.
    pub dilation: S,
    /// Upper clamp on per-splat alpha.
    pub alpha_clamp: S,
    /// Contributions below this alpha are skipped.
    pub alpha_skip: S,
    /// Front-to-back compositing stops once transmittance falls below this.
    pub transmittance_min: S,
    /// Minimum accumulated alpha for a pixel's depth to be valid.
    pub alpha_depth_min: S,
    /// Background color, linear RGB in [0,1].
    pub background: Vector3<S>,
}

impl<S: Real> Default for RenderOptions<S> {
    fn default() -> Self {
        Self {
            tile_size: 16,
            dilation: real::<S>(0.3),
            alpha_clamp: real::<S>(0.99),
            alpha_skip: real::<S>(1.0 / 255.0),
            transmittance_min: real::<S>(1e-4),
            alpha_depth_min: real::<S>(0.5),
            background: Vector3::zeros(),
        }
    }
}

impl<S: Real> RenderOptions<S> {
    /// Mahalanobis cutoff where alpha provably falls under `alpha_skip`:
    /// q > 2 ln(1/alpha_skip) implies exp(-q/2) < alpha_skip.
    pub fn q_cutoff(&self) -> S {
        real::<S>(2.0) * (S::one() / self.alpha_skip).ln()
    }

    /// Footprint radius in units of the largest screen-space sigma. Derived
    /// from the skip threshold so splats culled by the bounding box cannot
    /// contribute above it.
    pub fn cull_sigma(&self) -> S {
        self.q_cutoff().sqrt()
    }
}

/// Float-precision render target: linear RGB, expected depth, accumulated
/// alpha. Row-major, `idx = y * width + x`.
#[derive(Debug, Clone)]
pub struct ImageF<S: Real> {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<S>,
    pub depth: Vec<S>,
    pub alpha: Vec<S>,
}

impl<S: Real> ImageF<S> {
    pub fn pixel_rgb(&self, x: u32, y: u32) -> Vector3<S> {
        let i = (y * self.width + x) as usize * 3;
        Vector3::new(self.rgb[i], self.rgb[i + 1], self.rgb[i + 2])
    }

    pub fn pixel_depth(&self, x: u32, y: u32) -> S {
        self.depth[(y * self.width + x) as usize]
    }
}

/// Rendered frame: 8-bit RGB, metric f32 depth (0.0 = invalid/background),
/// and the pose/timestamp that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRgbd {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB bytes, length `width * height * 3`.
    pub rgb: Vec<u8>,
    /// Row-major depth in meters, length `width * height`; 0.0 marks
    /// background/invalid pixels, all other values lie in `[near, far]`.
    pub depth: Vec<f32>,
    pub pose_used: Pose6D,
    pub timestamp_ns: u64,
    pub seq: u32,
}

impl FrameRgbd {
    pub fn pixel_rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y * self.width + x) as usize * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn pixel_depth(&self, x: u32, y: u32) -> f32 {
        self.depth[(y * self.width + x) as usize]
    }
}

/// Project, sort, and composite the scene into a float image.
///
/// Pure function of its inputs; renders byte-identical images for identical
/// inputs. Parallel over Gaussians (order-preserving) and tiles (disjoint).
pub fn render_image<S: Real>(
    scene: &SplatScene<S>,
    cam_from_world: &Isometry3<S>,
    k: &CameraIntrinsics<S>,
    opts: &RenderOptions<S>,
) -> ImageF<S> {
    let cam_center = cam_from_world.inverse().translation.vector;

    // Project and color every visible Gaussian, preserving scene order.
    let mut splats: Vec<ProjectedSplat<S>> = scene
        .gaussians()
        .par_iter()
        .filter_map(|g| {
            let mut p = project_gaussian(g, cam_from_world, k, opts)?;
            let to_splat = g.mean - cam_center;
            let dir = to_splat / to_splat.norm();
            p.color = sh::eval_sh_color(&g.sh, dir);
            Some(p)
        })
        .collect();

    // Single global front-to-back order; stable, so equal depths keep scene
    // order and the result stays deterministic.
    splats.par_sort_by(|a, b| a.z.partial_cmp(&b.z).expect("depths are finite"));

    composite_tiles(&splats, k, opts)
}

fn composite_tiles<S: Real>(
    splats: &[ProjectedSplat<S>],
    k: &CameraIntrinsics<S>,
    opts: &RenderOptions<S>,
) -> ImageF<S> {
    let (w, h) = (k.width as usize, k.height as usize);
    let ts = opts.tile_size.clamp(1, MAX_TILE_SIZE);
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);

    // Bucket splat indices per tile, in depth order.
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (i, s) in splats.iter().enumerate() {
        let x0 = to_f64(s.center.x - s.radius).floor().max(0.0) as usize;
        let y0 = to_f64(s.center.y - s.radius).floor().max(0.0) as usize;
        let x1 = (to_f64(s.center.x + s.radius).ceil() as usize).min(w - 1);
        let y1 = (to_f64(s.center.y + s.radius).ceil() as usize).min(h - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for ty in y0 / ts..=y1 / ts {
            for tx in x0 / ts..=x1 / ts {
                buckets[ty * tiles_x + tx].push(i as u32);
            }
        }
    }

    let tiles: Vec<TileBuf<S>> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let tx = t % tiles_x;
            let ty = t / tiles_x;
            composite_one_tile(splats, &buckets[t], tx * ts, ty * ts, (x_end(tx, ts, w), y_end(ty, ts, h)), opts)
        })
        .collect();

    let mut img = ImageF {
        width: k.width,
        height: k.height,
        rgb: vec![S::zero(); w * h * 3],
        depth: vec![S::zero(); w * h],
        alpha: vec![S::zero(); w * h],
    };
    for (t, tile) in tiles.iter().enumerate() {
        let tx = t % tiles_x;
        let ty = t / tiles_x;
        let px0 = tx * ts;
        let py0 = ty * ts;
        let tw = x_end(tx, ts, w) - px0;
        for (row, y) in (py0..y_end(ty, ts, h)).enumerate() {
            let src = row * tw;
            let dst = y * w + px0;
            img.depth[dst..dst + tw].copy_from_slice(&tile.depth[src..src + tw]);
            img.alpha[dst..dst + tw].copy_from_slice(&tile.alpha[src..src + tw]);
            img.rgb[dst * 3..(dst + tw) * 3].copy_from_slice(&tile.rgb[src * 3..(src + tw) * 3]);
        }
    }
    img
}

fn x_end(tx: usize, ts: usize, w: usize) -> usize {
    ((tx + 1) * ts).min(w)
}

fn y_end(ty: usize, ts: usize, h: usize) -> usize {
    ((ty + 1) * ts).min(h)
}

struct TileBuf<S> {
    rgb: Vec<S>,
    depth: Vec<S>,
    alpha: Vec<S>,
}

/// Coefficients of a degree-5 fit of `2^f` on `[0, 1]`; relative error
/// below 1e-7. Combined with exponent-bit scaling this replaces the library
/// `exp` in the per-pixel loop and keeps the whole alpha batch
/// vectorizable.
const EXP2_POLY: [f64; 6] = [
    0.99999992692498185,
    0.69315296817663496,
    0.24015452988670702,
    0.055823604462330291,
    0.008992584031286683,
    0.0018762329452096343,
];

/// Largest tile edge the rasterizer supports (row batches are fixed-size
/// stack arrays).
pub const MAX_TILE_SIZE: usize = 64;

/// Composite one tile, splat-outer: every pixel still sees its splats in
/// the global front-to-back order, but each splat touches only the pixels
/// inside its own conic support, and a tile whose pixels have all reached
/// the transmittance cutoff stops consuming splats.
fn composite_one_tile<S: Real>(
    splats: &[ProjectedSplat<S>],
    bucket: &[u32],
    px0: usize,
    py0: usize,
    (px_end, py_end): (usize, usize),
    opts: &RenderOptions<S>,
) -> TileBuf<S> {
    let tw = px_end - px0;
    let th = py_end - py0;
    let mut rgb = vec![S::zero(); tw * th * 3];
    let mut depth_num = vec![S::zero(); tw * th];
    let mut alpha_acc = vec![S::zero(); tw * th];
    let mut trans = vec![S::one(); tw * th];
    // Termination bookkeeping: a row with no live pixels costs one branch
    // per splat, a tile with none stops consuming its bucket.
    let mut row_alive = vec![tw as u32; th];
    let mut alive = tw * th;

    let two = real::<S>(2.0);
    let neg_half_log2e = real::<S>(-0.721_347_520_444_481_7); // -log2(e)/2
    let poly: [S; 6] = EXP2_POLY.map(real::<S>);
    let mut lane = [S::zero(); MAX_TILE_SIZE];
    for (j, l) in lane.iter_mut().enumerate() {
        *l = real::<S>(j as f64);
    }

    'splats: for &si in bucket {
        let s = &splats[si as usize];
        let (a, b, c) = s.conic;
        // Scan bound: the exact support ellipse q <= q_cut, inflated just
        // enough that boundary rounding can never exclude a pixel the alpha
        // test would keep.
        let q_scan = s.q_cut * real::<S>(1.001) + real::<S>(1e-3);
        let ry = (q_scan * s.cov[(1, 1)]).sqrt();
        let y_lo = (to_f64(s.center.y - ry).ceil().max(py0 as f64)) as usize;
        let y_hi = to_f64(s.center.y + ry).floor().min((py_end - 1) as f64);
        if y_hi < y_lo as f64 {
            continue;
        }
        for y in y_lo..=(y_hi as usize) {
            let row = y - py0;
            if row_alive[row] == 0 {
                continue;
            }
            let dy = real::<S>(y as f64) - s.center.y;
            // Row support: a dx^2 + 2 b dy dx + c dy^2 <= q_scan.
            let disc = (b * b - a * c) * dy * dy + a * q_scan;
            if disc <= S::zero() {
                continue;
            }
            let half_w = disc.sqrt() / a;
            let xm = s.center.x - b * dy / a;
            let x_lo = (to_f64(xm - half_w).ceil().max(px0 as f64)) as usize;
            let x_hi = to_f64(xm + half_w).floor().min((px_end - 1) as f64);
            if x_hi < x_lo as f64 {
                continue;
            }
            let x_hi = x_hi as usize;
            let span = x_hi - x_lo + 1;
            let c_dy2 = c * dy * dy;
            let b2dy = two * b * dy;
            let dx_lo = real::<S>(x_lo as f64) - s.center.x;

            // Branch-free alpha batch over the row span; the fixed-layout
            // arithmetic (quadratic form, 2^t split, polynomial, exponent
            // bits) auto-vectorizes.
            let mut alphas = [S::zero(); MAX_TILE_SIZE];
            for (j, slot) in alphas[..span].iter_mut().enumerate() {
                let dx = dx_lo + lane[j];
                let q = (a * dx * dx + b2dy * dx + c_dy2).max(S::zero());
                let t = q * neg_half_log2e;
                let i = t.floor();
                let f = t - i;
                let p = poly[0]
                    + f * (poly[1] + f * (poly[2] + f * (poly[3] + f * (poly[4] + f * poly[5]))));
                *slot = s.opacity * p * S::exp2_i32(i.as_i32());
            }

            let row_base = row * tw + (x_lo - px0);
            for (j, &raw_alpha) in alphas[..span].iter().enumerate() {
                let i = row_base + j;
                let t = trans[i];
                if t < opts.transmittance_min {
                    continue;
                }
                let alpha = raw_alpha.min(opts.alpha_clamp);
                if alpha < opts.alpha_skip {
                    continue;
                }
                let weight = alpha * t;
                rgb[i * 3] += s.color.x * weight;
                rgb[i * 3 + 1] += s.color.y * weight;
                rgb[i * 3 + 2] += s.color.z * weight;
                depth_num[i] += s.z * weight;
                alpha_acc[i] += weight;
                let nt = t * (S::one() - alpha);
                trans[i] = nt;
                if nt < opts.transmittance_min {
                    row_alive[row] -= 1;
                    alive -= 1;
                    if alive == 0 {
                        break 'splats;
                    }
                }
            }
        }
    }

    let mut depth = vec![S::zero(); tw * th];
    for i in 0..tw * th {
        let t = trans[i];
        rgb[i * 3] += opts.background.x * t;
        rgb[i * 3 + 1] += opts.background.y * t;
        rgb[i * 3 + 2] += opts.background.z * t;
        if alpha_acc[i] >= opts.alpha_depth_min {
            depth[i] = depth_num[i] / alpha_acc[i];
        }
    }
    TileBuf { rgb, depth, alpha: alpha_acc }
}

/// Quantize a float image into a transport-ready frame.
pub fn quantize<S: Real>(
    img: &ImageF<S>,
    pose_used: Pose6D,
    timestamp_ns: u64,
    seq: u32,
) -> FrameRgbd {
    let rgb = img
        .rgb
        .iter()
        .map(|&v| (to_f64(v).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let depth = img.depth.iter().map(|&v| to_f64(v) as f32).collect();
    FrameRgbd {
        width: img.width,
        height: img.height,
        rgb,
        depth,
        pose_used,
        timestamp_ns,
        seq,
    }
}

/// Render one camera given its world pose (`world_from_camera`).
pub fn render<S: Real>(
    scene: &SplatScene<S>,
    cam_pose_world: &Pose6D,
    k: &CameraIntrinsics<S>,
    opts: &RenderOptions<S>,
    timestamp_ns: u64,
    seq: u32,
) -> FrameRgbd {
    let cam_from_world = cam_pose_world.isometry_cast::<S>().inverse();
    let img = render_image(scene, &cam_from_world, k, opts);
    quantize(&img, *cam_pose_world, timestamp_ns, seq)
}

/// Render every sensor of the rig from one body pose. All frames share the
/// sequence number and timestamp.
pub fn render_rig<S: Real>(
    scene: &SplatScene<S>,
    body_pose: &Pose6D,
    rig: &SensorRig<S>,
    opts: &RenderOptions<S>,
    timestamp_ns: u64,
    seq: u32,
) -> Vec<FrameRgbd> {
    let body_from_world = body_pose.isometry_cast::<S>().inverse();
    rig.sensors()
        .iter()
        .map(|sensor| {
            let cam_from_world = sensor.cam_from_body * body_from_world;
            let img = render_image(scene, &cam_from_world, &sensor.intrinsics, opts);
            quantize(&img, *body_pose, timestamp_ns, seq)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Gaussian3D, SH_COEFFS};
    use nalgebra::UnitQuaternion;

    fn k32() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(100.0, 100.0, 16.0, 16.0, 32, 32, 0.1, 100.0).unwrap()
    }

    fn delta_gaussian(mean: Vector3<f64>, opacity: f64) -> Gaussian3D<f64> {
        let mut sh = [Vector3::zeros(); SH_COEFFS];
        sh[0] = Vector3::new(1.0, 0.5, 0.25);
        Gaussian3D {
            mean,
            scale: Vector3::repeat(0.002),
            rotation: UnitQuaternion::identity(),
            opacity,
            sh,
        }
    }

    #[test]
    fn empty_scene_is_background_with_invalid_depth() {
        // An empty Gaussian list cannot form a scene; emulate "nothing
        // visible" with one fully transparent splat far outside the frustum.
        let scene = SplatScene::new(vec![delta_gaussian(Vector3::new(0.0, 0.0, -50.0), 0.9)]).unwrap();
        let mut opts = RenderOptions::default();
        opts.background = Vector3::new(0.25, 0.5, 0.75);
        let img = render_image(&scene, &Isometry3::identity(), &k32(), &opts);
        for y in 0..32 {
            for x in 0..32 {
                approx::assert_relative_eq!(img.pixel_rgb(x, y), opts.background, epsilon = 1e-12);
                assert_eq!(img.pixel_depth(x, y), 0.0);
            }
        }
    }

    #[test]
    fn single_opaque_splat_depth_at_principal_pixel() {
        let scene = SplatScene::new(vec![delta_gaussian(Vector3::new(0.0, 0.0, 2.0), 0.999)]).unwrap();
        let img = render_image(&scene, &Isometry3::identity(), &k32(), &RenderOptions::default());
        let d = img.pixel_depth(16, 16);
        assert!((d - 2.0).abs() < 1e-3, "depth {d}");
    }

    #[test]
    fn valid_depths_lie_in_camera_range() {
        let scene = SplatScene::new(vec![
            delta_gaussian(Vector3::new(0.0, 0.0, 2.0), 0.9),
            delta_gaussian(Vector3::new(0.05, 0.0, 3.0), 0.9),
        ])
        .unwrap();
        let k = k32();
        let img = render_image(&scene, &Isometry3::identity(), &k, &RenderOptions::default());
        for &d in &img.depth {
            assert!(d == 0.0 || (d >= k.near && d <= k.far));
        }
    }

    #[test]
    fn identical_sensors_render_identical_frames() {
        let scene = SplatScene::new(vec![delta_gaussian(Vector3::new(0.0, 0.0, 2.0), 0.8)]).unwrap();
        let k = CameraIntrinsics::new(50.0, 50.0, 8.0, 8.0, 16, 16, 0.1, 50.0).unwrap();
        let rig = SensorRig::new(vec![
            Sensor { id: "a".into(), intrinsics: k, cam_from_body: Isometry3::identity() },
            Sensor { id: "b".into(), intrinsics: k, cam_from_body: Isometry3::identity() },
        ])
        .unwrap();
        let pose = Pose6D::identity();
        let frames = render_rig(&scene, &pose, &rig, &RenderOptions::default(), 7, 3);
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].rgb, frames[1].rgb);
        assert_eq!(frames[0].depth, frames[1].depth);
        assert_eq!(frames[0].seq, frames[1].seq);
        assert_eq!(frames[0].timestamp_ns, frames[1].timestamp_ns);
    }

    #[test]
    fn rig_rejects_duplicate_ids() {
        let k = CameraIntrinsics::new(50.0, 50.0, 8.0, 8.0, 16, 16, 0.1, 50.0).unwrap();
        let mk = |id: &str| Sensor::<f64> { id: id.into(), intrinsics: k, cam_from_body: Isometry3::identity() };
        assert!(matches!(
            SensorRig::new(vec![mk("front"), mk("front")]),
            Err(RenderError::DuplicateSensor(_))
        ));
        assert!(matches!(SensorRig::<f64>::new(vec![]), Err(RenderError::EmptyRig)));
    }

    #[test]
    fn render_is_deterministic() {
        let scene = SplatScene::new(
            (0..20)
                .map(|i| delta_gaussian(Vector3::new(i as f64 * 0.01, 0.0, 2.0 + i as f64 * 0.1), 0.7))
                .collect(),
        )
        .unwrap();
        let pose = Pose6D::identity();
        let a = render(&scene, &pose, &k32(), &RenderOptions::default(), 0, 0);
        let b = render(&scene, &pose, &k32(), &RenderOptions::default(), 0, 0);
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.depth, b.depth);
    }
}
