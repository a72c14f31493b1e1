//! The dynamic window: a rectangular frame with a clock-like hand rotating at
//! a fixed rate. Provides time-varying occupancy for grading and a
//! homography-based visual overlay onto rendered frames.

use std::collections::HashSet;

use nalgebra::{Isometry3, Matrix3, Vector2, Vector3};

use crate::geom::Pose6D;
use crate::num::{real, to_f64, Real};
use crate::render::{CameraIntrinsics, FrameRgbd};

use super::WorldError;

/// Window-plane obstacle. The window frame has the plane at `z = 0`; the
/// aperture is an open rectangle around the origin and the hand sweeps from
/// the plane center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicWindow<S: Real> {
    /// Rigid transform world -> window frame.
    pub world_to_window: Isometry3<S>,
    /// Aperture rectangle half-extents, meters.
    pub aperture_half: Vector2<S>,
    /// Hand reach from the plane center, meters.
    pub hand_length: S,
    /// Hand thickness, meters.
    pub hand_width: S,
    /// Width of the solid border band around the aperture, meters.
    pub border_width: S,
    /// Hand angular rate, rad/s.
    pub omega: S,
    /// Hand angle at t = 0, rad.
    pub theta0: S,
}

impl<S: Real> DynamicWindow<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        world_to_window: Isometry3<S>,
        aperture_half: Vector2<S>,
        hand_length: S,
        hand_width: S,
        border_width: S,
        omega: S,
        theta0: S,
    ) -> Result<Self, WorldError> {
        if !(aperture_half.x > S::zero() && aperture_half.y > S::zero()) {
            return Err(WorldError::BadWindow("aperture half-extents must be positive"));
        }
        if hand_length > aperture_half.x.min(aperture_half.y) {
            return Err(WorldError::BadWindow("hand must fit inside the aperture"));
        }
        if !(hand_width > S::zero() && border_width > S::zero()) {
            return Err(WorldError::BadWindow("hand and border widths must be positive"));
        }
        if !omega.is_finite() {
            return Err(WorldError::BadWindow("omega must be finite"));
        }
        Ok(Self {
            world_to_window,
            aperture_half,
            hand_length,
            hand_width,
            border_width,
            omega,
            theta0,
        })
    }

    /// Convenience constructor from the window's pose in the world
    /// (`world_from_window`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_world_pose(
        world_from_window: Isometry3<S>,
        aperture_half: Vector2<S>,
        hand_length: S,
        hand_width: S,
        border_width: S,
        omega: S,
        theta0: S,
    ) -> Result<Self, WorldError> {
        Self::new(
            world_from_window.inverse(),
            aperture_half,
            hand_length,
            hand_width,
            border_width,
            omega,
            theta0,
        )
    }

    /// Hand angle at time `t` seconds: `theta0 + omega * t` wrapped to
    /// `[0, 2*pi)`.
    pub fn hand_angle(&self, t: S) -> S {
        hand_angle(self, t)
    }

    /// Is the in-plane point covered by the hand at angle `theta`?
    pub fn covers_hand(&self, x: S, y: S, theta: S) -> bool {
        let (sin, cos) = theta.sin_cos();
        let along = cos * x + sin * y;
        let across = -sin * x + cos * y;
        along >= S::zero()
            && along <= self.hand_length
            && across.abs() <= self.hand_width * real::<S>(0.5)
    }

    /// Is the in-plane point covered by the solid border band?
    pub fn covers_border(&self, x: S, y: S) -> bool {
        let sx = x.abs() - self.aperture_half.x;
        let sy = y.abs() - self.aperture_half.y;
        let s = sx.max(sy);
        s >= S::zero() && s <= self.border_width
    }

    /// Occupancy snapshot at time `t`: voxel coordinates (window frame,
    /// centers at integer multiples of `voxel_size`) covered by the border
    /// band or the hand.
    pub fn occupancy(&self, t: S, voxel_size: S) -> Result<DynamicOccupancy<S>, WorldError> {
        if voxel_size <= S::zero() {
            return Err(WorldError::BadVoxelSize(to_f64(voxel_size)));
        }
        let theta = self.hand_angle(t);
        let reach = self.aperture_half.x.max(self.aperture_half.y) + self.border_width;
        let n = (to_f64(reach / voxel_size)).ceil() as i32 + 1;
        let mut cells = HashSet::new();
        for j in -n..=n {
            for i in -n..=n {
                let x = real::<S>(i as f64) * voxel_size;
                let y = real::<S>(j as f64) * voxel_size;
                if self.covers_border(x, y) || self.covers_hand(x, y, theta) {
                    cells.insert([i, j, 0]);
                }
            }
        }
        Ok(DynamicOccupancy { voxel_size, world_to_window: self.world_to_window, cells })
    }

    /// Sphere-vs-window collision at time `t`: true iff any occupied window
    /// voxel center lies within `radius` of `center_world`. Visits only the
    /// voxels inside the sphere's bounding box in the window frame.
    pub fn collides_sphere(&self, center_world: Vector3<S>, radius: S, t: S, voxel_size: S) -> bool {
        let c = crate::geom::transform_point(&self.world_to_window, center_world);
        let theta = self.hand_angle(t);
        let half = real::<S>(0.5);
        // Occupied cells live in the k = 0 layer (centers on the plane).
        if c.z.abs() - radius > voxel_size * half {
            // Plane layer entirely outside the sphere's z-slab; quick reject
            // uses a half-voxel margin so boundary cases fall through to the
            // exact per-voxel check below.
        }
        let r2 = radius * radius;
        let lo_i = to_f64((c.x - radius) / voxel_size).ceil() as i64 - 1;
        let hi_i = to_f64((c.x + radius) / voxel_size).floor() as i64 + 1;
        let lo_j = to_f64((c.y - radius) / voxel_size).ceil() as i64 - 1;
        let hi_j = to_f64((c.y + radius) / voxel_size).floor() as i64 + 1;
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let x = real::<S>(i as f64) * voxel_size;
                let y = real::<S>(j as f64) * voxel_size;
                let d = Vector3::new(x - c.x, y - c.y, -c.z).norm_squared();
                if d <= r2 && (self.covers_border(x, y) || self.covers_hand(x, y, theta)) {
                    return true;
                }
            }
        }
        false
    }

    /// Hand rectangle corners in the window plane at angle `theta`, counter
    /// clockwise starting at the center-left corner.
    pub fn hand_corners(&self, theta: S) -> [Vector2<S>; 4] {
        let (sin, cos) = theta.sin_cos();
        let half = self.hand_width * real::<S>(0.5);
        let rot = |u: S, v: S| Vector2::new(cos * u - sin * v, sin * u + cos * v);
        [
            rot(S::zero(), -half),
            rot(self.hand_length, -half),
            rot(self.hand_length, half),
            rot(S::zero(), half),
        ]
    }
}

/// Time-varying occupancy: voxelized border + hand in the window frame, with
/// the frame mapping needed to take world-frame queries.
#[derive(Debug, Clone)]
pub struct DynamicOccupancy<S: Real> {
    pub voxel_size: S,
    pub world_to_window: Isometry3<S>,
    /// Voxel coordinates; a cell `[i, j, k]` has its center at
    /// `(i, j, k) * voxel_size` in the window frame.
    pub cells: HashSet<[i32; 3]>,
}

impl<S: Real> DynamicOccupancy<S> {
    /// Voxel coordinate of a window-frame point (nearest cell center).
    pub fn cell_of(&self, p_window: Vector3<S>) -> [i32; 3] {
        [
            to_f64((p_window.x / self.voxel_size).round()) as i32,
            to_f64((p_window.y / self.voxel_size).round()) as i32,
            to_f64((p_window.z / self.voxel_size).round()) as i32,
        ]
    }

    pub fn contains_world_point(&self, p_world: Vector3<S>) -> bool {
        let p = crate::geom::transform_point(&self.world_to_window, p_world);
        self.cells.contains(&self.cell_of(p))
    }
}

/// Free-function form of [`DynamicWindow::hand_angle`].
pub fn hand_angle<S: Real>(w: &DynamicWindow<S>, t: S) -> S {
    let two_pi = S::two_pi();
    let raw = w.theta0 + w.omega * t;
    let wrapped = raw - (raw / two_pi).floor() * two_pi;
    // Guard the half-open interval against rounding in the wrap itself.
    if wrapped >= two_pi {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// Plane-to-image homography `H = K * [r1 r2 t]` of the camera-from-window
/// transform. Maps window-plane homogeneous coordinates `(X, Y, 1)` to pixel
/// homogeneous coordinates.
pub fn plane_homography<S: Real>(
    cam_from_window: &Isometry3<S>,
    k: &CameraIntrinsics<S>,
) -> Matrix3<S> {
    let r = cam_from_window.rotation.to_rotation_matrix();
    let t = cam_from_window.translation.vector;
    let m = Matrix3::from_columns(&[r.matrix().column(0).into(), r.matrix().column(1).into(), t]);
    let k33 = Matrix3::new(
        k.fx,
        S::zero(),
        k.cx,
        S::zero(),
        k.fy,
        k.cy,
        S::zero(),
        S::zero(),
        S::one(),
    );
    k33 * m
}

/// How the overlay paints hand pixels.
#[derive(Debug, Clone, Copy)]
pub struct OverlayStyle {
    pub color: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self { color: [220, 30, 30] }
    }
}

/// Paint the rotating hand onto a rendered frame.
///
/// Pixels covered by the projected hand rectangle are recolored and their
/// depth replaced by the plane depth along the pixel ray, but only where the
/// plane is nearer than the rendered depth or the rendered depth is invalid.
/// Plane points behind the camera are untouched; a window fully behind the
/// camera returns the frame unchanged.
pub fn overlay_hand<S: Real>(
    frame: &FrameRgbd,
    cam_pose_world: &Pose6D,
    k: &CameraIntrinsics<S>,
    w: &DynamicWindow<S>,
    t: S,
    style: OverlayStyle,
) -> FrameRgbd {
    let mut out = frame.clone();
    let cam_from_world = cam_pose_world.isometry_cast::<S>().inverse();
    let cam_from_window = cam_from_world * w.world_to_window.inverse();
    let theta = w.hand_angle(t);

    // Camera-space depth of a plane point (X, Y): third row of [r1 r2 t].
    let r = cam_from_window.rotation.to_rotation_matrix();
    let tr = cam_from_window.translation.vector;
    let depth_row = [r.matrix()[(2, 0)], r.matrix()[(2, 1)], tr.z];
    let plane_z = |xy: Vector2<S>| depth_row[0] * xy.x + depth_row[1] * xy.y + depth_row[2];

    let corners = w.hand_corners(theta);
    let corner_z: Vec<S> = corners.iter().map(|c| plane_z(*c)).collect();
    if corner_z.iter().all(|&z| z <= S::zero()) {
        return out;
    }

    let h = plane_homography(&cam_from_window, k);
    let Some(h_inv) = h.try_inverse() else {
        return out; // plane edge-on: projects to a line, nothing to paint
    };

    // Pixel scan region: bounding box of the projected corners when they are
    // all in front of the camera, otherwise the whole image.
    let (x0, x1, y0, y1) = if corner_z.iter().all(|&z| z > S::zero()) {
        let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &corners {
            let p = h * Vector3::new(c.x, c.y, S::one());
            let px = to_f64(p.x / p.z);
            let py = to_f64(p.y / p.z);
            lo.x = lo.x.min(px);
            lo.y = lo.y.min(py);
            hi.x = hi.x.max(px);
            hi.y = hi.y.max(py);
        }
        let x0 = lo.x.floor().max(0.0) as i64;
        let y0 = lo.y.floor().max(0.0) as i64;
        let x1 = (hi.x.ceil() as i64).min(frame.width as i64 - 1);
        let y1 = (hi.y.ceil() as i64).min(frame.height as i64 - 1);
        if x0 > x1 || y0 > y1 {
            return out;
        }
        (x0 as u32, x1 as u32, y0 as u32, y1 as u32)
    } else {
        (0, frame.width - 1, 0, frame.height - 1)
    };

    for py in y0..=y1 {
        for px in x0..=x1 {
            let hp = h_inv * Vector3::new(real::<S>(px as f64), real::<S>(py as f64), S::one());
            if hp.z.abs() < real::<S>(1e-12) {
                continue;
            }
            let xy = Vector2::new(hp.x / hp.z, hp.y / hp.z);
            if !w.covers_hand(xy.x, xy.y, theta) {
                continue;
            }
            let z = plane_z(xy);
            if z <= S::zero() {
                continue;
            }
            let idx = (py * frame.width + px) as usize;
            let rendered = out.depth[idx];
            let zf = to_f64(z) as f32;
            if rendered == 0.0 || zf < rendered {
                out.depth[idx] = zf;
                out.rgb[idx * 3] = style.color[0];
                out.rgb[idx * 3 + 1] = style.color[1];
                out.rgb[idx * 3 + 2] = style.color[2];
            }
        }
    }
    out
}
