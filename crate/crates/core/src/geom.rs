//! Shared geometric types: timestamped rigid-body poses and axis-aligned
//! bounding boxes.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::num::{real, Real};

/// Rigid-body pose of a frame expressed in the world frame: `world_from_body`.
///
/// Stored double-precision to match the wire formats; cast to the render
/// scalar at the point of use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6D {
    /// Position in meters, world frame.
    pub position: Vector3<f64>,
    /// Orientation body->world as a unit quaternion.
    pub quat: UnitQuaternion<f64>,
}

impl Pose6D {
    pub fn new(position: Vector3<f64>, quat: UnitQuaternion<f64>) -> Self {
        Self { position, quat }
    }

    pub fn identity() -> Self {
        Self { position: Vector3::zeros(), quat: UnitQuaternion::identity() }
    }

    /// Build from raw quaternion components in (w, x, y, z) order,
    /// normalizing. Returns `None` for zero-norm or non-finite input.
    pub fn from_parts(position: Vector3<f64>, wxyz: [f64; 4]) -> Option<Self> {
        let [w, x, y, z] = wxyz;
        if !wxyz.iter().all(|v| v.is_finite()) {
            return None;
        }
        let q = nalgebra::Quaternion::new(w, x, y, z);
        if q.norm() < 1e-12 {
            return None;
        }
        Some(Self { position, quat: UnitQuaternion::from_quaternion(q) })
    }

    /// `world_from_body` as an isometry.
    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.quat)
    }

    /// `world_from_body` cast to the working scalar.
    pub fn isometry_cast<S: Real>(&self) -> Isometry3<S> {
        let p = self.position.map(|v| real::<S>(v));
        let q = self.quat.quaternion();
        let q = nalgebra::Quaternion::new(
            real::<S>(q.w),
            real::<S>(q.i),
            real::<S>(q.j),
            real::<S>(q.k),
        );
        Isometry3::from_parts(
            Translation3::from(p),
            UnitQuaternion::from_quaternion(q),
        )
    }

    /// Quaternion components in (w, x, y, z) order.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.quat.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<S: Real> {
    pub min: Vector3<S>,
    pub max: Vector3<S>,
}

impl<S: Real> Aabb<S> {
    /// Degenerate box around a single point.
    pub fn from_point(p: Vector3<S>) -> Self {
        Self { min: p, max: p }
    }

    /// Smallest box containing all points. `None` if the slice is empty.
    pub fn from_points(points: &[Vector3<S>]) -> Option<Self> {
        let mut it = points.iter();
        let first = *it.next()?;
        let mut aabb = Self::from_point(first);
        for p in it {
            aabb.grow(*p);
        }
        Some(aabb)
    }

    pub fn grow(&mut self, p: Vector3<S>) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    /// Inflate symmetrically by `pad` on every side.
    pub fn inflated(&self, pad: S) -> Self {
        let v = Vector3::repeat(pad);
        Self { min: self.min - v, max: self.max + v }
    }

    pub fn contains(&self, p: Vector3<S>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<S> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<S> {
        (self.min + self.max) * real::<S>(0.5)
    }
}

/// Convenience: isometry from a position and (w, x, y, z) quaternion.
pub fn isometry_from_wxyz<S: Real>(position: Vector3<S>, wxyz: [S; 4]) -> Isometry3<S> {
    let q = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    Isometry3::from_parts(
        Translation3::from(position),
        UnitQuaternion::from_quaternion(q),
    )
}

/// Parse a row-major 4x4 rigid transform. The rotation block must be
/// orthonormal within 1e-6 with positive determinant, and the bottom row
/// (0, 0, 0, 1).
pub fn isometry_from_mat16(m: &[f64; 16]) -> Result<Isometry3<f64>, String> {
    for (i, expect) in [(12, 0.0), (13, 0.0), (14, 0.0), (15, 1.0)] {
        if (m[i] - expect).abs() > 1e-9 {
            return Err(format!("bottom row must be (0, 0, 0, 1), entry {i} is {}", m[i]));
        }
    }
    let r = nalgebra::Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    let gram = r * r.transpose();
    let err = (gram - nalgebra::Matrix3::identity()).abs().max();
    if err > 1e-6 {
        return Err(format!("rotation block not orthonormal (deviation {err:.2e})"));
    }
    if r.determinant() < 0.0 {
        return Err("rotation block is a reflection (det < 0)".into());
    }
    let rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
    Ok(Isometry3::from_parts(
        Translation3::new(m[3], m[7], m[11]),
        rot,
    ))
}

/// Transform a point by an isometry, vector-in/vector-out.
#[inline]
pub fn transform_point<S: Real>(iso: &Isometry3<S>, p: Vector3<S>) -> Vector3<S> {
    iso.transform_point(&Point3::from(p)).coords
}
