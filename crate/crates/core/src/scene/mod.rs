//! Gaussian-splat scene: parsing, parameter activation, and point-cloud
//! export for occupancy-grid construction.
//!
//! Scene files are binary little-endian PLY with 62 float32 properties per
//! vertex (see [`io`] for the exact layout). Stored scales are log-space and
//! stored opacities are logit-space; activation happens at load so everything
//! downstream sees physical values.

mod io;

pub use io::{load_scene, write_scene, SceneError, VERTEX_PROPERTIES};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::geom::Aabb;
use crate::num::{real, Real};

/// Number of spherical-harmonic coefficients per color channel (degree 0-3).
pub const SH_COEFFS: usize = 16;

/// One anisotropic 3D Gaussian with opacity and view-dependent color.
///
/// All values are post-activation: `scale` components are per-axis standard
/// deviations in meters (strictly positive), `opacity` is in (0, 1), and
/// `rotation` is normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D<S: Real> {
    /// Center in world frame, meters.
    pub mean: Vector3<S>,
    /// Per-axis standard deviation, meters.
    pub scale: Vector3<S>,
    /// Local-to-world rotation of the principal axes.
    pub rotation: UnitQuaternion<S>,
    /// Alpha in (0, 1).
    pub opacity: S,
    /// Spherical-harmonic color coefficients, one RGB triple per basis
    /// function, index 0 is the DC term.
    pub sh: [Vector3<S>; SH_COEFFS],
}

impl<S: Real> Gaussian3D<S> {
    /// 3x3 world-frame covariance `R * diag(scale^2) * R^T`.
    pub fn covariance(&self) -> Matrix3<S> {
        covariance_of(self)
    }
}

/// World-frame covariance of a Gaussian: symmetric positive-semidefinite,
/// `diag(scale^2)` under identity rotation.
pub fn covariance_of<S: Real>(g: &Gaussian3D<S>) -> Matrix3<S> {
    let r = g.rotation.to_rotation_matrix();
    let d = Matrix3::from_diagonal(&g.scale.component_mul(&g.scale));
    r * d * r.transpose()
}

/// An immutable collection of Gaussians plus the bounding box of their means.
#[derive(Debug, Clone)]
pub struct SplatScene<S: Real> {
    gaussians: Vec<Gaussian3D<S>>,
    aabb: Aabb<S>,
}

impl<S: Real> SplatScene<S> {
    /// Build a scene from parsed Gaussians. Errors on an empty list: a scene
    /// with no content has no bounding box.
    pub fn new(gaussians: Vec<Gaussian3D<S>>) -> Result<Self, SceneError> {
        let means: Vec<Vector3<S>> = gaussians.iter().map(|g| g.mean).collect();
        let aabb = Aabb::from_points(&means).ok_or(SceneError::Empty)?;
        Ok(Self { gaussians, aabb })
    }

    pub fn gaussians(&self) -> &[Gaussian3D<S>] {
        &self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Bounding box of the Gaussian means.
    pub fn aabb(&self) -> Aabb<S> {
        self.aabb
    }

    /// Means of all Gaussians with `opacity >= opacity_min`, order preserved.
    pub fn export_pointcloud(&self, opacity_min: S) -> Vec<Vector3<S>> {
        export_pointcloud(self, opacity_min)
    }

    /// Re-express the scene in another scalar type.
    pub fn convert<T: Real>(&self) -> SplatScene<T> {
        let gaussians = self
            .gaussians
            .iter()
            .map(|g| {
                let q = g.rotation.quaternion();
                Gaussian3D {
                    mean: g.mean.map(|v| cast::<S, T>(v)),
                    scale: g.scale.map(|v| cast::<S, T>(v)),
                    rotation: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                        cast::<S, T>(q.w),
                        cast::<S, T>(q.i),
                        cast::<S, T>(q.j),
                        cast::<S, T>(q.k),
                    )),
                    opacity: cast::<S, T>(g.opacity),
                    sh: g.sh.map(|c| c.map(|v| cast::<S, T>(v))),
                }
            })
            .collect();
        SplatScene::new(gaussians).expect("non-empty scene stays non-empty")
    }
}

fn cast<S: Real, T: Real>(v: S) -> T {
    real::<T>(crate::num::to_f64(v))
}

/// Means of Gaussians passing the opacity threshold, order preserved.
/// An empty result is allowed.
pub fn export_pointcloud<S: Real>(scene: &SplatScene<S>, opacity_min: S) -> Vec<Vector3<S>> {
    scene
        .gaussians
        .iter()
        .filter(|g| g.opacity >= opacity_min)
        .map(|g| g.mean)
        .collect()
}

/// Stored (pre-activation) per-vertex record, exactly as laid out in the
/// scene file. `f_rest` is channel-major: coefficients 1-15 for R, then G,
/// then B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoredGaussian {
    pub position: [f32; 3],
    pub normal: [f32; 3],
    pub f_dc: [f32; 3],
    pub f_rest: [f32; 45],
    pub opacity: f32,
    pub scale: [f32; 3],
    pub rot: [f32; 4],
}

impl StoredGaussian {
    /// Apply activations: `scale = exp(stored)`, `opacity = sigmoid(stored)`,
    /// rotation normalized from (w, x, y, z). Normals are discarded.
    pub fn activate<S: Real>(&self) -> Gaussian3D<S> {
        let f = |v: f32| real::<S>(v as f64);
        let mean = Vector3::new(f(self.position[0]), f(self.position[1]), f(self.position[2]));
        let scale = Vector3::new(
            f(self.scale[0]).exp(),
            f(self.scale[1]).exp(),
            f(self.scale[2]).exp(),
        );
        let opacity = sigmoid(f(self.opacity));
        let q = nalgebra::Quaternion::new(f(self.rot[0]), f(self.rot[1]), f(self.rot[2]), f(self.rot[3]));
        let rotation = UnitQuaternion::from_quaternion(q);

        let mut sh = [Vector3::zeros(); SH_COEFFS];
        sh[0] = Vector3::new(f(self.f_dc[0]), f(self.f_dc[1]), f(self.f_dc[2]));
        for i in 1..SH_COEFFS {
            sh[i] = Vector3::new(
                f(self.f_rest[i - 1]),
                f(self.f_rest[14 + i]),
                f(self.f_rest[29 + i]),
            );
        }
        Gaussian3D { mean, scale, rotation, opacity, sh }
    }

    /// Inverse of [`Self::activate`] for a post-activation Gaussian:
    /// log-scale, logit-opacity, raw quaternion. Normals write as zero.
    pub fn deactivate<S: Real>(g: &Gaussian3D<S>) -> Self {
        let f = |v: S| crate::num::to_f64(v) as f32;
        let q = g.rotation.quaternion();
        let mut f_rest = [0f32; 45];
        for i in 1..SH_COEFFS {
            f_rest[i - 1] = f(g.sh[i].x);
            f_rest[14 + i] = f(g.sh[i].y);
            f_rest[29 + i] = f(g.sh[i].z);
        }
        StoredGaussian {
            position: [f(g.mean.x), f(g.mean.y), f(g.mean.z)],
            normal: [0.0; 3],
            f_dc: [f(g.sh[0].x), f(g.sh[0].y), f(g.sh[0].z)],
            f_rest,
            opacity: f(logit(g.opacity)),
            scale: [f(g.scale.x.ln()), f(g.scale.y.ln()), f(g.scale.z.ln())],
            rot: [f(q.w), f(q.i), f(q.j), f(q.k)],
        }
    }
}

fn sigmoid<S: Real>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

fn logit<S: Real>(p: S) -> S {
    (p / (S::one() - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_gaussian(opacity: f64) -> Gaussian3D<f64> {
        Gaussian3D {
            mean: Vector3::zeros(),
            scale: Vector3::new(1.0, 1.0, 1.0),
            rotation: UnitQuaternion::identity(),
            opacity,
            sh: [Vector3::zeros(); SH_COEFFS],
        }
    }

    #[test]
    fn covariance_identity_rotation_is_diag_scale_squared() {
        let mut g = unit_gaussian(0.5);
        g.scale = Vector3::new(1.0, 2.0, 3.0);
        let cov = covariance_of(&g);
        assert_relative_eq!(cov, Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 9.0)), epsilon = 1e-12);
    }

    #[test]
    fn covariance_z_rotation_permutes_axes() {
        // 90 deg about z maps the local x-axis (sigma=1) onto world y and the
        // local y-axis (sigma=2) onto world -x.
        let mut g = unit_gaussian(0.5);
        g.scale = Vector3::new(1.0, 2.0, 1.0);
        g.rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let cov = covariance_of(&g);
        assert_relative_eq!(cov, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)), epsilon = 1e-12);
    }

    #[test]
    fn covariance_matches_explicit_product_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let axis = nalgebra::Unit::new_normalize(Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ));
            let mut g = unit_gaussian(rng.gen_range(0.05..0.95));
            g.scale = Vector3::new(
                rng.gen_range(0.01..2.0),
                rng.gen_range(0.01..2.0),
                rng.gen_range(0.01..2.0),
            );
            g.rotation = UnitQuaternion::from_axis_angle(&axis, rng.gen_range(-3.0..3.0));

            // Explicit element-by-element product as an independent route.
            let r = g.rotation.to_rotation_matrix();
            let mut expect = Matrix3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += r[(i, k)] * g.scale[k] * g.scale[k] * r[(j, k)];
                    }
                    expect[(i, j)] = acc;
                }
            }
            let cov = covariance_of(&g);
            assert_relative_eq!(cov, expect, epsilon = 1e-9);
            // Symmetric within 1e-9.
            assert_relative_eq!(cov, cov.transpose(), epsilon = 1e-9);
        }
    }

    #[test]
    fn pointcloud_respects_threshold() {
        let scene = SplatScene::new(vec![
            { let mut g = unit_gaussian(0.3); g.mean = Vector3::new(1.0, 0.0, 0.0); g },
            { let mut g = unit_gaussian(0.7); g.mean = Vector3::new(2.0, 0.0, 0.0); g },
        ])
        .unwrap();
        assert_eq!(scene.export_pointcloud(0.0).len(), 2);
        let pts = scene.export_pointcloud(0.5);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0], Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn pointcloud_matches_linear_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let gaussians: Vec<_> = (0..1000)
            .map(|i| {
                let mut g = unit_gaussian(rng.gen_range(0.0001..0.9999));
                g.mean = Vector3::new(i as f64, 0.0, 0.0);
                g
            })
            .collect();
        let scene = SplatScene::new(gaussians.clone()).unwrap();
        let got = scene.export_pointcloud(0.5);
        let expect: Vec<_> = gaussians.iter().filter(|g| g.opacity >= 0.5).map(|g| g.mean).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn pointcloud_len_monotone_in_threshold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let scene = SplatScene::new(
            (0..500)
                .map(|_| unit_gaussian(rng.gen_range(0.0001..0.9999)))
                .collect(),
        )
        .unwrap();
        let mut prev = usize::MAX;
        for i in 0..20 {
            let t = i as f64 / 20.0;
            let n = scene.export_pointcloud(t).len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn aabb_contains_every_mean() {
        let mut gs = Vec::new();
        for i in 0..10 {
            let mut g = unit_gaussian(0.5);
            g.mean = Vector3::new(i as f64, -(i as f64), 0.5 * i as f64);
            gs.push(g);
        }
        let scene = SplatScene::new(gs).unwrap();
        for g in scene.gaussians() {
            assert!(scene.aabb().contains(g.mean));
        }
    }
}
