//! Perspective projection of 3D Gaussians to screen-space 2D Gaussians.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::geom::transform_point;
use crate::num::{real, Real};
use crate::scene::Gaussian3D;

use super::{CameraIntrinsics, RenderOptions};

/// A Gaussian after projection: screen-space footprint plus everything the
/// rasterizer needs.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedSplat<S: Real> {
    /// Footprint center, pixels. Pixel (i, j) samples continuous (i, j).
    pub center: Vector2<S>,
    /// 2x2 screen-space covariance (dilated).
    pub cov: Matrix2<S>,
    /// Inverse covariance as (a, b, c) of [[a, b], [b, c]].
    pub conic: (S, S, S),
    /// Camera-space depth, meters.
    pub z: S,
    /// Pixel radius beyond which this splat's alpha provably falls under
    /// the skip threshold.
    pub radius: S,
    /// Mahalanobis bound paired with `radius`:
    /// `q > q_cut  =>  opacity * exp(-q/2) < alpha_skip`.
    pub q_cut: S,
    /// Opacity copied from the Gaussian.
    pub opacity: S,
    /// View-dependent RGB evaluated for this camera.
    pub color: Vector3<S>,
}

/// Project one Gaussian. Returns `None` when culled: behind the near plane,
/// beyond the far plane, or with its whole footprint outside the image.
///
/// `cov2d = J * R * Sigma * R^T * J^T + dilation * I` with `J` the perspective
/// Jacobian at the mean and `R` the world-to-camera rotation.
pub fn project_gaussian<S: Real>(
    g: &Gaussian3D<S>,
    cam_from_world: &nalgebra::Isometry3<S>,
    k: &CameraIntrinsics<S>,
    opts: &RenderOptions<S>,
) -> Option<ProjectedSplat<S>> {
    let p_cam = transform_point(cam_from_world, g.mean);
    let z = p_cam.z;
    if z < k.near || z > k.far {
        return None;
    }

    let inv_z = S::one() / z;
    let center = Vector2::new(k.cx + k.fx * p_cam.x * inv_z, k.cy + k.fy * p_cam.y * inv_z);

    let jac = Matrix2x3::new(
        k.fx * inv_z,
        S::zero(),
        -k.fx * p_cam.x * inv_z * inv_z,
        S::zero(),
        k.fy * inv_z,
        -k.fy * p_cam.y * inv_z * inv_z,
    );
    let rot: Matrix3<S> = cam_from_world.rotation.to_rotation_matrix().into_inner();
    let cov_cam = rot * g.covariance() * rot.transpose();
    let mut cov = jac * cov_cam * jac.transpose();
    cov[(0, 0)] += opts.dilation;
    cov[(1, 1)] += opts.dilation;
    // Symmetrize against rounding.
    let b = (cov[(0, 1)] + cov[(1, 0)]) * real::<S>(0.5);
    cov[(0, 1)] = b;
    cov[(1, 0)] = b;

    let (a, c) = (cov[(0, 0)], cov[(1, 1)]);
    let det = a * c - b * b;
    if det <= S::zero() || !det.is_finite() {
        return None; // cannot occur for finite input thanks to the dilation; guarded anyway
    }

    // Alpha-aware footprint: beyond q_cut this splat cannot clear the skip
    // threshold anywhere, so culling and tiling by it lose nothing. For a
    // fully opaque splat this is about 3.3 sigma.
    if !(g.opacity > opts.alpha_skip) {
        return None;
    }
    let q_cut = real::<S>(2.0) * (g.opacity / opts.alpha_skip).ln();
    let mid = (a + c) * real::<S>(0.5);
    let lambda_max = mid + ((a - c) * (a - c) * real::<S>(0.25) + b * b).sqrt();
    let radius = (q_cut * lambda_max).sqrt();

    let w = real::<S>((k.width - 1) as f64);
    let h = real::<S>((k.height - 1) as f64);
    if center.x + radius < S::zero()
        || center.x - radius > w
        || center.y + radius < S::zero()
        || center.y - radius > h
    {
        return None;
    }

    let inv_det = S::one() / det;
    Some(ProjectedSplat {
        center,
        cov,
        conic: (c * inv_det, -b * inv_det, a * inv_det),
        z,
        radius,
        q_cut,
        opacity: g.opacity,
        color: Vector3::zeros(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SH_COEFFS;
    use approx::assert_relative_eq;
    use nalgebra::{Isometry3, UnitQuaternion};

    fn gaussian_at(mean: Vector3<f64>, scale: f64) -> Gaussian3D<f64> {
        Gaussian3D {
            mean,
            scale: Vector3::repeat(scale),
            rotation: UnitQuaternion::identity(),
            opacity: 0.9,
            sh: [Vector3::zeros(); SH_COEFFS],
        }
    }

    fn test_k() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(100.0, 100.0, 16.0, 16.0, 32, 32, 0.1, 100.0).unwrap()
    }

    #[test]
    fn on_axis_projects_to_principal_point() {
        let g = gaussian_at(Vector3::new(0.0, 0.0, 2.0), 0.01);
        let p = project_gaussian(&g, &Isometry3::identity(), &test_k(), &RenderOptions::default())
            .unwrap();
        assert_relative_eq!(p.center, Vector2::new(16.0, 16.0), epsilon = 1e-12);
        assert_relative_eq!(p.z, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn off_axis_pinhole_arithmetic() {
        let g = gaussian_at(Vector3::new(0.2, 0.0, 2.0), 0.01);
        let p = project_gaussian(&g, &Isometry3::identity(), &test_k(), &RenderOptions::default())
            .unwrap();
        // 16 + 100 * 0.2 / 2 = 26
        assert_relative_eq!(p.center, Vector2::new(26.0, 16.0), epsilon = 1e-12);
    }

    #[test]
    fn on_axis_isotropic_covariance() {
        // sigma_px = fx * s / z = 100 * 0.01 / 2 = 0.5; cov = 0.25 I + 0.3 I.
        let g = gaussian_at(Vector3::new(0.0, 0.0, 2.0), 0.01);
        let p = project_gaussian(&g, &Isometry3::identity(), &test_k(), &RenderOptions::default())
            .unwrap();
        assert_relative_eq!(p.cov[(0, 0)], 0.55, epsilon = 1e-12);
        assert_relative_eq!(p.cov[(1, 1)], 0.55, epsilon = 1e-12);
        assert_relative_eq!(p.cov[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn culled_outside_frustum() {
        let opts = RenderOptions::default();
        let k = test_k();
        // Behind the camera.
        assert!(project_gaussian(&gaussian_at(Vector3::new(0.0, 0.0, -1.0), 0.01), &Isometry3::identity(), &k, &opts).is_none());
        // Closer than near.
        assert!(project_gaussian(&gaussian_at(Vector3::new(0.0, 0.0, 0.05), 0.01), &Isometry3::identity(), &k, &opts).is_none());
        // Far off to the side: center at 16 + 100*10/2 = 516 with sub-pixel radius.
        assert!(project_gaussian(&gaussian_at(Vector3::new(10.0, 0.0, 2.0), 0.001), &Isometry3::identity(), &k, &opts).is_none());
    }

    #[test]
    fn cov_matches_explicit_jacobian_product() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let k = test_k();
        let opts = RenderOptions::default();
        for _ in 0..100 {
            let mut g = gaussian_at(
                Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(1.0..4.0)),
                rng.gen_range(0.005..0.1),
            );
            let axis = nalgebra::Unit::new_normalize(Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ));
            g.rotation = UnitQuaternion::from_axis_angle(&axis, rng.gen_range(-3.0..3.0));
            let Some(p) = project_gaussian(&g, &Isometry3::identity(), &k, &opts) else {
                continue;
            };
            // Independent route: scalar expansion of J Sigma J^T.
            let sigma = g.covariance();
            let (x, y, z) = (g.mean.x, g.mean.y, g.mean.z);
            let j = [
                [k.fx / z, 0.0, -k.fx * x / (z * z)],
                [0.0, k.fy / z, -k.fy * y / (z * z)],
            ];
            let mut expect = [[0.0f64; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    let mut acc = 0.0;
                    for i in 0..3 {
                        for l in 0..3 {
                            acc += j[r][i] * sigma[(i, l)] * j[c][l];
                        }
                    }
                    expect[r][c] = acc;
                }
            }
            assert_relative_eq!(p.cov[(0, 0)], expect[0][0] + opts.dilation, epsilon = 1e-9);
            assert_relative_eq!(p.cov[(1, 1)], expect[1][1] + opts.dilation, epsilon = 1e-9);
            assert_relative_eq!(p.cov[(0, 1)], expect[0][1], epsilon = 1e-9);
            // Positive definite.
            let det = p.cov[(0, 0)] * p.cov[(1, 1)] - p.cov[(0, 1)] * p.cov[(0, 1)];
            assert!(det > 0.0 && p.cov[(0, 0)] > 0.0);
        }
    }
}
