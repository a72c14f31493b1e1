//! Test-support code shared by this crate's test suites and the CLI's
//! acceptance suite: a brute-force compositing oracle, an independent
//! spherical-harmonics evaluation route, and seeded fixture generators.
//!
//! Oracles here deliberately avoid the production code paths they check:
//! projection is re-derived with scalar loops, compositing runs per pixel
//! over every Gaussian with no tiling and no early termination, and the SH
//! basis comes from associated Legendre recurrences instead of hard-coded
//! polynomials.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geom::Pose6D;
use crate::num::{real, to_f64, Real};
use crate::render::{CameraIntrinsics, ImageF, RenderOptions};
use crate::scene::{Gaussian3D, SplatScene, SH_COEFFS};

/// Reference renderer: every Gaussian evaluated at every pixel, in globally
/// sorted depth order, with no tiling, no footprint culling, and no
/// transmittance termination.
pub fn brute_force_render<S: Real>(
    scene: &SplatScene<S>,
    cam_from_world: &Isometry3<S>,
    k: &CameraIntrinsics<S>,
    opts: &RenderOptions<S>,
) -> ImageF<S> {
    struct Flat<S> {
        cx: S,
        cy: S,
        conic: (S, S, S),
        z: S,
        opacity: S,
        color: Vector3<S>,
    }

    let cam_center = cam_from_world.inverse().translation.vector;
    let rot = cam_from_world.rotation.to_rotation_matrix();
    let r: Vec<Vec<S>> = (0..3)
        .map(|i| (0..3).map(|j| rot.matrix()[(i, j)]).collect())
        .collect();
    let t = cam_from_world.translation.vector;

    let mut flats: Vec<Flat<S>> = Vec::new();
    for g in scene.gaussians() {
        // Camera-space mean by explicit expansion.
        let m = g.mean;
        let mut pc = [S::zero(); 3];
        for i in 0..3 {
            pc[i] = r[i][0] * m.x + r[i][1] * m.y + r[i][2] * m.z + t[i];
        }
        let z = pc[2];
        if z < k.near || z > k.far {
            continue;
        }

        // World covariance, scalar expansion of R diag(s^2) R^T.
        let gr = g.rotation.to_rotation_matrix();
        let mut sigma = [[S::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = S::zero();
                for a in 0..3 {
                    acc += gr.matrix()[(i, a)] * g.scale[a] * g.scale[a] * gr.matrix()[(j, a)];
                }
                sigma[i][j] = acc;
            }
        }
        // Camera-frame covariance W Sigma W^T.
        let mut sig_cam = [[S::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = S::zero();
                for a in 0..3 {
                    for b in 0..3 {
                        acc += r[i][a] * sigma[a][b] * r[j][b];
                    }
                }
                sig_cam[i][j] = acc;
            }
        }
        // Perspective Jacobian rows.
        let inv_z = S::one() / z;
        let j0 = [k.fx * inv_z, S::zero(), -k.fx * pc[0] * inv_z * inv_z];
        let j1 = [S::zero(), k.fy * inv_z, -k.fy * pc[1] * inv_z * inv_z];
        let quad = |a: &[S; 3], b: &[S; 3]| {
            let mut acc = S::zero();
            for i in 0..3 {
                for jj in 0..3 {
                    acc += a[i] * sig_cam[i][jj] * b[jj];
                }
            }
            acc
        };
        let caa = quad(&j0, &j0) + opts.dilation;
        let cbb = quad(&j1, &j1) + opts.dilation;
        let cab = quad(&j0, &j1);
        let det = caa * cbb - cab * cab;
        if det <= S::zero() {
            continue;
        }
        let inv_det = S::one() / det;

        let dir = (g.mean - cam_center) / (g.mean - cam_center).norm();
        flats.push(Flat {
            cx: k.cx + k.fx * pc[0] * inv_z,
            cy: k.cy + k.fy * pc[1] * inv_z,
            conic: (cbb * inv_det, -cab * inv_det, caa * inv_det),
            z,
            opacity: g.opacity,
            color: crate::render::eval_sh_color(&g.sh, dir),
        });
    }
    flats.sort_by(|a, b| a.z.partial_cmp(&b.z).unwrap());

    let (w, h) = (k.width as usize, k.height as usize);
    let mut img = ImageF {
        width: k.width,
        height: k.height,
        rgb: vec![S::zero(); w * h * 3],
        depth: vec![S::zero(); w * h],
        alpha: vec![S::zero(); w * h],
    };
    let half = real::<S>(0.5);
    for y in 0..h {
        for x in 0..w {
            let px = real::<S>(x as f64);
            let py = real::<S>(y as f64);
            let mut acc = Vector3::<S>::zeros();
            let mut depth_num = S::zero();
            let mut alpha_acc = S::zero();
            let mut transmittance = S::one();
            for f in &flats {
                let dx = px - f.cx;
                let dy = py - f.cy;
                let (a, b, c) = f.conic;
                let q = a * dx * dx + real::<S>(2.0) * b * dx * dy + c * dy * dy;
                if q < S::zero() {
                    continue;
                }
                let alpha = (f.opacity * (-half * q).exp()).min(opts.alpha_clamp);
                if alpha < opts.alpha_skip {
                    continue;
                }
                let weight = alpha * transmittance;
                acc += f.color * weight;
                depth_num += f.z * weight;
                alpha_acc += weight;
                transmittance *= S::one() - alpha;
                // No termination: that is the point of the oracle.
            }
            let i = y * w + x;
            let out = acc + opts.background * transmittance;
            img.rgb[i * 3] = out.x;
            img.rgb[i * 3 + 1] = out.y;
            img.rgb[i * 3 + 2] = out.z;
            img.alpha[i] = alpha_acc;
            img.depth[i] = if alpha_acc >= opts.alpha_depth_min {
                depth_num / alpha_acc
            } else {
                S::zero()
            };
        }
    }
    img
}

/// Largest absolute per-channel RGB difference between two images.
pub fn max_rgb_delta<S: Real>(a: &ImageF<S>, b: &ImageF<S>) -> f64 {
    a.rgb.iter().zip(&b.rgb).map(|(x, y)| to_f64((*x - *y).abs())).fold(0.0, f64::max)
}

/// Largest absolute depth difference, counting valid/invalid disagreements
/// as the full depth value.
pub fn max_depth_delta<S: Real>(a: &ImageF<S>, b: &ImageF<S>) -> f64 {
    a.depth.iter().zip(&b.depth).map(|(x, y)| to_f64((*x - *y).abs())).fold(0.0, f64::max)
}

/// Degree-3 real SH basis through associated Legendre recurrences and
/// spherical angles. Independent of the Cartesian polynomial table.
pub fn sh_basis_legendre(dir: Vector3<f64>) -> [f64; SH_COEFFS] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let phi = y.atan2(x);
    let ct = z.clamp(-1.0, 1.0);

    // Associated Legendre P_l^m(ct) with the Condon-Shortley phase.
    let mut p = [[0.0f64; 4]; 4]; // p[l][m]
    let st = (1.0 - ct * ct).max(0.0).sqrt();
    for m in 0..4usize {
        // P_m^m = (-1)^m (2m-1)!! (1-x^2)^(m/2)
        let mut pmm = 1.0;
        for k in 1..=m {
            pmm *= -((2 * k - 1) as f64) * st;
        }
        p[m][m] = pmm;
        if m + 1 < 4 {
            p[m + 1][m] = ct * (2 * m + 1) as f64 * pmm;
        }
        for l in (m + 2)..4 {
            p[l][m] = (ct * (2 * l - 1) as f64 * p[l - 1][m]
                - (l + m - 1) as f64 * p[l - 2][m])
                / (l - m) as f64;
        }
    }

    let factorial = |n: usize| -> f64 { (1..=n).map(|v| v as f64).product::<f64>().max(1.0) };
    let norm = |l: usize, m: usize| -> f64 {
        ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - m) / factorial(l + m))
            .sqrt()
    };

    let mut out = [0.0; SH_COEFFS];
    let mut idx = 0;
    for l in 0..4usize {
        for m_signed in -(l as i32)..=(l as i32) {
            let m = m_signed.unsigned_abs() as usize;
            let k = norm(l, m);
            out[idx] = if m_signed == 0 {
                k * p[l][0]
            } else if m_signed > 0 {
                std::f64::consts::SQRT_2 * k * (m as f64 * phi).cos() * p[l][m]
            } else {
                std::f64::consts::SQRT_2 * k * (m as f64 * phi).sin() * p[l][m]
            };
            idx += 1;
        }
    }
    out
}

/// Seeded random scene in a `[-extent, extent]^3` box around the origin.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> SplatScene<f64> {
    let gaussians = (0..n).map(|_| random_gaussian(rng, extent)).collect();
    SplatScene::new(gaussians).expect("n >= 1")
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, extent: f64) -> Gaussian3D<f64> {
    let axis = nalgebra::Unit::new_normalize(Vector3::new(
        rng.gen_range(-1.0..1.0f64),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ));
    let mut sh = [Vector3::zeros(); SH_COEFFS];
    sh[0] = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    for coeff in sh.iter_mut().skip(1) {
        *coeff = Vector3::new(
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
        );
    }
    Gaussian3D {
        mean: Vector3::new(
            rng.gen_range(-extent..extent),
            rng.gen_range(-extent..extent),
            rng.gen_range(-extent..extent),
        ),
        scale: Vector3::new(
            rng.gen_range(0.01..0.15),
            rng.gen_range(0.01..0.15),
            rng.gen_range(0.01..0.15),
        ),
        rotation: UnitQuaternion::from_axis_angle(&axis, rng.gen_range(-3.1..3.1)),
        opacity: rng.gen_range(0.05..0.99),
        sh,
    }
}

/// Random camera pose a few meters out, looking roughly at the origin with
/// random roll. Returns `world_from_camera`.
pub fn random_camera_pose(rng: &mut ChaCha8Rng) -> Pose6D {
    let dir = nalgebra::Unit::new_normalize(Vector3::new(
        rng.gen_range(-1.0..1.0f64),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ));
    let dist = rng.gen_range(2.5..4.0);
    let position = -dir.into_inner() * dist;
    let target = Vector3::new(
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.3..0.3),
    );
    let world_from_cam = look_at(position, target, rng.gen_range(-3.1..3.1));
    Pose6D::new(world_from_cam.translation.vector, world_from_cam.rotation)
}

/// Camera pose with +z looking from `eye` toward `target`, rolled by `roll`
/// about the optical axis.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, roll: f64) -> Isometry3<f64> {
    let forward = (target - eye).normalize();
    let up_hint = if forward.z.abs() > 0.95 { Vector3::x() } else { Vector3::z() };
    let right = up_hint.cross(&forward).normalize();
    let down = forward.cross(&right);
    let rot = nalgebra::Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[
        right, down, forward,
    ]));
    let rot = UnitQuaternion::from_rotation_matrix(&rot)
        * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), roll);
    Isometry3::from_parts(Translation3::from(eye), rot)
}
