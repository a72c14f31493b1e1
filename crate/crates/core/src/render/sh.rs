//! Real spherical-harmonic color evaluation, degree 0-3 (16 coefficients per
//! channel), in the basis convention used by splat exporters.

use nalgebra::Vector3;

use crate::num::{real, Real};
use crate::scene::SH_COEFFS;

pub const SH_C0: f64 = 0.28209479177387814;
pub const SH_C1: f64 = 0.4886025119029199;
pub const SH_C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
pub const SH_C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

/// The 16 basis values for a unit direction.
pub fn sh_basis<S: Real>(dir: Vector3<S>) -> [S; SH_COEFFS] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let c1 = real::<S>(SH_C1);
    let c2: Vec<S> = SH_C2.iter().map(|&c| real::<S>(c)).collect();
    let c3: Vec<S> = SH_C3.iter().map(|&c| real::<S>(c)).collect();
    let two = real::<S>(2.0);
    let three = real::<S>(3.0);
    let four = real::<S>(4.0);
    [
        real::<S>(SH_C0),
        -c1 * y,
        c1 * z,
        -c1 * x,
        c2[0] * xy,
        c2[1] * yz,
        c2[2] * (two * zz - xx - yy),
        c2[3] * xz,
        c2[4] * (xx - yy),
        c3[0] * y * (three * xx - yy),
        c3[1] * xy * z,
        c3[2] * y * (four * zz - xx - yy),
        c3[3] * z * (two * zz - three * xx - three * yy),
        c3[4] * x * (four * zz - xx - yy),
        c3[5] * z * (xx - yy),
        c3[6] * x * (xx - three * yy),
    ]
}

/// Evaluate view-dependent RGB: `clamp(0.5 + sum_i sh[i] * Y_i(dir), 0, 1)`
/// per channel. `view_dir` must be unit length.
pub fn eval_sh_color<S: Real>(sh: &[Vector3<S>; SH_COEFFS], view_dir: Vector3<S>) -> Vector3<S> {
    let basis = sh_basis(view_dir);
    let mut c = Vector3::repeat(real::<S>(0.5));
    for (coeff, b) in sh.iter().zip(basis) {
        c += coeff * b;
    }
    c.map(|v| v.clamp(S::zero(), S::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_coefficients_give_mid_gray() {
        let sh = [Vector3::zeros(); SH_COEFFS];
        for dir in [
            Vector3::new(1.0f64, 0.0, 0.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(0.6, 0.8, 0.0),
        ] {
            assert_relative_eq!(eval_sh_color(&sh, dir), Vector3::repeat(0.5), epsilon = 1e-15);
        }
    }

    #[test]
    fn dc_only_is_view_independent() {
        let mut sh = [Vector3::zeros(); SH_COEFFS];
        sh[0] = Vector3::new(0.7f64, 0.0, 0.0);
        let a = eval_sh_color(&sh, Vector3::new(1.0, 0.0, 0.0));
        let b = eval_sh_color(&sh, Vector3::new(0.0, 0.6, 0.8));
        assert_relative_eq!(a, b, epsilon = 1e-15);
        assert_relative_eq!(a.x, (0.5 + SH_C0 * 0.7).clamp(0.0, 1.0), epsilon = 1e-15);
    }
}
