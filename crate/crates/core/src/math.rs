//! Rotation helpers and small numeric utilities.
//!
//! Attitudes use the yaw-pitch convention `R = Rz(yaw) * Ry(pitch)`, so the
//! beam axis `R e1 = [cos(yaw) cos(pitch), sin(yaw) cos(pitch), -sin(pitch)]`.
//! A negative pitch raises the end carrying anchor 1.

use crate::{Mat3, Vec3};
use nalgebra::SVD;

pub fn e1() -> Vec3 {
    Vec3::x()
}

pub fn e3() -> Vec3 {
    Vec3::z()
}

/// Skew-symmetric matrix with `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Zero-roll attitude `Rz(yaw) * Ry(pitch)`.
pub fn yaw_pitch_rotation(yaw: f64, pitch: f64) -> Mat3 {
    rot_z(yaw) * rot_y(pitch)
}

/// Yaw and pitch of the beam axis `R e1`. Roll about the axis is ignored.
pub fn yaw_pitch(rotation: &Mat3) -> (f64, f64) {
    axis_yaw_pitch(&rotation.column(0).into_owned())
}

/// Yaw and pitch of a direction vector. Yaw is 0 for vertical directions.
pub fn axis_yaw_pitch(axis: &Vec3) -> (f64, f64) {
    let horizontal = axis.x.hypot(axis.y);
    let yaw = if horizontal > 0.0 {
        axis.y.atan2(axis.x)
    } else {
        0.0
    };
    (yaw, (-axis.z).atan2(horizontal))
}

/// Zero-roll frame whose x-axis is the unit vector along `axis`.
///
/// For a vertical axis the heading is taken from `fallback_yaw`.
pub fn frame_from_axis(axis: &Vec3, fallback_yaw: f64) -> Mat3 {
    let unit = axis.normalize();
    let horizontal = unit.x.hypot(unit.y);
    if horizontal > 1e-12 {
        let (yaw, pitch) = axis_yaw_pitch(&unit);
        yaw_pitch_rotation(yaw, pitch)
    } else {
        let pitch = if unit.z > 0.0 {
            -std::f64::consts::FRAC_PI_2
        } else {
            std::f64::consts::FRAC_PI_2
        };
        yaw_pitch_rotation(fallback_yaw, pitch)
    }
}

/// Rodrigues formula for `exp([v]x)`.
pub fn so3_exp(v: &Vec3) -> Mat3 {
    let angle = v.norm();
    let k = skew(v);
    if angle < 1e-8 {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = angle.sin() / angle;
    let b = (1.0 - angle.cos()) / (angle * angle);
    Mat3::identity() + a * k + b * k * k
}

/// Closest rotation in Frobenius norm (polar factor of `m`).
pub fn project_to_so3(m: &Mat3) -> Mat3 {
    let svd = SVD::new(*m, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_flip = u;
        u_flip.column_mut(2).neg_mut();
        r = u_flip * v_t;
    }
    r
}

/// `|R^T R - I|_F`, the departure of `m` from orthonormality.
pub fn orthonormality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = angle.rem_euclid(two_pi);
    if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Quintic rest-to-rest blend `s(tau)` on `[0, 1]` and its first two derivatives
/// with respect to `tau`.
pub fn quintic_blend(tau: f64) -> (f64, f64, f64) {
    if tau <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if tau >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
    let ds = 30.0 * t2 * (1.0 - tau) * (1.0 - tau);
    let dds = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau);
    (s, ds, dds)
}

/// True when `m` is symmetric (relative tolerance) and positive definite.
pub fn is_symmetric_positive_definite(m: &Mat3) -> bool {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).norm() > 1e-12 * scale {
        return false;
    }
    m.symmetric_eigenvalues().iter().all(|&l| l > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn beam_axis_follows_convention() {
        let r = yaw_pitch_rotation(PI / 8.0, -PI / 12.0);
        let x = r.column(0);
        assert_relative_eq!(x[0], (PI / 8.0).cos() * (PI / 12.0).cos(), epsilon = 1e-15);
        assert_relative_eq!(x[2], (PI / 12.0).sin(), epsilon = 1e-15);
        let (yaw, pitch) = yaw_pitch(&r);
        assert_relative_eq!(yaw, PI / 8.0, epsilon = 1e-14);
        assert_relative_eq!(pitch, -PI / 12.0, epsilon = 1e-14);
    }

    #[test]
    fn vertical_frames() {
        let up = frame_from_axis(&Vec3::new(0.0, 0.0, 2.0), 0.3);
        assert_relative_eq!(up * e1(), e3(), epsilon = 1e-15);
        let down = frame_from_axis(&Vec3::new(0.0, 0.0, -1.0), 0.3);
        assert_relative_eq!(down * e1(), -e3(), epsilon = 1e-15);
        assert!(orthonormality_error(&up) < 1e-15);
    }

    #[test]
    fn exp_matches_axis_rotation() {
        assert_relative_eq!(so3_exp(&Vec3::new(0.0, 0.0, 0.7)), rot_z(0.7), epsilon = 1e-14);
        assert_relative_eq!(so3_exp(&Vec3::new(0.0, -0.2, 0.0)), rot_y(-0.2), epsilon = 1e-14);
    }

    #[test]
    fn projection_restores_rotation() {
        let r = yaw_pitch_rotation(0.4, 0.2);
        let noisy = r + Mat3::from_element(1e-4);
        let p = project_to_so3(&noisy);
        assert!(orthonormality_error(&p) < 1e-14);
        assert_relative_eq!(p.determinant(), 1.0, epsilon = 1e-14);
        assert!((p - r).norm() < 1e-3);
    }

    #[test]
    fn wrap() {
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(0.1), 0.1);
    }

    #[test]
    fn quintic_endpoints() {
        assert_eq!(quintic_blend(0.0), (0.0, 0.0, 0.0));
        assert_eq!(quintic_blend(1.0), (1.0, 0.0, 0.0));
        let (s, ds, dds) = quintic_blend(0.5);
        assert_relative_eq!(s, 0.5);
        assert_relative_eq!(ds, 1.875);
        assert_relative_eq!(dds, 0.0);
    }
}
