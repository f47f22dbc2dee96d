//! Rotation-group utilities shared by the rest of the crate.
//!
//! Rotations are kept as full 3×3 matrices ([`RotationMatrix`] is nalgebra's
//! `Rotation3`). Quaternions only appear at the telemetry boundary.

use core::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3};
#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use thiserror::Error;

pub type Vector3 = nalgebra::Vector3<f64>;
pub type RotationMatrix = Rotation3<f64>;

/// Tolerance on `‖S + Sᵀ‖_F` accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-9;
/// Tolerance on `‖axis‖ − 1` accepted by [`rodrigues`].
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Rotation angles below this are treated as the identity by [`so3_exp`].
pub const SMALL_ANGLE: f64 = 1e-12;
/// Drift in `‖RᵀR − I‖_F` above which integrated attitudes are re-projected.
pub const ORTHO_DRIFT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("matrix is not skew-symmetric: |S + S^T| = {0:e}")]
    NotSkewSymmetric(f64),
    #[error("rotation axis is not unit length: |axis| = {0}")]
    NonUnitAxis(f64),
}

/// Principal axis selector for [`rot_principal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3 {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

/// Skew-symmetric matrix with `hat(v) * w == v × w`.
#[rustfmt::skip]
pub fn hat(v: &Vector3) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z,  v.y,
        v.z,  0.0, -v.x,
       -v.y,  v.x,  0.0,
    )
}

/// Inverse of [`hat`]. Rejects matrices that are not skew-symmetric.
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3, GeometryError> {
    let asym = (s + s.transpose()).norm();
    if !(asym < SKEW_TOLERANCE) {
        return Err(GeometryError::NotSkewSymmetric(asym));
    }
    Ok(vee_skew_part(s))
}

/// `vee` of the skew-symmetric part `½(M − Mᵀ)`; always defined.
pub fn vee_skew_part(m: &Matrix3<f64>) -> Vector3 {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues' formula `I + sin θ P + (1 − cos θ) P²` with `P = hat(axis)`.
pub fn rodrigues(axis: &Vector3, angle: f64) -> Result<RotationMatrix, GeometryError> {
    let norm = axis.norm();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(GeometryError::NonUnitAxis(norm));
    }
    Ok(rodrigues_unchecked(axis, angle))
}

fn rodrigues_unchecked(axis: &Vector3, angle: f64) -> RotationMatrix {
    let p = hat(axis);
    let m = Matrix3::identity() + p * angle.sin() + p * p * (1.0 - angle.cos());
    Rotation3::from_matrix_unchecked(m)
}

/// Rotation about one of the coordinate axes.
pub fn rot_principal(axis: Axis, angle: f64) -> RotationMatrix {
    rodrigues_unchecked(&axis.unit(), angle)
}

/// Exponential map: the rotation reached by spinning at body rate `omega` for `dt`.
pub fn so3_exp(omega: &Vector3, dt: f64) -> RotationMatrix {
    let rate = omega.norm();
    let angle = rate * dt;
    if !(angle.abs() >= SMALL_ANGLE) {
        return RotationMatrix::identity();
    }
    rodrigues_unchecked(&(omega / rate), angle)
}

/// Logarithm map: rotation vector `θ·n` with `θ ∈ [0, π]`.
pub fn so3_log(r: &RotationMatrix) -> Vector3 {
    let m = r.matrix();
    let cos_angle = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos_angle.acos();
    let s = vee_skew_part(m);
    if angle < 1e-6 {
        // sin θ ≈ θ; first-order correction keeps the round trip at machine precision.
        return s * (1.0 + angle * angle / 6.0);
    }
    if angle < PI - 1e-6 {
        return s * (angle / angle.sin());
    }
    // Near π the skew part vanishes; recover the axis from the symmetric part.
    let b = (m + Matrix3::identity()) * 0.5;
    let (mut k, mut best) = (0, b[(0, 0)]);
    for i in 1..3 {
        if b[(i, i)] > best {
            k = i;
            best = b[(i, i)];
        }
    }
    let mut axis = b.column(k).into_owned() / best.max(1e-300).sqrt();
    axis.normalize_mut();
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    axis * angle
}

/// Rotation angle of `r` in `[0, π]`.
pub fn rotation_angle(r: &RotationMatrix) -> f64 {
    ((r.matrix().trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

/// `‖RᵀR − I‖_F`.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// True when `m` is orthonormal with determinant +1, both within `tol`.
pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    orthonormality_error(m) < tol && (m.determinant() - 1.0).abs() < tol
}

/// Closest rotation in the Frobenius sense (polar decomposition via SVD).
pub fn project_to_so3(m: &Matrix3<f64>) -> RotationMatrix {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut flip = Matrix3::identity();
        flip[(2, 2)] = -1.0;
        r = u * flip * v_t;
    }
    Rotation3::from_matrix_unchecked(r)
}

/// Re-orthonormalize only when drift exceeds [`ORTHO_DRIFT`].
pub fn renormalize_if_drifted(r: RotationMatrix) -> RotationMatrix {
    if orthonormality_error(r.matrix()) > ORTHO_DRIFT {
        project_to_so3(r.matrix())
    } else {
        r
    }
}

/// Z-Y-X Euler angles `(yaw, pitch, roll)` with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn yaw_pitch_roll(r: &RotationMatrix) -> (f64, f64, f64) {
    let m = r.matrix();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    (yaw, pitch, roll)
}

/// `Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> RotationMatrix {
    rot_principal(Axis::Z, yaw) * rot_principal(Axis::Y, pitch) * rot_principal(Axis::X, roll)
}

/// Wrap an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    } else if w <= -PI {
        w += 2.0 * PI;
    }
    w
}
