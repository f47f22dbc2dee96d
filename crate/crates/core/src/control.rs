//! Geometric tracking controller for 4-, 5- and 6-DOF structures.
//!
//! The position loop produces a desired acceleration `a_r`; the attitude loop
//! tracks the F-frame. The resulting wrench is expressed in {F} and handed to
//! the allocator built from `A_F`.

use nalgebra::{DVector, Matrix3, Vector6};
#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::actuation::{ActuationAnalysis, Allocator};
use crate::geometry::{self, vee_skew_part, Axis, RotationMatrix, Vector3};
use crate::simulation::VehicleState;
use crate::vehicle::StructureModel;
use crate::GRAVITY;

/// Threshold on `‖a_r‖` and on cross-product norms in the attitude constructors.
pub const DEGENERACY_EPS: f64 = 1e-6;
/// Anti-windup clamp on each component of the position integral (m·s).
pub const INTEGRAL_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("commanded acceleration is too small to define a thrust direction")]
    DegenerateThrust,
    #[error("heading reference is parallel to the thrust direction")]
    GimbalDegenerate,
    #[error("setpoint is for {got} DOF but the structure has {expected}")]
    ModeMismatch { expected: usize, got: usize },
    #[error("invalid gains: {0}")]
    InvalidGains(&'static str),
}

/// Diagonal gains, stored as their diagonals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub k_r: Vector3,
    pub k_v: Vector3,
    pub k_rot: Vector3,
    pub k_omega: Vector3,
    /// Position integral gain; zero disables the integrator.
    pub k_i: Vector3,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_r: Vector3::repeat(6.0),
            k_v: Vector3::repeat(4.0),
            k_rot: Vector3::repeat(10.0),
            k_omega: Vector3::repeat(2.0),
            k_i: Vector3::zeros(),
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let positive = |v: &Vector3| v.iter().all(|&k| k > 0.0 && k.is_finite());
        if !(positive(&self.k_r) && positive(&self.k_v) && positive(&self.k_rot) && positive(&self.k_omega)) {
            return Err(ControlError::InvalidGains("K_r, K_v, K_R and K_omega must be positive"));
        }
        if !self.k_i.iter().all(|&k| k >= 0.0 && k.is_finite()) {
            return Err(ControlError::InvalidGains("K_i must be non-negative"));
        }
        Ok(())
    }
}

/// Attitude part of a setpoint; the variant fixes the DOF it is meant for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttitudeTarget {
    /// 4 DOF: heading `ψᵈ`.
    Yaw(f64),
    /// 5 DOF: heading `ψᵈ` and F-frame pitch `θᵈ`.
    YawPitch { yaw: f64, pitch: f64 },
    /// 6 DOF: full `ᵂR_Fᵈ`.
    Full(RotationMatrix),
}

impl AttitudeTarget {
    pub fn dof(&self) -> usize {
        match self {
            AttitudeTarget::Yaw(_) => 4,
            AttitudeTarget::YawPitch { .. } => 5,
            AttitudeTarget::Full(_) => 6,
        }
    }

    /// `ᵂR_Fᵈ` this target describes when the thrust is vertical.
    pub fn nominal_rotation(&self) -> RotationMatrix {
        match *self {
            AttitudeTarget::Yaw(yaw) => geometry::rot_principal(Axis::Z, yaw),
            AttitudeTarget::YawPitch { yaw, pitch } => {
                geometry::rot_principal(Axis::Z, yaw) * geometry::rot_principal(Axis::Y, pitch)
            }
            AttitudeTarget::Full(r) => r,
        }
    }

    /// Re-express for a structure with `dof` controllable DOF, dropping or
    /// zero-filling angles as needed.
    pub fn coerce(self, dof: usize) -> Self {
        let (yaw, pitch, _) = geometry::yaw_pitch_roll(&self.nominal_rotation());
        match (self, dof) {
            (AttitudeTarget::Yaw(_), 4) | (AttitudeTarget::YawPitch { .. }, 5) | (AttitudeTarget::Full(_), 6) => self,
            (_, 4) => AttitudeTarget::Yaw(yaw),
            (_, 5) => AttitudeTarget::YawPitch { yaw, pitch },
            _ => AttitudeTarget::Full(self.nominal_rotation()),
        }
    }
}

/// Reference at one instant. `angular_velocity` is `ωᵈ` in the desired F-frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub position: Vector3,
    pub velocity: Vector3,
    pub acceleration: Vector3,
    pub attitude: AttitudeTarget,
    pub angular_velocity: Vector3,
}

impl Setpoint {
    pub fn hover(position: Vector3, attitude: AttitudeTarget) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            attitude,
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn coerce(mut self, dof: usize) -> Self {
        self.attitude = self.attitude.coerce(dof);
        self
    }
}

/// Force and torque in {F}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3,
    pub torque: Vector3,
}

impl Wrench {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }
}

/// `a_r = K_r e_r + K_v e_v + g ê₃ + r̈ᵈ`.
pub fn position_accel(e_r: &Vector3, e_v: &Vector3, acc_d: &Vector3, gains: &ControllerGains) -> Vector3 {
    gains.k_r.component_mul(e_r) + gains.k_v.component_mul(e_v) + Vector3::z() * GRAVITY + acc_d
}

fn unit_thrust(a_r: &Vector3) -> Result<Vector3, ControlError> {
    let n = a_r.norm();
    if !(n > DEGENERACY_EPS) {
        return Err(ControlError::DegenerateThrust);
    }
    Ok(a_r / n)
}

/// Thrust along `a_r`, heading from `ψᵈ`.
pub fn desired_attitude_4dof(a_r: &Vector3, yaw: f64) -> Result<RotationMatrix, ControlError> {
    let z = unit_thrust(a_r)?;
    let x_c = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let y_raw = z.cross(&x_c);
    let n = y_raw.norm();
    if !(n > DEGENERACY_EPS) {
        return Err(ControlError::GimbalDegenerate);
    }
    let y = y_raw / n;
    let x = y.cross(&z);
    Ok(RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])))
}

/// `x̂ᵈ = Rot(z, ψᵈ) Rot(y, θᵈ) ê₁`, thrust projected onto the plane ⟂ `ŷᵈ`.
pub fn desired_attitude_5dof(a_r: &Vector3, yaw: f64, pitch: f64) -> Result<RotationMatrix, ControlError> {
    let z_c = unit_thrust(a_r)?;
    let x = geometry::rot_principal(Axis::Z, yaw) * (geometry::rot_principal(Axis::Y, pitch) * Vector3::x());
    let y_raw = z_c.cross(&x);
    let n = y_raw.norm();
    if !(n > DEGENERACY_EPS) {
        return Err(ControlError::GimbalDegenerate);
    }
    let y = y_raw / n;
    let z = x.cross(&y);
    Ok(RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])))
}

/// `e_R = ½(R_dᵀ R_F − R_Fᵀ R_d)∨` and `e_ω = ω − R_Fᵀ R_d ωᵈ` with `R_F = ᵂR_S ˢR_F`.
pub fn attitude_error(
    w_r_fd: &RotationMatrix,
    w_r_s: &RotationMatrix,
    s_r_f: &RotationMatrix,
    omega: &Vector3,
    omega_d: &Vector3,
) -> (Vector3, Vector3) {
    let w_r_f = w_r_s * s_r_f;
    let rel = w_r_fd.matrix().transpose() * w_r_f.matrix();
    let e_rot = vee_skew_part(&rel);
    let e_omega = omega - w_r_f.matrix().transpose() * (w_r_fd.matrix() * omega_d);
    (e_rot, e_omega)
}

/// `a_R = −K_R e_R − K_ω e_ω`.
pub fn attitude_accel(e_rot: &Vector3, e_omega: &Vector3, gains: &ControllerGains) -> Vector3 {
    -gains.k_rot.component_mul(e_rot) - gains.k_omega.component_mul(e_omega)
}

/// `f = m ᵂR_Fᵀ a_r`, `τ = J a_R + ω × J ω`.
pub fn wrench(
    a_r: &Vector3,
    a_rot: &Vector3,
    w_r_f: &RotationMatrix,
    omega: &Vector3,
    mass: f64,
    inertia: &Matrix3<f64>,
) -> Wrench {
    Wrench {
        force: w_r_f.transpose() * a_r * mass,
        torque: inertia * a_rot + omega.cross(&(inertia * omega)),
    }
}

/// `ᵂR_Fᵈ` the setpoint asks for when tracking is perfect.
pub fn nominal_desired_attitude(setpoint: &Setpoint) -> Result<RotationMatrix, ControlError> {
    let a_r = setpoint.acceleration + Vector3::z() * GRAVITY;
    match setpoint.attitude {
        AttitudeTarget::Yaw(yaw) => desired_attitude_4dof(&a_r, yaw),
        AttitudeTarget::YawPitch { yaw, pitch } => desired_attitude_5dof(&a_r, yaw, pitch),
        AttitudeTarget::Full(r) => Ok(r),
    }
}

/// Intermediate quantities of one control evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Raw thrust commands before saturation (N).
    pub thrust: DVector<f64>,
    pub wrench: Wrench,
    pub accel: Vector3,
    pub desired_attitude: RotationMatrix,
    pub attitude_error: Vector3,
    pub rate_error: Vector3,
}

fn desired_attitude(a_r: &Vector3, target: &AttitudeTarget) -> Result<RotationMatrix, ControlError> {
    match *target {
        AttitudeTarget::Yaw(yaw) => desired_attitude_4dof(a_r, yaw),
        AttitudeTarget::YawPitch { yaw, pitch } => desired_attitude_5dof(a_r, yaw, pitch),
        AttitudeTarget::Full(r) => Ok(r),
    }
}

fn evaluate(
    state: &VehicleState,
    setpoint: &Setpoint,
    structure: &StructureModel,
    analysis: &ActuationAnalysis,
    allocator: &Allocator,
    gains: &ControllerGains,
    integral_accel: &Vector3,
) -> Result<ControlOutput, ControlError> {
    let dof = analysis.controllable_dof();
    if setpoint.attitude.dof() != dof {
        return Err(ControlError::ModeMismatch {
            expected: dof,
            got: setpoint.attitude.dof(),
        });
    }
    let e_r = setpoint.position - state.position;
    let e_v = setpoint.velocity - state.velocity;
    let a_r = position_accel(&e_r, &e_v, &setpoint.acceleration, gains) + integral_accel;
    let r_d = desired_attitude(&a_r, &setpoint.attitude)?;

    // The attitude loop runs in {F}: body rate and inertia are rotated there.
    let s_r_f = analysis.f_frame;
    let omega_f = s_r_f.transpose() * state.angular_velocity;
    let j_f = s_r_f.matrix().transpose() * structure.inertia() * s_r_f.matrix();
    let (e_rot, e_omega) = attitude_error(&r_d, &state.attitude, &s_r_f, &omega_f, &setpoint.angular_velocity);
    let a_rot = attitude_accel(&e_rot, &e_omega, gains);
    let w_r_f = state.attitude * s_r_f;
    let w = wrench(&a_r, &a_rot, &w_r_f, &omega_f, structure.mass(), &j_f);
    Ok(ControlOutput {
        thrust: allocator.allocate(&w.to_vector()),
        wrench: w,
        accel: a_r,
        desired_attitude: r_d,
        attitude_error: e_rot,
        rate_error: e_omega,
    })
}

/// Stateless controller evaluation (no integral action): raw thrusts `u`.
pub fn control_step(
    state: &VehicleState,
    setpoint: &Setpoint,
    structure: &StructureModel,
    analysis: &ActuationAnalysis,
    gains: &ControllerGains,
) -> Result<DVector<f64>, ControlError> {
    let allocator = analysis.allocator();
    evaluate(
        state,
        setpoint,
        structure,
        analysis,
        &allocator,
        gains,
        &Vector3::zeros(),
    )
    .map(|o| o.thrust)
}

/// Controller instance carrying the cached allocator and the position integral.
#[derive(Debug, Clone)]
pub struct Controller {
    gains: ControllerGains,
    allocator: Allocator,
    integral: Vector3,
}

impl Controller {
    pub fn new(gains: ControllerGains, analysis: &ActuationAnalysis) -> Result<Self, ControlError> {
        gains.validate()?;
        Ok(Self {
            gains,
            allocator: analysis.allocator(),
            integral: Vector3::zeros(),
        })
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn integral(&self) -> &Vector3 {
        &self.integral
    }

    /// Evaluate at one control tick of length `dt`, then advance the integral.
    pub fn step(
        &mut self,
        state: &VehicleState,
        setpoint: &Setpoint,
        structure: &StructureModel,
        analysis: &ActuationAnalysis,
        dt: f64,
    ) -> Result<ControlOutput, ControlError> {
        let integral_accel = self.gains.k_i.component_mul(&self.integral);
        let out = evaluate(
            state,
            setpoint,
            structure,
            analysis,
            &self.allocator,
            &self.gains,
            &integral_accel,
        )?;
        if self.gains.k_i != Vector3::zeros() {
            let e_r = setpoint.position - state.position;
            self.integral = (self.integral + e_r * dt).map(|v| v.clamp(-INTEGRAL_LIMIT, INTEGRAL_LIMIT));
        }
        Ok(out)
    }
}
