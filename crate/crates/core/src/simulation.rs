//! Rigid-body plant, motor model, fixed-step integration and the closed-loop runner.

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3};
#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::actuation::ActuationAnalysis;
use crate::control::{nominal_desired_attitude, ControlError, Controller, ControllerGains, Setpoint};
use crate::geometry::{self, RotationMatrix, Vector3};
use crate::trajectories::{reference_setpoint, Reference};
use crate::vehicle::StructureModel;
use crate::GRAVITY;

/// Largest integration step accepted by [`step`] (s).
pub const MAX_DT: f64 = 0.01;
/// Position norm beyond which a run is declared divergent (m).
pub const DIVERGENCE_RADIUS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// World position of the centre of mass (m).
    pub position: Vector3,
    /// World velocity (m/s).
    pub velocity: Vector3,
    /// `ᵂR_S`.
    pub attitude: RotationMatrix,
    /// Body rate in {S} (rad/s).
    pub angular_velocity: Vector3,
}

impl VehicleState {
    pub fn at_rest(position: Vector3, attitude: RotationMatrix) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude,
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.matrix().iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorModel {
    /// Per-rotor thrust limit (N).
    pub f_max: f64,
    /// First-order lag time constant (s); `None` for instantaneous thrust.
    pub time_constant: Option<f64>,
    /// Commands below this produce no thrust (N); `None` disables it.
    pub deadzone: Option<f64>,
}

impl MotorModel {
    pub fn ideal(f_max: f64) -> Self {
        Self {
            f_max,
            time_constant: None,
            deadzone: None,
        }
    }
}

impl Default for MotorModel {
    fn default() -> Self {
        Self::ideal(crate::vehicle::DEFAULT_F_MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotorOutput {
    pub thrust: DVector<f64>,
    /// Per-rotor flag: the command was outside `[0, f_max]`.
    pub saturated: Vec<bool>,
}

impl MotorOutput {
    pub fn any_saturated(&self) -> bool {
        self.saturated.iter().any(|&s| s)
    }
}

/// Clamp, deadzone and lag. `previous` is the thrust currently produced; it
/// only matters when a time constant is set.
pub fn motor_apply(u_cmd: &DVector<f64>, model: &MotorModel, dt: f64, previous: &DVector<f64>) -> MotorOutput {
    assert!(dt > 0.0, "motor update needs dt > 0");
    let saturated: Vec<bool> = u_cmd.iter().map(|&u| !(0.0..=model.f_max).contains(&u)).collect();
    let target = u_cmd.map(|u| {
        let c = u.clamp(0.0, model.f_max);
        match model.deadzone {
            Some(th) if c < th => 0.0,
            _ => c,
        }
    });
    let thrust = match model.time_constant {
        Some(tau) if tau > 0.0 => {
            let alpha = 1.0 - (-dt / tau).exp();
            previous + (target - previous) * alpha
        }
        _ => target,
    };
    MotorOutput { thrust, saturated }
}

/// Mass properties and design matrix needed to integrate the equations of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    mass: f64,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    design: DMatrix<f64>,
    gravity: f64,
}

impl Plant {
    pub fn new(structure: &StructureModel) -> Self {
        let inertia = *structure.inertia();
        Self {
            mass: structure.mass(),
            inertia,
            inertia_inv: inertia.try_inverse().expect("structure inertia is positive definite"),
            design: structure.design_matrix().clone(),
            gravity: GRAVITY,
        }
    }

    pub fn with_gravity(mut self, gravity: f64) -> Self {
        self.gravity = gravity;
        self
    }

    /// Body wrench `A u` split into force and torque, both in {S}.
    pub fn body_wrench(&self, u: &DVector<f64>) -> (Vector3, Vector3) {
        let w = &self.design * u;
        (Vector3::new(w[0], w[1], w[2]), Vector3::new(w[3], w[4], w[5]))
    }

    fn linear_accel(&self, attitude: &RotationMatrix, force: &Vector3) -> Vector3 {
        attitude * force / self.mass - Vector3::z() * self.gravity
    }

    fn angular_accel(&self, omega: &Vector3, torque: &Vector3) -> Vector3 {
        self.inertia_inv * (torque - omega.cross(&(self.inertia * omega)))
    }

    /// `(r̈, ω̇)` for the given thrusts.
    pub fn derivative(&self, state: &VehicleState, u: &DVector<f64>) -> (Vector3, Vector3) {
        let (force, torque) = self.body_wrench(u);
        (
            self.linear_accel(&state.attitude, &force),
            self.angular_accel(&state.angular_velocity, &torque),
        )
    }

    /// One RK4 step with thrust held constant. The attitude is integrated in
    /// exponential coordinates around the current rotation.
    pub fn step(&self, state: &VehicleState, u: &DVector<f64>, dt: f64) -> VehicleState {
        assert!(dt > 0.0 && dt <= MAX_DT, "integration step must lie in (0, {MAX_DT}] s");
        let (force, torque) = self.body_wrench(u);
        let r0 = state.attitude;

        // Stage variables: (position, velocity, rotation vector, body rate).
        let eval = |v: &Vector3, theta: &Vector3, omega: &Vector3| {
            let attitude = r0 * geometry::so3_exp(theta, 1.0);
            (
                *v,
                self.linear_accel(&attitude, &force),
                dexp_inv(theta, omega),
                self.angular_accel(omega, &torque),
            )
        };

        let (p0, v0, w0) = (state.position, state.velocity, state.angular_velocity);
        let t0 = Vector3::zeros();
        let k1 = eval(&v0, &t0, &w0);
        let h = 0.5 * dt;
        let k2 = eval(&(v0 + k1.1 * h), &(t0 + k1.2 * h), &(w0 + k1.3 * h));
        let k3 = eval(&(v0 + k2.1 * h), &(t0 + k2.2 * h), &(w0 + k2.3 * h));
        let k4 = eval(&(v0 + k3.1 * dt), &(t0 + k3.2 * dt), &(w0 + k3.3 * dt));
        let c = dt / 6.0;
        let position = p0 + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * c;
        let velocity = v0 + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * c;
        let theta = (k1.2 + k2.2 * 2.0 + k3.2 * 2.0 + k4.2) * c;
        let angular_velocity = w0 + (k1.3 + k2.3 * 2.0 + k3.3 * 2.0 + k4.3) * c;
        VehicleState {
            position,
            velocity,
            attitude: geometry::renormalize_if_drifted(r0 * geometry::so3_exp(&theta, 1.0)),
            angular_velocity,
        }
    }
}

/// Rotation-vector rate for body rate `ω`, series to second order in `θ`.
fn dexp_inv(theta: &Vector3, omega: &Vector3) -> Vector3 {
    let t_x_w = theta.cross(omega);
    omega + t_x_w * 0.5 + theta.cross(&t_x_w) / 12.0
}

/// `(r̈, ω̇)` from `w = A u` in {S}: `r̈ = ᵂR_S f / m − g ê₃`, `ω̇ = J⁻¹(τ − ω × Jω)`.
pub fn dynamics_derivative(
    state: &VehicleState,
    u_actual: &DVector<f64>,
    structure: &StructureModel,
) -> (Vector3, Vector3) {
    Plant::new(structure).derivative(state, u_actual)
}

/// Advance `state` by `dt ∈ (0, 0.01]` s with thrust `u_actual` held.
pub fn step(state: &VehicleState, u_actual: &DVector<f64>, structure: &StructureModel, dt: f64) -> VehicleState {
    Plant::new(structure).step(state, u_actual, dt)
}

/// One logged control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySample {
    pub t: f64,
    pub state: VehicleState,
    pub setpoint: Setpoint,
    /// `ᵂR_Fᵈ` as used by the controller at this tick.
    pub desired_attitude: RotationMatrix,
    pub u_commanded: DVector<f64>,
    pub u_actual: DVector<f64>,
    pub saturated: Vec<bool>,
}

impl TelemetrySample {
    pub fn any_saturated(&self) -> bool {
        self.saturated.iter().any(|&s| s)
    }

    /// `ᵂR_S ˢR_F`.
    pub fn f_attitude(&self, s_r_f: &RotationMatrix) -> RotationMatrix {
        self.state.attitude * s_r_f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    /// Control period (s); samples are spaced by exactly this.
    pub dt: f64,
    /// `ˢR_F` of the simulated structure.
    pub f_frame: RotationMatrix,
    pub samples: Vec<TelemetrySample>,
}

impl Telemetry {
    pub fn error_samples(&self) -> Vec<ErrorSample> {
        self.samples
            .iter()
            .map(|s| {
                ErrorSample::new(
                    s.t,
                    &s.setpoint.position,
                    &s.state.position,
                    &s.desired_attitude,
                    &s.f_attitude(&self.f_frame),
                    s.any_saturated(),
                )
            })
            .collect()
    }

    pub fn summary(&self, skip: f64) -> ErrorSummary {
        summarize(&self.error_samples(), skip, false)
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid timing: {0}")]
    InvalidTiming(&'static str),
    #[error("controller setup failed: {0}")]
    Setup(ControlError),
    #[error("state diverged at t = {time} s")]
    NonFiniteState { time: f64, telemetry: Box<Telemetry> },
    #[error("controller failed at t = {time} s: {source}")]
    ControlFailure {
        time: f64,
        source: ControlError,
        telemetry: Box<Telemetry>,
    },
}

impl SimulationError {
    /// Telemetry recorded before the run aborted, if any.
    pub fn partial_telemetry(&self) -> Option<&Telemetry> {
        match self {
            SimulationError::NonFiniteState { telemetry, .. } | SimulationError::ControlFailure { telemetry, .. } => {
                Some(telemetry)
            }
            _ => None,
        }
    }
}

/// Timing and actuator settings of one closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSettings {
    pub duration: f64,
    pub dt_ctrl: f64,
    pub dt_sim: f64,
    pub motor: MotorModel,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self {
            duration: 10.0,
            dt_ctrl: 0.002,
            dt_sim: 0.001,
            motor: MotorModel::default(),
        }
    }
}

impl ScenarioSettings {
    /// `(control ticks after t = 0, integration sub-steps per tick)`.
    pub fn schedule(&self) -> Result<(usize, usize), SimulationError> {
        if !(self.dt_sim > 0.0 && self.dt_sim <= MAX_DT) {
            return Err(SimulationError::InvalidTiming("dt_sim must lie in (0, 0.01] s"));
        }
        if !(self.dt_ctrl > 0.0) {
            return Err(SimulationError::InvalidTiming("dt_ctrl must be positive"));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(SimulationError::InvalidTiming("duration must be non-negative"));
        }
        let ratio = self.dt_ctrl / self.dt_sim;
        let substeps = ratio.round();
        if substeps < 1.0 || (ratio - substeps).abs() > 1e-9 * ratio {
            return Err(SimulationError::InvalidTiming(
                "dt_ctrl must be an integer multiple of dt_sim",
            ));
        }
        let ticks = (self.duration / self.dt_ctrl + 1e-9).floor();
        Ok((ticks as usize, substeps as usize))
    }

    pub fn validate_motor(&self) -> Result<(), SimulationError> {
        let m = &self.motor;
        if !(m.f_max > 0.0) || m.time_constant.is_some_and(|t| !(t > 0.0)) || m.deadzone.is_some_and(|d| !(d >= 0.0)) {
            return Err(SimulationError::InvalidTiming(
                "motor model parameters must be positive",
            ));
        }
        Ok(())
    }
}

/// State that matches the reference exactly: `ᵂR_S = ᵂR_Fᵈ ˢR_Fᵀ`.
pub fn initial_state(setpoint: &Setpoint, s_r_f: &RotationMatrix) -> Result<VehicleState, ControlError> {
    let r_fd = nominal_desired_attitude(setpoint)?;
    Ok(VehicleState {
        position: setpoint.position,
        velocity: setpoint.velocity,
        attitude: r_fd * s_r_f.inverse(),
        angular_velocity: s_r_f * setpoint.angular_velocity,
    })
}

fn diverged(state: &VehicleState) -> bool {
    !state.is_finite() || state.position.norm() > DIVERGENCE_RADIUS
}

/// Closed loop: sample → control → motors (held for the tick) → integrate.
/// One sample is logged per control tick, including `t = 0` and `t = duration`.
pub fn run_scenario(
    structure: &StructureModel,
    analysis: &ActuationAnalysis,
    gains: &ControllerGains,
    reference: &dyn Reference,
    settings: &ScenarioSettings,
) -> Result<Telemetry, SimulationError> {
    let (ticks, substeps) = settings.schedule()?;
    settings.validate_motor()?;
    let dof = analysis.controllable_dof();
    let plant = Plant::new(structure);
    let mut controller = Controller::new(*gains, analysis).map_err(SimulationError::Setup)?;
    let mut telemetry = Telemetry {
        dt: settings.dt_ctrl,
        f_frame: analysis.f_frame,
        samples: Vec::with_capacity(ticks + 1),
    };

    let sp0 = reference_setpoint(reference, 0.0, dof);
    let mut state = initial_state(&sp0, &analysis.f_frame).map_err(SimulationError::Setup)?;
    let mut actual: Option<DVector<f64>> = None;

    for k in 0..=ticks {
        let t = k as f64 * settings.dt_ctrl;
        let setpoint = reference_setpoint(reference, t, dof);
        let out = match controller.step(&state, &setpoint, structure, analysis, settings.dt_ctrl) {
            Ok(out) => out,
            Err(source) => {
                return Err(SimulationError::ControlFailure {
                    time: t,
                    source,
                    telemetry: Box::new(telemetry),
                })
            }
        };
        let previous = actual
            .take()
            .unwrap_or_else(|| out.thrust.map(|u| u.clamp(0.0, settings.motor.f_max)));
        let motors = motor_apply(&out.thrust, &settings.motor, settings.dt_ctrl, &previous);
        telemetry.samples.push(TelemetrySample {
            t,
            state,
            setpoint,
            desired_attitude: out.desired_attitude,
            u_commanded: out.thrust,
            u_actual: motors.thrust.clone(),
            saturated: motors.saturated,
        });
        if k == ticks {
            break;
        }
        for _ in 0..substeps {
            state = plant.step(&state, &motors.thrust, settings.dt_sim);
        }
        if diverged(&state) {
            let t_next = (k + 1) as f64 * settings.dt_ctrl;
            let last = telemetry.samples.last().expect("a sample was just logged").clone();
            telemetry.samples.push(TelemetrySample {
                t: t_next,
                state,
                setpoint: reference_setpoint(reference, t_next, dof),
                ..last
            });
            return Err(SimulationError::NonFiniteState {
                time: t_next,
                telemetry: Box::new(telemetry),
            });
        }
        actual = Some(motors.thrust);
    }
    Ok(telemetry)
}

/// Tracking errors at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    /// `r − rᵈ` (m).
    pub position: Vector3,
    /// Rotation vector of `ᵂR_Fᵈᵀ ᵂR_F` in degrees, per F-frame axis.
    pub attitude_deg: Vector3,
    pub saturated: bool,
}

impl ErrorSample {
    pub fn new(
        t: f64,
        desired_position: &Vector3,
        position: &Vector3,
        desired_attitude: &RotationMatrix,
        attitude: &RotationMatrix,
        saturated: bool,
    ) -> Self {
        let rel = desired_attitude.inverse() * attitude;
        Self {
            t,
            position: position - desired_position,
            attitude_deg: geometry::so3_log(&rel).map(f64::to_degrees),
            saturated,
        }
    }
}

/// Per-axis statistics over a post-transient window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub samples: usize,
    pub position_max: Vector3,
    pub position_rms: Vector3,
    pub attitude_max_deg: Vector3,
    pub attitude_rms_deg: Vector3,
    pub saturation_fraction: f64,
    pub diverged: bool,
}

/// Statistics over samples with `t ≥ skip`. Sample order does not matter.
pub fn summarize(samples: &[ErrorSample], skip: f64, diverged: bool) -> ErrorSummary {
    let mut position_max = Vector3::zeros();
    let mut attitude_max = Vector3::zeros();
    let mut position_sq = Vector3::zeros();
    let mut attitude_sq = Vector3::zeros();
    let mut saturated = 0usize;
    let mut n = 0usize;
    for s in samples.iter().filter(|s| s.t >= skip) {
        n += 1;
        position_max = position_max.sup(&s.position.abs());
        attitude_max = attitude_max.sup(&s.attitude_deg.abs());
        position_sq += s.position.component_mul(&s.position);
        attitude_sq += s.attitude_deg.component_mul(&s.attitude_deg);
        saturated += usize::from(s.saturated);
    }
    let rms = |sq: Vector3| {
        if n == 0 {
            Vector3::zeros()
        } else {
            (sq / n as f64).map(f64::sqrt)
        }
    };
    ErrorSummary {
        samples: n,
        position_max,
        position_rms: rms(position_sq),
        attitude_max_deg: attitude_max,
        attitude_rms_deg: rms(attitude_sq),
        saturation_fraction: if n == 0 { 0.0 } else { saturated as f64 / n as f64 },
        diverged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::analyze_structure;
    use crate::geometry::{is_rotation, rot_principal, Axis};
    use crate::trajectories::Hover;
    use crate::vehicle::{make_r_module, make_t_module, single_module, ModuleParams, DEFAULT_F_MAX};
    use approx::assert_relative_eq;

    fn quad() -> StructureModel {
        single_module(make_r_module(RotationMatrix::identity(), ModuleParams::default()).unwrap()).unwrap()
    }

    #[test]
    fn motor_clamps_and_flags() {
        let m = MotorModel::ideal(0.645);
        let cmd = DVector::from_vec(alloc::vec![-0.1, 1.29, 0.3]);
        let out = motor_apply(&cmd, &m, 0.001, &DVector::zeros(3));
        assert_eq!(out.thrust.as_slice(), &[0.0, 0.645, 0.3]);
        assert_eq!(out.saturated, alloc::vec![true, true, false]);
    }

    #[test]
    fn motor_deadzone_and_lag() {
        let m = MotorModel {
            f_max: 1.0,
            time_constant: Some(0.05),
            deadzone: Some(0.1),
        };
        let cmd = DVector::from_vec(alloc::vec![0.05, 0.5]);
        let out = motor_apply(&cmd, &m, 0.05, &DVector::from_vec(alloc::vec![0.2, 0.0]));
        let alpha = 1.0 - (-1.0f64).exp();
        assert_relative_eq!(out.thrust[0], 0.2 * (1.0 - alpha), epsilon = 1e-15);
        assert_relative_eq!(out.thrust[1], 0.5 * alpha, epsilon = 1e-15);
        assert!(!out.any_saturated());
    }

    #[test]
    fn free_fall_derivative() {
        let s = quad();
        let state = VehicleState::at_rest(Vector3::zeros(), RotationMatrix::identity());
        let (acc, alpha) = dynamics_derivative(&state, &DVector::zeros(4), &s);
        assert_eq!(acc, Vector3::new(0.0, 0.0, -GRAVITY));
        assert_eq!(alpha, Vector3::zeros());
    }

    #[test]
    fn hover_derivative_is_zero() {
        let s = quad();
        let state = VehicleState::at_rest(Vector3::zeros(), RotationMatrix::identity());
        let u = DVector::from_element(4, s.mass() * GRAVITY / 4.0);
        let (acc, alpha) = dynamics_derivative(&state, &u, &s);
        assert!(acc.norm() < 1e-12 && alpha.norm() < 1e-12);
    }

    #[test]
    fn yaw_torque_spins_about_z() {
        let s = quad();
        let state = VehicleState::at_rest(Vector3::zeros(), RotationMatrix::identity());
        // Rotors 1 and 3 spin positive: equal pair thrust gives pure yaw torque.
        let u = DVector::from_vec(alloc::vec![1.0, 0.0, 1.0, 0.0]);
        let (_, alpha) = dynamics_derivative(&state, &u, &s);
        let tau_z = 2.0 * crate::vehicle::DEFAULT_DRAG_RATIO;
        assert_relative_eq!(
            alpha,
            Vector3::new(0.0, 0.0, tau_z / s.inertia()[(2, 2)]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn free_fall_one_second() {
        let s = quad();
        let plant = Plant::new(&s);
        let mut state = VehicleState::at_rest(Vector3::zeros(), RotationMatrix::identity());
        let u = DVector::zeros(4);
        for _ in 0..1000 {
            state = plant.step(&state, &u, 0.001);
        }
        assert!((state.position.z + 4.905).abs() < 1e-6);
        assert_eq!(state.attitude, RotationMatrix::identity());
    }

    #[test]
    fn hover_is_preserved() {
        let s = single_module(make_t_module(0.5, ModuleParams::default()).unwrap()).unwrap();
        let analysis = analyze_structure(&s, DEFAULT_F_MAX).unwrap();
        let w = nalgebra::Vector6::new(0.0, 0.0, s.mass() * GRAVITY, 0.0, 0.0, 0.0);
        let u = analysis.allocator().allocate(&w);
        let state = VehicleState::at_rest(Vector3::new(1.0, 2.0, 3.0), RotationMatrix::identity());
        let next = step(&state, &u, &s, 0.001);
        assert!((next.position - state.position).norm() < 1e-9);
        assert!((next.velocity).norm() < 1e-9);
        assert!((next.angular_velocity).norm() < 1e-9);
        assert!((next.attitude.matrix() - state.attitude.matrix()).norm() < 1e-9);
    }

    #[test]
    fn spin_up_matches_closed_form() {
        let s = quad();
        let plant = Plant::new(&s).with_gravity(0.0);
        let u = DVector::from_vec(alloc::vec![1.0, 0.0, 1.0, 0.0]);
        let (_, torque) = plant.body_wrench(&u);
        let mut state = VehicleState::at_rest(Vector3::zeros(), RotationMatrix::identity());
        for _ in 0..1000 {
            state = plant.step(&state, &u, 0.001);
        }
        let expected = torque.z / s.inertia()[(2, 2)];
        assert!((state.angular_velocity.z - expected).abs() < 1e-6);
        assert!(is_rotation(state.attitude.matrix(), 1e-9));
    }

    #[test]
    #[should_panic]
    fn step_rejects_large_dt() {
        let s = quad();
        step(
            &VehicleState::at_rest(Vector3::zeros(), RotationMatrix::identity()),
            &DVector::zeros(4),
            &s,
            0.02,
        );
    }

    #[test]
    fn schedule_validation() {
        let mut st = ScenarioSettings::default();
        assert_eq!(st.schedule().unwrap(), (5000, 2));
        st.dt_ctrl = 0.0025;
        assert!(st.schedule().is_err());
        st.dt_ctrl = 0.002;
        st.duration = 0.0;
        assert_eq!(st.schedule().unwrap(), (0, 2));
    }

    #[test]
    fn zero_duration_gives_one_sample() {
        let s = quad();
        let analysis = analyze_structure(&s, DEFAULT_F_MAX).unwrap();
        let hover = Hover::new(Vector3::new(0.0, 0.0, 1.0));
        let settings = ScenarioSettings {
            duration: 0.0,
            ..ScenarioSettings::default()
        };
        let tel = run_scenario(&s, &analysis, &ControllerGains::default(), &hover, &settings).unwrap();
        assert_eq!(tel.samples.len(), 1);
        assert_eq!(tel.samples[0].t, 0.0);
    }

    #[test]
    fn hover_run_stays_put() {
        let r_star = rot_principal(Axis::Y, 0.2);
        let s = single_module(make_r_module(r_star, ModuleParams::default()).unwrap()).unwrap();
        let analysis = analyze_structure(&s, DEFAULT_F_MAX).unwrap();
        let hover = Hover::new(Vector3::new(0.0, 0.0, 1.0));
        let settings = ScenarioSettings {
            duration: 1.0,
            ..ScenarioSettings::default()
        };
        let tel = run_scenario(&s, &analysis, &ControllerGains::default(), &hover, &settings).unwrap();
        assert_eq!(tel.samples.len(), 501);
        let last = tel.samples.last().unwrap();
        assert_relative_eq!(last.t, 1.0, epsilon = 1e-12);
        assert!((last.state.position - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
        assert_relative_eq!(
            *last.state.attitude.matrix(),
            *r_star.inverse().matrix(),
            epsilon = 1e-9
        );
        let summary = tel.summary(0.0);
        assert!(summary.position_max.norm() < 1e-9 && summary.attitude_max_deg.norm() < 1e-6);
    }

    #[test]
    fn weak_motors_diverge_with_partial_telemetry() {
        let s = quad();
        let analysis = analyze_structure(&s, DEFAULT_F_MAX).unwrap();
        let hover = Hover::new(Vector3::new(0.0, 0.0, 1.0));
        let settings = ScenarioSettings {
            duration: 10.0,
            motor: MotorModel::ideal(0.1),
            ..ScenarioSettings::default()
        };
        let err = run_scenario(&s, &analysis, &ControllerGains::default(), &hover, &settings).unwrap_err();
        let tel = err.partial_telemetry().expect("partial telemetry");
        assert!(matches!(err, SimulationError::NonFiniteState { .. }));
        assert!(tel.samples.last().unwrap().state.position.norm() > DIVERGENCE_RADIUS);
        assert!(tel.samples.iter().all(|s| s.any_saturated()));
    }

    #[test]
    fn summary_statistics() {
        let samples: Vec<ErrorSample> = (0..10)
            .map(|k| ErrorSample {
                t: k as f64,
                position: Vector3::new(0.03, if k < 5 { 1.0 } else { 0.0 }, 0.0),
                attitude_deg: Vector3::zeros(),
                saturated: k % 2 == 0,
            })
            .collect();
        let s = summarize(&samples, 5.0, false);
        assert_eq!(s.samples, 5);
        assert_relative_eq!(s.position_max.x, 0.03);
        assert_relative_eq!(s.position_rms.x, 0.03, epsilon = 1e-15);
        assert_eq!(s.position_max.y, 0.0);
        assert_relative_eq!(s.saturation_fraction, 0.4);
    }
}
