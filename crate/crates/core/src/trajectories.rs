//! Reference generators: hover, helix, rectangle, attitude sine and chained
//! rest-to-rest quintics.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::{Matrix6, Vector6};
#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::control::{nominal_desired_attitude, AttitudeTarget, Setpoint};
use crate::geometry::{self, RotationMatrix, Vector3};

/// Half-width of the central difference used for `ωᵈ` when a generator has no
/// analytic rate (s).
pub const RATE_FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("invalid trajectory parameters: {0}")]
    InvalidParams(&'static str),
    #[error("t = {t} s is outside the segment [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("boundary-condition system is singular")]
    SingularSystem,
}

pub trait Reference {
    /// Reference at time `t ≥ 0`, in the generator's natural attitude mode.
    fn sample(&self, t: f64) -> Setpoint;

    /// True when [`Reference::sample`] fills `ωᵈ` itself.
    fn has_analytic_rate(&self) -> bool {
        false
    }
}

/// Sample `reference` for a structure with `dof` controllable DOF, filling
/// `ωᵈ` by central differences of the nominal desired attitude unless the
/// generator supplies it in that mode.
pub fn reference_setpoint(reference: &dyn Reference, t: f64, dof: usize) -> Setpoint {
    let raw = reference.sample(t);
    let native = raw.attitude.dof() == dof && reference.has_analytic_rate();
    let mut sp = raw.coerce(dof);
    if !native {
        let attitude_at = |tau: f64| {
            let s = reference.sample(tau).coerce(dof);
            nominal_desired_attitude(&s).unwrap_or_else(|_| s.attitude.nominal_rotation())
        };
        let h = RATE_FD_STEP;
        let rel = attitude_at(t - h).inverse() * attitude_at(t + h);
        sp.angular_velocity = geometry::so3_log(&rel) / (2.0 * h);
    }
    sp
}

/// Fixed pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hover {
    pub position: Vector3,
    pub attitude: AttitudeTarget,
}

impl Hover {
    pub fn new(position: Vector3) -> Self {
        Self {
            position,
            attitude: AttitudeTarget::Yaw(0.0),
        }
    }
}

impl Reference for Hover {
    fn sample(&self, _t: f64) -> Setpoint {
        Setpoint::hover(self.position, self.attitude)
    }

    fn has_analytic_rate(&self) -> bool {
        true
    }
}

/// Circle in xy, cosine in z starting at the bottom, linearly growing yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Helix {
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub z_period: f64,
    pub xy_period: f64,
    /// `None` holds the yaw at `yaw0`.
    pub yaw_period: Option<f64>,
    pub yaw0: f64,
}

impl Helix {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.radius >= 0.0 && self.z_max >= self.z_min) {
            return Err(TrajectoryError::InvalidParams(
                "helix needs radius >= 0 and z_max >= z_min",
            ));
        }
        if !(self.z_period > 0.0 && self.xy_period > 0.0 && self.yaw_period.map_or(true, |p| p > 0.0)) {
            return Err(TrajectoryError::InvalidParams("helix periods must be positive"));
        }
        Ok(())
    }

    pub fn yaw(&self, t: f64) -> f64 {
        match self.yaw_period {
            Some(p) => geometry::wrap_angle(self.yaw0 + TAU * t / p),
            None => self.yaw0,
        }
    }
}

impl Reference for Helix {
    fn sample(&self, t: f64) -> Setpoint {
        let w = TAU / self.xy_period;
        let (s, c) = (w * t).sin_cos();
        let wz = TAU / self.z_period;
        let (sz, cz) = (wz * t).sin_cos();
        let mid = 0.5 * (self.z_min + self.z_max);
        let amp = 0.5 * (self.z_max - self.z_min);
        let r = self.radius;
        Setpoint {
            position: Vector3::new(self.center[0] + r * c, self.center[1] + r * s, mid - amp * cz),
            velocity: Vector3::new(-r * w * s, r * w * c, amp * wz * sz),
            acceleration: Vector3::new(-r * w * w * c, -r * w * w * s, amp * wz * wz * cz),
            attitude: AttitudeTarget::Yaw(self.yaw(t)),
            angular_velocity: Vector3::zeros(),
        }
    }
}

/// Perimeter of an axis-aligned rectangle, one rest-to-rest quintic per edge,
/// with a held yaw/pitch target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub center: [f64; 2],
    /// Edge along x (m).
    pub length: f64,
    /// Edge along y (m).
    pub width: f64,
    pub height: f64,
    pub lap_time: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Rectangle {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.length > 0.0 && self.width > 0.0 && self.lap_time > 0.0) {
            return Err(TrajectoryError::InvalidParams(
                "rectangle needs positive length, width and lap time",
            ));
        }
        Ok(())
    }

    pub fn corners(&self) -> [Vector3; 4] {
        let (hx, hy) = (0.5 * self.length, 0.5 * self.width);
        let [cx, cy] = self.center;
        let z = self.height;
        [
            Vector3::new(cx - hx, cy - hy, z),
            Vector3::new(cx + hx, cy - hy, z),
            Vector3::new(cx + hx, cy + hy, z),
            Vector3::new(cx - hx, cy + hy, z),
        ]
    }

    /// Edge durations, proportional to edge length.
    pub fn edge_times(&self) -> [f64; 4] {
        let perimeter = 2.0 * (self.length + self.width);
        let tl = self.lap_time * self.length / perimeter;
        let tw = self.lap_time * self.width / perimeter;
        [tl, tw, tl, tw]
    }
}

impl Reference for Rectangle {
    fn sample(&self, t: f64) -> Setpoint {
        let corners = self.corners();
        let times = self.edge_times();
        let mut local = t - (t / self.lap_time).floor() * self.lap_time;
        let mut edge = 0;
        while edge < 3 && local >= times[edge] {
            local -= times[edge];
            edge += 1;
        }
        let local = local.min(times[edge]);
        let (a, b) = (corners[edge], corners[(edge + 1) % 4]);
        let (s, ds, dds) = smoothstep5(local / times[edge]);
        let d = b - a;
        let inv = 1.0 / times[edge];
        Setpoint {
            position: a + d * s,
            velocity: d * (ds * inv),
            acceleration: d * (dds * inv * inv),
            attitude: AttitudeTarget::YawPitch {
                yaw: self.yaw,
                pitch: self.pitch,
            },
            angular_velocity: Vector3::zeros(),
        }
    }
}

/// `s = 10τ³ − 15τ⁴ + 6τ⁵` and its first two derivatives in `τ`.
fn smoothstep5(tau: f64) -> (f64, f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    (
        t3 * (10.0 - 15.0 * tau + 6.0 * t2),
        30.0 * t2 * (1.0 - 2.0 * tau + t2),
        60.0 * tau * (1.0 - 3.0 * tau + 2.0 * t2),
    )
}

/// Hover at a point while rotating sinusoidally about a fixed world axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSine {
    /// Unit rotation axis.
    pub axis: Vector3,
    pub amplitude: f64,
    pub period: f64,
    pub hover_point: Vector3,
}

impl AttitudeSine {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.period > 0.0) {
            return Err(TrajectoryError::InvalidParams("attitude sine period must be positive"));
        }
        if !((self.axis.norm() - 1.0).abs() < geometry::UNIT_TOLERANCE) {
            return Err(TrajectoryError::InvalidParams(
                "attitude sine axis must be a unit vector",
            ));
        }
        Ok(())
    }

    pub fn angle(&self, t: f64) -> f64 {
        self.amplitude * (TAU * t / self.period).sin()
    }
}

impl Reference for AttitudeSine {
    fn sample(&self, t: f64) -> Setpoint {
        let w = TAU / self.period;
        let rate = self.amplitude * w * (w * t).cos();
        Setpoint {
            position: self.hover_point,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            attitude: AttitudeTarget::Full(
                geometry::rodrigues(&self.axis.normalize(), self.angle(t)).expect("unit axis"),
            ),
            // Rotation about a fixed axis: body rate equals the axis times the angle rate.
            angular_velocity: self.axis * rate,
        }
    }

    fn has_analytic_rate(&self) -> bool {
        true
    }
}

/// Position, velocity and acceleration of one coordinate at a segment end.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Boundary {
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
}

impl Boundary {
    pub fn rest(pos: f64) -> Self {
        Self {
            pos,
            vel: 0.0,
            acc: 0.0,
        }
    }
}

/// `p(t) = Σ c_k t^k` on `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quintic {
    pub coeffs: [f64; 6],
    pub duration: f64,
}

/// Solve the 6×6 boundary-condition system for one coordinate.
pub fn quintic_segment(b0: Boundary, b1: Boundary, duration: f64) -> Result<Quintic, TrajectoryError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(TrajectoryError::InvalidParams("segment duration must be positive"));
    }
    let t = duration;
    let mut m = Matrix6::zeros();
    // Rows: p(0), p'(0), p''(0), p(T), p'(T), p''(T).
    m[(0, 0)] = 1.0;
    m[(1, 1)] = 1.0;
    m[(2, 2)] = 2.0;
    for k in 0..6 {
        let kf = k as f64;
        m[(3, k)] = t.powi(k as i32);
        if k >= 1 {
            m[(4, k)] = kf * t.powi(k as i32 - 1);
        }
        if k >= 2 {
            m[(5, k)] = kf * (kf - 1.0) * t.powi(k as i32 - 2);
        }
    }
    let rhs = Vector6::new(b0.pos, b0.vel, b0.acc, b1.pos, b1.vel, b1.acc);
    let c = m.lu().solve(&rhs).ok_or(TrajectoryError::SingularSystem)?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(TrajectoryError::SingularSystem);
    }
    Ok(Quintic {
        coeffs: [c[0], c[1], c[2], c[3], c[4], c[5]],
        duration,
    })
}

impl Quintic {
    /// `(p, p', p'')` at `t ∈ [0, duration]`.
    pub fn eval(&self, t: f64) -> Result<Boundary, TrajectoryError> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(TrajectoryError::OutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> Boundary {
        let c = &self.coeffs;
        let (mut pos, mut vel, mut acc) = (0.0, 0.0, 0.0);
        for k in (0..6).rev() {
            pos = pos * t + c[k];
        }
        for k in (1..6).rev() {
            vel = vel * t + k as f64 * c[k];
        }
        for k in (2..6).rev() {
            acc = acc * t + (k * (k - 1)) as f64 * c[k];
        }
        Boundary { pos, vel, acc }
    }
}

/// Pose waypoint of a quintic chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Vector3,
    /// `ᵂR_Fᵈ` at the waypoint.
    pub attitude: RotationMatrix,
}

#[derive(Debug, Clone, PartialEq)]
struct ChainSegment {
    start: f64,
    /// x, y, z, then the rotation vector relative to `base`.
    axes: [Quintic; 6],
    base: RotationMatrix,
}

/// Rest-to-rest quintics through pose waypoints. The attitude of each segment
/// is interpolated along the rotation vector from the segment's start pose.
/// After the last waypoint the final pose is held.
#[derive(Debug, Clone, PartialEq)]
pub struct QuinticChain {
    waypoints: Vec<Waypoint>,
    durations: Vec<f64>,
    segments: Vec<ChainSegment>,
}

impl QuinticChain {
    pub fn new(waypoints: Vec<Waypoint>, durations: Vec<f64>) -> Result<Self, TrajectoryError> {
        if waypoints.len() < 2 {
            return Err(TrajectoryError::InvalidParams(
                "a quintic chain needs at least two waypoints",
            ));
        }
        if durations.len() != waypoints.len() - 1 {
            return Err(TrajectoryError::InvalidParams("need one duration per segment"));
        }
        let mut segments = Vec::with_capacity(durations.len());
        let mut start = 0.0;
        for (pair, &d) in waypoints.windows(2).zip(&durations) {
            let (w0, w1) = (&pair[0], &pair[1]);
            let phi = geometry::so3_log(&(w0.attitude.inverse() * w1.attitude));
            if phi.norm() > PI - 1e-6 {
                return Err(TrajectoryError::InvalidParams(
                    "consecutive waypoint attitudes differ by a half turn",
                ));
            }
            let ends = [
                (w0.position.x, w1.position.x),
                (w0.position.y, w1.position.y),
                (w0.position.z, w1.position.z),
                (0.0, phi.x),
                (0.0, phi.y),
                (0.0, phi.z),
            ];
            let mut axes = [Quintic {
                coeffs: [0.0; 6],
                duration: d,
            }; 6];
            for (k, (a, b)) in ends.into_iter().enumerate() {
                axes[k] = quintic_segment(Boundary::rest(a), Boundary::rest(b), d)?;
            }
            segments.push(ChainSegment {
                start,
                axes,
                base: w0.attitude,
            });
            start += d;
        }
        Ok(Self {
            waypoints,
            durations,
            segments,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }
}

/// Position and rotation-vector derivatives of one segment at local time `t`.
pub fn quintic_eval(axes: &[Quintic; 6], base: &RotationMatrix, t: f64) -> Result<Setpoint, TrajectoryError> {
    let mut b = [Boundary::default(); 6];
    for (k, q) in axes.iter().enumerate() {
        b[k] = q.eval(t)?;
    }
    let phi = Vector3::new(b[3].pos, b[4].pos, b[5].pos);
    // Rest-to-rest on every coordinate keeps φ on a fixed axis, so the body
    // rate of `base · exp(φ)` is φ̇.
    Ok(Setpoint {
        position: Vector3::new(b[0].pos, b[1].pos, b[2].pos),
        velocity: Vector3::new(b[0].vel, b[1].vel, b[2].vel),
        acceleration: Vector3::new(b[0].acc, b[1].acc, b[2].acc),
        attitude: AttitudeTarget::Full(base * geometry::so3_exp(&phi, 1.0)),
        angular_velocity: Vector3::new(b[3].vel, b[4].vel, b[5].vel),
    })
}

impl Reference for QuinticChain {
    fn sample(&self, t: f64) -> Setpoint {
        let last = self.segments.last().expect("chain has segments");
        if t >= last.start + last.axes[0].duration {
            let w = self.waypoints.last().expect("chain has waypoints");
            return Setpoint::hover(w.position, AttitudeTarget::Full(w.attitude));
        }
        let t = t.max(0.0);
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| t >= s.start)
            .unwrap_or(&self.segments[0]);
        let local = (t - seg.start).clamp(0.0, seg.axes[0].duration);
        quintic_eval(&seg.axes, &seg.base, local).expect("local time clamped into the segment")
    }

    fn has_analytic_rate(&self) -> bool {
        true
    }
}

/// Any of the supported generators.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryDef {
    Hover(Hover),
    Helix(Helix),
    Rectangle(Rectangle),
    AttitudeSine(AttitudeSine),
    QuinticChain(QuinticChain),
}

impl TrajectoryDef {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        match self {
            TrajectoryDef::Hover(_) | TrajectoryDef::QuinticChain(_) => Ok(()),
            TrajectoryDef::Helix(h) => h.validate(),
            TrajectoryDef::Rectangle(r) => r.validate(),
            TrajectoryDef::AttitudeSine(a) => a.validate(),
        }
    }

    fn inner(&self) -> &dyn Reference {
        match self {
            TrajectoryDef::Hover(h) => h,
            TrajectoryDef::Helix(h) => h,
            TrajectoryDef::Rectangle(r) => r,
            TrajectoryDef::AttitudeSine(a) => a,
            TrajectoryDef::QuinticChain(q) => q,
        }
    }
}

impl Reference for TrajectoryDef {
    fn sample(&self, t: f64) -> Setpoint {
        self.inner().sample(t)
    }

    fn has_analytic_rate(&self) -> bool {
        self.inner().has_analytic_rate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_principal, Axis};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn paper_helix() -> Helix {
        Helix {
            center: [-0.5, 0.0],
            radius: 0.45,
            z_min: 0.45,
            z_max: 0.95,
            z_period: 14.0,
            xy_period: 12.0,
            yaw_period: Some(18.0),
            yaw0: 0.0,
        }
    }

    fn rectangle(pitch: f64) -> Rectangle {
        Rectangle {
            center: [0.0, 0.0],
            length: 0.8,
            width: 0.6,
            height: 1.0,
            lap_time: 24.0,
            pitch,
            yaw: 0.0,
        }
    }

    fn sine() -> AttitudeSine {
        AttitudeSine {
            axis: Vector3::y(),
            amplitude: 20f64.to_radians(),
            period: 90.0,
            hover_point: Vector3::new(0.0, 0.0, 1.0),
        }
    }

    fn chain() -> QuinticChain {
        let wps = alloc::vec![
            Waypoint {
                position: Vector3::new(0.0, 0.0, 1.0),
                attitude: RotationMatrix::identity()
            },
            Waypoint {
                position: Vector3::new(0.5, 0.2, 1.2),
                attitude: geometry::from_yaw_pitch_roll(0.2, 0.1, -0.05)
            },
            Waypoint {
                position: Vector3::new(0.0, 0.4, 1.0),
                attitude: rot_principal(Axis::X, 0.08)
            },
        ];
        QuinticChain::new(wps, alloc::vec![4.0, 5.0]).unwrap()
    }

    #[test]
    fn helix_examples() {
        let h = paper_helix();
        assert_relative_eq!(h.sample(0.0).position, Vector3::new(-0.05, 0.0, 0.45), epsilon = 1e-15);
        assert_relative_eq!(h.sample(7.0).position.z, 0.95, epsilon = 1e-12);
        let yaw0 = match h.sample(0.0).attitude {
            AttitudeTarget::Yaw(y) => y,
            _ => unreachable!(),
        };
        let yaw18 = match h.sample(18.0).attitude {
            AttitudeTarget::Yaw(y) => y,
            _ => unreachable!(),
        };
        assert!(geometry::wrap_angle(yaw18 - yaw0).abs() < 1e-12);
    }

    #[test]
    fn rectangle_examples() {
        let r = rectangle(-5f64.to_radians());
        let sp = r.sample(0.0);
        assert_eq!(sp.position, r.corners()[0]);
        assert_eq!(
            sp.attitude,
            AttitudeTarget::YawPitch {
                yaw: 0.0,
                pitch: -5f64.to_radians()
            }
        );
        for t in [3.0, 9.5, 17.0] {
            assert_eq!(r.sample(t).attitude.dof(), 5);
        }
        assert!((r.sample(24.0).position - r.corners()[0]).norm() < 1e-9);
        // Each corner is reached at rest.
        let mut t = 0.0;
        for (k, dt) in r.edge_times().iter().enumerate() {
            t += dt;
            let sp = r.sample(t - 1e-12);
            assert!((sp.position - r.corners()[(k + 1) % 4]).norm() < 1e-9);
            assert!(sp.velocity.norm() < 1e-9);
        }
    }

    #[test]
    fn attitude_sine_examples() {
        let s = sine();
        let sp = s.sample(0.0);
        assert_eq!(sp.position, s.hover_point);
        match sp.attitude {
            AttitudeTarget::Full(r) => assert_relative_eq!(*r.matrix(), nalgebra::Matrix3::identity(), epsilon = 1e-15),
            _ => unreachable!(),
        }
        let pitch_at = |t: f64| match s.sample(t).attitude {
            AttitudeTarget::Full(r) => geometry::yaw_pitch_roll(&r).1,
            _ => unreachable!(),
        };
        assert_relative_eq!(pitch_at(22.5), 20f64.to_radians(), epsilon = 1e-12);
        assert!(pitch_at(45.0).abs() < 1e-12);
    }

    #[test]
    fn quintic_rest_to_rest_closed_form() {
        let q = quintic_segment(Boundary::rest(0.0), Boundary::rest(1.0), 1.0).unwrap();
        let expected = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
        for (c, e) in q.coeffs.iter().zip(expected) {
            assert_relative_eq!(*c, e, epsilon = 1e-10);
        }
        let q2 = quintic_segment(Boundary::rest(0.0), Boundary::rest(1.0), 2.0).unwrap();
        let mid = q2.eval(1.0).unwrap();
        assert_relative_eq!(mid.pos, 0.5, epsilon = 1e-12);
        assert_relative_eq!(mid.vel, 0.9375, epsilon = 1e-12);
    }

    #[test]
    fn quintic_degenerate_and_errors() {
        let b = Boundary {
            pos: 0.3,
            vel: 0.0,
            acc: 0.0,
        };
        let q = quintic_segment(b, b, 3.0).unwrap();
        for t in [0.0, 1.0, 2.5, 3.0] {
            assert_relative_eq!(q.eval(t).unwrap().pos, 0.3, epsilon = 1e-15);
        }
        assert!(matches!(q.eval(3.5), Err(TrajectoryError::OutOfRange { .. })));
        assert!(matches!(q.eval(-0.1), Err(TrajectoryError::OutOfRange { .. })));
        assert!(quintic_segment(b, b, 0.0).is_err());
    }

    #[test]
    fn quintic_midpoint_symmetry() {
        let q = quintic_segment(Boundary::rest(-2.0), Boundary::rest(5.0), 3.0).unwrap();
        assert_relative_eq!(q.eval(1.5).unwrap().pos, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn chain_hits_waypoints() {
        let c = chain();
        let mut t = 0.0;
        for (k, w) in c.waypoints().iter().enumerate() {
            let sp = c.sample(t);
            assert!((sp.position - w.position).norm() < 1e-9);
            assert!(sp.velocity.norm() < 1e-9 && sp.acceleration.norm() < 1e-9);
            match sp.attitude {
                AttitudeTarget::Full(r) => assert!((r.matrix() - w.attitude.matrix()).norm() < 1e-9),
                _ => unreachable!(),
            }
            if k < c.durations().len() {
                t += c.durations()[k];
            }
        }
        assert_eq!(c.sample(100.0).position, c.waypoints()[2].position);
        assert!(QuinticChain::new(alloc::vec![c.waypoints()[0]], alloc::vec![]).is_err());
    }

    #[test]
    fn finite_difference_rate_for_derived_modes() {
        // A 4-DOF structure on the rectangle banks while accelerating; the rate
        // must match differentiation of the nominal attitude.
        let r = rectangle(0.0);
        let sp = reference_setpoint(&r, 2.0, 4);
        assert!(sp.angular_velocity.norm() > 0.0);
        let sp6 = reference_setpoint(&r, 2.0, 6);
        assert_eq!(sp6.angular_velocity, Vector3::zeros());
        let s = sine();
        assert_eq!(
            reference_setpoint(&s, 3.0, 6).angular_velocity,
            s.sample(3.0).angular_velocity
        );
    }

    #[test]
    fn analytic_rates_match_differences() {
        let s = sine();
        let c = chain();
        let h = 1e-5;
        for (refr, t) in [
            (&s as &dyn Reference, 10.0),
            (&c as &dyn Reference, 2.3),
            (&c as &dyn Reference, 6.1),
        ] {
            let rot = |tau: f64| refr.sample(tau).attitude.nominal_rotation();
            let fd = geometry::so3_log(&(rot(t - h).inverse() * rot(t + h))) / (2.0 * h);
            let w = refr.sample(t).angular_velocity;
            assert!((fd - w).norm() < 1e-6 * (1.0 + w.norm()), "{fd} vs {w}");
        }
    }

    fn fd_consistent(r: &dyn Reference, t: f64) -> Result<(), TestCaseError> {
        let h = 1e-4;
        let (a, b, c) = (r.sample(t - h), r.sample(t), r.sample(t + h));
        let vel = (c.position - a.position) / (2.0 * h);
        let acc = (c.velocity - a.velocity) / (2.0 * h);
        let tol = |x: &Vector3| 1e-4 * x.norm().max(1e-2);
        prop_assert!(
            (vel - b.velocity).norm() < tol(&b.velocity),
            "vel {} vs {}",
            vel,
            b.velocity
        );
        prop_assert!(
            (acc - b.acceleration).norm() < tol(&b.acceleration),
            "acc {} vs {}",
            acc,
            b.acceleration
        );
        Ok(())
    }

    proptest! {
        #[test]
        fn generators_are_differentially_consistent(t in 0.01..60.0f64) {
            fd_consistent(&paper_helix(), t)?;
            fd_consistent(&sine(), t)?;
            // Keep clear of rectangle corners, where acceleration is only C⁰.
            let r = rectangle(0.0);
            let mut local = t % r.lap_time;
            let mut near_corner = local < 1e-3;
            for d in r.edge_times() {
                near_corner |= (local - d).abs() < 1e-3;
                local -= d;
            }
            if !near_corner {
                fd_consistent(&r, t)?;
            }
            let c = chain();
            let tc = t % c.total_duration();
            if (tc - 4.0).abs() > 1e-3 && tc > 1e-3 {
                fd_consistent(&c, tc)?;
            }
        }

        #[test]
        fn helix_stays_on_cylinder(t in 0.0..1000.0f64) {
            let h = paper_helix();
            let p = h.sample(t).position;
            let d = ((p.x - h.center[0]).powi(2) + (p.y - h.center[1]).powi(2)).sqrt();
            prop_assert!((d - h.radius).abs() < 1e-12);
        }

        #[test]
        fn quintic_boundaries_hold(
            p0 in -5.0..5.0f64, v0 in -2.0..2.0f64, a0 in -2.0..2.0f64,
            p1 in -5.0..5.0f64, v1 in -2.0..2.0f64, a1 in -2.0..2.0f64,
            dur in 0.2..20.0f64,
        ) {
            let b0 = Boundary { pos: p0, vel: v0, acc: a0 };
            let b1 = Boundary { pos: p1, vel: v1, acc: a1 };
            let q = quintic_segment(b0, b1, dur).unwrap();
            let (s, e) = (q.eval(0.0).unwrap(), q.eval(dur).unwrap());
            for (got, want) in [(s.pos, p0), (s.vel, v0), (s.acc, a0), (e.pos, p1), (e.vel, v1), (e.acc, a1)] {
                prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
            }
        }
    }
}
