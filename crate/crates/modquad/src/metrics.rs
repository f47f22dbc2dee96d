//! Tracking-error statistics over a post-transient window.
//!
//! The CSV stores only the yaw and pitch of `ᵂR_Fᵈ`. Given the config that
//! produced a file, [`Reconstruction`] replays the controller's attitude
//! command from the logged state, which makes file-based metrics identical to
//! the in-process ones. Without it, `ᵂR_Fᵈ = Rz(yaw_d) Ry(pitch_d)` and
//! `ˢR_F = I` are assumed.

use std::fmt;

use modquad_core::actuation::{analyze_structure, ActuationAnalysis};
use modquad_core::control::{
    desired_attitude_4dof, desired_attitude_5dof, position_accel, AttitudeTarget, ControllerGains, INTEGRAL_LIMIT,
};
use modquad_core::geometry::{rot_principal, Axis, RotationMatrix, Vector3};
use modquad_core::simulation::{summarize, ErrorSample, ErrorSummary, Telemetry, DIVERGENCE_RADIUS};
use modquad_core::trajectories::{reference_setpoint, TrajectoryDef};
use serde::Serialize;

use crate::config::{BuildError, StructureConfig};
use crate::telemetry::TelemetryRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeReference {
    /// Desired attitude replayed from the config, or taken from the run itself.
    Exact,
    /// Desired attitude rebuilt from `yaw_d`/`pitch_d` alone, with `ˢR_F = I`.
    YawPitchOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub skip_s: f64,
    pub samples: usize,
    pub position_max_m: [f64; 3],
    pub position_rms_m: [f64; 3],
    pub attitude_max_deg: [f64; 3],
    pub attitude_rms_deg: [f64; 3],
    pub saturation_fraction: f64,
    pub diverged: bool,
    pub attitude_reference: AttitudeReference,
}

impl MetricsReport {
    pub fn from_summary(summary: &ErrorSummary, skip_s: f64, attitude_reference: AttitudeReference) -> Self {
        let a = |v: Vector3| [v.x, v.y, v.z];
        Self {
            skip_s,
            samples: summary.samples,
            position_max_m: a(summary.position_max),
            position_rms_m: a(summary.position_rms),
            attitude_max_deg: a(summary.attitude_max_deg),
            attitude_rms_deg: a(summary.attitude_rms_deg),
            saturation_fraction: summary.saturation_fraction,
            diverged: summary.diverged,
            attitude_reference,
        }
    }

    /// Metrics of an in-memory run.
    pub fn from_telemetry(telemetry: &Telemetry, skip_s: f64, diverged: bool) -> Self {
        let samples: Vec<ErrorSample> = telemetry
            .error_samples()
            .into_iter()
            .zip(&telemetry.samples)
            .filter(|(_, s)| s.state.is_finite())
            .map(|(e, _)| e)
            .collect();
        Self::from_summary(&summarize(&samples, skip_s, diverged), skip_s, AttitudeReference::Exact)
    }

    pub fn position_max_norm_inf(&self) -> f64 {
        self.position_max_m.iter().fold(0.0, |m, v| m.max(*v))
    }

    /// Index of the axis with the largest maximum position error.
    pub fn worst_position_axis(&self) -> usize {
        (0..3).fold(0, |best, i| {
            if self.position_max_m[i] > self.position_max_m[best] {
                i
            } else {
                best
            }
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = |a: &[f64; 3], p: usize| format!("{:>10.p$} {:>10.p$} {:>10.p$}", a[0], a[1], a[2]);
        writeln!(f, "window: t >= {} s ({} samples)", self.skip_s, self.samples)?;
        writeln!(f, "{:<22} {:>10} {:>10} {:>10}", "", "x", "y", "z")?;
        writeln!(f, "{:<22} {}", "position max (m)", v(&self.position_max_m, 5))?;
        writeln!(f, "{:<22} {}", "position rms (m)", v(&self.position_rms_m, 5))?;
        writeln!(f, "{:<22} {}", "attitude max (deg)", v(&self.attitude_max_deg, 3))?;
        writeln!(f, "{:<22} {}", "attitude rms (deg)", v(&self.attitude_rms_deg, 3))?;
        writeln!(f, "saturation fraction: {:.4}", self.saturation_fraction)?;
        writeln!(f, "diverged: {}", self.diverged)?;
        if self.attitude_reference == AttitudeReference::YawPitchOnly {
            writeln!(f, "note: attitude errors assume zero desired roll and an identity F-frame; pass --config for exact values")?;
        }
        Ok(())
    }
}

/// What is needed to replay `ᵂR_Fᵈ` for every logged row.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub f_frame: RotationMatrix,
    pub dof: usize,
    pub gains: ControllerGains,
    pub trajectory: TrajectoryDef,
    pub dt_ctrl: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ReconstructionError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Actuation(#[from] modquad_core::actuation::ActuationError),
}

impl Reconstruction {
    pub fn new(analysis: &ActuationAnalysis, gains: ControllerGains, trajectory: TrajectoryDef, dt_ctrl: f64) -> Self {
        Self {
            f_frame: analysis.f_frame,
            dof: analysis.controllable_dof(),
            gains,
            trajectory,
            dt_ctrl,
        }
    }

    pub fn from_config(config: &StructureConfig) -> Result<Self, ReconstructionError> {
        let structure = config.build_structure()?;
        let analysis = analyze_structure(&structure, config.defaults.f_max_n)?;
        let settings = config.settings()?;
        Ok(Self::new(
            &analysis,
            config.gains.to_gains(),
            config.trajectory()?,
            settings.dt_ctrl,
        ))
    }

    /// `ᵂR_Fᵈ` the controller used at each row, in file order.
    pub fn desired_attitudes(&self, rows: &[TelemetryRow]) -> Vec<RotationMatrix> {
        let mut integral = Vector3::zeros();
        rows.iter()
            .map(|row| {
                let sp = reference_setpoint(&self.trajectory, row.t, self.dof);
                let e_r = sp.position - row.position;
                let e_v = sp.velocity - row.velocity;
                let a_r =
                    position_accel(&e_r, &e_v, &sp.acceleration, &self.gains) + self.gains.k_i.component_mul(&integral);
                if self.gains.k_i != Vector3::zeros() {
                    integral = (integral + e_r * self.dt_ctrl).map(|v| v.clamp(-INTEGRAL_LIMIT, INTEGRAL_LIMIT));
                }
                let fallback = || sp.attitude.nominal_rotation();
                match sp.attitude {
                    AttitudeTarget::Yaw(yaw) => desired_attitude_4dof(&a_r, yaw).unwrap_or_else(|_| fallback()),
                    AttitudeTarget::YawPitch { yaw, pitch } => {
                        desired_attitude_5dof(&a_r, yaw, pitch).unwrap_or_else(|_| fallback())
                    }
                    AttitudeTarget::Full(r) => r,
                }
            })
            .collect()
    }
}

fn row_diverged(row: &TelemetryRow) -> bool {
    !row.is_finite() || row.position.norm() > DIVERGENCE_RADIUS
}

/// Metrics of a telemetry file's rows.
pub fn compute(rows: &[TelemetryRow], skip_s: f64, reconstruction: Option<&Reconstruction>) -> MetricsReport {
    let (desired, f_frame, reference) = match reconstruction {
        Some(rec) => (rec.desired_attitudes(rows), rec.f_frame, AttitudeReference::Exact),
        None => (
            rows.iter()
                .map(|r| rot_principal(Axis::Z, r.yaw_d) * rot_principal(Axis::Y, r.pitch_d))
                .collect(),
            RotationMatrix::identity(),
            AttitudeReference::YawPitchOnly,
        ),
    };
    let samples: Vec<ErrorSample> = rows
        .iter()
        .zip(&desired)
        .filter(|(row, _)| row.is_finite())
        .map(|(row, rd)| {
            ErrorSample::new(
                row.t,
                &row.desired_position,
                &row.position,
                rd,
                &(row.attitude() * f_frame),
                row.saturated,
            )
        })
        .collect();
    let diverged = rows.iter().any(row_diverged);
    MetricsReport::from_summary(&summarize(&samples, skip_s, diverged), skip_s, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::quaternion_of;

    fn row(t: f64, x_err: f64) -> TelemetryRow {
        TelemetryRow {
            t,
            position: Vector3::new(x_err, 0.0, 1.0),
            velocity: Vector3::zeros(),
            quaternion: quaternion_of(&rot_principal(Axis::Z, 0.4)),
            angular_velocity: Vector3::zeros(),
            desired_position: Vector3::new(0.0, 0.0, 1.0),
            yaw_d: 0.4,
            pitch_d: 0.0,
            thrust: vec![0.3; 4],
            saturated: false,
        }
    }

    #[test]
    fn perfect_hover_has_zero_error() {
        let rows: Vec<_> = (0..100).map(|k| row(k as f64 * 0.1, 0.0)).collect();
        let m = compute(&rows, 5.0, None);
        assert_eq!(m.samples, 50);
        assert_eq!(m.position_max_m, [0.0; 3]);
        assert!(m.attitude_max_deg.iter().all(|&a| a < 1e-12));
        assert!(!m.diverged);
    }

    #[test]
    fn constant_offset_gives_equal_max_and_rms() {
        let rows: Vec<_> = (0..100).map(|k| row(k as f64 * 0.1, 0.03)).collect();
        let m = compute(&rows, 5.0, None);
        assert!((m.position_max_m[0] - 0.03).abs() < 1e-15);
        assert!((m.position_rms_m[0] - 0.03).abs() < 1e-15);
        assert_eq!(m.worst_position_axis(), 0);
    }

    #[test]
    fn window_excludes_transient() {
        let rows: Vec<_> = (0..100)
            .map(|k| row(k as f64 * 0.1, if k < 50 { 1.0 } else { 0.0 }))
            .collect();
        assert_eq!(compute(&rows, 5.0, None).position_max_m[0], 0.0);
        assert_eq!(compute(&rows, 0.0, None).position_max_m[0], 1.0);
    }

    #[test]
    fn nonfinite_row_marks_divergence() {
        let mut rows: Vec<_> = (0..10).map(|k| row(k as f64, 0.0)).collect();
        rows.push(TelemetryRow {
            position: Vector3::new(f64::NAN, 0.0, 0.0),
            ..row(10.0, 0.0)
        });
        let m = compute(&rows, 0.0, None);
        assert!(m.diverged);
        assert_eq!(m.samples, 10);
        assert!(m.position_max_m.iter().all(|v| v.is_finite()));
    }
}
