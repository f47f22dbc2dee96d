//! Telemetry CSV files.
//!
//! One row per control tick. Columns:
//! `t,rx,ry,rz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,rdx,rdy,rdz,yaw_d,pitch_d,u1..u4n,sat`.
//! `q` is the unit quaternion of `ᵂR_S` with `qw ≥ 0`, `w` the body rate in
//! {S}, `yaw_d`/`pitch_d` the ZYX angles of `ᵂR_Fᵈ` in radians, `u` the thrust
//! actually applied (N) and `sat` is 1 when any rotor was clipped that tick.
//! Floats use the shortest representation that parses back exactly.

use std::io::{Read, Write};

use modquad_core::geometry::{self, RotationMatrix, Vector3};
use modquad_core::simulation::Telemetry;
use nalgebra::{Quaternion, UnitQuaternion};

const FIXED_COLUMNS: [&str; 19] = [
    "t", "rx", "ry", "rz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "rdx", "rdy", "rdz", "yaw_d",
    "pitch_d",
];

#[derive(Debug, thiserror::Error)]
pub enum TelemetryError {
    #[error("malformed telemetry: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for TelemetryError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => TelemetryError::Io(io),
                _ => unreachable!(),
            }
        } else {
            TelemetryError::Malformed(e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRow {
    pub t: f64,
    pub position: Vector3,
    pub velocity: Vector3,
    /// `ᵂR_S` as `(w, x, y, z)` with `w ≥ 0`.
    pub quaternion: [f64; 4],
    pub angular_velocity: Vector3,
    pub desired_position: Vector3,
    pub yaw_d: f64,
    pub pitch_d: f64,
    pub thrust: Vec<f64>,
    pub saturated: bool,
}

impl TelemetryRow {
    pub fn attitude(&self) -> RotationMatrix {
        let [w, x, y, z] = self.quaternion;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)).to_rotation_matrix()
    }

    pub fn is_finite(&self) -> bool {
        let v = |a: &Vector3| a.iter().all(|x| x.is_finite());
        self.t.is_finite()
            && v(&self.position)
            && v(&self.velocity)
            && self.quaternion.iter().all(|x| x.is_finite())
            && v(&self.angular_velocity)
    }
}

/// Quaternion `(w, x, y, z)` of `r`, sign fixed so that `w ≥ 0`.
pub fn quaternion_of(r: &RotationMatrix) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(r);
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

pub fn header(rotors: usize) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|c| c.to_string())
        .chain((1..=rotors).map(|i| format!("u{i}")))
        .chain(std::iter::once("sat".to_string()))
        .collect()
}

pub fn rows(telemetry: &Telemetry) -> Vec<TelemetryRow> {
    telemetry
        .samples
        .iter()
        .map(|s| {
            let (yaw_d, pitch_d, _) = geometry::yaw_pitch_roll(&s.desired_attitude);
            TelemetryRow {
                t: s.t,
                position: s.state.position,
                velocity: s.state.velocity,
                quaternion: quaternion_of(&s.state.attitude),
                angular_velocity: s.state.angular_velocity,
                desired_position: s.setpoint.position,
                yaw_d,
                pitch_d,
                thrust: s.u_actual.iter().copied().collect(),
                saturated: s.any_saturated(),
            }
        })
        .collect()
}

pub fn write_rows<W: Write>(out: W, rotors: usize, rows: &[TelemetryRow]) -> Result<(), TelemetryError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(rotors))?;
    let mut record = Vec::with_capacity(FIXED_COLUMNS.len() + rotors + 1);
    for r in rows {
        if r.thrust.len() != rotors {
            return Err(TelemetryError::Malformed(format!(
                "row at t = {} has {} thrusts, expected {rotors}",
                r.t,
                r.thrust.len()
            )));
        }
        record.clear();
        record.push(r.t);
        record.extend(r.position.iter());
        record.extend(r.velocity.iter());
        record.extend(r.quaternion);
        record.extend(r.angular_velocity.iter());
        record.extend(r.desired_position.iter());
        record.push(r.yaw_d);
        record.push(r.pitch_d);
        record.extend(&r.thrust);
        let mut fields: Vec<String> = record.iter().map(f64::to_string).collect();
        fields.push(if r.saturated { "1" } else { "0" }.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_telemetry<W: Write>(out: W, telemetry: &Telemetry) -> Result<(), TelemetryError> {
    let rotors = telemetry.samples.first().map_or(0, |s| s.u_actual.len());
    write_rows(out, rotors, &rows(telemetry))
}

/// Parse a telemetry file. Rows need not be time-ordered.
pub fn read_rows<R: Read>(input: R) -> Result<Vec<TelemetryRow>, TelemetryError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let head = reader.headers()?.clone();
    let n = head.len();
    let rotor_cols = n.saturating_sub(FIXED_COLUMNS.len() + 1);
    if n < FIXED_COLUMNS.len() + 5 || rotor_cols % 4 != 0 {
        return Err(TelemetryError::Malformed(format!(
            "expected 19 + 4n + 1 columns, found {n}"
        )));
    }
    let expected = header(rotor_cols);
    if let Some((i, (got, want))) = head.iter().zip(&expected).enumerate().find(|(_, (g, w))| g != w) {
        return Err(TelemetryError::Malformed(format!(
            "column {} is `{got}`, expected `{want}`",
            i + 1
        )));
    }

    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let num = |i: usize| -> Result<f64, TelemetryError> {
            record[i].trim().parse::<f64>().map_err(|_| {
                TelemetryError::Malformed(format!(
                    "line {line}: `{}` in column {} is not a number",
                    &record[i], expected[i]
                ))
            })
        };
        let v3 = |i: usize| -> Result<Vector3, TelemetryError> { Ok(Vector3::new(num(i)?, num(i + 1)?, num(i + 2)?)) };
        let saturated = match record[n - 1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(TelemetryError::Malformed(format!(
                    "line {line}: sat must be 0 or 1, found `{other}`"
                )))
            }
        };
        let quaternion = [num(7)?, num(8)?, num(9)?, num(10)?];
        let qn = quaternion.iter().map(|x| x * x).sum::<f64>().sqrt();
        if qn.is_finite() && (qn - 1.0).abs() > 1e-6 {
            return Err(TelemetryError::Malformed(format!(
                "line {line}: quaternion norm {qn} is not 1"
            )));
        }
        out.push(TelemetryRow {
            t: num(0)?,
            position: v3(1)?,
            velocity: v3(4)?,
            quaternion,
            angular_velocity: v3(11)?,
            desired_position: v3(14)?,
            yaw_d: num(17)?,
            pitch_d: num(18)?,
            thrust: (19..19 + rotor_cols).map(num).collect::<Result<_, _>>()?,
            saturated,
        });
    }
    if out.is_empty() {
        return Err(TelemetryError::Malformed("no data rows".into()));
    }
    Ok(out)
}
