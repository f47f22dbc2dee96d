//! Static analysis report printed by `modquad analyze`.

use std::fmt::{self, Write as _};

use modquad_core::actuation::{ActuationAnalysis, FrameResolution};
use modquad_core::geometry::{rotation_angle, so3_log, yaw_pitch_roll, RotationMatrix};
use modquad_core::vehicle::{check_torque_balance, ModuleKind, StructureModel, DEFAULT_BALANCE_TOL};
use modquad_core::GRAVITY;
use nalgebra::{DMatrix, Vector6};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ModuleBalance {
    pub index: usize,
    pub kind: &'static str,
    pub cell: [i32; 3],
    pub balanced: bool,
    pub residual_torque_nm: [f64; 3],
    /// Net thrust per unit rotor thrust.
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiAxis {
    /// Singular value of `A_f` (N per unit input norm).
    pub sigma: f64,
    /// Direction in {S}.
    pub axis: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct Applicability {
    pub applicable: bool,
    pub max_pair_angle_deg: f64,
    pub obtuse_pair: Option<[usize; 2]>,
    pub hover_residual_n: f64,
    pub hover_feasible: bool,
    pub ambiguous_sign: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub name: Option<String>,
    pub modules: Vec<ModuleBalance>,
    pub rotor_count: usize,
    pub mass_kg: f64,
    pub inertia_kg_m2: [[f64; 3]; 3],
    pub rank_a: usize,
    pub rank_af: usize,
    pub rank_atau: usize,
    pub k: usize,
    pub dof: usize,
    pub ellipsoid: Vec<SemiAxis>,
    /// `ˢR_F`, row-major.
    pub f_frame: [[f64; 3]; 3],
    /// `ˢR_F` as ZYX angles `[yaw, pitch, roll]` (deg).
    pub f_frame_ypr_deg: [f64; 3],
    pub f_frame_angle_deg: f64,
    pub f_frame_resolution: &'static str,
    pub dimensioning: Vec<Vec<f64>>,
    pub f_max_n: f64,
    /// Minimum-norm hover thrusts from the allocator (N); `None` when inapplicable.
    pub hover_thrust_n: Option<Vec<f64>>,
    pub applicability: Applicability,
}

fn rows3(m: &nalgebra::Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl AnalysisReport {
    pub fn new(name: Option<String>, structure: &StructureModel, analysis: &ActuationAnalysis, f_max: f64) -> Self {
        let modules = structure
            .modules()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let b = check_torque_balance(&m.module, DEFAULT_BALANCE_TOL);
                ModuleBalance {
                    index: i + 1,
                    kind: match m.module.kind {
                        ModuleKind::R => "R",
                        ModuleKind::T => "T",
                        ModuleKind::Custom => "custom",
                    },
                    cell: [m.cell.row, m.cell.col, m.cell.layer],
                    balanced: b.balanced,
                    residual_torque_nm: [b.residual_torque.x, b.residual_torque.y, b.residual_torque.z],
                    lambda: b.lambda,
                }
            })
            .collect();
        let frame = &analysis.frame;
        let ellipsoid = (0..3)
            .map(|k| {
                let c = frame.singular_vectors.column(k);
                SemiAxis {
                    sigma: frame.singular_values[k] * frame.sigma_max,
                    axis: [c[0], c[1], c[2]],
                }
            })
            .collect();
        let (yaw, pitch, roll) = yaw_pitch_roll(&analysis.f_frame);
        let app = &analysis.applicability;
        let hover = analysis.applicable.then(|| {
            let w = Vector6::new(0.0, 0.0, structure.mass() * GRAVITY, 0.0, 0.0, 0.0);
            analysis.allocator().allocate(&w).iter().copied().collect()
        });
        Self {
            name,
            modules,
            rotor_count: structure.rotor_count(),
            mass_kg: structure.mass(),
            inertia_kg_m2: rows3(structure.inertia()),
            rank_a: analysis.ranks.rank_a,
            rank_af: analysis.ranks.rank_af,
            rank_atau: analysis.ranks.rank_atau,
            k: analysis.ranks.dependent_rows,
            dof: analysis.controllable_dof(),
            ellipsoid,
            f_frame: rows3(analysis.f_frame.matrix()),
            f_frame_ypr_deg: [yaw, pitch, roll].map(f64::to_degrees),
            f_frame_angle_deg: rotation_angle(&analysis.f_frame).to_degrees(),
            f_frame_resolution: match frame.resolution {
                FrameResolution::RotorAligned => "rotor_aligned",
                FrameResolution::Unique => "unique",
                FrameResolution::TieResolved => "tie_resolved",
            },
            dimensioning: rows(&analysis.dimensioning),
            f_max_n: f_max,
            hover_thrust_n: hover,
            applicability: Applicability {
                applicable: analysis.applicable,
                max_pair_angle_deg: app.max_pair_angle.to_degrees(),
                obtuse_pair: app.obtuse_pair.map(|(i, j)| [i + 1, j + 1]),
                hover_residual_n: app.hover_residual,
                hover_feasible: app.hover_feasible,
                ambiguous_sign: app.ambiguous_sign,
            },
        }
    }

    pub fn applicable(&self) -> bool {
        self.applicability.applicable
    }

    pub fn f_frame_rotation(&self) -> RotationMatrix {
        let m = nalgebra::Matrix3::from_fn(|i, j| self.f_frame[i][j]);
        RotationMatrix::from_matrix_unchecked(m)
    }

    /// Why the design cannot fly, if it cannot.
    pub fn inapplicable_reason(&self) -> Option<String> {
        let a = &self.applicability;
        if a.applicable {
            return None;
        }
        let mut reasons = Vec::new();
        if let Some([i, j]) = a.obtuse_pair {
            reasons.push(format!("rotors {i} and {j} point more than 90 degrees apart"));
        }
        if a.ambiguous_sign {
            reasons.push("the maximum-thrust direction is perpendicular to the mean rotor thrust".to_string());
        }
        if !a.hover_feasible {
            reasons.push(format!(
                "no thrusts in [0, {:.4}] N hold the weight along the F-frame z-axis (residual {:.3e} N)",
                self.f_max_n, a.hover_residual_n
            ));
        }
        Some(reasons.join("; "))
    }
}

fn vec3(v: &[f64; 3]) -> String {
    format!("[{:>9.5}, {:>9.5}, {:>9.5}]", v[0], v[1], v[2])
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.name {
            writeln!(f, "structure: {name}")?;
        }
        writeln!(
            f,
            "modules: {}  rotors: {}  mass: {:.4} kg",
            self.modules.len(),
            self.rotor_count,
            self.mass_kg
        )?;
        writeln!(f, "\ntorque balance (unit thrust):")?;
        for m in &self.modules {
            writeln!(
                f,
                "  #{:<3} {:<6} cell {:?}  {}  |tau| = {:.2e} N m  lambda = {:.6}",
                m.index,
                m.kind,
                m.cell,
                if m.balanced { "balanced  " } else { "UNBALANCED" },
                nalgebra::Vector3::from(m.residual_torque_nm).norm(),
                m.lambda
            )?;
        }
        writeln!(
            f,
            "\nrank(A) = {}  rank(A_f) = {}  rank(A_tau) = {}  k = {}",
            self.rank_a, self.rank_af, self.rank_atau, self.k
        )?;
        writeln!(f, "controllable DOF: {}", self.dof)?;
        writeln!(f, "\nactuation ellipsoid (A_f semi-axes in S):")?;
        for (i, s) in self.ellipsoid.iter().enumerate() {
            writeln!(f, "  sigma_{} = {:.6}  axis {}", i + 1, s.sigma, vec3(&s.axis))?;
        }
        writeln!(f, "\nS_R_F ({}):", self.f_frame_resolution)?;
        for r in &self.f_frame {
            writeln!(f, "  {}", vec3(r))?;
        }
        let [y, p, r] = self.f_frame_ypr_deg;
        let log = so3_log(&self.f_frame_rotation()).map(f64::to_degrees);
        writeln!(
            f,
            "  yaw {y:.4} deg, pitch {p:.4} deg, roll {r:.4} deg (rotation vector {} deg)",
            vec3(&[log.x, log.y, log.z])
        )?;
        writeln!(f, "\ndimensioning matrix D:")?;
        for row in &self.dimensioning {
            let mut line = String::new();
            for v in row {
                let _ = write!(line, " {v:>2.0}");
            }
            writeln!(f, " {line}")?;
        }
        let a = &self.applicability;
        writeln!(f, "\napplicability: {}", if a.applicable { "yes" } else { "NO" })?;
        writeln!(f, "  largest angle between rotor axes: {:.2} deg", a.max_pair_angle_deg)?;
        writeln!(
            f,
            "  hover residual at f_max = {} N: {:.3e} N",
            self.f_max_n, a.hover_residual_n
        )?;
        if let Some(u) = &self.hover_thrust_n {
            let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            writeln!(f, "  hover allocation: {lo:.4} .. {hi:.4} N per rotor")?;
        }
        if let Some(reason) = self.inapplicable_reason() {
            writeln!(f, "  reason: {reason}")?;
        }
        Ok(())
    }
}
