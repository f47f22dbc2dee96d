//! Actuation analysis: numerical ranks, controllable DOF, the F-frame, hover
//! applicability, the dimensioning matrix and pseudo-inverse allocation.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector6};
#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{RotationMatrix, Vector3};
use crate::lsq::{box_lsq, BoxLsqOptions, BoxLsqSolution};
use crate::vehicle::StructureModel;
use crate::GRAVITY;

/// A singular value counts toward rank iff `σ > RANK_TOL_REL · σ_max`.
pub const RANK_TOL_REL: f64 = 1e-8;
/// Normalized singular values closer than this are treated as equal.
pub const TIE_TOL_REL: f64 = 1e-6;
/// Slack on the right angle in the obtuse-pair test (rad).
pub const OBTUSE_TOL: f64 = 1e-6;
/// Hover residual accepted by the applicability check, relative to `m g`.
pub const HOVER_RESIDUAL_REL: f64 = 1e-6;
/// Iteration budget of the applicability hover check.
pub const HOVER_LSQ_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActuationError {
    #[error("torque rows have rank {rank_torque} < 3")]
    DegenerateStructure { rank_torque: usize },
    #[error("controllable DOF {0} is not one of 4, 5, 6")]
    InvalidDof(usize),
    #[error("inapplicable design: {0}")]
    InapplicableDesign(&'static str),
}

/// Number of singular values above `tol_rel · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol_rel: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if !(max > 0.0) {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol_rel * max).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSummary {
    pub rank_a: usize,
    pub rank_af: usize,
    pub rank_atau: usize,
    /// Rows of `A_f` that depend on rows of `A_τ`.
    pub dependent_rows: usize,
    pub controllable_dof: usize,
}

/// Ranks of `A`, `A_f`, `A_τ` and the controllable DOF `3 + rank(A_f) − k`.
pub fn analyze(a: &DMatrix<f64>, tol_rel: f64) -> Result<RankSummary, ActuationError> {
    assert_eq!(a.nrows(), 6, "design matrix must have 6 rows");
    let rank_a = numerical_rank(a, tol_rel);
    let rank_af = numerical_rank(&a.rows(0, 3).into_owned(), tol_rel);
    let rank_atau = numerical_rank(&a.rows(3, 3).into_owned(), tol_rel);
    if rank_atau < 3 {
        return Err(ActuationError::DegenerateStructure { rank_torque: rank_atau });
    }
    let dependent_rows = (rank_atau + rank_af).saturating_sub(rank_a);
    let controllable_dof = 3 + rank_af - dependent_rows;
    if !(4..=6).contains(&controllable_dof) {
        return Err(ActuationError::InvalidDof(controllable_dof));
    }
    Ok(RankSummary {
        rank_a,
        rank_af,
        rank_atau,
        dependent_rows,
        controllable_dof,
    })
}

/// How the F-frame axes were fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameResolution {
    /// `rank(A_f) = 1`: the frame of the first rotor.
    RotorAligned,
    /// Distinct singular values; axes follow the singular vectors.
    Unique,
    /// Equal singular values; the closest admissible frame to {S} was taken.
    TieResolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FFrame {
    pub rotation: RotationMatrix,
    /// Singular values of `A_f`, descending, divided by the largest.
    pub singular_values: [f64; 3],
    pub sigma_max: f64,
    /// Left singular vectors of `A_f` as columns, matching `singular_values`.
    pub singular_vectors: Matrix3<f64>,
    pub resolution: FrameResolution,
    /// `z_F` is perpendicular to the mean rotor thrust, so its sign is arbitrary.
    pub ambiguous_sign: bool,
}

/// Sorted SVD of `A_f`: singular values and left singular vectors, descending.
fn sorted_left_svd(a_f: &DMatrix<f64>) -> ([f64; 3], Matrix3<f64>) {
    let svd = a_f.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut sv = [0.0; 3];
    let mut vecs = Matrix3::zeros();
    for (k, &i) in order.iter().take(3).enumerate() {
        sv[k] = svd.singular_values[i];
        vecs.set_column(k, &u.column(i));
    }
    // A 3×m matrix with m < 3 leaves missing columns; complete right-handed.
    if order.len() < 3 {
        let c0: Vector3 = vecs.column(0).into_owned();
        let c1: Vector3 = if order.len() > 1 {
            vecs.column(1).into_owned()
        } else {
            any_perpendicular(&c0)
        };
        vecs.set_column(1, &c1);
        vecs.set_column(2, &c0.cross(&c1));
    }
    (sv, vecs)
}

fn any_perpendicular(v: &Vector3) -> Vector3 {
    let trial = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    (trial - v * v.dot(&trial)).normalize()
}

/// Flip `v` so its first non-negligible component along `refs` is positive.
fn orient(v: Vector3, refs: &[Vector3]) -> Vector3 {
    for r in refs {
        let d = v.dot(r);
        if d.abs() > 1e-9 {
            return if d > 0.0 { v } else { -v };
        }
    }
    v
}

/// F-frame from the force rows; fails only when `z_F` has no upward sign.
pub fn f_frame(a_f: &DMatrix<f64>, structure: &StructureModel) -> Result<FFrame, ActuationError> {
    let frame = f_frame_unchecked(a_f, structure);
    if frame.ambiguous_sign {
        return Err(ActuationError::InapplicableDesign(
            "maximum-thrust direction is perpendicular to the mean rotor thrust",
        ));
    }
    Ok(frame)
}

/// As [`f_frame`], but reports sign ambiguity through [`FFrame::ambiguous_sign`].
pub fn f_frame_unchecked(a_f: &DMatrix<f64>, structure: &StructureModel) -> FFrame {
    let (sv, vecs) = sorted_left_svd(a_f);
    let sigma_max = sv[0];
    let norm = if sigma_max > 0.0 {
        sv.map(|s| s / sigma_max)
    } else {
        [0.0; 3]
    };
    let rank = numerical_rank(a_f, RANK_TOL_REL);

    if rank <= 1 {
        let rotation = structure
            .rotors()
            .first()
            .map_or(RotationMatrix::identity(), |r| r.orientation);
        return FFrame {
            rotation,
            singular_values: norm,
            sigma_max,
            singular_vectors: vecs,
            resolution: FrameResolution::RotorAligned,
            ambiguous_sign: false,
        };
    }

    let mean_thrust = structure.summed_thrust_axis() / structure.rotor_count() as f64;
    let mut tie = false;

    let top_group = norm.iter().take_while(|&&s| 1.0 - s < TIE_TOL_REL).count();
    let mut z: Vector3 = if top_group > 1 {
        tie = true;
        let basis: Vec<Vector3> = (0..top_group).map(|k| vecs.column(k).into_owned()).collect();
        let project = |v: &Vector3| basis.iter().fold(Vector3::zeros(), |acc, b| acc + b * b.dot(v));
        [Vector3::z(), mean_thrust, Vector3::x(), Vector3::y()]
            .iter()
            .map(project)
            .find(|p| p.norm() > 1e-6)
            .map_or(basis[0], |p| p.normalize())
    } else {
        vecs.column(0).into_owned()
    };
    let mean_dir = mean_thrust.try_normalize(1e-12).unwrap_or_else(Vector3::z);
    let along = z.dot(&mean_dir);
    let ambiguous_sign = along.abs() < 1e-9;
    z = if ambiguous_sign {
        orient(z, &[Vector3::z(), Vector3::x(), Vector3::y()])
    } else if along < 0.0 {
        -z
    } else {
        z
    };

    // Restrict A_f A_fᵀ to the plane ⟂ z_F; x_F is its dominant direction.
    let p1 = any_perpendicular(&z);
    let p2 = z.cross(&p1);
    let gram: Matrix3<f64> = (a_f * a_f.transpose()).fixed_view::<3, 3>(0, 0).into_owned();
    let g = |u: &Vector3, v: &Vector3| (gram * u).dot(v);
    let restricted = Matrix2::new(g(&p1, &p1), g(&p1, &p2), g(&p2, &p1), g(&p2, &p2));
    let eig = restricted.symmetric_eigen();
    let (hi, lo) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let s_hi = eig.eigenvalues[hi].max(0.0).sqrt();
    let s_lo = eig.eigenvalues[lo].max(0.0).sqrt();
    let x = if sigma_max > 0.0 && (s_hi - s_lo) / sigma_max < TIE_TOL_REL {
        tie = true;
        closest_x_axis(&z)
    } else {
        let c = eig.eigenvectors.column(hi);
        let x = (p1 * c[0] + p2 * c[1]).normalize();
        orient(x, &[Vector3::x(), Vector3::y(), Vector3::z()])
    };
    let y = z.cross(&x);
    let rotation = RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));

    FFrame {
        rotation,
        singular_values: norm,
        sigma_max,
        singular_vectors: vecs,
        resolution: if tie {
            FrameResolution::TieResolved
        } else {
            FrameResolution::Unique
        },
        ambiguous_sign,
    }
}

/// Unit `x ⟂ z` maximizing `trace([x, z×x, z])`, i.e. the frame with the
/// smallest rotation angle from {S} among those sharing `z`.
pub fn closest_x_axis(z: &Vector3) -> Vector3 {
    let target = Vector3::x() + Vector3::y().cross(z);
    let projected = target - z * z.dot(&target);
    projected
        .try_normalize(1e-9)
        .or_else(|| (Vector3::x() - z * z.x).try_normalize(1e-9))
        .unwrap_or_else(|| any_perpendicular(z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicabilityReport {
    /// Largest angle between any two rotor thrust axes (rad).
    pub max_pair_angle: f64,
    /// First pair of rotors whose axes are more than a right angle apart.
    pub obtuse_pair: Option<(usize, usize)>,
    /// Best `‖A_f u − m g ẑ_F‖` over `u ∈ [0, f_max]` (N).
    pub hover_residual: f64,
    pub hover_feasible: bool,
    pub ambiguous_sign: bool,
}

impl ApplicabilityReport {
    pub fn applicable(&self) -> bool {
        self.obtuse_pair.is_none() && self.hover_feasible && !self.ambiguous_sign
    }
}

/// Obtuse-pair test plus bounded hover feasibility along `z_F`.
pub fn applicability(
    a_f: &DMatrix<f64>,
    structure: &StructureModel,
    z_f: &Vector3,
    mass: f64,
    f_max: f64,
) -> ApplicabilityReport {
    let axes: Vec<Vector3> = structure.rotors().iter().map(|r| r.thrust_axis()).collect();
    let limit = -OBTUSE_TOL.sin();
    let mut max_pair_angle: f64 = 0.0;
    let mut obtuse_pair = None;
    for i in 0..axes.len() {
        for j in i + 1..axes.len() {
            let c = axes[i].dot(&axes[j]).clamp(-1.0, 1.0);
            max_pair_angle = max_pair_angle.max(c.acos());
            if c < limit && obtuse_pair.is_none() {
                obtuse_pair = Some((i, j));
            }
        }
    }
    let weight = mass * GRAVITY;
    let target = DVector::from_column_slice((z_f * weight).as_slice());
    let tol = HOVER_RESIDUAL_REL * weight;
    let opts = BoxLsqOptions {
        max_iter: HOVER_LSQ_ITERS,
        residual_tol: tol,
        equilibrate: false,
    };
    let sol = box_lsq(a_f, &target, 0.0, f_max, &opts);
    ApplicabilityReport {
        max_pair_angle,
        obtuse_pair,
        hover_residual: sol.residual,
        hover_feasible: sol.residual <= tol,
        ambiguous_sign: false,
    }
}

/// Row selector applied to the F-frame wrench before allocation.
pub fn dimensioning_matrix(dof: usize) -> Result<DMatrix<f64>, ActuationError> {
    let mut d = match dof {
        4 | 5 => DMatrix::zeros(dof, 6),
        6 => return Ok(DMatrix::identity(6, 6)),
        _ => return Err(ActuationError::InvalidDof(dof)),
    };
    let skip = dof - 4;
    if dof == 5 {
        d[(0, 0)] = 1.0;
    }
    for k in 0..4 {
        d[(skip + k, 2 + k)] = 1.0;
    }
    Ok(d)
}

/// `A_F = blkdiag(ˢR_Fᵀ, ˢR_Fᵀ) A`.
pub fn frame_design_matrix(a: &DMatrix<f64>, s_r_f: &RotationMatrix) -> DMatrix<f64> {
    let rt = s_r_f.matrix().transpose();
    let mut out = DMatrix::zeros(6, a.ncols());
    for block in [0, 3] {
        let rows = a.rows(block, 3);
        out.rows_mut(block, 3).copy_from(&(rt * rows));
    }
    out
}

fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let eps = RANK_TOL_REL * svd.singular_values.max();
    svd.pseudo_inverse(eps).expect("U and Vᵀ were computed")
}

/// `u = (D A_F)† D w`.
pub fn allocate(a_frame: &DMatrix<f64>, d: &DMatrix<f64>, w: &Vector6<f64>) -> DVector<f64> {
    Allocator::new(a_frame, d).allocate(w)
}

/// Cached `(D A_F)† D` for repeated allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocator {
    mixer: DMatrix<f64>,
}

impl Allocator {
    pub fn new(a_frame: &DMatrix<f64>, d: &DMatrix<f64>) -> Self {
        Self {
            mixer: pinv(&(d * a_frame)) * d,
        }
    }

    /// The `4n × 6` map from F-frame wrench to thrusts.
    pub fn mixer(&self) -> &DMatrix<f64> {
        &self.mixer
    }

    pub fn allocate(&self, w: &Vector6<f64>) -> DVector<f64> {
        &self.mixer * w
    }
}

/// Everything the controller and the reports need about a structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationAnalysis {
    pub ranks: RankSummary,
    pub frame: FFrame,
    /// `ˢR_F`.
    pub f_frame: RotationMatrix,
    pub dimensioning: DMatrix<f64>,
    /// `A` re-expressed in {F}.
    pub frame_design: DMatrix<f64>,
    pub applicability: ApplicabilityReport,
    pub applicable: bool,
}

impl ActuationAnalysis {
    pub fn controllable_dof(&self) -> usize {
        self.ranks.controllable_dof
    }

    pub fn allocator(&self) -> Allocator {
        Allocator::new(&self.frame_design, &self.dimensioning)
    }
}

/// Full analysis of a structure with per-rotor thrust limit `f_max`.
pub fn analyze_structure(structure: &StructureModel, f_max: f64) -> Result<ActuationAnalysis, ActuationError> {
    let a = structure.design_matrix();
    let ranks = analyze(a, RANK_TOL_REL)?;
    let a_f = structure.force_rows();
    let frame = f_frame_unchecked(&a_f, structure);
    let z_f = frame.rotation * Vector3::z();
    let mut applicability = applicability(&a_f, structure, &z_f, structure.mass(), f_max);
    applicability.ambiguous_sign = frame.ambiguous_sign;
    let dimensioning = dimensioning_matrix(ranks.controllable_dof)?;
    let frame_design = frame_design_matrix(a, &frame.rotation);
    Ok(ActuationAnalysis {
        ranks,
        f_frame: frame.rotation,
        frame,
        dimensioning,
        frame_design,
        applicable: applicability.applicable(),
        applicability,
    })
}

/// Bounded thrusts that hold the structure static at attitude `ᵂR_S`:
/// `A u = [m ᵂR_Sᵀ g ê₃ ; 0]`, `u ∈ [0, f_max]`.
pub fn static_hover(structure: &StructureModel, w_r_s: &RotationMatrix, f_max: f64, max_iter: usize) -> BoxLsqSolution {
    let weight = structure.mass() * GRAVITY;
    let f = w_r_s.transpose() * Vector3::z() * weight;
    let target = DVector::from_vec(alloc::vec![f.x, f.y, f.z, 0.0, 0.0, 0.0]);
    let opts = BoxLsqOptions {
        max_iter,
        residual_tol: HOVER_RESIDUAL_REL * weight,
        equilibrate: true,
    };
    box_lsq(structure.design_matrix(), &target, 0.0, f_max, &opts)
}

pub fn static_hover_feasible(structure: &StructureModel, w_r_s: &RotationMatrix, f_max: f64) -> bool {
    let weight = structure.mass() * GRAVITY;
    static_hover(structure, w_r_s, f_max, STATIC_HOVER_ITERS).residual <= HOVER_RESIDUAL_REL * weight
}

/// Iteration budget for [`static_hover_feasible`].
pub const STATIC_HOVER_ITERS: usize = 20_000;

/// Bisection on `θ ∈ [0, hi]` for the largest pitch `ᵂR_F = Rot(y, θ)` that
/// still admits a static hover. Returns `None` if level hover is infeasible.
pub fn max_static_pitch(
    structure: &StructureModel,
    s_r_f: &RotationMatrix,
    f_max: f64,
    hi: f64,
    resolution: f64,
) -> Option<f64> {
    let feasible = |theta: f64| {
        let w_r_f = crate::geometry::rot_principal(crate::geometry::Axis::Y, theta);
        static_hover_feasible(structure, &(w_r_f * s_r_f.inverse()), f_max)
    };
    if !feasible(0.0) {
        return None;
    }
    if feasible(hi) {
        return Some(hi);
    }
    let (mut lo, mut up) = (0.0, hi);
    while up - lo > resolution {
        let mid = 0.5 * (lo + up);
        if feasible(mid) {
            lo = mid;
        } else {
            up = mid;
        }
    }
    Some(lo)
}
