//! Modules, torque balance and structure assembly.
//!
//! Thrusts are expressed in newtons: `k_f` is folded into the input so each
//! design-matrix column is the wrench of one newton of rotor thrust, and drag
//! torque enters through the ratio `k_m / k_f` (metres).

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3};
use thiserror::Error;

use crate::geometry::{self, RotationMatrix, Vector3};

/// Module mass of the reference hardware (kg).
pub const DEFAULT_MODULE_MASS: f64 = 0.135;
/// Per-rotor thrust limit (N): 135 g module plus 128 g payload shared by four rotors.
pub const DEFAULT_F_MAX: f64 = (0.135 + 0.128) * crate::GRAVITY / 4.0;
/// Drag-to-thrust ratio `k_m / k_f` (m); typical for small rotors.
pub const DEFAULT_DRAG_RATIO: f64 = 0.016;
/// Half of the propeller square's side (m).
pub const DEFAULT_ARM_HALF: f64 = 0.04;
/// Cuboid frame dimensions (m).
pub const DEFAULT_BODY: [f64; 3] = [0.1, 0.1, 0.04];
/// Residual accepted by [`check_torque_balance`] (N·m at unit thrust).
pub const DEFAULT_BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("invalid module parameters: {0}")]
    InvalidParams(String),
    #[error("a structure needs at least one module")]
    EmptyStructure,
    #[error("modules {first} and {second} occupy the same grid cell {cell:?}")]
    OverlappingModules {
        first: usize,
        second: usize,
        cell: GridCell,
    },
}

fn invalid(msg: impl Into<String>) -> VehicleError {
    VehicleError::InvalidParams(msg.into())
}

/// Physical parameters shared by every constructor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleParams {
    pub mass: f64,
    /// Propellers sit at `(±a, ±a, 0)`.
    pub arm_half: f64,
    /// Frame dimensions along x, y, z of the module frame.
    pub body: Vector3,
    pub k_f: f64,
    pub k_m: f64,
}

impl Default for ModuleParams {
    fn default() -> Self {
        Self {
            mass: DEFAULT_MODULE_MASS,
            arm_half: DEFAULT_ARM_HALF,
            body: Vector3::from(DEFAULT_BODY),
            k_f: 1.0,
            k_m: DEFAULT_DRAG_RATIO,
        }
    }
}

impl ModuleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let finite = self.mass.is_finite()
            && self.arm_half.is_finite()
            && self.body.iter().all(|d| d.is_finite())
            && self.k_f.is_finite()
            && self.k_m.is_finite();
        if !finite {
            return Err(invalid("parameters must be finite"));
        }
        if self.mass <= 0.0 {
            return Err(invalid("mass must be positive"));
        }
        if self.arm_half <= 0.0 {
            return Err(invalid("arm half-length must be positive"));
        }
        if self.body.iter().any(|&d| d <= 0.0) {
            return Err(invalid("body dimensions must be positive"));
        }
        if self.k_f <= 0.0 {
            return Err(invalid("k_f must be positive"));
        }
        if self.k_m < 0.0 {
            return Err(invalid("k_m must be non-negative"));
        }
        Ok(())
    }

    pub fn drag_ratio(&self) -> f64 {
        self.k_m / self.k_f
    }

    /// Solid cuboid inertia about the module's centre.
    pub fn cuboid_inertia(&self) -> Matrix3<f64> {
        let (x, y, z) = (self.body.x, self.body.y, self.body.z);
        let k = self.mass / 12.0;
        Matrix3::from_diagonal(&Vector3::new(
            k * (y * y + z * z),
            k * (x * x + z * z),
            k * (x * x + y * y),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropellerSpec {
    /// Position in the module frame (m).
    pub position: Vector3,
    /// Propeller frame in the module frame; thrust acts along its z-axis.
    pub orientation: RotationMatrix,
    /// Drag torque sign, ±1.
    pub spin_sign: f64,
}

impl PropellerSpec {
    pub fn thrust_axis(&self) -> Vector3 {
        self.orientation * Vector3::z()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleKind {
    R,
    T,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleSpec {
    pub kind: ModuleKind,
    pub propellers: [PropellerSpec; 4],
    pub params: ModuleParams,
}

/// `p₁ = (a, a, 0)`, `p₂ = (a, −a, 0)`, `p₃ = −p₁`, `p₄ = −p₂`.
pub fn square_layout(a: f64) -> [Vector3; 4] {
    [
        Vector3::new(a, a, 0.0),
        Vector3::new(a, -a, 0.0),
        Vector3::new(-a, -a, 0.0),
        Vector3::new(-a, a, 0.0),
    ]
}

const SPIN_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

fn build(kind: ModuleKind, orientations: [RotationMatrix; 4], params: ModuleParams) -> ModuleSpec {
    let layout = square_layout(params.arm_half);
    let propellers = core::array::from_fn(|j| PropellerSpec {
        position: layout[j],
        orientation: orientations[j],
        spin_sign: SPIN_SIGNS[j],
    });
    ModuleSpec {
        kind,
        propellers,
        params,
    }
}

fn check_orientation(r: &RotationMatrix) -> Result<(), VehicleError> {
    if geometry::is_rotation(r.matrix(), 1e-9) {
        Ok(())
    } else {
        Err(invalid("propeller orientation is not a rotation matrix"))
    }
}

/// All four rotors share the orientation `r_star`.
pub fn make_r_module(r_star: RotationMatrix, params: ModuleParams) -> Result<ModuleSpec, VehicleError> {
    params.validate()?;
    check_orientation(&r_star)?;
    Ok(build(ModuleKind::R, [r_star; 4], params))
}

/// Rotors tilted by `±eta` about their own arm axes, alternating sign.
pub fn make_t_module(eta: f64, params: ModuleParams) -> Result<ModuleSpec, VehicleError> {
    params.validate()?;
    if !(eta.abs() < core::f64::consts::FRAC_PI_2) {
        return Err(invalid("T-module tilt must satisfy |eta| < pi/2"));
    }
    let layout = square_layout(params.arm_half);
    let orientations = core::array::from_fn(|j| {
        let tilt = if j % 2 == 0 { eta } else { -eta };
        let arm = layout[j].normalize();
        geometry::rodrigues(&arm, tilt).expect("normalized arm is a unit axis")
    });
    Ok(build(ModuleKind::T, orientations, params))
}

/// Arbitrary per-rotor orientations on the standard square layout.
pub fn make_custom_module(orientations: [RotationMatrix; 4], params: ModuleParams) -> Result<ModuleSpec, VehicleError> {
    params.validate()?;
    for r in &orientations {
        check_orientation(r)?;
    }
    Ok(build(ModuleKind::Custom, orientations, params))
}

impl ModuleSpec {
    pub fn drag_ratio(&self) -> f64 {
        self.params.drag_ratio()
    }

    /// The module's own 6×4 design matrix (module frame at the origin).
    pub fn design_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(6, 4);
        for (j, prop) in self.propellers.iter().enumerate() {
            let col = wrench_column(&prop.position, &prop.thrust_axis(), prop.spin_sign, self.drag_ratio());
            a.set_column(j, &col);
        }
        a
    }
}

fn wrench_column(position: &Vector3, axis: &Vector3, spin_sign: f64, drag_ratio: f64) -> nalgebra::Vector6<f64> {
    let torque = position.cross(axis) + axis * (spin_sign * drag_ratio);
    nalgebra::Vector6::new(axis.x, axis.y, axis.z, torque.x, torque.y, torque.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueBalanceReport {
    pub balanced: bool,
    /// Total torque (thrust + drag) with every rotor at 1 N.
    pub residual_torque: Vector3,
    /// `Σ p_j × R_j ê₃`.
    pub thrust_torque: Vector3,
    /// `(k_m/k_f) Σ s_j R_j ê₃`.
    pub drag_torque: Vector3,
    /// `‖Σ R_j ê₃‖`; zero for modules with no net thrust.
    pub lambda: f64,
    /// Unit direction of the net thrust (`ê₃` when `lambda` is zero).
    pub thrust_direction: Vector3,
}

/// Evaluate the thrust-torque and drag-torque sums independently at unit thrust.
pub fn check_torque_balance(module: &ModuleSpec, tol: f64) -> TorqueBalanceReport {
    let mut thrust_torque = Vector3::zeros();
    let mut drag_sum = Vector3::zeros();
    let mut force = Vector3::zeros();
    for prop in &module.propellers {
        let axis = prop.thrust_axis();
        thrust_torque += prop.position.cross(&axis);
        drag_sum += axis * prop.spin_sign;
        force += axis;
    }
    let drag_torque = drag_sum * module.drag_ratio();
    let lambda = force.norm();
    let thrust_direction = if lambda > 1e-12 { force / lambda } else { Vector3::z() };
    TorqueBalanceReport {
        balanced: thrust_torque.norm() < tol && drag_torque.norm() < tol,
        residual_torque: thrust_torque + drag_torque,
        thrust_torque,
        drag_torque,
        lambda: if lambda > 1e-12 { lambda } else { 0.0 },
        thrust_direction,
    }
}

/// Integer docking cell; `col` maps to x, `row` to y and `layer` to z of {S}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    pub row: i32,
    pub col: i32,
    pub layer: i32,
}

impl GridCell {
    pub fn new(row: i32, col: i32, layer: i32) -> Self {
        Self { row, col, layer }
    }
}

/// One entry of an assembly request.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulePlacement {
    pub module: ModuleSpec,
    pub cell: GridCell,
    /// Orientation of the module frame in {S}.
    pub orientation: RotationMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedModule {
    pub module: ModuleSpec,
    pub cell: GridCell,
    pub orientation: RotationMatrix,
    /// Module centre relative to the structure's centre of mass (m).
    pub offset: Vector3,
}

/// A rotor expressed in the structure frame {S}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureRotor {
    pub module: usize,
    pub position: Vector3,
    pub orientation: RotationMatrix,
    pub spin_sign: f64,
    pub drag_ratio: f64,
}

impl StructureRotor {
    pub fn thrust_axis(&self) -> Vector3 {
        self.orientation * Vector3::z()
    }
}

/// Rigid assembly of modules, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureModel {
    modules: Vec<PlacedModule>,
    rotors: Vec<StructureRotor>,
    mass: f64,
    inertia: Matrix3<f64>,
    design: DMatrix<f64>,
}

impl StructureModel {
    pub fn modules(&self) -> &[PlacedModule] {
        &self.modules
    }

    pub fn rotors(&self) -> &[StructureRotor] {
        &self.rotors
    }

    pub fn rotor_count(&self) -> usize {
        self.rotors.len()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    /// The 6×4n design matrix `A` in {S}.
    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Top three rows of `A`.
    pub fn force_rows(&self) -> DMatrix<f64> {
        self.design.rows(0, 3).into_owned()
    }

    /// Bottom three rows of `A`.
    pub fn torque_rows(&self) -> DMatrix<f64> {
        self.design.rows(3, 3).into_owned()
    }

    /// `Σ_ij ˢR_ij ê₃`, the thrust with every rotor at 1 N.
    pub fn summed_thrust_axis(&self) -> Vector3 {
        self.rotors.iter().map(StructureRotor::thrust_axis).sum()
    }
}

/// Assemble modules on the docking grid; the grid pitch along each axis is the
/// largest module extent along that axis.
pub fn assemble_structure(placements: &[ModulePlacement]) -> Result<StructureModel, VehicleError> {
    if placements.is_empty() {
        return Err(VehicleError::EmptyStructure);
    }
    for (i, a) in placements.iter().enumerate() {
        a.module.params.validate()?;
        check_orientation(&a.orientation)?;
        if let Some(j) = placements[..i].iter().position(|b| b.cell == a.cell) {
            return Err(VehicleError::OverlappingModules {
                first: j,
                second: i,
                cell: a.cell,
            });
        }
    }

    let mut pitch = Vector3::zeros();
    for p in placements {
        let extent = p.orientation.matrix().abs() * p.module.params.body;
        pitch = pitch.sup(&extent);
    }

    let raw: Vec<Vector3> = placements
        .iter()
        .map(|p| {
            Vector3::new(
                p.cell.col as f64 * pitch.x,
                p.cell.row as f64 * pitch.y,
                p.cell.layer as f64 * pitch.z,
            )
        })
        .collect();
    let mass: f64 = placements.iter().map(|p| p.module.params.mass).sum();
    let com = placements
        .iter()
        .zip(&raw)
        .fold(Vector3::zeros(), |acc, (p, r)| acc + r * p.module.params.mass)
        / mass;

    let modules: Vec<PlacedModule> = placements
        .iter()
        .zip(&raw)
        .map(|(p, r)| PlacedModule {
            module: p.module.clone(),
            cell: p.cell,
            orientation: p.orientation,
            offset: r - com,
        })
        .collect();

    let mut inertia = Matrix3::zeros();
    for m in &modules {
        let rot = m.orientation.matrix();
        let local = rot * m.module.params.cuboid_inertia() * rot.transpose();
        let d = &m.offset;
        let shift = (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * m.module.params.mass;
        inertia += local + shift;
    }
    // Summation order can leave O(ε) asymmetry.
    inertia = (inertia + inertia.transpose()) * 0.5;

    let rotors: Vec<StructureRotor> = modules
        .iter()
        .enumerate()
        .flat_map(|(i, m)| {
            m.module.propellers.iter().map(move |prop| StructureRotor {
                module: i,
                position: m.offset + m.orientation * prop.position,
                orientation: m.orientation * prop.orientation,
                spin_sign: prop.spin_sign,
                drag_ratio: m.module.drag_ratio(),
            })
        })
        .collect();

    let design = build_design_matrix(&rotors);
    Ok(StructureModel {
        modules,
        rotors,
        mass,
        inertia,
        design,
    })
}

fn build_design_matrix(rotors: &[StructureRotor]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(6, rotors.len());
    for (k, r) in rotors.iter().enumerate() {
        a.set_column(
            k,
            &wrench_column(&r.position, &r.thrust_axis(), r.spin_sign, r.drag_ratio),
        );
    }
    a
}

/// Column `(i, j)` is `[ˢR_ij ê₃ ; p_ij × ˢR_ij ê₃ + s_ij (k_m/k_f) ˢR_ij ê₃]`.
pub fn design_matrix(structure: &StructureModel) -> DMatrix<f64> {
    build_design_matrix(structure.rotors())
}

/// Single module at the origin of {S}.
pub fn single_module(module: ModuleSpec) -> Result<StructureModel, VehicleError> {
    assemble_structure(&[ModulePlacement {
        module,
        cell: GridCell::default(),
        orientation: RotationMatrix::identity(),
    }])
}

impl Default for GridCell {
    fn default() -> Self {
        Self::new(0, 0, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_principal, Axis};
    use approx::assert_relative_eq;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn quad_params(a: f64) -> ModuleParams {
        ModuleParams {
            arm_half: a,
            ..ModuleParams::default()
        }
    }

    #[test]
    fn default_thrust_limit_matches_payload_rating() {
        assert_relative_eq!(DEFAULT_F_MAX, 0.6450075, epsilon = 1e-12);
    }

    #[test]
    fn r_module_layout_and_orientation() {
        let r_star = rot_principal(Axis::Y, PI / 18.0);
        let m = make_r_module(r_star, ModuleParams::default()).unwrap();
        assert_eq!(m.kind, ModuleKind::R);
        let a = DEFAULT_ARM_HALF;
        let expected = square_layout(a);
        for (j, p) in m.propellers.iter().enumerate() {
            assert_eq!(p.orientation, r_star);
            assert_eq!(p.position, expected[j]);
            assert_eq!(p.position.z, 0.0);
        }
        assert_eq!(m.propellers.map(|p| p.spin_sign), [1.0, -1.0, 1.0, -1.0]);
        assert_eq!(m.propellers[0].position, -m.propellers[2].position);
        assert_eq!(m.propellers[1].position, -m.propellers[3].position);
    }

    #[test]
    fn t_module_zero_tilt_is_a_quadrotor() {
        let m = make_t_module(0.0, ModuleParams::default()).unwrap();
        for p in &m.propellers {
            assert_relative_eq!(*p.orientation.matrix(), Matrix3::identity());
        }
    }

    #[test]
    fn t_module_uses_alternating_arm_tilts() {
        let eta = PI / 4.0;
        let m = make_t_module(eta, ModuleParams::default()).unwrap();
        for (j, p) in m.propellers.iter().enumerate() {
            let tilt = if j % 2 == 0 { eta } else { -eta };
            let expected = geometry::rodrigues(&p.position.normalize(), tilt).unwrap();
            assert_relative_eq!(*p.orientation.matrix(), *expected.matrix(), epsilon = 1e-15);
        }
        let mirrored = make_t_module(-eta, ModuleParams::default()).unwrap();
        assert_relative_eq!(
            *mirrored.propellers[0].orientation.matrix(),
            *m.propellers[1].orientation.matrix() * 0.0
                + *geometry::rodrigues(&m.propellers[0].position.normalize(), -eta)
                    .unwrap()
                    .matrix(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad_mass = ModuleParams {
            mass: 0.0,
            ..ModuleParams::default()
        };
        assert!(matches!(
            make_r_module(RotationMatrix::identity(), bad_mass),
            Err(VehicleError::InvalidParams(_))
        ));
        let bad_km = ModuleParams {
            k_m: -1.0,
            ..ModuleParams::default()
        };
        assert!(make_t_module(0.1, bad_km).is_err());
        assert!(make_t_module(PI / 2.0, ModuleParams::default()).is_err());
    }

    #[test]
    fn r_module_balance_lambda_four() {
        let m = make_r_module(rot_principal(Axis::X, 0.4), ModuleParams::default()).unwrap();
        let rep = check_torque_balance(&m, DEFAULT_BALANCE_TOL);
        assert!(rep.balanced);
        assert_relative_eq!(rep.lambda, 4.0, epsilon = 1e-12);
        assert_relative_eq!(
            rep.thrust_direction,
            rot_principal(Axis::X, 0.4) * Vector3::z(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn t_module_balance_lambda_cos_eta() {
        let m = make_t_module(PI / 4.0, ModuleParams::default()).unwrap();
        let rep = check_torque_balance(&m, DEFAULT_BALANCE_TOL);
        assert!(rep.balanced);
        assert_relative_eq!(rep.thrust_direction, Vector3::z(), epsilon = 1e-12);
        assert_relative_eq!(rep.lambda, 2.0 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn single_tilted_rotor_is_unbalanced() {
        let p1 = square_layout(DEFAULT_ARM_HALF)[0].normalize();
        let tilted = geometry::rodrigues(&p1, PI / 6.0).unwrap();
        let id = RotationMatrix::identity();
        let m = make_custom_module([tilted, id, id, id], ModuleParams::default()).unwrap();
        let rep = check_torque_balance(&m, DEFAULT_BALANCE_TOL);
        assert!(!rep.balanced);
        // Thrust torque: p1 × (cos30 ê₃ + sin30 p̂1×ê₃) summed with the three vertical
        // rotors; vertical terms cancel except p1's own, leaving
        // (cos30 − 1) p1×ê₃ − sin30 |p1| ê₃.
        let a = DEFAULT_ARM_HALF;
        let p = Vector3::new(a, a, 0.0);
        let expected = p.cross(&Vector3::z()) * ((PI / 6.0).cos() - 1.0) - Vector3::z() * (0.5 * p.norm());
        assert_relative_eq!(rep.thrust_torque, expected, epsilon = 1e-15);
    }

    #[test]
    fn single_quadrotor_design_column() {
        let m = make_r_module(RotationMatrix::identity(), quad_params(0.1)).unwrap();
        let s = single_module(m.clone()).unwrap();
        let a = s.design_matrix();
        let col: [f64; 6] = core::array::from_fn(|i| a[(i, 0)]);
        let expected = [0.0, 0.0, 1.0, 0.1, -0.1, 0.016];
        for (x, y) in col.iter().zip(expected) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }
        assert_eq!(*a, m.design_matrix());
    }

    #[test]
    fn r_module_force_rows_have_rank_one() {
        let r_star = rot_principal(Axis::Y, 0.3);
        let s = single_module(make_r_module(r_star, ModuleParams::default()).unwrap()).unwrap();
        let af = s.force_rows();
        let dir = r_star * Vector3::z();
        for k in 0..4 {
            assert_relative_eq!(
                af.column(k).into_owned(),
                nalgebra::DVector::from_column_slice(dir.as_slice()),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn single_module_structure() {
        let m = make_r_module(RotationMatrix::identity(), ModuleParams::default()).unwrap();
        let s = single_module(m.clone()).unwrap();
        assert_eq!(s.mass(), m.params.mass);
        assert_eq!(*s.inertia(), m.params.cuboid_inertia());
        assert_eq!(s.modules()[0].offset, Vector3::zeros());
    }

    #[test]
    fn two_by_two_grid_mass_and_com() {
        let m = make_r_module(RotationMatrix::identity(), ModuleParams::default()).unwrap();
        let placements: Vec<_> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(r, c)| ModulePlacement {
                module: m.clone(),
                cell: GridCell::new(r, c, 0),
                orientation: RotationMatrix::identity(),
            })
            .collect();
        let s = assemble_structure(&placements).unwrap();
        assert_relative_eq!(s.mass(), 0.54, epsilon = 1e-15);
        let h = DEFAULT_BODY[0] / 2.0;
        assert_relative_eq!(s.modules()[0].offset, Vector3::new(-h, -h, 0.0), epsilon = 1e-15);
        assert_relative_eq!(s.modules()[3].offset, Vector3::new(h, h, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn parallel_axis_contribution() {
        let m = make_r_module(RotationMatrix::identity(), ModuleParams::default()).unwrap();
        let placements = [0, 1].map(|c| ModulePlacement {
            module: m.clone(),
            cell: GridCell::new(0, c, 0),
            orientation: RotationMatrix::identity(),
        });
        let s = assemble_structure(&placements).unwrap();
        let d = DEFAULT_BODY[0];
        let cuboid = m.params.cuboid_inertia();
        let expected_yy = 2.0 * cuboid[(1, 1)] + 2.0 * m.params.mass * (d / 2.0).powi(2);
        assert_relative_eq!(s.inertia()[(1, 1)], expected_yy, epsilon = 1e-15);
        assert_relative_eq!(s.inertia()[(0, 0)], 2.0 * cuboid[(0, 0)], epsilon = 1e-15);
    }

    #[test]
    fn assembly_errors() {
        assert_eq!(assemble_structure(&[]), Err(VehicleError::EmptyStructure));
        let m = make_t_module(0.2, ModuleParams::default()).unwrap();
        let p = ModulePlacement {
            module: m,
            cell: GridCell::new(1, 2, 0),
            orientation: RotationMatrix::identity(),
        };
        let err = assemble_structure(&[p.clone(), p]).unwrap_err();
        assert!(matches!(
            err,
            VehicleError::OverlappingModules {
                first: 0,
                second: 1,
                ..
            }
        ));
    }

    #[test]
    fn design_matrix_free_function_matches_cached() {
        let m = make_t_module(0.3, ModuleParams::default()).unwrap();
        let placements = [(0, 0), (2, 1)].map(|(r, c)| ModulePlacement {
            module: m.clone(),
            cell: GridCell::new(r, c, 0),
            orientation: rot_principal(Axis::Z, 0.5 * c as f64),
        });
        let s = assemble_structure(&placements).unwrap();
        assert_eq!(design_matrix(&s), *s.design_matrix());
        assert_eq!(s.design_matrix().shape(), (6, 8));
    }

    fn random_structure() -> impl Strategy<Value = Vec<(i32, i32, f64, f64, bool)>> {
        proptest::collection::vec((-2..3i32, -2..3i32, 0.05..0.4f64, -1.2..1.2f64, any::<bool>()), 1..6)
    }

    proptest! {
        #[test]
        fn constructed_modules_are_balanced(
            eta in -1.4..1.4f64, roll in -1.0..1.0f64, pitch in -1.0..1.0f64, yaw in -3.0..3.0f64,
            a in 0.01..0.3f64,
        ) {
            let params = quad_params(a);
            let t = make_t_module(eta, params).unwrap();
            let rep = check_torque_balance(&t, DEFAULT_BALANCE_TOL);
            prop_assert!(rep.balanced && rep.residual_torque.norm() < 1e-9);
            let r = make_r_module(geometry::from_yaw_pitch_roll(yaw, pitch, roll), params).unwrap();
            let rep = check_torque_balance(&r, DEFAULT_BALANCE_TOL);
            prop_assert!(rep.balanced && rep.residual_torque.norm() < 1e-9);
            prop_assert!((rep.lambda * rep.thrust_direction.norm() - 4.0).abs() < 1e-12);
        }

        #[test]
        fn balanced_module_unit_input_gives_pure_thrust(eta in -1.4..1.4f64) {
            let m = make_t_module(eta, ModuleParams::default()).unwrap();
            let w = m.design_matrix() * nalgebra::DVector::from_element(4, 1.0);
            let rep = check_torque_balance(&m, DEFAULT_BALANCE_TOL);
            let f = Vector3::new(w[0], w[1], w[2]);
            prop_assert!(Vector3::new(w[3], w[4], w[5]).norm() < 1e-9);
            prop_assert!((f - rep.thrust_direction * rep.lambda).norm() < 1e-12);
        }

        #[test]
        fn assembled_com_is_origin(cells in random_structure()) {
            let mut placements: Vec<ModulePlacement> = Vec::new();
            for (row, col, mass, eta, is_t) in cells {
                let cell = GridCell::new(row, col, 0);
                if placements.iter().any(|p| p.cell == cell) {
                    continue;
                }
                let params = ModuleParams { mass, ..ModuleParams::default() };
                let module = if is_t {
                    make_t_module(eta, params).unwrap()
                } else {
                    make_r_module(rot_principal(Axis::Y, eta), params).unwrap()
                };
                placements.push(ModulePlacement { module, cell, orientation: RotationMatrix::identity() });
            }
            let s = assemble_structure(&placements).unwrap();
            let moment = s.modules().iter().fold(Vector3::zeros(), |acc, m| acc + m.offset * m.module.params.mass);
            prop_assert!(moment.norm() < 1e-12);
            prop_assert_eq!(s.design_matrix().shape(), (6, 4 * placements.len()));
            let j = s.inertia();
            prop_assert!((j - j.transpose()).norm() == 0.0);
            let eig = j.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e > 0.0));
        }
    }
}
