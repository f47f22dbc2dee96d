//! Structure and scenario configuration files.
//!
//! The format is TOML with units in key names. Angles accept either a `_deg`
//! or a `_rad` key; [`render`] always writes radians so that a rendered file
//! parses back to an identical [`StructureConfig`].

use std::fmt;

use modquad_core::control::{AttitudeTarget, ControllerGains};
use modquad_core::geometry::{self, RotationMatrix, Vector3};
use modquad_core::simulation::{MotorModel, ScenarioSettings};
use modquad_core::trajectories::{self, TrajectoryDef, Waypoint};
use modquad_core::vehicle::{
    self, GridCell, ModuleParams, ModulePlacement, ModuleSpec, StructureModel, DEFAULT_ARM_HALF, DEFAULT_BODY,
    DEFAULT_DRAG_RATIO, DEFAULT_F_MAX, DEFAULT_MODULE_MASS,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DT_SIM: f64 = 0.001;
pub const DEFAULT_DT_CTRL: f64 = 0.002;
pub const DEFAULT_SKIP: f64 = 5.0;
pub const DEFAULT_LAP_TIME: f64 = 24.0;

/// One problem found while reading a config, with its 1-based line if known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(Issue),
    #[error("unknown key: {0}")]
    UnknownKey(Issue),
    #[error("schema error: {}", join_issues(.0))]
    Schema(Vec<Issue>),
}

fn join_issues(issues: &[Issue]) -> String {
    issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalDefaults {
    pub mass_kg: f64,
    pub arm_half_m: f64,
    pub body_m: [f64; 3],
    pub k_f: f64,
    pub k_m: f64,
    pub f_max_n: f64,
}

impl Default for PhysicalDefaults {
    fn default() -> Self {
        Self {
            mass_kg: DEFAULT_MODULE_MASS,
            arm_half_m: DEFAULT_ARM_HALF,
            body_m: DEFAULT_BODY,
            k_f: 1.0,
            k_m: DEFAULT_DRAG_RATIO,
            f_max_n: DEFAULT_F_MAX,
        }
    }
}

/// Rotor orientation given either as axis-angle or as roll/pitch/yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation {
    AxisAngle {
        axis: [f64; 3],
        angle_rad: f64,
    },
    /// `Rz(yaw) Ry(pitch) Rx(roll)`, stored as `[roll, pitch, yaw]`.
    Rpy([f64; 3]),
}

impl Orientation {
    pub fn rotation(&self) -> Result<RotationMatrix, String> {
        match *self {
            Orientation::AxisAngle { axis, angle_rad } => {
                let a = Vector3::from(axis);
                let n = a.norm();
                if !(n > 0.0) {
                    return Err("rotation axis must be non-zero".into());
                }
                Ok(geometry::rodrigues(&(a / n), angle_rad).expect("normalized axis"))
            }
            Orientation::Rpy([r, p, y]) => Ok(geometry::from_yaw_pitch_roll(y, p, r)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModuleKindConfig {
    R(Orientation),
    T { eta_rad: f64 },
    Custom([Orientation; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleEntry {
    pub kind: ModuleKindConfig,
    /// `[row, col, layer]`.
    pub cell: [i32; 3],
    pub yaw_rad: f64,
    pub mass_kg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainsConfig {
    pub k_r: [f64; 3],
    pub k_v: [f64; 3],
    pub k_rot: [f64; 3],
    pub k_omega: [f64; 3],
    pub k_i: [f64; 3],
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self::from(ControllerGains::default())
    }
}

impl From<ControllerGains> for GainsConfig {
    fn from(g: ControllerGains) -> Self {
        let a = |v: Vector3| [v.x, v.y, v.z];
        Self {
            k_r: a(g.k_r),
            k_v: a(g.k_v),
            k_rot: a(g.k_rot),
            k_omega: a(g.k_omega),
            k_i: a(g.k_i),
        }
    }
}

impl GainsConfig {
    pub fn to_gains(&self) -> ControllerGains {
        ControllerGains {
            k_r: self.k_r.into(),
            k_v: self.k_v.into(),
            k_rot: self.k_rot.into(),
            k_omega: self.k_omega.into(),
            k_i: self.k_i.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorConfig {
    pub time_constant_s: Option<f64>,
    pub deadzone_n: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverAttitude {
    pub yaw_rad: f64,
    pub pitch_rad: Option<f64>,
    pub roll_rad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointConfig {
    pub position_m: [f64; 3],
    /// `[roll, pitch, yaw]`.
    pub rpy_rad: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryConfig {
    Hover {
        position_m: [f64; 3],
        attitude: HoverAttitude,
    },
    Helix {
        center_m: [f64; 2],
        radius_m: f64,
        z_range_m: [f64; 2],
        z_period_s: f64,
        xy_period_s: f64,
        yaw_period_s: Option<f64>,
        yaw0_rad: f64,
    },
    Rectangle {
        center_m: [f64; 2],
        length_m: f64,
        width_m: f64,
        height_m: f64,
        lap_time_s: f64,
        pitch_rad: f64,
        yaw_rad: f64,
    },
    AttitudeSine {
        axis: [f64; 3],
        amplitude_rad: f64,
        period_s: f64,
        hover_point_m: [f64; 3],
    },
    QuinticChain {
        waypoints: Vec<WaypointConfig>,
        durations_s: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub dt_sim_s: f64,
    pub dt_ctrl_s: f64,
    pub skip_s: f64,
    pub trajectory: TrajectoryConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureConfig {
    pub name: Option<String>,
    pub description: Option<String>,
    pub defaults: PhysicalDefaults,
    pub modules: Vec<ModuleEntry>,
    pub gains: GainsConfig,
    pub motor: MotorConfig,
    pub scenario: Option<ScenarioConfig>,
}

// ---------------------------------------------------------------------------
// File representation

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    defaults: Option<RawDefaults>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gains: Option<RawGains>,
    #[serde(skip_serializing_if = "Option::is_none")]
    motor: Option<RawMotor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    module: Vec<RawModule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<RawScenario>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    mass_kg: Option<f64>,
    arm_half_m: Option<f64>,
    body_m: Option<[f64; 3]>,
    k_f: Option<f64>,
    k_m: Option<f64>,
    f_max_n: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawModule {
    kind: String,
    cell: [i32; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mass_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_star_axis: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_star_angle_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_star_angle_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_star_rpy_deg: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_star_rpy_rad: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    rotor: Vec<RawRotor>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawRotor {
    #[serde(skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    angle_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    angle_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rpy_deg: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rpy_rad: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(untagged)]
enum RawGain {
    Scalar(f64),
    Diagonal([f64; 3]),
}

impl RawGain {
    fn diagonal(self) -> [f64; 3] {
        match self {
            RawGain::Scalar(k) => [k; 3],
            RawGain::Diagonal(d) => d,
        }
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    k_r: Option<RawGain>,
    k_v: Option<RawGain>,
    k_rot: Option<RawGain>,
    k_omega: Option<RawGain>,
    k_i: Option<RawGain>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMotor {
    #[serde(skip_serializing_if = "Option::is_none")]
    time_constant_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deadzone_n: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_sim_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_ctrl_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skip_s: Option<f64>,
    trajectory: RawTrajectory,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawTrajectory {
    Hover(RawHover),
    Helix(RawHelix),
    Rectangle(RawRectangle),
    AttitudeSine(RawSine),
    QuinticChain(RawChain),
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawHover {
    position_m: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    roll_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    roll_rad: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawHelix {
    center_m: [f64; 2],
    radius_m: f64,
    z_range_m: [f64; 2],
    z_period_s: f64,
    xy_period_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw_period_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw0_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw0_rad: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawRectangle {
    #[serde(skip_serializing_if = "Option::is_none")]
    center_m: Option<[f64; 2]>,
    length_m: f64,
    width_m: f64,
    height_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lap_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    yaw_rad: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSine {
    axis: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude_rad: Option<f64>,
    period_s: f64,
    hover_point_m: [f64; 3],
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    durations_s: Vec<f64>,
    #[serde(default)]
    waypoint: Vec<RawWaypoint>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawWaypoint {
    position_m: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    rpy_deg: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rpy_rad: Option<[f64; 3]>,
}

// ---------------------------------------------------------------------------
// Parsing

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of the `index`-th occurrence of a table header such as `[[module]]`.
fn header_line(text: &str, header: &str, index: usize) -> Option<usize> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with(header))
        .nth(index)
        .map(|(i, _)| i + 1)
}

/// Collects issues attributed to one region of the file.
struct Checker<'a> {
    issues: &'a mut Vec<Issue>,
    line: Option<usize>,
    context: String,
}

impl Checker<'_> {
    fn push(&mut self, message: impl fmt::Display) {
        self.issues.push(Issue {
            line: self.line,
            message: format!("{}: {message}", self.context),
        });
    }

    fn angle(&mut self, name: &str, deg: Option<f64>, rad: Option<f64>) -> Option<f64> {
        match (deg, rad) {
            (Some(_), Some(_)) => {
                self.push(format_args!("give only one of {name}_deg and {name}_rad"));
                None
            }
            (Some(d), None) => Some(d.to_radians()),
            (None, r) => r,
        }
    }

    fn angles3(&mut self, name: &str, deg: Option<[f64; 3]>, rad: Option<[f64; 3]>) -> Option<[f64; 3]> {
        match (deg, rad) {
            (Some(_), Some(_)) => {
                self.push(format_args!("give only one of {name}_deg and {name}_rad"));
                None
            }
            (Some(d), None) => Some(d.map(f64::to_radians)),
            (None, r) => r,
        }
    }

    fn finite(&mut self, name: &str, values: &[f64]) {
        if values.iter().any(|v| !v.is_finite()) {
            self.push(format_args!("{name} must be finite"));
        }
    }

    fn positive(&mut self, name: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(format_args!("{name} must be positive"));
        }
    }
}

fn toml_issue(text: &str, err: &toml::de::Error) -> ConfigError {
    let issue = Issue {
        line: err.span().map(|s| line_of_offset(text, s.start)),
        message: err.message().trim().to_string(),
    };
    if issue.message.starts_with("unknown field") || issue.message.starts_with("unknown variant") {
        ConfigError::UnknownKey(issue)
    } else {
        ConfigError::Parse(issue)
    }
}

/// Parse and validate a config file.
pub fn parse_config(text: &str) -> Result<StructureConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_issue(text, &e))?;
    let mut issues = Vec::new();

    let mut top = Checker {
        issues: &mut issues,
        line: header_line(text, "[defaults]", 0),
        context: "defaults".into(),
    };
    let d = raw.defaults.unwrap_or_default();
    let base = PhysicalDefaults::default();
    let defaults = PhysicalDefaults {
        mass_kg: d.mass_kg.unwrap_or(base.mass_kg),
        arm_half_m: d.arm_half_m.unwrap_or(base.arm_half_m),
        body_m: d.body_m.unwrap_or(base.body_m),
        k_f: d.k_f.unwrap_or(base.k_f),
        k_m: d.k_m.unwrap_or(base.k_m),
        f_max_n: d.f_max_n.unwrap_or(base.f_max_n),
    };
    top.positive("f_max_n", defaults.f_max_n);
    if let Err(e) = module_params(&defaults, None).validate() {
        top.push(e);
    }

    let mut modules = Vec::with_capacity(raw.module.len());
    if raw.module.is_empty() {
        issues.push(Issue {
            line: None,
            message: "no [[module]] entries".into(),
        });
    }
    for (i, m) in raw.module.into_iter().enumerate() {
        let mut c = Checker {
            issues: &mut issues,
            line: header_line(text, "[[module]]", i),
            context: format!("module {}", i + 1),
        };
        if let Some(entry) = module_entry(&mut c, m) {
            modules.push(entry);
        }
    }
    for (i, a) in modules.iter().enumerate() {
        if let Some(j) = modules[..i].iter().position(|b| b.cell == a.cell) {
            issues.push(Issue {
                line: header_line(text, "[[module]]", i),
                message: format!("module {} overlaps module {} at cell {:?}", i + 1, j + 1, a.cell),
            });
        }
    }

    let mut gc = Checker {
        issues: &mut issues,
        line: header_line(text, "[gains]", 0),
        context: "gains".into(),
    };
    let g = raw.gains.unwrap_or_default();
    let dg = GainsConfig::default();
    let gains = GainsConfig {
        k_r: g.k_r.map_or(dg.k_r, RawGain::diagonal),
        k_v: g.k_v.map_or(dg.k_v, RawGain::diagonal),
        k_rot: g.k_rot.map_or(dg.k_rot, RawGain::diagonal),
        k_omega: g.k_omega.map_or(dg.k_omega, RawGain::diagonal),
        k_i: g.k_i.map_or(dg.k_i, RawGain::diagonal),
    };
    if let Err(e) = gains.to_gains().validate() {
        gc.push(e);
    }

    let mut mc = Checker {
        issues: &mut issues,
        line: header_line(text, "[motor]", 0),
        context: "motor".into(),
    };
    let rm = raw.motor.unwrap_or_default();
    let motor = MotorConfig {
        time_constant_s: rm.time_constant_s,
        deadzone_n: rm.deadzone_n,
    };
    if let Some(t) = motor.time_constant_s {
        mc.positive("time_constant_s", t);
    }
    if let Some(dz) = motor.deadzone_n {
        if !(dz >= 0.0 && dz.is_finite()) {
            mc.push("deadzone_n must be non-negative");
        }
    }

    let scenario = raw.scenario.and_then(|s| {
        let mut c = Checker {
            issues: &mut issues,
            line: header_line(text, "[scenario", 0),
            context: "scenario".into(),
        };
        scenario_config(&mut c, text, s)
    });

    if !issues.is_empty() {
        return Err(ConfigError::Schema(issues));
    }
    let config = StructureConfig {
        name: raw.name,
        description: raw.description,
        defaults,
        modules,
        gains,
        motor,
        scenario,
    };
    // Remaining semantic checks go through the real constructors.
    if let Err(e) = config.build_structure() {
        return Err(ConfigError::Schema(vec![Issue {
            line: None,
            message: e.to_string(),
        }]));
    }
    if let Some(Err(e)) = config.scenario.as_ref().map(|_| config.trajectory()) {
        return Err(ConfigError::Schema(vec![Issue {
            line: header_line(text, "[scenario.trajectory]", 0),
            message: e.to_string(),
        }]));
    }
    Ok(config)
}

fn orientation(
    c: &mut Checker<'_>,
    what: &str,
    axis: Option<[f64; 3]>,
    angle: Option<f64>,
    rpy: Option<[f64; 3]>,
) -> Option<Orientation> {
    let o = match (axis, angle, rpy) {
        (Some(axis), Some(angle_rad), None) => Orientation::AxisAngle { axis, angle_rad },
        (None, None, Some(r)) => Orientation::Rpy(r),
        (None, None, None) => {
            c.push(format_args!(
                "{what} needs an axis and angle or a roll/pitch/yaw triple"
            ));
            return None;
        }
        _ => {
            c.push(format_args!(
                "{what}: give either an axis with an angle, or roll/pitch/yaw"
            ));
            return None;
        }
    };
    if let Err(e) = o.rotation() {
        c.push(format_args!("{what}: {e}"));
        return None;
    }
    Some(o)
}

fn module_entry(c: &mut Checker<'_>, m: RawModule) -> Option<ModuleEntry> {
    let yaw_rad = c.angle("yaw", m.yaw_deg, m.yaw_rad).unwrap_or(0.0);
    let eta = c.angle("eta", m.eta_deg, m.eta_rad);
    let r_angle = c.angle("r_star_angle", m.r_star_angle_deg, m.r_star_angle_rad);
    let r_rpy = c.angles3("r_star_rpy", m.r_star_rpy_deg, m.r_star_rpy_rad);
    if let Some(mass) = m.mass_kg {
        c.positive("mass_kg", mass);
    }
    c.finite("yaw", &[yaw_rad]);
    let has_r_star = m.r_star_axis.is_some() || r_angle.is_some() || r_rpy.is_some();
    let kind = match m.kind.as_str() {
        "R" | "r" => {
            if eta.is_some() || !m.rotor.is_empty() {
                c.push("R-modules take r_star_* keys only");
                return None;
            }
            ModuleKindConfig::R(orientation(c, "r_star", m.r_star_axis, r_angle, r_rpy)?)
        }
        "T" | "t" => {
            if has_r_star || !m.rotor.is_empty() {
                c.push("T-modules take eta_deg or eta_rad only");
                return None;
            }
            let Some(eta_rad) = eta else {
                c.push("T-module needs eta_deg or eta_rad");
                return None;
            };
            if !(eta_rad.abs() < std::f64::consts::FRAC_PI_2) {
                c.push("eta must satisfy |eta| < 90 degrees");
                return None;
            }
            ModuleKindConfig::T { eta_rad }
        }
        "custom" => {
            if has_r_star || eta.is_some() {
                c.push("custom modules take four [[module.rotor]] entries only");
                return None;
            }
            if m.rotor.len() != 4 {
                c.push(format_args!("custom module needs 4 rotors, found {}", m.rotor.len()));
                return None;
            }
            let mut out = Vec::with_capacity(4);
            for (j, r) in m.rotor.into_iter().enumerate() {
                let angle = c.angle("angle", r.angle_deg, r.angle_rad);
                let rpy = c.angles3("rpy", r.rpy_deg, r.rpy_rad);
                out.push(orientation(c, &format!("rotor {}", j + 1), r.axis, angle, rpy)?);
            }
            ModuleKindConfig::Custom([out[0], out[1], out[2], out[3]])
        }
        other => {
            c.push(format_args!("unknown module kind `{other}` (expected R, T or custom)"));
            return None;
        }
    };
    Some(ModuleEntry {
        kind,
        cell: m.cell,
        yaw_rad,
        mass_kg: m.mass_kg,
    })
}

fn scenario_config(c: &mut Checker<'_>, text: &str, s: RawScenario) -> Option<ScenarioConfig> {
    let dt_sim_s = s.dt_sim_s.unwrap_or(DEFAULT_DT_SIM);
    let dt_ctrl_s = s.dt_ctrl_s.unwrap_or(DEFAULT_DT_CTRL);
    let skip_s = s.skip_s.unwrap_or(DEFAULT_SKIP);
    if !(s.duration_s >= 0.0 && s.duration_s.is_finite()) {
        c.push("duration_s must be non-negative");
    }
    c.positive("dt_sim_s", dt_sim_s);
    c.positive("dt_ctrl_s", dt_ctrl_s);
    if !(skip_s >= 0.0) {
        c.push("skip_s must be non-negative");
    }
    let settings = ScenarioSettings {
        duration: s.duration_s,
        dt_ctrl: dt_ctrl_s,
        dt_sim: dt_sim_s,
        motor: MotorModel::default(),
    };
    if let Err(e) = settings.schedule() {
        c.push(e);
    }
    c.line = header_line(text, "[scenario.trajectory]", 0).or(c.line);
    c.context = "scenario.trajectory".into();
    let trajectory = trajectory_config(c, s.trajectory)?;
    Some(ScenarioConfig {
        duration_s: s.duration_s,
        dt_sim_s,
        dt_ctrl_s,
        skip_s,
        trajectory,
    })
}

fn trajectory_config(c: &mut Checker<'_>, t: RawTrajectory) -> Option<TrajectoryConfig> {
    Some(match t {
        RawTrajectory::Hover(h) => {
            let yaw = c.angle("yaw", h.yaw_deg, h.yaw_rad);
            let pitch = c.angle("pitch", h.pitch_deg, h.pitch_rad);
            let roll = c.angle("roll", h.roll_deg, h.roll_rad);
            c.finite("position_m", &h.position_m);
            TrajectoryConfig::Hover {
                position_m: h.position_m,
                attitude: HoverAttitude {
                    yaw_rad: yaw.unwrap_or(0.0),
                    pitch_rad: pitch,
                    roll_rad: roll,
                },
            }
        }
        RawTrajectory::Helix(h) => {
            let yaw0 = c.angle("yaw0", h.yaw0_deg, h.yaw0_rad);
            TrajectoryConfig::Helix {
                center_m: h.center_m,
                radius_m: h.radius_m,
                z_range_m: h.z_range_m,
                z_period_s: h.z_period_s,
                xy_period_s: h.xy_period_s,
                yaw_period_s: h.yaw_period_s,
                yaw0_rad: yaw0.unwrap_or(0.0),
            }
        }
        RawTrajectory::Rectangle(r) => {
            let pitch = c.angle("pitch", r.pitch_deg, r.pitch_rad);
            let yaw = c.angle("yaw", r.yaw_deg, r.yaw_rad);
            TrajectoryConfig::Rectangle {
                center_m: r.center_m.unwrap_or([0.0, 0.0]),
                length_m: r.length_m,
                width_m: r.width_m,
                height_m: r.height_m,
                lap_time_s: r.lap_time_s.unwrap_or(DEFAULT_LAP_TIME),
                pitch_rad: pitch.unwrap_or(0.0),
                yaw_rad: yaw.unwrap_or(0.0),
            }
        }
        RawTrajectory::AttitudeSine(s) => {
            let Some(amplitude_rad) = c.angle("amplitude", s.amplitude_deg, s.amplitude_rad) else {
                c.push("attitude_sine needs amplitude_deg or amplitude_rad");
                return None;
            };
            if !(Vector3::from(s.axis).norm() > 0.0) {
                c.push("axis must be non-zero");
                return None;
            }
            TrajectoryConfig::AttitudeSine {
                axis: s.axis,
                amplitude_rad,
                period_s: s.period_s,
                hover_point_m: s.hover_point_m,
            }
        }
        RawTrajectory::QuinticChain(q) => {
            let mut waypoints = Vec::with_capacity(q.waypoint.len());
            for w in q.waypoint {
                let rpy = c.angles3("rpy", w.rpy_deg, w.rpy_rad).unwrap_or([0.0; 3]);
                waypoints.push(WaypointConfig {
                    position_m: w.position_m,
                    rpy_rad: rpy,
                });
            }
            if q.durations_s.iter().any(|d| !(*d > 0.0)) {
                c.push("durations_s must all be positive");
            }
            TrajectoryConfig::QuinticChain {
                waypoints,
                durations_s: q.durations_s,
            }
        }
    })
}

fn module_params(d: &PhysicalDefaults, mass: Option<f64>) -> ModuleParams {
    ModuleParams {
        mass: mass.unwrap_or(d.mass_kg),
        arm_half: d.arm_half_m,
        body: Vector3::from(d.body_m),
        k_f: d.k_f,
        k_m: d.k_m,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("module {index}: {message}")]
    Module { index: usize, message: String },
    #[error(transparent)]
    Vehicle(#[from] vehicle::VehicleError),
    #[error(transparent)]
    Trajectory(#[from] trajectories::TrajectoryError),
    #[error("config has no [scenario] section")]
    NoScenario,
}

impl StructureConfig {
    pub fn module_spec(&self, index: usize) -> Result<ModuleSpec, BuildError> {
        let m = &self.modules[index];
        let params = module_params(&self.defaults, m.mass_kg);
        let err = |message: String| BuildError::Module {
            index: index + 1,
            message,
        };
        match &m.kind {
            ModuleKindConfig::R(o) => {
                let r = o.rotation().map_err(err)?;
                vehicle::make_r_module(r, params).map_err(|e| err(e.to_string()))
            }
            ModuleKindConfig::T { eta_rad } => vehicle::make_t_module(*eta_rad, params).map_err(|e| err(e.to_string())),
            ModuleKindConfig::Custom(os) => {
                let mut rs = [RotationMatrix::identity(); 4];
                for (k, o) in os.iter().enumerate() {
                    rs[k] = o.rotation().map_err(err)?;
                }
                vehicle::make_custom_module(rs, params).map_err(|e| err(e.to_string()))
            }
        }
    }

    pub fn build_structure(&self) -> Result<StructureModel, BuildError> {
        let mut placements = Vec::with_capacity(self.modules.len());
        for (i, m) in self.modules.iter().enumerate() {
            placements.push(ModulePlacement {
                module: self.module_spec(i)?,
                cell: GridCell::new(m.cell[0], m.cell[1], m.cell[2]),
                orientation: geometry::rot_principal(geometry::Axis::Z, m.yaw_rad),
            });
        }
        Ok(vehicle::assemble_structure(&placements)?)
    }

    pub fn motor_model(&self) -> MotorModel {
        MotorModel {
            f_max: self.defaults.f_max_n,
            time_constant: self.motor.time_constant_s,
            deadzone: self.motor.deadzone_n,
        }
    }

    pub fn settings(&self) -> Result<ScenarioSettings, BuildError> {
        let s = self.scenario.as_ref().ok_or(BuildError::NoScenario)?;
        Ok(ScenarioSettings {
            duration: s.duration_s,
            dt_ctrl: s.dt_ctrl_s,
            dt_sim: s.dt_sim_s,
            motor: self.motor_model(),
        })
    }

    pub fn trajectory(&self) -> Result<TrajectoryDef, BuildError> {
        let s = self.scenario.as_ref().ok_or(BuildError::NoScenario)?;
        s.trajectory.build()
    }
}

impl TrajectoryConfig {
    pub fn build(&self) -> Result<TrajectoryDef, BuildError> {
        let def = match self {
            TrajectoryConfig::Hover { position_m, attitude } => {
                let target = match (attitude.pitch_rad, attitude.roll_rad) {
                    (None, None) => AttitudeTarget::Yaw(attitude.yaw_rad),
                    (Some(pitch), None) => AttitudeTarget::YawPitch {
                        yaw: attitude.yaw_rad,
                        pitch,
                    },
                    (p, Some(roll)) => {
                        AttitudeTarget::Full(geometry::from_yaw_pitch_roll(attitude.yaw_rad, p.unwrap_or(0.0), roll))
                    }
                };
                TrajectoryDef::Hover(trajectories::Hover {
                    position: Vector3::from(*position_m),
                    attitude: target,
                })
            }
            TrajectoryConfig::Helix {
                center_m,
                radius_m,
                z_range_m,
                z_period_s,
                xy_period_s,
                yaw_period_s,
                yaw0_rad,
            } => TrajectoryDef::Helix(trajectories::Helix {
                center: *center_m,
                radius: *radius_m,
                z_min: z_range_m[0],
                z_max: z_range_m[1],
                z_period: *z_period_s,
                xy_period: *xy_period_s,
                yaw_period: *yaw_period_s,
                yaw0: *yaw0_rad,
            }),
            TrajectoryConfig::Rectangle {
                center_m,
                length_m,
                width_m,
                height_m,
                lap_time_s,
                pitch_rad,
                yaw_rad,
            } => TrajectoryDef::Rectangle(trajectories::Rectangle {
                center: *center_m,
                length: *length_m,
                width: *width_m,
                height: *height_m,
                lap_time: *lap_time_s,
                pitch: *pitch_rad,
                yaw: *yaw_rad,
            }),
            TrajectoryConfig::AttitudeSine {
                axis,
                amplitude_rad,
                period_s,
                hover_point_m,
            } => TrajectoryDef::AttitudeSine(trajectories::AttitudeSine {
                axis: Vector3::from(*axis).normalize(),
                amplitude: *amplitude_rad,
                period: *period_s,
                hover_point: Vector3::from(*hover_point_m),
            }),
            TrajectoryConfig::QuinticChain { waypoints, durations_s } => {
                let wps = waypoints
                    .iter()
                    .map(|w| Waypoint {
                        position: Vector3::from(w.position_m),
                        attitude: geometry::from_yaw_pitch_roll(w.rpy_rad[2], w.rpy_rad[1], w.rpy_rad[0]),
                    })
                    .collect();
                TrajectoryDef::QuinticChain(trajectories::QuinticChain::new(wps, durations_s.clone())?)
            }
        };
        def.validate()?;
        Ok(def)
    }
}

// ---------------------------------------------------------------------------
// Rendering

fn raw_orientation(o: &Orientation) -> (Option<[f64; 3]>, Option<f64>, Option<[f64; 3]>) {
    match *o {
        Orientation::AxisAngle { axis, angle_rad } => (Some(axis), Some(angle_rad), None),
        Orientation::Rpy(r) => (None, None, Some(r)),
    }
}

/// Canonical text of `config`; angles in radians, every section explicit.
pub fn render(config: &StructureConfig) -> String {
    let d = &config.defaults;
    let g = &config.gains;
    let modules = config
        .modules
        .iter()
        .map(|m| {
            let mut raw = RawModule {
                cell: m.cell,
                yaw_rad: Some(m.yaw_rad),
                mass_kg: m.mass_kg,
                ..RawModule::default()
            };
            match &m.kind {
                ModuleKindConfig::R(o) => {
                    raw.kind = "R".into();
                    (raw.r_star_axis, raw.r_star_angle_rad, raw.r_star_rpy_rad) = raw_orientation(o);
                }
                ModuleKindConfig::T { eta_rad } => {
                    raw.kind = "T".into();
                    raw.eta_rad = Some(*eta_rad);
                }
                ModuleKindConfig::Custom(os) => {
                    raw.kind = "custom".into();
                    raw.rotor = os
                        .iter()
                        .map(|o| {
                            let (axis, angle_rad, rpy_rad) = raw_orientation(o);
                            RawRotor {
                                axis,
                                angle_rad,
                                rpy_rad,
                                ..RawRotor::default()
                            }
                        })
                        .collect();
                }
            }
            raw
        })
        .collect();
    let scenario = config.scenario.as_ref().map(|s| RawScenario {
        duration_s: s.duration_s,
        dt_sim_s: Some(s.dt_sim_s),
        dt_ctrl_s: Some(s.dt_ctrl_s),
        skip_s: Some(s.skip_s),
        trajectory: raw_trajectory(&s.trajectory),
    });
    let raw = RawConfig {
        name: config.name.clone(),
        description: config.description.clone(),
        defaults: Some(RawDefaults {
            mass_kg: Some(d.mass_kg),
            arm_half_m: Some(d.arm_half_m),
            body_m: Some(d.body_m),
            k_f: Some(d.k_f),
            k_m: Some(d.k_m),
            f_max_n: Some(d.f_max_n),
        }),
        gains: Some(RawGains {
            k_r: Some(RawGain::Diagonal(g.k_r)),
            k_v: Some(RawGain::Diagonal(g.k_v)),
            k_rot: Some(RawGain::Diagonal(g.k_rot)),
            k_omega: Some(RawGain::Diagonal(g.k_omega)),
            k_i: Some(RawGain::Diagonal(g.k_i)),
        }),
        motor: Some(RawMotor {
            time_constant_s: config.motor.time_constant_s,
            deadzone_n: config.motor.deadzone_n,
        }),
        module: modules,
        scenario,
    };
    toml::to_string(&raw).expect("config types serialize to TOML")
}

fn raw_trajectory(t: &TrajectoryConfig) -> RawTrajectory {
    match t {
        TrajectoryConfig::Hover { position_m, attitude } => RawTrajectory::Hover(RawHover {
            position_m: *position_m,
            yaw_rad: Some(attitude.yaw_rad),
            pitch_rad: attitude.pitch_rad,
            roll_rad: attitude.roll_rad,
            ..RawHover::default()
        }),
        TrajectoryConfig::Helix {
            center_m,
            radius_m,
            z_range_m,
            z_period_s,
            xy_period_s,
            yaw_period_s,
            yaw0_rad,
        } => RawTrajectory::Helix(RawHelix {
            center_m: *center_m,
            radius_m: *radius_m,
            z_range_m: *z_range_m,
            z_period_s: *z_period_s,
            xy_period_s: *xy_period_s,
            yaw_period_s: *yaw_period_s,
            yaw0_rad: Some(*yaw0_rad),
            yaw0_deg: None,
        }),
        TrajectoryConfig::Rectangle {
            center_m,
            length_m,
            width_m,
            height_m,
            lap_time_s,
            pitch_rad,
            yaw_rad,
        } => RawTrajectory::Rectangle(RawRectangle {
            center_m: Some(*center_m),
            length_m: *length_m,
            width_m: *width_m,
            height_m: *height_m,
            lap_time_s: Some(*lap_time_s),
            pitch_rad: Some(*pitch_rad),
            yaw_rad: Some(*yaw_rad),
            ..RawRectangle::default()
        }),
        TrajectoryConfig::AttitudeSine {
            axis,
            amplitude_rad,
            period_s,
            hover_point_m,
        } => RawTrajectory::AttitudeSine(RawSine {
            axis: *axis,
            amplitude_rad: Some(*amplitude_rad),
            amplitude_deg: None,
            period_s: *period_s,
            hover_point_m: *hover_point_m,
        }),
        TrajectoryConfig::QuinticChain { waypoints, durations_s } => RawTrajectory::QuinticChain(RawChain {
            durations_s: durations_s.clone(),
            waypoint: waypoints
                .iter()
                .map(|w| RawWaypoint {
                    position_m: w.position_m,
                    rpy_rad: Some(w.rpy_rad),
                    rpy_deg: None,
                })
                .collect(),
        }),
    }
}
