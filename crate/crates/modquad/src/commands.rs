//! The `analyze`, `simulate` and `metrics` subcommands.
//!
//! Each command has a library form returning structured data and a `run_*`
//! form producing printable output plus a process exit code.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use log::{debug, info};
use modquad_core::actuation::{analyze_structure, ActuationAnalysis, ActuationError};
use modquad_core::simulation::{run_scenario, SimulationError, Telemetry};
use modquad_core::vehicle::StructureModel;
use serde::Serialize;

use crate::config::{parse_config, BuildError, ConfigError, StructureConfig};
use crate::metrics::{self, MetricsReport, Reconstruction, ReconstructionError};
use crate::report::AnalysisReport;
use crate::telemetry::{self, TelemetryError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_INAPPLICABLE: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

/// Default start of the metrics window (s).
pub const DEFAULT_SKIP_S: f64 = crate::config::DEFAULT_SKIP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Actuation(#[from] ActuationError),
    #[error("inapplicable design: {reason}")]
    Inapplicable {
        reason: String,
        report: Box<AnalysisReport>,
    },
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("simulation failed: {0}")]
    Simulation(SimulationError),
    #[error("simulation diverged: {error}; partial telemetry written to {}", .output.display())]
    Diverged { error: SimulationError, output: PathBuf },
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Io { .. } => EXIT_FAILURE,
            CommandError::Config(_)
            | CommandError::Build(_)
            | CommandError::Telemetry(TelemetryError::Malformed(_)) => EXIT_SCHEMA,
            CommandError::Telemetry(TelemetryError::Io(_)) => EXIT_FAILURE,
            CommandError::Actuation(_) | CommandError::Inapplicable { .. } => EXIT_INAPPLICABLE,
            CommandError::Simulation(e) => match e {
                SimulationError::InvalidTiming(_) | SimulationError::Setup(_) => EXIT_SCHEMA,
                _ => EXIT_DIVERGENCE,
            },
            CommandError::Diverged { .. } => EXIT_DIVERGENCE,
        }
    }
}

impl From<ReconstructionError> for CommandError {
    fn from(e: ReconstructionError) -> Self {
        match e {
            ReconstructionError::Build(b) => CommandError::Build(b),
            ReconstructionError::Actuation(a) => CommandError::Actuation(a),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_config(path: &Path) -> Result<StructureConfig, CommandError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    Ok(parse_config(&text)?)
}

/// Structure, its analysis and the printable report.
pub struct Analyzed {
    pub structure: StructureModel,
    pub analysis: ActuationAnalysis,
    pub report: AnalysisReport,
}

/// Analyze a config; inapplicable designs are returned, not rejected.
pub fn analyze(config: &StructureConfig) -> Result<Analyzed, CommandError> {
    let structure = config.build_structure()?;
    let analysis = analyze_structure(&structure, config.defaults.f_max_n)?;
    let report = AnalysisReport::new(config.name.clone(), &structure, &analysis, config.defaults.f_max_n);
    debug!("analysis: dof {} applicable {}", report.dof, report.applicable());
    Ok(Analyzed {
        structure,
        analysis,
        report,
    })
}

pub fn cmd_analyze(path: &Path) -> Result<AnalysisReport, CommandError> {
    let config = load_config(path)?;
    let analyzed = analyze(&config)?;
    match analyzed.report.inapplicable_reason() {
        Some(reason) => Err(CommandError::Inapplicable {
            reason,
            report: Box::new(analyzed.report),
        }),
        None => Ok(analyzed.report),
    }
}

/// Outcome of a closed-loop run.
pub struct SimulationRun {
    pub analyzed: Analyzed,
    pub telemetry: Telemetry,
    pub metrics: MetricsReport,
}

/// Run the config's scenario in memory.
pub fn simulate(config: &StructureConfig) -> Result<SimulationRun, CommandError> {
    let settings = config.settings()?;
    let trajectory = config.trajectory()?;
    let analyzed = analyze(config)?;
    if let Some(reason) = analyzed.report.inapplicable_reason() {
        return Err(CommandError::Inapplicable {
            reason,
            report: Box::new(analyzed.report),
        });
    }
    let skip = config.scenario.as_ref().map_or(0.0, |s| s.skip_s);
    info!(
        "simulating {} s at dt_ctrl {} s, dt_sim {} s",
        settings.duration, settings.dt_ctrl, settings.dt_sim
    );
    let telemetry = run_scenario(
        &analyzed.structure,
        &analyzed.analysis,
        &config.gains.to_gains(),
        &trajectory,
        &settings,
    )
    .map_err(CommandError::Simulation)?;
    let metrics = MetricsReport::from_telemetry(&telemetry, skip, false);
    Ok(SimulationRun {
        analyzed,
        telemetry,
        metrics,
    })
}

fn write_csv(path: &Path, telemetry: &Telemetry) -> Result<(), CommandError> {
    let file = File::create(path).map_err(io_error(path))?;
    telemetry::write_telemetry(BufWriter::new(file), telemetry)?;
    Ok(())
}

/// Simulate and write the telemetry CSV. On divergence the partial telemetry
/// is still written and the error is returned.
pub fn cmd_simulate(path: &Path, output: &Path) -> Result<MetricsReport, CommandError> {
    let config = load_config(path)?;
    match simulate(&config) {
        Ok(run) => {
            write_csv(output, &run.telemetry)?;
            info!("wrote {} rows to {}", run.telemetry.samples.len(), output.display());
            Ok(run.metrics)
        }
        Err(CommandError::Simulation(error)) => match error.partial_telemetry() {
            Some(partial) => {
                write_csv(output, partial)?;
                Err(CommandError::Diverged {
                    error,
                    output: output.to_path_buf(),
                })
            }
            None => Err(CommandError::Simulation(error)),
        },
        Err(e) => Err(e),
    }
}

pub fn cmd_metrics(csv: &Path, skip_s: f64, config: Option<&Path>) -> Result<MetricsReport, CommandError> {
    let reconstruction = match config {
        Some(p) => Some(Reconstruction::from_config(&load_config(p)?)?),
        None => None,
    };
    let file = File::open(csv).map_err(io_error(csv))?;
    let rows = telemetry::read_rows(BufReader::new(file))?;
    Ok(metrics::compute(&rows, skip_s, reconstruction.as_ref()))
}

/// Text to print and the exit code for one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            stdout,
            stderr: String::new(),
            code: EXIT_OK,
        }
    }

    fn error(label: &Path, e: &CommandError) -> Self {
        Self {
            stdout: String::new(),
            stderr: format!("error: {}: {e}\n", label.display()),
            code: e.exit_code(),
        }
    }
}

fn render<T: Serialize + std::fmt::Display>(value: &T, format: Format) -> String {
    match format {
        Format::Text => value.to_string(),
        Format::Json => serde_json::to_string_pretty(value).expect("reports serialize") + "\n",
    }
}

pub fn run_analyze(path: &Path, format: Format) -> Outcome {
    match cmd_analyze(path) {
        Ok(report) => Outcome::ok(render(&report, format)),
        Err(CommandError::Inapplicable { reason, report }) => Outcome {
            stdout: render(report.as_ref(), format),
            stderr: format!("error: {}: inapplicable design: {reason}\n", path.display()),
            code: EXIT_INAPPLICABLE,
        },
        Err(e) => Outcome::error(path, &e),
    }
}

pub fn run_simulate(path: &Path, output: &Path, format: Format) -> Outcome {
    match cmd_simulate(path, output) {
        Ok(m) => {
            let mut stdout = render(&m, format);
            if format == Format::Text {
                stdout = format!(
                    "{}: telemetry written to {}\n{stdout}",
                    path.display(),
                    output.display()
                );
            }
            Outcome::ok(stdout)
        }
        Err(e) => Outcome::error(path, &e),
    }
}

pub fn run_metrics(csv: &Path, skip_s: f64, config: Option<&Path>, format: Format) -> Outcome {
    match cmd_metrics(csv, skip_s, config) {
        Ok(m) => Outcome::ok(render(&m, format)),
        Err(e) => Outcome::error(csv, &e),
    }
}

/// Output file for `config` when simulating several configs into `dir`.
pub fn batch_output(dir: &Path, config: &Path) -> PathBuf {
    let stem = config
        .file_stem()
        .map_or_else(|| "telemetry".into(), |s| s.to_os_string());
    dir.join(stem).with_extension("csv")
}
