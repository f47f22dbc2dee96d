use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modquad::commands::{self, Format, Outcome, EXIT_FAILURE};
use rayon::prelude::*;

/// Analyze and simulate modular multirotor structures.
#[derive(Debug, Parser)]
#[command(name = "modquad", version)]
struct Cli {
    /// Number of inputs processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Reserved; the simulator is deterministic and draws no random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ranks, controllable DOF, F-frame, ellipsoid and applicability.
    Analyze {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Run each config's scenario and write telemetry CSV.
    Simulate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output file, or a directory when several configs are given.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Tracking-error statistics of telemetry files.
    Metrics {
        #[arg(required = true)]
        telemetry: Vec<PathBuf>,
        /// Start of the evaluation window (s).
        #[arg(long, default_value_t = commands::DEFAULT_SKIP_S)]
        skip_s: f64,
        /// Config that produced the telemetry; enables exact attitude errors.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run_all<T: Sync>(jobs: usize, inputs: &[T], f: impl Fn(&T) -> Outcome + Sync) -> Vec<Outcome> {
    if jobs <= 1 || inputs.len() <= 1 {
        return inputs.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| inputs.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("could not start {jobs} worker threads ({e}); running sequentially");
            inputs.iter().map(f).collect()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MODQUAD_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(seed) = cli.seed {
        log::info!("--seed {seed} accepted; no randomness is used");
    }
    let format = cli.format;
    let outcomes = match &cli.command {
        Command::Analyze { configs } => run_all(cli.jobs, configs, |p| commands::run_analyze(p, format)),
        Command::Simulate { configs, output } => {
            if configs.len() > 1 {
                if let Err(e) = std::fs::create_dir_all(output) {
                    eprintln!("error: {}: {e}", output.display());
                    return ExitCode::from(EXIT_FAILURE as u8);
                }
                run_all(cli.jobs, configs, |p| {
                    commands::run_simulate(p, &commands::batch_output(output, p), format)
                })
            } else {
                vec![commands::run_simulate(&configs[0], output, format)]
            }
        }
        Command::Metrics {
            telemetry,
            skip_s,
            config,
        } => run_all(cli.jobs, telemetry, |p| {
            commands::run_metrics(p, *skip_s, config.as_deref(), format)
        }),
    };

    let mut stdout = std::io::stdout().lock();
    let mut code = 0;
    for o in &outcomes {
        let _ = stdout.write_all(o.stdout.as_bytes());
        eprint!("{}", o.stderr);
        code = code.max(o.code);
    }
    ExitCode::from(code as u8)
}
