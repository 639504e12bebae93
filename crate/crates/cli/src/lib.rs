//! Command-line front end: configuration, dispatch, reports and artifacts.

pub mod commands;
pub mod config;
pub mod emit;
pub mod report;

use clap::{Args, Parser, Subcommand};
use commands::RunError;
use config::{CommandName, ScenarioConfig};
use emit::Artifacts;
use report::RunReport;
use std::path::PathBuf;
use std::time::Instant;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "avglemma", version, about = "Velocity averaging experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Fit the sublevel exponent of a field.
    FitAlpha(RunArgs),
    /// Largest order for which the derivative non-degeneracy holds.
    GammaOpt(RunArgs),
    /// Oscillatory integral decay against an explicit bound.
    Decay(RunArgs),
    /// Sublevel measures against the derivative lower bound.
    MeasureBounds(RunArgs),
    /// Averaging-gain certificate for a kinetic pair.
    AveragingGain(RunArgs),
    /// Reconstruction of a density from one velocity slice.
    ReconstructTest(RunArgs),
    /// Characteristics change of variables for a smooth force.
    CharacteristicsTest(RunArgs),
    /// Derivative bounds of the cutoff multiplier.
    MultiplierCheck(RunArgs),
    /// Regularity exponents of the two approaches.
    CompareExponents(RunArgs),
    /// Print the configuration JSON schema.
    Schema,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; AVGLEMMA_THREADS overrides it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Cmd {
    fn split(self) -> Option<(CommandName, RunArgs)> {
        Some(match self {
            Cmd::FitAlpha(a) => (CommandName::FitAlpha, a),
            Cmd::GammaOpt(a) => (CommandName::GammaOpt, a),
            Cmd::Decay(a) => (CommandName::Decay, a),
            Cmd::MeasureBounds(a) => (CommandName::MeasureBounds, a),
            Cmd::AveragingGain(a) => (CommandName::AveragingGain, a),
            Cmd::ReconstructTest(a) => (CommandName::ReconstructTest, a),
            Cmd::CharacteristicsTest(a) => (CommandName::CharacteristicsTest, a),
            Cmd::MultiplierCheck(a) => (CommandName::MultiplierCheck, a),
            Cmd::CompareExponents(a) => (CommandName::CompareExponents, a),
            Cmd::Schema => return None,
        })
    }
}

fn env_threads() -> Result<Option<usize>, String> {
    match std::env::var("AVGLEMMA_THREADS") {
        Ok(s) => s.trim().parse::<usize>().map(Some).map_err(|_| format!("AVGLEMMA_THREADS: not a thread count: {s:?}")),
        Err(_) => Ok(None),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let Some((command, args)) = cli.command.split() else {
        println!("{}", serde_json::to_string_pretty(&config::schema()).expect("schema serializes"));
        return EXIT_PASS;
    };
    run_command(command, &args)
}

fn run_command(command: CommandName, args: &RunArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    let cfg = match ScenarioConfig::from_toml(&text).and_then(|c| c.validate(command).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let threads = match env_threads() {
        Ok(t) => t.or(args.threads).or(cfg.threads).unwrap_or(1),
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if threads == 0 {
        eprintln!("config error: threads: must be positive");
        return EXIT_CONFIG;
    }
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(command.as_str()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_IO;
        }
    };

    let mut report = RunReport::new(command.as_str(), cfg.hash(command), cfg.seed);
    let mut artifacts = Artifacts::default();
    let start = Instant::now();
    let outcome = pool.install(|| commands::execute(command, &cfg, &mut report, &mut artifacts));
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(()) => {}
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
        Err(RunError::Core(avglemma_core::Error::InvalidArgument(msg))) => {
            eprintln!("config error: {msg}");
            return EXIT_CONFIG;
        }
        Err(RunError::Core(e)) => {
            report.error = Some(e.to_string());
        }
    }
    report.artifacts = artifacts.file_names(cfg.output.plots);
    report.settle();
    if let Err(e) = emit::emit(&dir, &report, &artifacts, cfg.output.plots).and_then(|_| emit::emit_timing(&dir, seconds, threads)) {
        eprintln!("io error: {e}");
        return EXIT_IO;
    }
    for c in &report.checks {
        println!(
            "{} {} = {:.6e} {} {:.6e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            serde_json::to_value(c.relation).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            c.limit
        );
    }
    if let Some(e) = &report.error {
        println!("ERROR {e}");
    }
    println!("{} -> {}", if report.passed { "passed" } else { "failed" }, dir.join("report.json").display());
    if report.passed {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}
