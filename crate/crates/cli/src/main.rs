//! `ntklab`: run the laboratory's experiments from JSON configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ntk_lab::experiments::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentResult, Provenance};
use ntk_lab::{Error, ErrorClass};

const EXIT_IO: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ASSERT: u8 = 4;

#[derive(Parser)]
#[command(name = "ntklab", version, about = "Neural tangent kernel experiments on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue decay of empirical and limit NTKs.
    Eigendecay(RunArgs),
    /// Spectral distance between empirical NTKs of two seeds.
    Noise(RunArgs),
    /// Width dependence of the empirical-to-limit NTK gap.
    Concentration(RunArgs),
    /// Hölder size of NTK changes under weight perturbations.
    Holder(RunArgs),
    /// Gradient-flow training with envelope and width-law diagnostics.
    Train(RunArgs),
    /// Numerical check of the coupled ODE bound.
    Odebound(RunArgs),
    /// Tabulate a limit kernel and its eigenvalues.
    KernelTable(RunArgs),
    /// Parse and validate a config without running it.
    ValidateConfig(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set params.m=512`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory receiving every output file.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, replacing the config's.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Exit with status 4 when any check of the run fails.
    #[arg(long = "assert")]
    assert_checks: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn exit_for(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => EXIT_INPUT,
        ErrorClass::Numerical => EXIT_NUMERICAL,
        ErrorClass::Io => EXIT_IO,
    }
}

fn load_config(kind: ExperimentKind, path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, Error> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::json!({"schema_version": ntk_lab::experiments::SCHEMA_VERSION, "experiment": kind}),
    };
    for o in overrides {
        ntk_lab::experiments::apply_override(&mut doc, o)?;
    }
    let cfg = ExperimentConfig::from_value(doc)?;
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config is for experiment '{}', not '{}'",
            cfg.experiment, kind
        )));
    }
    Ok(cfg)
}

fn report(result: &ExperimentResult) {
    for c in &result.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> u8 {
    let mut cfg = match load_config(kind, args.config.as_deref(), &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return EXIT_INPUT;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_IO;
        }
    };
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let clock = Instant::now();
    let result = match pool.install(|| run_experiment(&cfg)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let provenance = Provenance::new(&result, started_at, clock.elapsed().as_secs_f64());
    match result.write(&args.out, &provenance) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
    }
    report(&result);
    if let Some(f) = &result.failure {
        eprintln!("error: numerical failure, outputs are partial: {f}");
        return EXIT_NUMERICAL;
    }
    if args.assert_checks && !result.all_passed() {
        eprintln!("error: {} check(s) failed", result.checks.iter().filter(|c| !c.passed).count());
        return EXIT_ASSERT;
    }
    0
}

fn validate(args: ValidateArgs) -> u8 {
    match ExperimentConfig::load(&args.config, &args.overrides) {
        Ok(cfg) => {
            println!("{} config is valid (hash {})", cfg.experiment, cfg.hash());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Eigendecay(a) => run(ExperimentKind::Eigendecay, a),
        Command::Noise(a) => run(ExperimentKind::Noise, a),
        Command::Concentration(a) => run(ExperimentKind::Concentration, a),
        Command::Holder(a) => run(ExperimentKind::Holder, a),
        Command::Train(a) => run(ExperimentKind::Train, a),
        Command::Odebound(a) => run(ExperimentKind::Odebound, a),
        Command::KernelTable(a) => run(ExperimentKind::KernelTable, a),
        Command::ValidateConfig(a) => validate(a),
    };
    ExitCode::from(code)
}
