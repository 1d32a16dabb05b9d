use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinetic_core::scenario::{run_scenario, RunOptions, ScenarioConfig, ScenarioKind};
use kinetic_core::Error;

#[derive(Parser)]
#[command(name = "kinetic", version, about = "Spectral and discrete-velocity Boltzmann solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run(Common),
    /// Precompute (and cache) the kernel modes of a grid.
    BuildKernelModes(Common),
    /// Run a convergence study.
    Convergence(Common),
    /// Sweep epsilon at fixed dt for each configured stepper.
    ApSweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `output.dir`, else `out/<config stem>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; the rayon default when absent.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override resource guards.
    #[arg(long)]
    force: bool,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECKS: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn out_dir(args: &Common, cfg: &ScenarioConfig) -> PathBuf {
    args.out_dir.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| {
        let stem = args.config.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
        Path::new("out").join(stem)
    })
}

fn execute(kind: Option<ScenarioKind>, args: &Common) -> Result<bool, Error> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(kind) = kind {
        if kind != ScenarioKind::KernelModeBuild && cfg.kind != kind {
            return Err(Error::Config {
                field: "kind".into(),
                reason: format!("this subcommand needs kind = {:?}, got {:?}", kind, cfg.kind),
            });
        }
        cfg.kind = kind;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(Error::Config { field: "--threads".into(), reason: "must be at least 1".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config { field: "--threads".into(), reason: e.to_string() })?;
    }
    let dir = out_dir(args, &cfg);
    let report = run_scenario(&cfg, &dir, RunOptions { force: args.force })?;
    for c in &report.checks {
        println!("{} {} = {:.6e} (limit {:.6e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
    }
    println!("wrote {}", dir.display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Run(a) => (None, a),
        Command::BuildKernelModes(a) => (Some(ScenarioKind::KernelModeBuild), a),
        Command::Convergence(a) => (Some(ScenarioKind::ConvergenceStudy), a),
        Command::ApSweep(a) => (Some(ScenarioKind::ApSweep), a),
    };
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECKS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
