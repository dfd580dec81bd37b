use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use netmimo::report::{outage_csv, position_csv, trace_lines};
use netmimo::scenario::{parse_snr_range, ScenarioFile};
use netmimo::sim::{position_sweep, run_with, RunOptions, Scenario};
use netmimo::validate::run_suite;
use netmimo::Error;

#[derive(Parser)]
#[command(name = "netmimo", version, about = "Outage simulation for cooperative multi-cell MISO downlinks")]
struct Cli {
    /// Increase log detail (-v info, -vv debug and DDS traces).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outage probability versus SNR for every strategy in the scenario.
    Outage(RunArgs),
    /// Outage versus the position of UT 1 on a 1-D topology.
    PositionSweep(RunArgs),
    /// Outage with distributed diversity scheduling, plus the protocol trace.
    Dds(RunArgs),
    /// Run a built-in validation suite.
    Validate {
        /// lemma1, kkt, eq22, oracle or dds
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// SNR grid as start:stop:step in dB.
    #[arg(long)]
    snr: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 1 when the run produced warnings.
    #[arg(long)]
    strict: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidInput(_) | Error::InvalidTopology(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(args: &RunArgs) -> Result<(ScenarioFile, Scenario), Failure> {
    let mut file = ScenarioFile::load(&args.config)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(trials) = args.trials {
        file.trials = trials;
    }
    if let Some(spec) = &args.snr {
        file.snr_db = parse_snr_range(spec)?;
    }
    let sc = file.scenario()?;
    Ok((file, sc))
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(pool.install(f))
}

fn finish(warnings: usize, strict: bool) -> Result<ExitCode, Failure> {
    if strict && warnings > 0 {
        return Err(Failure::Runtime(format!("{warnings} warning(s) under --strict")));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_outage(args: &RunArgs) -> Result<ExitCode, Failure> {
    let (_, sc) = load(args)?;
    let report = with_threads(args.threads, || run_with(&sc, RunOptions::default()))??;
    emit(args.out.as_deref(), "outage.csv", &outage_csv(&report, sc.served))?;
    finish(report.warnings.len(), args.strict)
}

fn cmd_position_sweep(args: &RunArgs) -> Result<ExitCode, Failure> {
    let (file, sc) = load(args)?;
    let topo = file
        .topology
        .clone()
        .ok_or_else(|| Failure::Config("position-sweep needs a `topology`".into()))?;
    let positions = file
        .positions
        .clone()
        .ok_or_else(|| Failure::Config("position-sweep needs `positions`".into()))?;
    for x in positions.iter().filter(|x| !(0.0..=2.0).contains(*x)) {
        warn!("UT 1 position {x} is outside [0, 2]");
    }
    let points = with_threads(args.threads, || position_sweep(&sc, &topo, &positions))??;
    emit(args.out.as_deref(), "position.csv", &position_csv(&points, sc.served))?;
    finish(points.iter().map(|p| p.report.warnings.len()).sum(), args.strict)
}

fn cmd_dds(args: &RunArgs, verbose: u8) -> Result<ExitCode, Failure> {
    let (file, sc) = load(args)?;
    if !sc.strategies.iter().any(|s| s.dds) {
        return Err(Failure::Config("dds needs at least one strategy with \"dds\": true".into()));
    }
    let opts = RunOptions {
        trace_rounds: if verbose >= 2 { file.trace_rounds } else { 0 },
    };
    let report = with_threads(args.threads, || run_with(&sc, opts))??;
    emit(args.out.as_deref(), "dds.csv", &outage_csv(&report, sc.served))?;
    if verbose >= 2 {
        let trace = trace_lines(&report.trace);
        match args.out.as_deref() {
            Some(dir) => emit(Some(dir), "dds_trace.log", &trace)?,
            None => eprint!("{trace}"),
        }
    }
    finish(report.warnings.len(), args.strict)
}

fn cmd_validate(suite: &str, seed: u64) -> Result<ExitCode, Failure> {
    let report = run_suite(suite, seed)?;
    print!("{}", report.summary());
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Outage(a) => cmd_outage(a),
        Command::PositionSweep(a) => cmd_position_sweep(a),
        Command::Dds(a) => cmd_dds(a, cli.verbose),
        Command::Validate { suite, seed } => cmd_validate(suite, *seed),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
