use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coopcache::cli::{
    emit_results, format_number, load_config, run_experiment, Experiment, OutputFormat,
};
use coopcache::optimizer::solve_p1;
use coopcache::Error;

const WORKERS_ENV: &str = "COOPCACHE_WORKERS";

#[derive(Parser)]
#[command(
    name = "coopcache",
    version,
    about = "Clustered D2D caching with cooperative transmission"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result table.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo trials per point; 0 skips simulation.
        #[arg(long)]
        trials: Option<u64>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Print the optimized caching vector at the configured operating point.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Compute(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => Failure::Compute(e),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Usage(format!(
            "{WORKERS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot start {n} workers: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_workers()?;
    match cli.command {
        Command::Run {
            config,
            experiment,
            seed,
            trials,
            out,
            format,
        } => {
            let mut spec = load_config(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            if let Some(e) = experiment {
                spec = spec.with_experiment(e);
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            spec.validate().map_err(Failure::Usage)?;
            let table = run_experiment(&spec)?;
            let path = out.or(spec.output);
            let format = format.or(spec.format).unwrap_or(OutputFormat::Csv);
            emit_results(&table, format, path.as_deref())
                .map_err(|e| Failure::Io(format!("cannot write results: {e}")))
        }
        Command::Solve { config } => {
            let spec = load_config(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            let sol = solve_p1(&spec.library, &spec.network)?;
            println!("objective {}", format_number(sol.objective));
            println!("multiplier {}", format_number(sol.multiplier));
            println!("entropy {}", format_number(sol.policy.entropy()));
            println!("file,c,case");
            for (m, (c, case)) in sol
                .policy
                .probs()
                .iter()
                .zip(&sol.diagnostics.cases)
                .enumerate()
            {
                println!("{},{},{}", m + 1, format_number(*c), case);
            }
            for w in &sol.diagnostics.concavity_warnings {
                eprintln!(
                    "warning: file {} at c = {} lies where the objective is convex",
                    w.file + 1,
                    format_number(w.c)
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            let diag = serde_json::json!({ "error": "numerical", "message": e.to_string() });
            eprintln!("{diag}");
            ExitCode::from(3)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
