use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use effcov::error::{Error, ErrorKind};
use effcov::estimators::Method;
use effcov::io::{cmd_aggregate, cmd_estimate, cmd_simulate, EstimateConfig, InputKindArg, OmegaArg, SimulateConfig};
use effcov::simlab::PRESETS;

/// Treatment-effect covariance and proxy-metric weights from many weak A/B experiments.
#[derive(Parser)]
#[command(name = "effcov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKindCli {
    Auto,
    Units,
    Aggregates,
}

#[derive(Subcommand)]
enum Command {
    /// Collapse a unit-level file into per-(experiment, arm) sufficient statistics.
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        primary_metric: Option<String>,
    },
    /// Estimate the effect covariance and proxy weights from a unit or aggregate file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        input_kind: InputKindCli,
        /// naive, jackknife, limlk, tc or kclass.
        #[arg(long)]
        method: Method,
        /// Noise covariance: a matrix file, or `within` to estimate it from the input.
        #[arg(long)]
        omega: Option<OmegaArg>,
        /// Expected units per experiment; the run fails if the data disagree.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        primary_metric: Option<String>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a Monte Carlo study and write tables and scatter data.
    Simulate {
        /// Preset name (see `scenarios`) or path to a TOML scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Units per experiment.
        #[arg(long)]
        n: Option<usize>,
        /// Number of experiments.
        #[arg(long)]
        experiments: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "naive,jackknife,limlk,tc")]
        methods: Vec<Method>,
        #[arg(long)]
        out: PathBuf,
        /// Use K = 1000, n = 10000, R = 5000.
        #[arg(long)]
        full_scale: bool,
        /// Also write replication 0 as a unit-level file.
        #[arg(long)]
        write_panel: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in scenarios.
    Scenarios,
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidInput("--threads must be at least 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Aggregate { input, out, primary_metric } => {
            let s = cmd_aggregate(&input, &out, primary_metric.as_deref())?;
            eprintln!(
                "aggregated {} rows: K = {}, G = {}, n = {}",
                s.rows, s.num_experiments, s.num_metrics, s.units_per_experiment
            );
        }
        Command::Estimate { input, input_kind, method, omega, n, primary_metric, out, format, threads } => {
            let cfg = EstimateConfig {
                input,
                input_kind: match input_kind {
                    InputKindCli::Auto => InputKindArg::Auto,
                    InputKindCli::Units => InputKindArg::Units,
                    InputKindCli::Aggregates => InputKindArg::Aggregates,
                },
                method,
                omega,
                n,
                primary_metric,
            };
            let report = with_threads(threads, || cmd_estimate(&cfg))??;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let body = match format {
                Format::Json => report.to_json(),
                Format::Text => report.render_text(),
            };
            if let Some(path) = out {
                std::fs::write(path, &body)?;
            }
            print!("{body}");
        }
        Command::Simulate {
            scenario,
            replications,
            seed,
            n,
            experiments,
            methods,
            out,
            full_scale,
            write_panel,
            threads,
        } => {
            let cfg = SimulateConfig {
                scenario,
                replications,
                seed,
                n,
                num_experiments: experiments,
                methods,
                out,
                full_scale,
                write_panel,
            };
            if full_scale {
                eprintln!("warning: full-scale runs can take hours");
            }
            let output = with_threads(threads, || cmd_simulate(&cfg))??;
            for w in &output.warnings {
                eprintln!("warning: {w}");
            }
            for s in &output.result.estimators {
                let mean = s.mean.as_ref().map(|m| format!("{:?}", m.as_slice())).unwrap_or_else(|| "-".into());
                println!("{:<10} successes {:>6}  failures {:>6}  mean {mean}", s.estimator, s.successes, s.failures);
            }
            for f in &output.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Scenarios => {
            for p in PRESETS {
                println!("{:<24} {}", p.name, p.summary);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(ErrorKind::Validation.exit_code() as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
