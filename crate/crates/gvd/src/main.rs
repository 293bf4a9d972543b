use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gvd::io::{self, to_json, FormatError, LoadedInstance, Membership, ResultFile, UnitId};
use gvd::run::{self, RunError, RunOptions};
use gvd_core::pipeline::Approach;

/// Balanced clustering supported by generalized Voronoi diagrams.
#[derive(Parser, Debug)]
#[command(name = "gvd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance file and report every problem found.
    Validate { instance: PathBuf },
    /// Choose sites and solve the fractional assignment, without rounding.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Round the assignments of a result file.
    Round {
        instance: PathBuf,
        result: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Recompute the evaluation summary of a result file.
    Evaluate {
        instance: PathBuf,
        result: PathBuf,
        /// Balance tolerance to check against.
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Site choice, solve, rounding and evaluation in one go.
    Pipeline {
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory for session snapshots.
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// power, anisotropic, shortest-path or awvd.
    #[arg(long, default_value = "power")]
    approach: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Balance tolerance the result is checked against.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Balanced k-means iterations.
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// k-means restarts.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Local search radius R: candidate sites are the R nearest units.
    #[arg(long, default_value_t = 50)]
    neighborhood: usize,
    /// Local search rounds.
    #[arg(long, default_value_t = 100)]
    local_search_iterations: usize,
    /// Force unit UNIT into cluster CLUSTER (0-based), as CLUSTER:UNIT.
    #[arg(long, value_name = "CLUSTER:UNIT")]
    pin: Vec<String>,
    /// Keep unit UNIT out of cluster CLUSTER, as CLUSTER:UNIT.
    #[arg(long, value_name = "CLUSTER:UNIT")]
    exclude: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Geojson,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn usage(message: String) -> RunError {
    RunError::Format(FormatError::Invalid {
        origin: "arguments".to_string(),
        problems: vec![message],
    })
}

fn membership(loaded: &LoadedInstance, text: &str, flag: &str) -> Result<Membership, RunError> {
    let (cluster, unit) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("--{flag} {text}: expected CLUSTER:UNIT")))?;
    let cluster: usize = cluster
        .parse()
        .map_err(|_| usage(format!("--{flag} {text}: cluster must be a non-negative integer")))?;
    let unit = match loaded.resolve_unit(unit) {
        Some(j) => loaded.ids[j].clone(),
        None => UnitId::from(unit),
    };
    Ok(Membership { unit, cluster })
}

fn run_options(loaded: &LoadedInstance, args: &RunArgs) -> Result<(Approach, RunOptions), RunError> {
    let approach: Approach = args.approach.parse().map_err(|e: gvd_core::Error| usage(e.to_string()))?;
    let pins = args.pin.iter().map(|p| membership(loaded, p, "pin")).collect::<Result<_, _>>()?;
    let exclusions = args.exclude.iter().map(|p| membership(loaded, p, "exclude")).collect::<Result<_, _>>()?;
    Ok((
        approach,
        RunOptions {
            seed: args.seed,
            max_iter: args.max_iter,
            restarts: args.restarts,
            neighborhood: args.neighborhood,
            local_search_iterations: args.local_search_iterations,
            epsilon: args.epsilon,
            pins,
            exclusions,
        },
    ))
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), RunError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| {
            RunError::Format(FormatError::Io {
                origin: path.display().to_string(),
                source,
            })
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_result(loaded: &LoadedInstance, result: &ResultFile, output: &OutputArgs) -> Result<(), RunError> {
    let text = match output.format {
        Format::Json => to_json(result),
        Format::Csv => io::to_csv(result)?,
        Format::Geojson => to_json(&io::to_geojson(loaded, result)?),
    };
    emit(&text, &output.out)
}

/// Writes the result, then fails with "infeasible" if it misses the balance target.
fn finish(loaded: &LoadedInstance, result: &ResultFile, output: &OutputArgs) -> Result<(), RunError> {
    write_result(loaded, result, output)?;
    let s = &result.summary;
    if s.integer && !s.epsilon_balanced {
        return Err(RunError::Unprocessable(gvd_core::Error::Infeasible(format!(
            "achieved deviation {} exceeds epsilon {}",
            s.epsilon_achieved, s.epsilon
        ))));
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Validate { instance } => {
            let loaded = io::load_instance(&instance)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            let i = &loaded.instance;
            println!(
                "ok: {} units, {} clusters, {}",
                i.m(),
                i.k(),
                if i.graph().is_some() { "with graph" } else { "no graph" }
            );
            Ok(())
        }
        Command::Solve { instance, run, output } => {
            let loaded = io::load_instance(&instance)?;
            let (approach, options) = run_options(&loaded, &run)?;
            let result = run::run_solve(&loaded, approach, &options)?;
            write_result(&loaded, &result, &output)
        }
        Command::Round { instance, result, output } => {
            let loaded = io::load_instance(&instance)?;
            let previous = io::load_result(&result)?;
            let rounded = run::run_round(&loaded, &previous)?;
            finish(&loaded, &rounded, &output)
        }
        Command::Evaluate {
            instance,
            result,
            epsilon,
            output,
        } => {
            let loaded = io::load_instance(&instance)?;
            let previous = io::load_result(&result)?;
            let summary = run::evaluate(&loaded, &previous, epsilon)?;
            let text = match output.format {
                Format::Json => to_json(&summary),
                Format::Csv => io::summary_csv(&summary)?,
                Format::Geojson => return Err(usage("evaluate writes json or csv".to_string())),
            };
            emit(&text, &output.out)
        }
        Command::Pipeline { instance, run, output } => {
            let loaded = io::load_instance(&instance)?;
            let (approach, options) = run_options(&loaded, &run)?;
            let result = run::run_pipeline(&loaded, approach, &options)?;
            finish(&loaded, &result, &output)
        }
        Command::Serve { port, state_dir } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| RunError::Internal(gvd_core::Error::Numerical(e.to_string())))?;
            rt.block_on(gvd::service::serve(port, state_dir))
                .map_err(|e| RunError::Internal(gvd_core::Error::Numerical(e.to_string())))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                RunError::Format(f) => {
                    for p in f.problems() {
                        eprintln!("error: {p}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
