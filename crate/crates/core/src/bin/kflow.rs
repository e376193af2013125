use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kahler_flow::background::list_presets;
use kahler_flow::flow::validate_ladder;
use kahler_flow::pipeline::{check_directory, exit_code, run_oracle, run_scenario, RunOptions};
use kahler_flow::scenario::{parse_scenario, schema_text, ScenarioConfig};
use kahler_flow::Error;

#[derive(Parser)]
#[command(name = "kflow", version, about = "Radial Kähler-Ricci flow lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: ε-ladder, oracle, estimate checks, files.
    Run {
        scenario: PathBuf,
        /// Rerun at doubled resolution this many times.
        #[arg(long, default_value_t = 0)]
        grid_refine: u32,
        /// Override the ε ladder, e.g. `0.1,0.05`.
        #[arg(long, value_delimiter = ',')]
        eps_ladder: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate the checks of a results directory.
    Check { dir: PathBuf },
    /// Solve the limiting Kähler-Einstein equation of a scenario.
    Oracle {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List metric and defining-function presets.
    Presets,
    /// List scenario keys with defaults and ranges.
    Schema,
}

fn load(path: &PathBuf, ladder: Option<Vec<f64>>, out: Option<PathBuf>) -> kahler_flow::Result<ScenarioConfig> {
    let mut config = parse_scenario(&std::fs::read_to_string(path)?)?;
    if let Some(l) = ladder {
        validate_ladder(&l).map_err(|e| Error::Scenario(vec![format!("--eps-ladder: {e}")]))?;
        config.eps_ladder = l;
    }
    if let Some(o) = out {
        config.out_dir = o;
    }
    Ok(config)
}

fn report_error(e: &Error) -> ExitCode {
    match e {
        Error::Scenario(list) => {
            for msg in list {
                eprintln!("scenario error: {msg}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    ExitCode::from(exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            print!("{}", list_presets());
            ExitCode::SUCCESS
        }
        Command::Schema => {
            print!("{}", schema_text());
            ExitCode::SUCCESS
        }
        Command::Run { scenario, grid_refine, eps_ladder, out } => {
            let config = match load(&scenario, eps_ladder, out) {
                Ok(c) => c,
                Err(e) => return report_error(&e),
            };
            let opts = RunOptions { quiet: cli.quiet, grid_refine };
            match run_scenario(&config, &opts) {
                Ok(outcome) => {
                    if !cli.quiet {
                        print!("{}", outcome.report.to_text());
                    }
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(e) => report_error(&e),
            }
        }
        Command::Check { dir } => match check_directory(&dir) {
            Ok(report) => {
                if !cli.quiet {
                    print!("{}", report.to_text());
                }
                ExitCode::from(if report.all_pass() { 0 } else { 2 })
            }
            Err(e) => report_error(&e),
        },
        Command::Oracle { scenario, out } => {
            let config = match load(&scenario, None, out) {
                Ok(c) => c,
                Err(e) => return report_error(&e),
            };
            match run_oracle(&config, &config.out_dir) {
                Ok(sol) => {
                    if !cli.quiet {
                        println!(
                            "converged in {} Newton iterations, residual {:.3e}, u_inf(0) = {:.9}",
                            sol.newton_iterations, sol.residual_norm, sol.u_inf[0]
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => report_error(&e),
            }
        }
    }
}
