use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dse_cli::{bench, run, write_bench, CliError, RunConfig};
use dse_core::robust_stats::HuberConfig;
use dse_core::simulator::FilterKind;

/// Dynamic state estimation on PMU streams: EKF, GM-EKF and UKF.
///
/// Log verbosity follows RUST_LOG (default `warn`).
#[derive(Parser)]
#[command(name = "dse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the filters once and write traces, report and plots.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write SVG plots of the selected generators.
        #[arg(long)]
        plots: bool,
        /// Generators to plot, 1-based.
        #[arg(long, value_delimiter = ',', default_value = "4,5,7")]
        plot_generators: Vec<usize>,
    },
    /// Time full scenario runs of each filter.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Scenario files; repeat the flag for several.
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ekf,gmekf,ukf")]
    filters: Vec<FilterKind>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Huber breakpoint c.
    #[arg(long, default_value_t = 1.5)]
    huber_c: f64,
    /// Leverage threshold d.
    #[arg(long, default_value_t = 1.5)]
    leverage_d: f64,
    #[arg(long, default_value_t = 0.01)]
    irls_tol: f64,
}

impl Common {
    fn config(&self, scenario: PathBuf) -> RunConfig {
        RunConfig {
            filters: self.filters.clone(),
            huber: HuberConfig {
                c: self.huber_c,
                d: self.leverage_d,
                irls_tol: self.irls_tol,
                ..HuberConfig::default()
            },
            seed: self.seed,
            ..RunConfig::new(&self.case, scenario)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            common,
            scenario,
            out,
            plots,
            plot_generators,
        } => {
            let config = RunConfig {
                output_dir: out,
                emit_plots: plots,
                plot_generators,
                ..common.config(scenario)
            };
            let report = run(&config)?;
            println!("scenario {} (seed {}, {} steps)", report.scenario, report.seed, report.steps);
            println!("{:<8} {:>14} {:>10} {:>10} {:>9}", "filter", "overall error", "time (s)", "med. IRLS", "warnings");
            for f in &report.filters {
                let mut iters = f.irls_iterations.clone();
                iters.sort_unstable();
                let median = iters.get(iters.len() / 2).copied().unwrap_or(0);
                println!(
                    "{:<8} {:>14.6} {:>10.3} {:>10} {:>9}",
                    f.filter,
                    f.overall_error,
                    f.wall_clock_s,
                    median,
                    f.warnings.iter().filter(|&&w| w).count()
                );
            }
            println!("wrote {}", config.output_dir.display());
        }
        Command::Bench {
            common,
            scenario,
            repeats,
            out,
        } => {
            let first = scenario.first().cloned().unwrap_or_default();
            let table = bench(&common.config(first), &scenario, repeats)?;
            println!("{:<12} {:<8} {:>8} {:>12} {:>12}", "scenario", "filter", "repeats", "mean (s)", "std (s)");
            for e in &table {
                println!(
                    "{:<12} {:<8} {:>8} {:>12.4} {:>12.4}",
                    e.scenario, e.filter, e.repeats, e.mean_s, e.std_s
                );
            }
            if let Some(path) = out {
                write_bench(&path, &table)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
