//! Scenario runs and timing benches over the three estimators, with CSV
//! traces, a JSON report and optional SVG plots.

pub mod plot;
pub mod trace;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dse_core::power_model::CaseData;
use dse_core::robust_stats::HuberConfig;
use dse_core::simulator::{run_filter, Experiment, FilterKind, FilterRun, FilterSettings, Scenario};
use dse_core::DseError;
use serde::Serialize;
use thiserror::Error;

pub use trace::{read_traces, write_traces, Traces};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("case file not found: {}", .0.display())]
    CaseNotFound(PathBuf),
    #[error("scenario file not found: {}", .0.display())]
    ScenarioNotFound(PathBuf),
    #[error("{stage}: {source}")]
    Model {
        stage: &'static str,
        #[source]
        source: DseError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    /// 1 for numerical failures, 2 for configuration and I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model { source, .. } if source.is_numerical() => 1,
            _ => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn stage<T>(stage: &'static str, r: dse_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Model { stage, source })
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub scenario_path: PathBuf,
    pub filters: Vec<FilterKind>,
    pub huber: HuberConfig,
    pub output_dir: PathBuf,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    pub emit_plots: bool,
    /// Generators (1-based) whose speed and angle are plotted.
    pub plot_generators: Vec<usize>,
}

impl RunConfig {
    pub fn new(case_path: impl Into<PathBuf>, scenario_path: impl Into<PathBuf>) -> Self {
        Self {
            case_path: case_path.into(),
            scenario_path: scenario_path.into(),
            filters: FilterKind::ALL.to_vec(),
            huber: HuberConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: None,
            emit_plots: false,
            plot_generators: vec![4, 5, 7],
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.filters.is_empty() {
            return Err(CliError::Config("no filter selected".into()));
        }
        if !self.case_path.is_file() {
            return Err(CliError::CaseNotFound(self.case_path.clone()));
        }
        if !self.scenario_path.is_file() {
            return Err(CliError::ScenarioNotFound(self.scenario_path.clone()));
        }
        stage("configuration", self.huber.validate())
    }

    fn settings(&self) -> FilterSettings {
        FilterSettings {
            huber: self.huber.clone(),
            ..FilterSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub filter: String,
    pub overall_error: f64,
    pub wall_clock_s: f64,
    pub irls_iterations: Vec<usize>,
    pub warnings: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub steps: usize,
    pub filters: Vec<FilterReport>,
}

impl RunReport {
    pub fn get(&self, kind: FilterKind) -> Option<&FilterReport> {
        self.filters.iter().find(|f| f.filter == kind.name())
    }
}

/// Loads the case and scenario and synthesises the shared PMU stream.
pub fn prepare(config: &RunConfig) -> Result<Experiment, CliError> {
    config.validate()?;
    let case = stage("reading case", CaseData::from_path(&config.case_path))?;
    let scenario = stage("reading scenario", Scenario::from_path(&config.scenario_path))?;
    let seed = config.seed.unwrap_or(scenario.seed);
    stage("simulating truth", Experiment::prepare_with_seed(&case, &scenario, seed))
}

fn timed_run(exp: &Experiment, kind: FilterKind, settings: &FilterSettings) -> Result<(FilterRun, f64), CliError> {
    let start = Instant::now();
    let run = run_filter(exp, kind, settings).map_err(|source| CliError::Model {
        stage: "running filter",
        source,
    })?;
    Ok((run, start.elapsed().as_secs_f64()))
}

/// Runs every selected filter on one stream and writes the artefacts.
pub fn run(config: &RunConfig) -> Result<RunReport, CliError> {
    let exp = prepare(config)?;
    let settings = config.settings();
    let mut runs = Vec::with_capacity(config.filters.len());
    let mut filters = Vec::with_capacity(config.filters.len());
    for &kind in &config.filters {
        let (run, secs) = timed_run(&exp, kind, &settings)?;
        log::info!("{kind}: overall error {:.5}, {:.3} s", run.error, secs);
        if run.warnings() > 0 {
            log::warn!("{kind}: IRLS hit its iteration cap on {} steps", run.warnings());
        }
        filters.push(FilterReport {
            filter: kind.name().to_string(),
            overall_error: run.error,
            wall_clock_s: secs,
            irls_iterations: run.irls_iterations(),
            warnings: run.infos.iter().map(|i| i.warning).collect(),
        });
        runs.push(run);
    }
    let report = RunReport {
        scenario: exp.scenario.name.clone(),
        seed: exp.scenario.seed,
        steps: exp.truth.len() - 1,
        filters,
    };

    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let traces = Traces::from_runs(&exp, &runs);
    write_traces(&out.join("traces.csv"), &traces)?;
    write_errors(&out.join("errors.csv"), &report)?;
    write_irls(&out.join("irls.csv"), &exp, &report)?;
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    let path = out.join("report.json");
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    if config.emit_plots {
        for &g in &config.plot_generators {
            for prefix in ["omega", "delta"] {
                let column = format!("{prefix}_{g}");
                let Some(svg) = plot::state_plot(&traces, &column) else {
                    return Err(CliError::Config(format!("no generator {g} to plot")));
                };
                let path = out.join(format!("{column}.svg"));
                fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
            }
        }
    }
    Ok(report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows(path: &Path, rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_errors(path: &Path, report: &RunReport) -> Result<(), CliError> {
    let header = ["filter", "overall_error", "wall_clock_s", "warnings"].map(String::from).to_vec();
    let rows = report.filters.iter().map(|f| {
        vec![
            f.filter.clone(),
            f.overall_error.to_string(),
            f.wall_clock_s.to_string(),
            f.warnings.iter().filter(|&&w| w).count().to_string(),
        ]
    });
    write_rows(path, std::iter::once(header).chain(rows))
}

fn write_irls(path: &Path, exp: &Experiment, report: &RunReport) -> Result<(), CliError> {
    let Some(gm) = report.get(FilterKind::GmEkf) else {
        return Ok(());
    };
    let header = ["time", "iterations", "warning"].map(String::from).to_vec();
    let rows = gm.irls_iterations.iter().zip(&gm.warnings).enumerate().map(|(k, (it, w))| {
        vec![
            exp.truth.times[k + 1].to_string(),
            it.to_string(),
            u8::from(*w).to_string(),
        ]
    });
    write_rows(path, std::iter::once(header).chain(rows))
}

/// Mean and sample standard deviation of wall-clock time per full run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchEntry {
    pub scenario: String,
    pub filter: String,
    pub repeats: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

/// Times `repeats` full runs of every selected filter, sequentially, on
/// each scenario. Truth and stream are built once per scenario.
pub fn bench(
    config: &RunConfig,
    scenarios: &[PathBuf],
    repeats: usize,
) -> Result<Vec<BenchEntry>, CliError> {
    if repeats == 0 {
        return Err(CliError::Config("repeats must be at least 1".into()));
    }
    let settings = config.settings();
    let mut table = Vec::new();
    for path in scenarios {
        let cfg = RunConfig {
            scenario_path: path.clone(),
            ..config.clone()
        };
        let exp = prepare(&cfg)?;
        for &kind in &config.filters {
            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                times.push(timed_run(&exp, kind, &settings)?.1);
            }
            let (mean_s, std_s) = mean_std(&times);
            table.push(BenchEntry {
                scenario: exp.scenario.name.clone(),
                filter: kind.name().to_string(),
                repeats,
                mean_s,
                std_s,
            });
        }
    }
    Ok(table)
}

/// Mean and sample standard deviation; a single sample has zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_bench(path: &Path, table: &[BenchEntry]) -> Result<(), CliError> {
    let header = ["scenario", "filter", "repeats", "mean_s", "std_s"].map(String::from).to_vec();
    let rows = table.iter().map(|e| {
        vec![
            e.scenario.clone(),
            e.filter.clone(),
            e.repeats.to_string(),
            e.mean_s.to_string(),
            e.std_s.to_string(),
        ]
    });
    write_rows(path, std::iter::once(header).chain(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_zero_spread() {
        assert_eq!(mean_std(&[0.25]), (0.25, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::CaseNotFound("x".into()).exit_code(), 2);
        let numeric = CliError::Model {
            stage: "running filter",
            source: DseError::GainComputationFailed,
        };
        assert_eq!(numeric.exit_code(), 1);
        let input = CliError::Model {
            stage: "reading case",
            source: DseError::Scenario("bad".into()),
        };
        assert_eq!(input.exit_code(), 2);
    }
}
