//! Per-state traces: one row per instant, truth next to every estimate.
//!
//! Columns are `time`, then for each state (`omega_1`, ..., `delta_1`, ...)
//! `truth_<state>` followed by `<filter>_<state>` for each filter run.
//! Values are written in shortest round-trip decimal form.

use std::path::Path;

use dse_core::simulator::{Experiment, FilterRun};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn state_names(n_gen: usize) -> Vec<String> {
    (1..=n_gen)
        .map(|i| format!("omega_{i}"))
        .chain((1..=n_gen).map(|i| format!("delta_{i}")))
        .collect()
}

impl Traces {
    pub fn from_runs(exp: &Experiment, runs: &[FilterRun]) -> Self {
        let names = state_names(exp.model.n_gen());
        let mut header = vec!["time".to_string()];
        for name in &names {
            header.push(format!("truth_{name}"));
            for run in runs {
                header.push(format!("{}_{name}", run.kind));
            }
        }
        let rows = exp
            .truth
            .states
            .iter()
            .enumerate()
            .map(|(k, state)| {
                let truth = state.to_vector();
                let mut row = Vec::with_capacity(header.len());
                row.push(exp.truth.times[k]);
                for i in 0..names.len() {
                    row.push(truth[i]);
                    row.extend(runs.iter().map(|r| r.estimates[k][i]));
                }
                row
            })
            .collect();
        Self { header, rows }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Sources (`truth`, filter names) that carry the given state.
    pub fn sources(&self, state: &str) -> Vec<String> {
        let suffix = format!("_{state}");
        self.header
            .iter()
            .filter_map(|h| h.strip_suffix(&suffix).map(str::to_string))
            .collect()
    }
}

pub fn write_traces(path: &Path, traces: &Traces) -> Result<(), CliError> {
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(&traces.header).map_err(wrap)?;
    for row in &traces.rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(wrap)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_traces(path: &Path) -> Result<Traces, CliError> {
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    let header = r.headers().map_err(wrap)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(wrap)?;
        let row = record
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| CliError::Config(format!("{}: `{v}`: {e}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Traces { header, rows })
}
