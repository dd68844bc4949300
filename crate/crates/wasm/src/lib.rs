//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string. The plain Rust functions behind them
//! are public so they can be tested natively.

use dse_core::power_model::CaseData;
use dse_core::robust_stats::{huber_psi, huber_rho, huber_weight, outlier_weights, projection_statistics};
use dse_core::simulator::{run_filter, Experiment, FaultKind, FilterKind, FilterSettings, Scenario};
use dse_core::{scenarios, DseError, CASE39};
use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Series {
    pub source: String,
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ErrorEntry {
    pub filter: String,
    pub overall_error: f64,
}

#[derive(Debug, Serialize)]
pub struct ScenarioTraces {
    pub scenario: String,
    pub generator: usize,
    pub time: Vec<f64>,
    pub series: Vec<Series>,
    pub errors: Vec<ErrorEntry>,
}

fn builtin(name: &str) -> Result<Scenario, DseError> {
    let text = match name {
        "clean" => scenarios::CLEAN,
        "comm-loss" => scenarios::COMM_LOSS,
        "bad-data" => scenarios::BAD_DATA,
        other => return Err(DseError::Scenario(format!("unknown scenario `{other}`"))),
    };
    Scenario::parse(text)
}

/// Runs a shipped scenario on the 39-bus case with all three filters.
///
/// `outlier` replaces the value of every gross-error fault; `duration`
/// shortens the run when positive. Traces cover one generator (1-based).
pub fn scenario_traces(
    name: &str,
    outlier: f64,
    duration: f64,
    generator: usize,
) -> Result<ScenarioTraces, DseError> {
    let mut scenario = builtin(name)?;
    for fault in &mut scenario.faults {
        if fault.kind == FaultKind::GrossError {
            fault.value = outlier;
        }
    }
    if duration > 0.0 {
        scenario.duration = duration.min(scenario.duration);
    }
    let case = CaseData::parse(CASE39)?;
    let exp = Experiment::prepare(&case, &scenario)?;
    let n_gen = exp.model.n_gen();
    if generator == 0 || generator > n_gen {
        return Err(DseError::InvalidParameter(format!(
            "generator must be in 1..={n_gen}"
        )));
    }
    let (iw, id) = (generator - 1, n_gen + generator - 1);
    let truth = exp.truth.state_vectors();
    let mut series = vec![Series {
        source: "truth".into(),
        omega: truth.iter().map(|x| x[iw]).collect(),
        delta: truth.iter().map(|x| x[id]).collect(),
    }];
    let mut errors = Vec::new();
    let settings = FilterSettings::default();
    for kind in FilterKind::ALL {
        let run = run_filter(&exp, kind, &settings)?;
        series.push(Series {
            source: kind.name().into(),
            omega: run.estimates.iter().map(|x| x[iw]).collect(),
            delta: run.estimates.iter().map(|x| x[id]).collect(),
        });
        errors.push(ErrorEntry {
            filter: kind.name().into(),
            overall_error: run.error,
        });
    }
    Ok(ScenarioTraces {
        scenario: exp.scenario.name.clone(),
        generator,
        time: exp.truth.times.clone(),
        series,
        errors,
    })
}

#[derive(Debug, Serialize)]
pub struct HuberCurves {
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
    pub weight: Vec<f64>,
}

/// ρ, ψ and ψ(r)/r on `n` evenly spaced points of `[-span, span]`.
pub fn huber_curves(c: f64, span: f64, n: usize) -> HuberCurves {
    let n = n.max(2);
    let r: Vec<f64> = (0..n)
        .map(|k| span * (2.0 * k as f64 - (n - 1) as f64) / (n - 1) as f64)
        .collect();
    HuberCurves {
        rho: r.iter().map(|&v| huber_rho(v, c)).collect(),
        psi: r.iter().map(|&v| huber_psi(v, c)).collect(),
        weight: r.iter().map(|&v| huber_weight(v, c)).collect(),
        r,
    }
}

#[derive(Debug, Serialize)]
pub struct CloudWeights {
    pub ps: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Projection statistics and leverage weights of a 2-D point cloud given
/// as interleaved `x, y` coordinates.
pub fn cloud_weights(xy: &[f64], d: f64) -> Result<CloudWeights, DseError> {
    if !xy.len().is_multiple_of(2) {
        return Err(DseError::InvalidParameter("odd number of coordinates".into()));
    }
    let points = DMatrix::from_row_slice(xy.len() / 2, 2, xy);
    let ps = projection_statistics(&points)?;
    let weights = outlier_weights(&ps, d);
    Ok(CloudWeights {
        ps: ps.iter().copied().collect(),
        weights: weights.iter().copied().collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, DseError>) -> Result<String, JsValue> {
    let value = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = runScenario)]
pub fn run_scenario(name: &str, outlier: f64, duration: f64, generator: usize) -> Result<String, JsValue> {
    to_js(scenario_traces(name, outlier, duration, generator))
}

#[wasm_bindgen(js_name = huberCurves)]
pub fn huber_curves_js(c: f64, span: f64, n: usize) -> Result<String, JsValue> {
    to_js(Ok(huber_curves(c, span, n)))
}

#[wasm_bindgen(js_name = cloudWeights)]
pub fn cloud_weights_js(xy: Vec<f64>, d: f64) -> Result<String, JsValue> {
    to_js(cloud_weights(&xy, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_data_traces_cover_every_filter() {
        let t = scenario_traces("bad-data", 10.0, 0.5, 7).unwrap();
        assert_eq!(t.series.len(), 4);
        assert_eq!(t.errors.len(), 3);
        for s in &t.series {
            assert_eq!(s.omega.len(), t.time.len());
            assert_eq!(s.delta.len(), t.time.len());
        }
        assert!(scenario_traces("bad-data", 10.0, 0.5, 11).is_err());
        assert!(scenario_traces("nope", 10.0, 0.5, 1).is_err());
    }

    #[test]
    fn huber_curves_are_symmetric() {
        let h = huber_curves(1.5, 4.0, 81);
        assert_eq!(h.r.len(), 81);
        for k in 0..81 {
            assert_eq!(h.rho[k], h.rho[80 - k]);
            assert_eq!(h.psi[k], -h.psi[80 - k]);
            assert!(h.weight[k] > 0.0 && h.weight[k] <= 1.0);
        }
    }

    #[test]
    fn far_point_is_downweighted() {
        let mut xy = Vec::new();
        for k in 0..20 {
            let t = k as f64 * 0.3;
            xy.extend([t.cos(), t.sin()]);
        }
        xy.extend([30.0, 30.0]);
        let w = cloud_weights(&xy, 1.5).unwrap();
        assert_eq!(w.ps.len(), 21);
        assert!(w.weights[20] < 0.1);
        assert!(cloud_weights(&[1.0, 2.0, 3.0], 1.5).is_err());
    }
}
