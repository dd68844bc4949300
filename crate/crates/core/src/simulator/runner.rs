use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::{apply_faults, overall_error, simulate_truth, synthesize_measurements, Scenario, Trajectory};
use crate::error::{DseError, Result};
use crate::filters::{
    Ekf, Estimator, FilterState, GmEkf, GmEkfOptions, NoiseModel, Observation, StepInfo, Ukf,
    UkfParams,
};
use crate::power_model::{CaseData, MeasurementFrame, PowerSystem};
use crate::robust_stats::HuberConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    Ekf,
    GmEkf,
    Ukf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Ekf, FilterKind::GmEkf, FilterKind::Ukf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Ekf => "ekf",
            FilterKind::GmEkf => "gmekf",
            FilterKind::Ukf => "ukf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = DseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ekf" => Ok(FilterKind::Ekf),
            "gmekf" | "gm-ekf" => Ok(FilterKind::GmEkf),
            "ukf" => Ok(FilterKind::Ukf),
            other => Err(DseError::InvalidParameter(format!("unknown filter `{other}`"))),
        }
    }
}

/// Truth and the faulted PMU stream shared by every filter in a run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    /// The nominal model the filters use.
    pub model: PowerSystem,
    pub truth: Trajectory,
    pub stream: Vec<MeasurementFrame>,
    pub noise: NoiseModel,
}

impl Experiment {
    /// Simulates truth and synthesises the stream with the scenario seed.
    pub fn prepare(case: &CaseData, scenario: &Scenario) -> Result<Self> {
        Self::prepare_with_seed(case, scenario, scenario.seed)
    }

    pub fn prepare_with_seed(case: &CaseData, scenario: &Scenario, seed: u64) -> Result<Self> {
        let mut scenario = scenario.clone();
        scenario.seed = seed;
        let model = PowerSystem::from_case(case, scenario.dt())?;
        let n = 2 * model.n_gen();
        let m = model.layout.n_channels();
        let noise = NoiseModel::diagonal(n, m, scenario.noise.process, scenario.noise.measurement);
        let truth = simulate_truth(case, &scenario)?;
        let clean = synthesize_measurements(&truth, &noise.r, seed)?;
        let stream = apply_faults(&clean, &scenario, &model.layout)?;
        Ok(Self {
            scenario,
            model,
            truth,
            stream,
            noise,
        })
    }

    /// Filter initialised at the true starting point with the scenario's
    /// initial covariance.
    pub fn initial_state(&self) -> Result<FilterState> {
        let x0 = self.truth.states[0].to_vector();
        let n = x0.len();
        FilterState::new(
            x0,
            DMatrix::from_diagonal_element(n, n, self.scenario.initial_variance()),
        )
    }

    /// Observations for steps `1..`, the first frame being the initial
    /// instant.
    pub fn observations(&self) -> Vec<Observation> {
        self.stream.iter().skip(1).map(Observation::from).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterSettings {
    pub huber: HuberConfig,
    pub gm_options: GmEkfOptions,
    pub ukf: UkfParams,
    /// Drop invalid channels in the EKF and UKF as well.
    pub mask_invalid: bool,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub kind: FilterKind,
    /// Estimates for every instant, starting with the initial one.
    pub estimates: Vec<DVector<f64>>,
    pub infos: Vec<StepInfo>,
    /// Overall RMSE against truth over steps `1..`.
    pub error: f64,
}

impl FilterRun {
    pub fn irls_iterations(&self) -> Vec<usize> {
        self.infos.iter().map(|i| i.irls_iterations).collect()
    }

    pub fn warnings(&self) -> usize {
        self.infos.iter().filter(|i| i.warning).count()
    }
}

pub fn build_estimator(
    kind: FilterKind,
    init: FilterState,
    noise: NoiseModel,
    settings: &FilterSettings,
) -> Box<dyn Estimator> {
    match kind {
        FilterKind::Ekf => {
            let mut f = Ekf::new(init, noise);
            f.mask_invalid = settings.mask_invalid;
            Box::new(f)
        }
        FilterKind::GmEkf => Box::new(
            GmEkf::new(init, noise, settings.huber.clone()).with_options(settings.gm_options),
        ),
        FilterKind::Ukf => {
            let mut f = Ukf::new(init, noise);
            f.params = settings.ukf;
            f.mask_invalid = settings.mask_invalid;
            Box::new(f)
        }
    }
}

/// Runs one filter over the experiment's stream.
pub fn run_filter(exp: &Experiment, kind: FilterKind, settings: &FilterSettings) -> Result<FilterRun> {
    let mut filter = build_estimator(kind, exp.initial_state()?, exp.noise.clone(), settings);
    let observations = exp.observations();
    let mut estimates = Vec::with_capacity(observations.len() + 1);
    let mut infos = Vec::with_capacity(observations.len());
    estimates.push(filter.state().x_hat.clone());
    for obs in &observations {
        infos.push(filter.step(&exp.model, obs)?);
        estimates.push(filter.state().x_hat.clone());
    }
    let truth = exp.truth.state_vectors();
    let error = overall_error(&estimates[1..], &truth[1..])?;
    Ok(FilterRun {
        kind,
        estimates,
        infos,
        error,
    })
}
