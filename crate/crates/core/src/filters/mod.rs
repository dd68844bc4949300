//! Dynamic state estimators: EKF, the robust GM-EKF and a UKF baseline.
//!
//! All three run on anything implementing [`StateSpaceModel`] and share
//! [`FilterState`], [`NoiseModel`] and [`Observation`].

mod ekf;
mod gmekf;
mod ukf;

pub use ekf::{ekf_correct, ekf_predict, Ekf};
pub use gmekf::{
    gmekf_build_regression, gmekf_irls, gmekf_prewhiten, gmekf_step, gmekf_update_covariance,
    gmekf_weights, innovation_column, BatchRegression, GmEkf, GmEkfOptions, GmEkfStep, IrlsOutcome,
    LeverageMode, RegressionForm,
};
pub use ukf::{ukf_step, Ukf, UkfParams};

use nalgebra::{DMatrix, DVector};

use crate::error::{DseError, Result};
use crate::power_model::MeasurementFrame;

/// Discrete-time nonlinear model `x_k = f(x_{k-1})`, `z_k = g(x_k)`.
pub trait StateSpaceModel {
    fn n_states(&self) -> usize;
    fn n_measurements(&self) -> usize;
    fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn transition_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn measure(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn measurement_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `z − ẑ`; models with angular channels wrap them here.
    fn innovation(&self, z: &DVector<f64>, predicted: &DVector<f64>) -> DVector<f64> {
        z - predicted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub k: usize,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.shape() != (x_hat.len(), x_hat.len()) {
            return Err(DseError::DimensionMismatch(format!(
                "state of length {} with covariance {:?}",
                x_hat.len(),
                sigma.shape()
            )));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(DseError::CovarianceNotPd);
        }
        Ok(Self { x_hat, sigma, k: 0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Process-noise covariance.
    pub w: DMatrix<f64>,
    /// Measurement-noise covariance.
    pub r: DMatrix<f64>,
}

impl NoiseModel {
    pub fn diagonal(n: usize, m: usize, process: f64, measurement: f64) -> Self {
        Self {
            w: DMatrix::from_diagonal_element(n, n, process),
            r: DMatrix::from_diagonal_element(m, m, measurement),
        }
    }
}

/// One measurement vector with per-channel validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub z: DVector<f64>,
    pub valid: Vec<bool>,
}

impl Observation {
    pub fn new(z: DVector<f64>) -> Self {
        let valid = vec![true; z.len()];
        Self { z, valid }
    }
}

impl From<&MeasurementFrame> for Observation {
    fn from(frame: &MeasurementFrame) -> Self {
        Self {
            z: frame.to_vector(),
            valid: frame.valid.clone(),
        }
    }
}

/// Diagnostics from one filter step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    /// Normal-equation solves performed by IRLS (zero for EKF and UKF).
    pub irls_iterations: usize,
    /// IRLS hit its iteration cap and returned the last iterate.
    pub warning: bool,
    /// Per IRLS iteration: the objective before and after the update,
    /// both at that iteration's scale.
    pub objective: Vec<(f64, f64)>,
}

/// Common stepping interface over the three estimators.
pub trait Estimator {
    fn name(&self) -> &'static str;
    fn state(&self) -> &FilterState;
    fn step(&mut self, model: &dyn StateSpaceModel, obs: &Observation) -> Result<StepInfo>;
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Rows kept when invalid channels are masked out; `None` keeps all.
pub(crate) fn kept_rows(obs: &Observation, mask_invalid: bool) -> Option<Vec<usize>> {
    if !mask_invalid || obs.valid.iter().all(|&v| v) {
        return None;
    }
    Some(
        obs.valid
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect(),
    )
}

pub(crate) fn select_vec(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub(crate) fn select_square(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| m[(rows[i], rows[j])])
}

pub(crate) fn check_observation(model: &dyn StateSpaceModel, obs: &Observation) -> Result<()> {
    if obs.z.len() != model.n_measurements() || obs.valid.len() != obs.z.len() {
        return Err(DseError::DimensionMismatch(format!(
            "observation of length {} for a model with {} channels",
            obs.z.len(),
            model.n_measurements()
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testing {
    //! Small linear models shared by the filter tests.

    use super::*;

    #[derive(Debug, Clone)]
    pub struct LinearModel {
        pub f: DMatrix<f64>,
        pub h: DMatrix<f64>,
    }

    impl StateSpaceModel for LinearModel {
        fn n_states(&self) -> usize {
            self.f.nrows()
        }
        fn n_measurements(&self) -> usize {
            self.h.nrows()
        }
        fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(&self.f * x)
        }
        fn transition_jacobian(&self, _: &DVector<f64>) -> Result<DMatrix<f64>> {
            Ok(self.f.clone())
        }
        fn measure(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(&self.h * x)
        }
        fn measurement_jacobian(&self, _: &DVector<f64>) -> Result<DMatrix<f64>> {
            Ok(self.h.clone())
        }
    }

    pub fn gauss(rng: &mut impl rand::Rng) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
    }

    /// A 3-state, 5-channel model with mild coupling.
    pub fn small_model() -> LinearModel {
        LinearModel {
            f: DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, -0.05, 0.98, 0.02, 0.0, 0.0, 0.99]),
            h: DMatrix::from_row_slice(
                5,
                3,
                &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.5, 0.0, -1.0],
            ),
        }
    }
}
