use nalgebra::{DMatrix, DVector};

use super::{
    check_observation, kept_rows, select_rows, select_square, select_vec, symmetrize, Estimator,
    FilterState, NoiseModel, Observation, StateSpaceModel, StepInfo,
};
use crate::error::{DseError, Result};

/// `x̂ ← f(x̂)`, `Σ ← FΣFᵀ + W`.
pub fn ekf_predict(
    fs: &FilterState,
    noise: &NoiseModel,
    model: &dyn StateSpaceModel,
) -> Result<FilterState> {
    let x = model.transition(&fs.x_hat)?;
    let f = model.transition_jacobian(&fs.x_hat)?;
    let mut sigma = &f * &fs.sigma * f.transpose() + &noise.w;
    symmetrize(&mut sigma);
    Ok(FilterState {
        x_hat: x,
        sigma,
        k: fs.k,
    })
}

/// Kalman update with gain `ΣHᵀ(HΣHᵀ + R)⁻¹`.
pub fn ekf_correct(
    pred: &FilterState,
    obs: &Observation,
    noise: &NoiseModel,
    model: &dyn StateSpaceModel,
    mask_invalid: bool,
) -> Result<FilterState> {
    check_observation(model, obs)?;
    let predicted = model.measure(&pred.x_hat)?;
    let mut innovation = model.innovation(&obs.z, &predicted);
    let mut h = model.measurement_jacobian(&pred.x_hat)?;
    let mut r = noise.r.clone();
    if let Some(rows) = kept_rows(obs, mask_invalid) {
        innovation = select_vec(&innovation, &rows);
        h = select_rows(&h, &rows);
        r = select_square(&r, &rows);
    }

    let sht = &pred.sigma * h.transpose();
    let s = &h * &sht + r;
    let chol = s.cholesky().ok_or(DseError::GainComputationFailed)?;
    // K = Σ Hᵀ S⁻¹, obtained as (S⁻¹ H Σ)ᵀ.
    let gain: DMatrix<f64> = chol.solve(&sht.transpose()).transpose();
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(DseError::GainComputationFailed);
    }
    let x_hat: DVector<f64> = &pred.x_hat + &gain * innovation;
    let mut sigma = &pred.sigma - &gain * sht.transpose();
    symmetrize(&mut sigma);
    Ok(FilterState {
        x_hat,
        sigma,
        k: pred.k + 1,
    })
}

#[derive(Debug, Clone)]
pub struct Ekf {
    pub state: FilterState,
    pub noise: NoiseModel,
    pub mask_invalid: bool,
}

impl Ekf {
    pub fn new(state: FilterState, noise: NoiseModel) -> Self {
        Self {
            state,
            noise,
            mask_invalid: false,
        }
    }
}

impl Estimator for Ekf {
    fn name(&self) -> &'static str {
        "ekf"
    }

    fn state(&self) -> &FilterState {
        &self.state
    }

    fn step(&mut self, model: &dyn StateSpaceModel, obs: &Observation) -> Result<StepInfo> {
        let pred = ekf_predict(&self.state, &self.noise, model)?;
        self.state = ekf_correct(&pred, obs, &self.noise, model, self.mask_invalid)?;
        Ok(StepInfo::default())
    }
}
