//! Generalized maximum-likelihood EKF.
//!
//! Each step stacks the linearised measurements and the prediction into a
//! single regression, downweights leverage outliers found by projection
//! statistics, prewhitens, solves the Huber problem by IRLS and updates the
//! covariance from the total influence function.

use nalgebra::{DMatrix, DVector};

use super::{
    check_observation, ekf_predict, kept_rows, select_rows, select_square, select_vec, symmetrize,
    Estimator, FilterState, NoiseModel, Observation, StateSpaceModel, StepInfo,
};
use crate::error::{DseError, Result};
use crate::robust_stats::{
    efficiency_correction, huber_rho, huber_weight, outlier_weights, projection_statistics,
    robust_scale, HuberConfig, InnovationMatrix, RobustWeights,
};

/// Stacked regression `z̃ = H̃ x + ẽ` before whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRegression {
    pub z_tilde: DVector<f64>,
    pub h_tilde: DMatrix<f64>,
    /// `z − g(x̂_{k|k−1})`, angle channels wrapped.
    pub innovation: DVector<f64>,
}

/// Prewhitened regression `y = A x + ξ` with its leverage weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForm {
    pub y: DVector<f64>,
    pub a: DMatrix<f64>,
    pub w: DVector<f64>,
    /// Robust scale of the final IRLS iterate; zero until IRLS has run.
    pub s: f64,
    pub m_prime: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub scale: f64,
    /// Objective before and after each update, at that iteration's scale.
    pub objective: Vec<(f64, f64)>,
}

/// Source of the leverage weights ϖ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeverageMode {
    /// Projection statistics of the full two-column matrix, prediction
    /// rows included.
    ProjectionStatistics,
    /// Projection statistics of the innovation rows only; prediction rows
    /// keep ϖ = 1.
    #[default]
    InnovationRows,
    /// ϖ ≡ 1.
    Unit,
}

pub fn gmekf_build_regression(
    obs: &Observation,
    pred: &FilterState,
    model: &dyn StateSpaceModel,
) -> Result<BatchRegression> {
    check_observation(model, obs)?;
    let n = pred.x_hat.len();
    let m = obs.z.len();
    let predicted = model.measure(&pred.x_hat)?;
    let innovation = model.innovation(&obs.z, &predicted);
    let h = model.measurement_jacobian(&pred.x_hat)?;
    let hx = &h * &pred.x_hat;

    let mut z_tilde = DVector::zeros(m + n);
    z_tilde.rows_mut(0, m).copy_from(&(&innovation + hx));
    z_tilde.rows_mut(m, n).copy_from(&pred.x_hat);
    let mut h_tilde = DMatrix::zeros(m + n, n);
    h_tilde.view_mut((0, 0), (m, n)).copy_from(&h);
    h_tilde.view_mut((m, 0), (n, n)).fill_with_identity();
    Ok(BatchRegression {
        z_tilde,
        h_tilde,
        innovation,
    })
}

/// Column `[innovation; x̂_{k|k−1}]` of the innovation matrix.
pub fn innovation_column(batch: &BatchRegression, pred: &FilterState) -> DVector<f64> {
    let m = batch.innovation.len();
    let n = pred.x_hat.len();
    let mut col = DVector::zeros(m + n);
    col.rows_mut(0, m).copy_from(&batch.innovation);
    col.rows_mut(m, n).copy_from(&pred.x_hat);
    col
}

/// Projection statistics of `Z` mapped to leverage weights.
pub fn gmekf_weights(z: &InnovationMatrix, cfg: &HuberConfig) -> Result<RobustWeights> {
    let ps = projection_statistics(z.matrix())?;
    let w = outlier_weights(&ps, cfg.d);
    Ok(RobustWeights { ps, w })
}

/// Leverage weights, or all ones when no direction has any spread: a
/// cloud of coincident rows has no outlying row.
fn leverage_or_unit(z: &InnovationMatrix, cfg: &HuberConfig) -> Result<DVector<f64>> {
    match gmekf_weights(z, cfg) {
        Ok(weights) => Ok(weights.w),
        Err(DseError::DegeneratePointCloud) => {
            log::debug!("degenerate innovation cloud, unit leverage weights");
            Ok(DVector::from_element(z.rows(), 1.0))
        }
        Err(e) => Err(e),
    }
}

/// Whitens the batch regression by the Cholesky factor of
/// `blkdiag(R, Σ_{k|k−1})`, one triangular solve per block.
pub fn gmekf_prewhiten(
    z_tilde: &DVector<f64>,
    h_tilde: &DMatrix<f64>,
    r: &DMatrix<f64>,
    pred_sigma: &DMatrix<f64>,
) -> Result<RegressionForm> {
    let m = r.nrows();
    let n = pred_sigma.nrows();
    if z_tilde.len() != m + n || h_tilde.shape() != (m + n, n) {
        return Err(DseError::DimensionMismatch(format!(
            "batch of {} rows for m = {m}, n = {n}",
            z_tilde.len()
        )));
    }
    let l_r = r
        .clone()
        .cholesky()
        .ok_or(DseError::PredictionCovarianceNotPd)?
        .unpack();
    let l_s = pred_sigma
        .clone()
        .cholesky()
        .ok_or(DseError::PredictionCovarianceNotPd)?
        .unpack();

    let whiten = |l: &DMatrix<f64>, b: DMatrix<f64>| {
        l.solve_lower_triangular(&b)
            .ok_or(DseError::PredictionCovarianceNotPd)
    };
    let mut rhs = DMatrix::zeros(m + n, n + 1);
    rhs.view_mut((0, 0), (m + n, n)).copy_from(h_tilde);
    rhs.set_column(n, z_tilde);
    let top = whiten(&l_r, rhs.rows(0, m).into_owned())?;
    let bottom = whiten(&l_s, rhs.rows(m, n).into_owned())?;
    rhs.rows_mut(0, m).copy_from(&top);
    rhs.rows_mut(m, n).copy_from(&bottom);

    Ok(RegressionForm {
        y: rhs.column(n).into_owned(),
        a: rhs.columns(0, n).into_owned(),
        w: DVector::from_element(m + n, 1.0),
        s: 0.0,
        m_prime: m + n,
    })
}

fn objective(r: &DVector<f64>, w: &DVector<f64>, s: f64, c: f64) -> f64 {
    r.iter()
        .zip(w.iter())
        .map(|(ri, wi)| wi * wi * huber_rho(ri / (s * wi), c))
        .sum()
}

fn weighted_solve(a: &DMatrix<f64>, q: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let mut qa = a.clone();
    for (mut row, qi) in qa.row_iter_mut().zip(q.iter()) {
        row *= *qi;
    }
    let normal = a.tr_mul(&qa);
    let rhs = qa.tr_mul(y);
    let x = normal
        .cholesky()
        .ok_or(DseError::RankDeficient)?
        .solve(&rhs);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(DseError::RankDeficient)
    }
}

/// Iteratively reweighted least squares for the Huber GM-estimator.
///
/// Stops when the infinity-norm step reaches `cfg.irls_tol`; after
/// `cfg.max_irls_iters` solves the last iterate is returned unconverged.
pub fn gmekf_irls(reg: &RegressionForm, cfg: &HuberConfig, x0: &DVector<f64>) -> Result<IrlsOutcome> {
    cfg.validate()?;
    let m = reg.y.len();
    if reg.a.shape() != (m, x0.len()) || reg.w.len() != m {
        return Err(DseError::DimensionMismatch("IRLS regression".into()));
    }
    let mut x = x0.clone();
    let mut objective_trace = Vec::new();
    let mut fixed_scale = None;
    let mut scale = 0.0;
    for iter in 1..=cfg.max_irls_iters {
        let r = &reg.y - &reg.a * &x;
        let s = match fixed_scale {
            Some(s) => s,
            None => {
                let s = robust_scale(r.as_slice(), reg.m_prime)?;
                if !cfg.recompute_scale {
                    fixed_scale = Some(s);
                }
                s
            }
        };
        scale = s;
        let q = if s > 0.0 {
            DVector::from_fn(m, |i, _| huber_weight(r[i] / (s * reg.w[i]), cfg.c))
        } else {
            // perfect fit: plain weighted least squares
            DVector::from_element(m, 1.0)
        };
        let next = weighted_solve(&reg.a, &q, &reg.y)?;
        if s > 0.0 {
            let r_next = &reg.y - &reg.a * &next;
            objective_trace.push((
                objective(&r, &reg.w, s, cfg.c),
                objective(&r_next, &reg.w, s, cfg.c),
            ));
        }
        let step = (&next - &x).amax();
        x = next;
        if step <= cfg.irls_tol {
            return Ok(IrlsOutcome {
                x,
                iterations: iter,
                converged: true,
                scale,
                objective: objective_trace,
            });
        }
    }
    Ok(IrlsOutcome {
        x,
        iterations: cfg.max_irls_iters,
        converged: false,
        scale,
        objective: objective_trace,
    })
}

/// `eff(c) · (AᵀA)⁻¹ (Aᵀ diag(ϖ²) A) (AᵀA)⁻¹`.
pub fn gmekf_update_covariance(reg: &RegressionForm, cfg: &HuberConfig) -> Result<DMatrix<f64>> {
    let n = reg.a.ncols();
    let ata_inv = reg
        .a
        .tr_mul(&reg.a)
        .cholesky()
        .ok_or(DseError::RankDeficient)?
        .inverse();
    let mut wa = reg.a.clone();
    for (mut row, wi) in wa.row_iter_mut().zip(reg.w.iter()) {
        row *= wi * wi;
    }
    let middle = reg.a.tr_mul(&wa);
    let mut sigma = &ata_inv * middle * &ata_inv * efficiency_correction(cfg.c);
    symmetrize(&mut sigma);
    if sigma.iter().any(|v| !v.is_finite()) || sigma.nrows() != n {
        return Err(DseError::RankDeficient);
    }
    Ok(sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GmEkfOptions {
    pub leverage: LeverageMode,
    /// Drop invalid channels from the regression instead of treating their
    /// readings as data.
    pub mask_invalid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmEkfStep {
    pub state: FilterState,
    /// This step's column of the innovation matrix, needed by the next step.
    pub column: DVector<f64>,
    pub weights: DVector<f64>,
    pub info: StepInfo,
}

/// Predict, build the regression, weight, prewhiten, solve by IRLS and
/// update the covariance.
///
/// `previous` is the innovation-matrix column of the preceding step; on the
/// first step the current column is used twice.
pub fn gmekf_step(
    fs: &FilterState,
    obs: &Observation,
    noise: &NoiseModel,
    model: &dyn StateSpaceModel,
    cfg: &HuberConfig,
    options: GmEkfOptions,
    previous: Option<&DVector<f64>>,
) -> Result<GmEkfStep> {
    let pred = ekf_predict(fs, noise, model)?;
    let batch = gmekf_build_regression(obs, &pred, model)?;
    let m = obs.z.len();
    let n = pred.x_hat.len();

    let column = innovation_column(&batch, &pred);
    let w = match options.leverage {
        LeverageMode::Unit => DVector::from_element(m + n, 1.0),
        LeverageMode::ProjectionStatistics => {
            let z = InnovationMatrix::new(previous.unwrap_or(&column), &column)?;
            leverage_or_unit(&z, cfg)?
        }
        LeverageMode::InnovationRows => {
            let prev = previous.unwrap_or(&column);
            let z = InnovationMatrix::new(&prev.rows(0, m).into_owned(), &batch.innovation)?;
            let mut w = DVector::from_element(m + n, 1.0);
            w.rows_mut(0, m).copy_from(&leverage_or_unit(&z, cfg)?);
            w
        }
    };

    let mut reg = match kept_rows(obs, options.mask_invalid) {
        None => {
            let mut reg = gmekf_prewhiten(&batch.z_tilde, &batch.h_tilde, &noise.r, &pred.sigma)?;
            reg.w = w.clone();
            reg
        }
        Some(mut rows) => {
            let r = select_square(&noise.r, &rows);
            rows.extend(m..m + n);
            let mut reg = gmekf_prewhiten(
                &select_vec(&batch.z_tilde, &rows),
                &select_rows(&batch.h_tilde, &rows),
                &r,
                &pred.sigma,
            )?;
            reg.w = select_vec(&w, &rows);
            reg
        }
    };

    let outcome = gmekf_irls(&reg, cfg, &pred.x_hat)?;
    if !outcome.converged {
        log::warn!("IRLS did not converge at step {}", fs.k + 1);
    }
    reg.s = outcome.scale;
    let sigma = gmekf_update_covariance(&reg, cfg)?;
    Ok(GmEkfStep {
        state: FilterState {
            x_hat: outcome.x,
            sigma,
            k: fs.k + 1,
        },
        column,
        weights: w,
        info: StepInfo {
            irls_iterations: outcome.iterations,
            warning: !outcome.converged,
            objective: outcome.objective,
        },
    })
}

#[derive(Debug, Clone)]
pub struct GmEkf {
    pub state: FilterState,
    pub noise: NoiseModel,
    pub config: HuberConfig,
    pub options: GmEkfOptions,
    previous: Option<DVector<f64>>,
    last_weights: Option<DVector<f64>>,
}

impl GmEkf {
    pub fn new(state: FilterState, noise: NoiseModel, config: HuberConfig) -> Self {
        Self {
            state,
            noise,
            config,
            options: GmEkfOptions::default(),
            previous: None,
            last_weights: None,
        }
    }

    pub fn with_options(mut self, options: GmEkfOptions) -> Self {
        self.options = options;
        self
    }

    /// Leverage weights ϖ used by the most recent step.
    pub fn last_weights(&self) -> Option<&DVector<f64>> {
        self.last_weights.as_ref()
    }
}

impl Estimator for GmEkf {
    fn name(&self) -> &'static str {
        "gmekf"
    }

    fn state(&self) -> &FilterState {
        &self.state
    }

    fn step(&mut self, model: &dyn StateSpaceModel, obs: &Observation) -> Result<StepInfo> {
        let out = gmekf_step(
            &self.state,
            obs,
            &self.noise,
            model,
            &self.config,
            self.options,
            self.previous.as_ref(),
        )?;
        self.state = out.state;
        self.previous = Some(out.column);
        self.last_weights = Some(out.weights);
        Ok(out.info)
    }
}
