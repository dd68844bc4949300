use nalgebra::{DMatrix, DVector};

use super::{
    check_observation, kept_rows, select_square, select_vec, symmetrize, Estimator, FilterState,
    NoiseModel, Observation, StateSpaceModel, StepInfo,
};
use crate::error::{DseError, Result};

/// Scaled unscented-transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

struct SigmaPoints {
    points: Vec<DVector<f64>>,
    /// Mean weight of every non-central point.
    w_side: f64,
}

fn sigma_points(x: &DVector<f64>, sigma: &DMatrix<f64>, p: &UkfParams) -> Result<SigmaPoints> {
    let n = x.len() as f64;
    let lambda = p.alpha * p.alpha * (n + p.kappa) - n;
    let spread = n + lambda;
    let l = (sigma * spread)
        .cholesky()
        .ok_or(DseError::CovarianceNotPd)?
        .unpack();
    let mut points = Vec::with_capacity(2 * x.len() + 1);
    points.push(x.clone());
    for j in 0..x.len() {
        points.push(x + l.column(j));
    }
    for j in 0..x.len() {
        points.push(x - l.column(j));
    }
    Ok(SigmaPoints {
        points,
        w_side: 0.5 / spread,
    })
}

/// Mean and deviations of transformed sigma points.
///
/// The mean is accumulated as offsets from the central image and the
/// covariance as `Σ wᵢ dᵢdᵢᵀ + (β − α²) e eᵀ` with `dᵢ` the offsets and `e`
/// the mean offset, which equals the textbook sum without its
/// large-weight cancellation.
struct Transformed {
    mean: DVector<f64>,
    /// Offsets of the non-central images from the central one.
    offsets: DMatrix<f64>,
    mean_offset: DVector<f64>,
}

fn transform(
    images: &[DVector<f64>],
    w_side: f64,
    diff: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
) -> Transformed {
    let centre = &images[0];
    let dim = centre.len();
    let mut offsets = DMatrix::zeros(dim, images.len() - 1);
    for (j, img) in images[1..].iter().enumerate() {
        offsets.set_column(j, &diff(img, centre));
    }
    let mean_offset = offsets.column_sum() * w_side;
    Transformed {
        mean: centre + &mean_offset,
        offsets,
        mean_offset,
    }
}

impl Transformed {
    fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            mean: select_vec(&self.mean, rows),
            offsets: DMatrix::from_fn(rows.len(), self.offsets.ncols(), |i, j| {
                self.offsets[(rows[i], j)]
            }),
            mean_offset: select_vec(&self.mean_offset, rows),
        }
    }
}

fn cross_covariance(a: &Transformed, b: &Transformed, w_side: f64, p: &UkfParams) -> DMatrix<f64> {
    &a.offsets * b.offsets.transpose() * w_side
        + &a.mean_offset * b.mean_offset.transpose() * (p.beta - p.alpha * p.alpha)
}

/// One unscented predict/update with additive noise. The update redraws
/// sigma points from the predicted covariance.
pub fn ukf_step(
    fs: &FilterState,
    obs: &Observation,
    noise: &NoiseModel,
    model: &dyn StateSpaceModel,
    params: &UkfParams,
    mask_invalid: bool,
) -> Result<FilterState> {
    check_observation(model, obs)?;
    let plain = |a: &DVector<f64>, b: &DVector<f64>| a - b;

    let sp = sigma_points(&fs.x_hat, &fs.sigma, params)?;
    let propagated = sp
        .points
        .iter()
        .map(|x| model.transition(x))
        .collect::<Result<Vec<_>>>()?;
    let tx = transform(&propagated, sp.w_side, plain);
    let mut sigma_pred = cross_covariance(&tx, &tx, sp.w_side, params) + &noise.w;
    symmetrize(&mut sigma_pred);

    let sp = sigma_points(&tx.mean, &sigma_pred, params)?;
    let states = transform(&sp.points, sp.w_side, plain);
    let images = sp
        .points
        .iter()
        .map(|x| model.measure(x))
        .collect::<Result<Vec<_>>>()?;
    let mut tz = transform(&images, sp.w_side, |a, b| model.innovation(a, b));
    let mut innovation = model.innovation(&obs.z, &tz.mean);
    let mut r = noise.r.clone();
    if let Some(rows) = kept_rows(obs, mask_invalid) {
        tz = tz.select_rows(&rows);
        innovation = select_vec(&innovation, &rows);
        r = select_square(&r, &rows);
    }

    let s = cross_covariance(&tz, &tz, sp.w_side, params) + r;
    let pxz = cross_covariance(&states, &tz, sp.w_side, params);
    let chol = s.cholesky().ok_or(DseError::GainComputationFailed)?;
    let gain: DMatrix<f64> = chol.solve(&pxz.transpose()).transpose();
    let x_hat = &states.mean + &gain * innovation;
    let mut sigma = &sigma_pred - &gain * pxz.transpose();
    symmetrize(&mut sigma);
    Ok(FilterState {
        x_hat,
        sigma,
        k: fs.k + 1,
    })
}

#[derive(Debug, Clone)]
pub struct Ukf {
    pub state: FilterState,
    pub noise: NoiseModel,
    pub params: UkfParams,
    pub mask_invalid: bool,
}

impl Ukf {
    pub fn new(state: FilterState, noise: NoiseModel) -> Self {
        Self {
            state,
            noise,
            params: UkfParams::default(),
            mask_invalid: false,
        }
    }
}

impl Estimator for Ukf {
    fn name(&self) -> &'static str {
        "ukf"
    }

    fn state(&self) -> &FilterState {
        &self.state
    }

    fn step(&mut self, model: &dyn StateSpaceModel, obs: &Observation) -> Result<StepInfo> {
        self.state = ukf_step(
            &self.state,
            obs,
            &self.noise,
            model,
            &self.params,
            self.mask_invalid,
        )?;
        Ok(StepInfo::default())
    }
}
