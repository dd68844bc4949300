//! Robust-statistics primitives for the GM-estimator: projection
//! statistics, leverage weights, the Huber functions, the MAD-based scale
//! and the asymptotic efficiency factor.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::{erf, erfc};

use crate::error::{DseError, Result};

/// Makes the MAD a consistent estimator of σ under the Gaussian.
pub const MAD_CONSISTENCY: f64 = 1.4826;

/// Small-sample correction factors for the MAD, indexed by sample size 2..=9.
const SMALL_SAMPLE_B: [f64; 8] = [1.196, 1.495, 1.363, 1.206, 1.200, 1.140, 1.129, 1.107];

#[derive(Debug, Clone, PartialEq)]
pub struct HuberConfig {
    /// Breakpoint of the Huber function.
    pub c: f64,
    /// Projection-statistics threshold of the leverage weights.
    pub d: f64,
    /// IRLS stops once the infinity-norm step falls to this value.
    pub irls_tol: f64,
    pub max_irls_iters: usize,
    /// Re-estimate the robust scale at every IRLS iteration; when false it
    /// is fixed at the initial iterate.
    pub recompute_scale: bool,
}

impl Default for HuberConfig {
    fn default() -> Self {
        Self {
            c: 1.5,
            d: 1.5,
            irls_tol: 0.01,
            max_irls_iters: 50,
            recompute_scale: true,
        }
    }
}

impl HuberConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.d > 0.0 && self.irls_tol > 0.0 && self.max_irls_iters > 0) {
            return Err(DseError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Two consecutive stacked `[innovation; predicted state]` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationMatrix(DMatrix<f64>);

impl InnovationMatrix {
    pub fn new(previous: &DVector<f64>, current: &DVector<f64>) -> Result<Self> {
        if previous.len() != current.len() {
            return Err(DseError::DimensionMismatch(format!(
                "innovation columns of length {} and {}",
                previous.len(),
                current.len()
            )));
        }
        let z = DMatrix::from_columns(&[previous.clone(), current.clone()]);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(DseError::InvalidParameter("non-finite innovation".into()));
        }
        Ok(Self(z))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustWeights {
    pub ps: DVector<f64>,
    pub w: DVector<f64>,
}

/// Median by selection; even counts give the midpoint of the two central
/// order statistics. Reorders `values`.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of an empty sample");
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Projection statistics of the rows of `points`.
///
/// Directions run from the coordinatewise median through each point; along
/// each direction the projections are standardised by their median and
/// MAD, and every point keeps its largest standardised distance.
/// Directions of zero length or zero MAD are skipped.
pub fn projection_statistics(points: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (m, p) = points.shape();
    if m < 3 {
        return Err(DseError::SampleTooSmall);
    }
    let mut scratch = vec![0.0; m];
    let center: Vec<f64> = (0..p)
        .map(|j| {
            scratch.copy_from_slice(points.column(j).as_slice());
            median(&mut scratch)
        })
        .collect();

    let mut ps = DVector::zeros(m);
    let mut proj = vec![0.0; m];
    let mut usable = 0usize;
    let mut dir = vec![0.0; p];
    for j in 0..m {
        let mut norm2 = 0.0;
        for c in 0..p {
            dir[c] = points[(j, c)] - center[c];
            norm2 += dir[c] * dir[c];
        }
        if norm2 == 0.0 {
            continue;
        }
        let norm = norm2.sqrt();
        for (k, pk) in proj.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..p {
                acc += points[(k, c)] * dir[c];
            }
            *pk = acc / norm;
        }
        scratch.copy_from_slice(&proj);
        let loc = median(&mut scratch);
        for (s, pk) in scratch.iter_mut().zip(&proj) {
            *s = (pk - loc).abs();
        }
        let spread = MAD_CONSISTENCY * median(&mut scratch);
        if !(spread > 0.0) {
            continue;
        }
        usable += 1;
        for (psk, pk) in ps.iter_mut().zip(&proj) {
            let dist = (pk - loc).abs() / spread;
            if dist > *psk {
                *psk = dist;
            }
        }
    }
    if usable == 0 {
        return Err(DseError::DegeneratePointCloud);
    }
    Ok(ps)
}

/// Leverage weights `min(1, d² / PS²)`.
pub fn outlier_weights(ps: &DVector<f64>, d: f64) -> DVector<f64> {
    ps.map(|v| {
        if v <= d {
            1.0
        } else {
            (d * d / (v * v)).min(1.0)
        }
    })
}

pub fn huber_rho(r: f64, c: f64) -> f64 {
    let a = r.abs();
    if a < c {
        0.5 * r * r
    } else {
        c * a - 0.5 * c * c
    }
}

pub fn huber_psi(r: f64, c: f64) -> f64 {
    r.clamp(-c, c)
}

/// IRLS weight `ψ(r)/r`, equal to 1 inside the breakpoint.
pub fn huber_weight(r: f64, c: f64) -> f64 {
    let a = r.abs();
    if a <= c {
        1.0
    } else {
        c / a
    }
}

/// MAD correction factor for a sample of `m_prime` residuals.
pub fn b_constant(m_prime: usize) -> Result<f64> {
    match m_prime {
        0 | 1 => Err(DseError::SampleTooSmall),
        2..=9 => Ok(SMALL_SAMPLE_B[m_prime - 2]),
        m => {
            let m = m as f64;
            Ok(m / (m - 0.8))
        }
    }
}

/// `1.4826 · b(m') · median|r_i|`.
pub fn robust_scale(residuals: &[f64], m_prime: usize) -> Result<f64> {
    if residuals.is_empty() {
        return Err(DseError::SampleTooSmall);
    }
    let b = b_constant(m_prime)?;
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    Ok(MAD_CONSISTENCY * b * median(&mut abs))
}

/// `E[ψ²] / (E[ψ'])²` under the standard normal, in closed form.
pub fn efficiency_correction(c: f64) -> f64 {
    assert!(c > 0.0, "breakpoint must be positive");
    if c.is_infinite() {
        return 1.0;
    }
    let inner = erf(c / std::f64::consts::SQRT_2);
    let tail = 0.5 * erfc(c / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let second_moment = 2.0 * c * c * tail + inner - 2.0 * c * pdf;
    second_moment / (inner * inner)
}
