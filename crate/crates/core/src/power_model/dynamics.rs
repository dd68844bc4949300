//! Classical machine model: swing equations over the reduced network.
//!
//! States are ordered `[ω_1..ω_ng, δ_1..δ_ng]`. Speeds are absolute, in
//! rad/s, so an unperturbed machine sits at `ω = ω_s`.

use nalgebra::{DMatrix, DVector};

use super::network::ReducedNetwork;
use crate::error::{DseError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Inertia constant, seconds on the system base.
    pub inertia_h: f64,
    pub damping_d: f64,
    pub mech_power_pm: f64,
    pub emf_e: f64,
    pub xd_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub omega_s: f64,
    pub n_gen: usize,
    pub n_bus: usize,
    /// Integration and PMU reporting step.
    pub dt: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_s > 0.0 && self.dt > 0.0 && self.n_gen >= 1 && self.n_bus >= self.n_gen)
        {
            return Err(DseError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    pub omega: DVector<f64>,
    pub delta: DVector<f64>,
}

impl DynamicState {
    pub fn new(omega: DVector<f64>, delta: DVector<f64>) -> Self {
        assert_eq!(omega.len(), delta.len());
        Self { omega, delta }
    }

    pub fn n_gen(&self) -> usize {
        self.omega.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n_gen();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.omega[i]
            } else {
                self.delta[i - n]
            }
        })
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        assert!(x.len().is_multiple_of(2));
        let n = x.len() / 2;
        Self {
            omega: x.rows(0, n).into_owned(),
            delta: x.rows(n, n).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.delta.iter()).all(|v| v.is_finite())
    }
}

fn check_dims(state: &DynamicState, net: &ReducedNetwork, gens: &[GeneratorParams]) -> Result<()> {
    if state.omega.len() != gens.len() || state.delta.len() != gens.len() || net.n_gen != gens.len()
    {
        return Err(DseError::DimensionMismatch(format!(
            "state has {} machines, network {}, parameters {}",
            state.n_gen(),
            net.n_gen,
            gens.len()
        )));
    }
    Ok(())
}

/// Electrical power injected at each internal node.
pub fn electrical_power(
    state: &DynamicState,
    net: &ReducedNetwork,
    gens: &[GeneratorParams],
) -> Result<DVector<f64>> {
    check_dims(state, net, gens)?;
    Ok(electrical_power_unchecked(&state.delta, net, gens))
}

pub(crate) fn electrical_power_unchecked(
    delta: &DVector<f64>,
    net: &ReducedNetwork,
    gens: &[GeneratorParams],
) -> DVector<f64> {
    let n = gens.len();
    let (sin, cos) = sin_cos(delta);
    let mut p = DVector::zeros(n);
    for i in 0..n {
        let ei = gens[i].emf_e;
        let mut acc = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            // sin and cos of δ_i − δ_j from the per-machine values
            let s = sin[i] * cos[j] - cos[i] * sin[j];
            let c = cos[i] * cos[j] + sin[i] * sin[j];
            acc += gens[j].emf_e * (net.g[(i, j)] * c + net.b[(i, j)] * s);
        }
        p[i] = net.g[(i, i)] * ei * ei + ei * acc;
    }
    p
}

fn sin_cos(delta: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    delta.iter().map(|d| d.sin_cos()).unzip()
}

/// `∂P_i/∂δ_j` for all pairs.
pub(crate) fn power_angle_sensitivity(
    delta: &DVector<f64>,
    net: &ReducedNetwork,
    gens: &[GeneratorParams],
) -> DMatrix<f64> {
    let n = gens.len();
    let (sin, cos) = sin_cos(delta);
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = sin[i] * cos[j] - cos[i] * sin[j];
            let c = cos[i] * cos[j] + sin[i] * sin[j];
            let ee = gens[i].emf_e * gens[j].emf_e;
            let dij = ee * (net.g[(i, j)] * s - net.b[(i, j)] * c);
            k[(i, j)] = dij;
            diag -= dij;
        }
        k[(i, i)] = diag;
    }
    k
}

/// Time derivative of the state vector `[dω/dt; dδ/dt]`.
pub fn swing_derivative(
    state: &DynamicState,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> Result<DVector<f64>> {
    check_dims(state, net, gens)?;
    Ok(derivative_vec(&state.to_vector(), gens, net, sys))
}

pub(crate) fn derivative_vec(
    x: &DVector<f64>,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> DVector<f64> {
    let n = gens.len();
    let delta = x.rows(n, n).into_owned();
    let pe = electrical_power_unchecked(&delta, net, gens);
    let mut dx = DVector::zeros(2 * n);
    for i in 0..n {
        let slip = x[i] - sys.omega_s;
        let g = &gens[i];
        dx[i] = sys.omega_s / (2.0 * g.inertia_h)
            * (g.mech_power_pm - pe[i] - g.damping_d * slip);
        dx[n + i] = slip;
    }
    dx
}

/// Jacobian of [`swing_derivative`] with respect to the state.
pub fn continuous_jacobian(
    x: &DVector<f64>,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> DMatrix<f64> {
    let n = gens.len();
    let delta = x.rows(n, n).into_owned();
    let dp = power_angle_sensitivity(&delta, net, gens);
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let m = sys.omega_s / (2.0 * gens[i].inertia_h);
        j[(i, i)] = -m * gens[i].damping_d;
        for k in 0..n {
            j[(i, n + k)] = -m * dp[(i, k)];
        }
        j[(n + i, i)] = 1.0;
    }
    j
}

fn rk4_vec(
    x: &DVector<f64>,
    dt: f64,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> DVector<f64> {
    let f = |v: &DVector<f64>| derivative_vec(v, gens, net, sys);
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * dt)));
    let k3 = f(&(x + &k2 * (0.5 * dt)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// One classical Runge-Kutta step of the swing equations.
pub fn discretize_step(
    state: &DynamicState,
    dt: f64,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> Result<DynamicState> {
    check_dims(state, net, gens)?;
    if !(dt > 0.0) {
        return Err(DseError::InvalidParameter(format!("dt = {dt}")));
    }
    let next = DynamicState::from_vector(&rk4_vec(&state.to_vector(), dt, gens, net, sys));
    if !next.is_finite() {
        return Err(DseError::IntegrationDiverged);
    }
    Ok(next)
}

pub(crate) fn step_vec(
    x: &DVector<f64>,
    dt: f64,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> Result<DVector<f64>> {
    let next = rk4_vec(x, dt, gens, net, sys);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(DseError::IntegrationDiverged)
    }
}

/// Jacobian of one RK4 step, propagated analytically through the stages.
pub fn jacobian_f(
    state: &DynamicState,
    dt: f64,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> Result<DMatrix<f64>> {
    check_dims(state, net, gens)?;
    Ok(jacobian_f_vec(&state.to_vector(), dt, gens, net, sys))
}

pub(crate) fn jacobian_f_vec(
    x: &DVector<f64>,
    dt: f64,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> DMatrix<f64> {
    let n = x.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let f = |v: &DVector<f64>| derivative_vec(v, gens, net, sys);
    let jac = |v: &DVector<f64>| continuous_jacobian(v, gens, net, sys);

    let k1 = f(x);
    let d1 = jac(x);
    let x2 = x + &k1 * (0.5 * dt);
    let k2 = f(&x2);
    let d2 = jac(&x2) * (&eye + &d1 * (0.5 * dt));
    let x3 = x + &k2 * (0.5 * dt);
    let k3 = f(&x3);
    let d3 = jac(&x3) * (&eye + &d2 * (0.5 * dt));
    let x4 = x + &k3 * dt;
    let d4 = jac(&x4) * (&eye + &d3 * dt);
    eye + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (dt / 6.0)
}

/// Central finite-difference Jacobian of one RK4 step.
pub fn jacobian_f_fd(
    state: &DynamicState,
    dt: f64,
    h: f64,
    gens: &[GeneratorParams],
    net: &ReducedNetwork,
    sys: &SystemParams,
) -> Result<DMatrix<f64>> {
    check_dims(state, net, gens)?;
    let x = state.to_vector();
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (rk4_vec(&xp, dt, gens, net, sys) - rk4_vec(&xm, dt, gens, net, sys)) / (2.0 * h);
        out.set_column(j, &col);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn network(g: DMatrix<f64>, b: DMatrix<f64>) -> ReducedNetwork {
        ReducedNetwork::from_reduced(g, b)
    }

    fn gens(n: usize, h: f64, d: f64, pm: f64, e: f64) -> Vec<GeneratorParams> {
        vec![
            GeneratorParams {
                inertia_h: h,
                damping_d: d,
                mech_power_pm: pm,
                emf_e: e,
                xd_prime: 0.1,
            };
            n
        ]
    }

    fn sys(n: usize) -> SystemParams {
        SystemParams {
            omega_s: 2.0 * PI * 60.0,
            n_gen: n,
            n_bus: n,
            dt: 1.0 / 60.0,
        }
    }

    #[test]
    fn two_machine_power_transfer() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let net = network(DMatrix::zeros(2, 2), b);
        let st = DynamicState::new(DVector::zeros(2), DVector::from_vec(vec![PI / 6.0, 0.0]));
        let p = electrical_power(&st, &net, &gens(2, 1.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn equal_angles_leave_only_self_conductance() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7]));
        let b = DMatrix::from_row_slice(2, 2, &[-5.0, 2.0, 2.0, -4.0]);
        let net = network(g, b);
        let mut gs = gens(2, 1.0, 0.0, 0.0, 1.0);
        gs[1].emf_e = 1.2;
        let st = DynamicState::new(DVector::zeros(2), DVector::from_element(2, 0.4));
        let p = electrical_power(&st, &net, &gs).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15);
        assert!((p[1] - 0.7 * 1.44).abs() < 1e-15);
    }

    #[test]
    fn unit_forcing_and_fixed_point() {
        let net = network(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1));
        let s = sys(1);
        let h = 3.0;
        let gs = gens(1, h, 0.0, 2.0 * h / s.omega_s, 1.0);
        let st = DynamicState::new(DVector::from_element(1, s.omega_s), DVector::zeros(1));
        let dx = swing_derivative(&st, &gs, &net, &s).unwrap();
        assert!((dx[0] - 1.0).abs() < 1e-14);
        assert_eq!(dx[1], 0.0);

        let gs = gens(1, h, 0.5, 0.0, 1.0);
        let dx = swing_derivative(&st, &gs, &net, &s).unwrap();
        assert_eq!(dx, DVector::zeros(2));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = network(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2));
        let st = DynamicState::new(DVector::zeros(3), DVector::zeros(3));
        assert!(matches!(
            electrical_power(&st, &net, &gens(2, 1.0, 0.0, 0.0, 1.0)),
            Err(DseError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn linear_oscillator_over_one_period() {
        // Machine 1 swings against a machine of effectively infinite inertia:
        // 2H/ω_s δ'' = −K sin δ, which for small δ is δ(t) = δ0 cos(ω_n t)
        // with ω_n² = ω_s K / 2H.
        let (h, k, amp) = (4.0, 1.5, 0.01);
        let s = sys(2);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, k, k, 0.0]);
        let net = network(DMatrix::zeros(2, 2), b);
        let mut gs = gens(2, h, 0.0, 0.0, 1.0);
        gs[1].inertia_h = 1e15;
        let wn = (s.omega_s * k / (2.0 * h)).sqrt();
        let steps = 45;
        let dt = 2.0 * PI / wn / steps as f64;
        let mut st = DynamicState::new(
            DVector::from_element(2, s.omega_s),
            DVector::from_vec(vec![amp, 0.0]),
        );
        let mut worst: f64 = 0.0;
        for i in 1..=steps {
            st = discretize_step(&st, dt, &gs, &net, &s).unwrap();
            let exact = amp * (wn * dt * i as f64).cos();
            worst = worst.max((st.delta[0] - st.delta[1] - exact).abs());
        }
        assert!(worst < 1e-6, "worst deviation {worst}");
    }
}
