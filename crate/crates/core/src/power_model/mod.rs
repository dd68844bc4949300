//! Multimachine classical-model power system: network reduction, swing
//! dynamics, PMU measurement functions and their Jacobians.

pub mod case;
pub mod dynamics;
pub mod measurement;
pub mod network;

use nalgebra::{DMatrix, DVector};

pub use case::CaseData;
pub use dynamics::{
    discretize_step, electrical_power, jacobian_f, jacobian_f_fd, swing_derivative, DynamicState,
    GeneratorParams, SystemParams,
};
pub use measurement::{jacobian_h, measurement_fn, Channel, ChannelLayout, MeasurementFrame};
pub use network::{reduce_network, ReducedNetwork, C64};

use crate::error::{DseError, Result};
use crate::filters::StateSpaceModel;

/// How the transition Jacobian `∂f/∂x` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransitionJacobian {
    /// Exact derivative of the RK4 map, propagated through the stages.
    #[default]
    Analytic,
    /// Central differences with step `1e-6`.
    FiniteDifference,
}

/// Everything needed to evaluate `f` and `g` for one network.
#[derive(Debug, Clone)]
pub struct PowerSystem {
    pub sys: SystemParams,
    pub gens: Vec<GeneratorParams>,
    pub net: ReducedNetwork,
    pub layout: ChannelLayout,
    pub transition_jacobian: TransitionJacobian,
}

impl PowerSystem {
    pub fn from_case(case: &CaseData, dt: f64) -> Result<Self> {
        let net = reduce_network(case)?;
        let sys = SystemParams {
            omega_s: case.omega_s(),
            n_gen: case.generators.len(),
            n_bus: case.buses.len(),
            dt,
        };
        sys.validate()?;
        let gens = case
            .generators
            .iter()
            .map(|g| GeneratorParams {
                inertia_h: g.h,
                damping_d: g.d,
                mech_power_pm: g.pm,
                emf_e: g.e,
                xd_prime: g.xd_prime,
            })
            .collect();
        Ok(Self {
            sys,
            gens,
            net,
            layout: ChannelLayout {
                n_gen: case.generators.len(),
                bus_ids: case.buses.iter().map(|b| b.id).collect(),
            },
            transition_jacobian: TransitionJacobian::default(),
        })
    }

    /// Rotor angles implied by the solved power flow, at synchronous speed.
    ///
    /// Each internal EMF is `V_t + j x'd I_g`, with the machine current
    /// taken from the network equations at the terminal bus.
    pub fn initial_state(case: &CaseData) -> Result<DynamicState> {
        let index = case.bus_index();
        let y = network::bus_admittance(case);
        let loads = network::load_admittances(case);
        let v = DVector::from_iterator(
            case.buses.len(),
            case.buses.iter().map(|b| C64::from_polar(b.v_mag, b.v_ang)),
        );
        let injected = &y * &v;
        let n = case.generators.len();
        let mut delta = DVector::zeros(n);
        for (i, g) in case.generators.iter().enumerate() {
            let k = index[&g.bus];
            let current = injected[k] + loads[k] * v[k];
            let emf = v[k] + C64::new(0.0, g.xd_prime) * current;
            if !emf.norm().is_finite() {
                return Err(DseError::NetworkSolveFailed);
            }
            delta[i] = emf.arg();
        }
        Ok(DynamicState::new(
            DVector::from_element(n, case.omega_s()),
            delta,
        ))
    }

    pub fn n_gen(&self) -> usize {
        self.sys.n_gen
    }

    pub fn electrical_power(&self, state: &DynamicState) -> Result<DVector<f64>> {
        electrical_power(state, &self.net, &self.gens)
    }

    pub fn derivative(&self, state: &DynamicState) -> Result<DVector<f64>> {
        swing_derivative(state, &self.gens, &self.net, &self.sys)
    }

    pub fn step(&self, state: &DynamicState) -> Result<DynamicState> {
        discretize_step(state, self.sys.dt, &self.gens, &self.net, &self.sys)
    }

    pub fn measure(&self, state: &DynamicState) -> Result<MeasurementFrame> {
        measurement_fn(state, &self.net, &self.gens, &self.sys)
    }
}

impl StateSpaceModel for PowerSystem {
    fn n_states(&self) -> usize {
        2 * self.sys.n_gen
    }

    fn n_measurements(&self) -> usize {
        self.layout.n_channels()
    }

    fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        dynamics::step_vec(x, self.sys.dt, &self.gens, &self.net, &self.sys)
    }

    fn transition_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.transition_jacobian {
            TransitionJacobian::Analytic => Ok(dynamics::jacobian_f_vec(
                x,
                self.sys.dt,
                &self.gens,
                &self.net,
                &self.sys,
            )),
            TransitionJacobian::FiniteDifference => jacobian_f_fd(
                &DynamicState::from_vector(x),
                self.sys.dt,
                1e-6,
                &self.gens,
                &self.net,
                &self.sys,
            ),
        }
    }

    fn measure(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        measurement::measurement_vec(x, &self.net, &self.gens)
    }

    fn measurement_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        measurement::jacobian_h_vec(x, &self.net, &self.gens, measurement::JACOBIAN_H_STEP)
    }

    fn innovation(&self, z: &DVector<f64>, predicted: &DVector<f64>) -> DVector<f64> {
        let mut r = z - predicted;
        for k in 0..r.len() {
            if self.layout.is_angle(k) {
                r[k] = measurement::wrap_angle(r[k]);
            }
        }
        r
    }
}
