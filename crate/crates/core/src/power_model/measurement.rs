//! PMU measurement model `z = g(x)`.
//!
//! Channels are stacked as `[P_1..P_ng, Q_1..Q_ng, V_1..V_nb, θ_1..θ_nb]`.
//! Bus phasors come from solving the augmented network with the internal
//! EMFs `E_i∠δ_i` as sources; `Q_i` is the reactive power delivered at the
//! terminal of machine `i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::dynamics::{electrical_power_unchecked, DynamicState, GeneratorParams, SystemParams};
use super::network::{ReducedNetwork, C64};
use crate::error::{DseError, Result};

/// Finite-difference step used for `∂g/∂x`.
pub const JACOBIAN_H_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub theta: DVector<f64>,
    /// One flag per channel, in stacking order.
    pub valid: Vec<bool>,
    pub timestamp: f64,
}

impl MeasurementFrame {
    pub fn n_channels(&self) -> usize {
        self.p.len() + self.q.len() + self.v.len() + self.theta.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut z = Vec::with_capacity(self.n_channels());
        for block in [&self.p, &self.q, &self.v, &self.theta] {
            z.extend(block.iter());
        }
        DVector::from_vec(z)
    }

    pub fn from_vector(n_gen: usize, z: &DVector<f64>, valid: Vec<bool>, timestamp: f64) -> Self {
        let n_bus = (z.len() - 2 * n_gen) / 2;
        assert_eq!(z.len(), 2 * n_gen + 2 * n_bus);
        assert_eq!(valid.len(), z.len());
        Self {
            p: z.rows(0, n_gen).into_owned(),
            q: z.rows(n_gen, n_gen).into_owned(),
            v: z.rows(2 * n_gen, n_bus).into_owned(),
            theta: z.rows(2 * n_gen + n_bus, n_bus).into_owned(),
            valid,
            timestamp,
        }
    }

    pub fn get(&self, channel: usize) -> f64 {
        let ng = self.p.len();
        let nb = self.v.len();
        match channel {
            c if c < ng => self.p[c],
            c if c < 2 * ng => self.q[c - ng],
            c if c < 2 * ng + nb => self.v[c - 2 * ng],
            c => self.theta[c - 2 * ng - nb],
        }
    }

    pub fn set(&mut self, channel: usize, value: f64) {
        let ng = self.p.len();
        let nb = self.v.len();
        match channel {
            c if c < ng => self.p[c] = value,
            c if c < 2 * ng => self.q[c - ng] = value,
            c if c < 2 * ng + nb => self.v[c - 2 * ng] = value,
            c => self.theta[c - 2 * ng - nb] = value,
        }
    }
}

/// A named measurement channel. Generators are numbered from 1 in case
/// order; buses use their case-file ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    P(usize),
    Q(usize),
    V(i64),
    Theta(i64),
}

impl FromStr for Channel {
    type Err = DseError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || DseError::UnknownChannel(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        let (kind, num) = if let Some(rest) = lower.strip_prefix("theta") {
            ("theta", rest)
        } else {
            lower.split_at(lower.chars().next().map_or(0, |c| c.len_utf8()))
        };
        let num = num.trim_start_matches('_');
        match kind {
            "p" => Ok(Channel::P(num.parse().map_err(|_| bad())?)),
            "q" => Ok(Channel::Q(num.parse().map_err(|_| bad())?)),
            "v" => Ok(Channel::V(num.parse().map_err(|_| bad())?)),
            "theta" => Ok(Channel::Theta(num.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::P(i) => write!(f, "P{i}"),
            Channel::Q(i) => write!(f, "Q{i}"),
            Channel::V(b) => write!(f, "V{b}"),
            Channel::Theta(b) => write!(f, "theta{b}"),
        }
    }
}

/// Maps named channels to positions in the stacked measurement vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLayout {
    pub n_gen: usize,
    pub bus_ids: Vec<i64>,
}

impl ChannelLayout {
    pub fn n_channels(&self) -> usize {
        2 * self.n_gen + 2 * self.bus_ids.len()
    }

    pub fn index(&self, channel: Channel) -> Result<usize> {
        let ng = self.n_gen;
        let nb = self.bus_ids.len();
        let bus = |id: i64| {
            self.bus_ids
                .iter()
                .position(|&b| b == id)
                .ok_or_else(|| DseError::UnknownChannel(channel.to_string()))
        };
        match channel {
            Channel::P(i) if (1..=ng).contains(&i) => Ok(i - 1),
            Channel::Q(i) if (1..=ng).contains(&i) => Ok(ng + i - 1),
            Channel::V(id) => Ok(2 * ng + bus(id)?),
            Channel::Theta(id) => Ok(2 * ng + nb + bus(id)?),
            _ => Err(DseError::UnknownChannel(channel.to_string())),
        }
    }

    pub fn channel(&self, index: usize) -> Channel {
        let ng = self.n_gen;
        let nb = self.bus_ids.len();
        match index {
            c if c < ng => Channel::P(c + 1),
            c if c < 2 * ng => Channel::Q(c - ng + 1),
            c if c < 2 * ng + nb => Channel::V(self.bus_ids[c - 2 * ng]),
            c => Channel::Theta(self.bus_ids[c - 2 * ng - nb]),
        }
    }

    pub fn is_angle(&self, index: usize) -> bool {
        index >= 2 * self.n_gen + self.bus_ids.len()
    }
}

pub(crate) fn measurement_vec(
    x: &DVector<f64>,
    net: &ReducedNetwork,
    gens: &[GeneratorParams],
) -> Result<DVector<f64>> {
    let ng = gens.len();
    let nb = net.n_bus;
    if nb == 0 {
        return Err(DseError::NetworkSolveFailed);
    }
    let delta = x.rows(ng, ng).into_owned();
    let emf = DVector::from_fn(ng, |i, _| C64::from_polar(gens[i].emf_e, delta[i]));
    let volts = net.bus_voltages(&emf);
    let p = electrical_power_unchecked(&delta, net, gens);
    let mut z = DVector::zeros(2 * ng + 2 * nb);
    for i in 0..ng {
        let vt = volts[net.gen_bus[i]];
        let current = net.link_admittance[i] * (emf[i] - vt);
        z[i] = p[i];
        z[ng + i] = (vt * current.conj()).im;
    }
    for (k, v) in volts.iter().enumerate() {
        z[2 * ng + k] = v.norm();
        z[2 * ng + nb + k] = v.arg();
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(DseError::NetworkSolveFailed);
    }
    Ok(z)
}

/// Noise-free measurements for the given state.
pub fn measurement_fn(
    state: &DynamicState,
    net: &ReducedNetwork,
    gens: &[GeneratorParams],
    sys: &SystemParams,
) -> Result<MeasurementFrame> {
    if state.n_gen() != gens.len() || net.n_gen != gens.len() || sys.n_gen != gens.len() {
        return Err(DseError::DimensionMismatch("measurement model".into()));
    }
    let z = measurement_vec(&state.to_vector(), net, gens)?;
    let m = z.len();
    Ok(MeasurementFrame::from_vector(gens.len(), &z, vec![true; m], 0.0))
}

pub(crate) fn jacobian_h_vec(
    x: &DVector<f64>,
    net: &ReducedNetwork,
    gens: &[GeneratorParams],
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let m = 2 * gens.len() + 2 * net.n_bus;
    let mut out = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let x0 = xp[j];
        xp[j] = x0 + step;
        let zp = measurement_vec(&xp, net, gens)?;
        xp[j] = x0 - step;
        let zm = measurement_vec(&xp, net, gens)?;
        xp[j] = x0;
        let mut col = zp - zm;
        // keep angle differences on the short arc
        for k in (2 * gens.len() + net.n_bus)..m {
            col[k] = wrap_angle(col[k]);
        }
        out.set_column(j, &(col / (2.0 * step)));
    }
    Ok(out)
}

/// Central finite-difference `∂g/∂x`. Rows of invalid channels are
/// included; masking is up to the estimator.
pub fn jacobian_h(
    state: &DynamicState,
    net: &ReducedNetwork,
    gens: &[GeneratorParams],
) -> Result<DMatrix<f64>> {
    jacobian_h_vec(&state.to_vector(), net, gens, JACOBIAN_H_STEP)
}

/// Maps an angle difference into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        a
    } else {
        let w = (a + PI).rem_euclid(2.0 * PI) - PI;
        if w == -PI {
            PI
        } else {
            w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_model::{CaseData, PowerSystem};

    fn flat_case() -> PowerSystem {
        // Lossless, unloaded, all EMFs 1∠0: no current flows anywhere.
        let text = "version 1\n[system]\nbase_mva 100\nfrequency 60\n\
            [buses]\n1 0 0 1 0\n2 0 0 1 0\n3 0 0 1 0\n\
            [branches]\n1 2 0 0.1 0\n2 3 0 0.1 0\n\
            [generators]\n1 4 0 0.2 0 1\n3 4 0 0.2 0 1\n";
        PowerSystem::from_case(&CaseData::parse(text).unwrap(), 1.0 / 60.0).unwrap()
    }

    #[test]
    fn flat_network_has_no_flows() {
        let ps = flat_case();
        let st = DynamicState::new(DVector::from_element(2, ps.sys.omega_s), DVector::zeros(2));
        let frame = measurement_fn(&st, &ps.net, &ps.gens, &ps.sys).unwrap();
        assert!(frame.p.amax() < 1e-14 && frame.q.amax() < 1e-14);
        assert!(frame.v.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(frame.theta.amax() < 1e-14);
    }

    #[test]
    fn channel_names_round_trip() {
        let layout = ChannelLayout {
            n_gen: 10,
            bus_ids: (1..=39).collect(),
        };
        for name in ["P5", "Q7", "V34", "theta34"] {
            let ch: Channel = name.parse().unwrap();
            assert_eq!(ch.to_string(), name);
            let idx = layout.index(ch).unwrap();
            assert_eq!(layout.channel(idx), ch);
        }
        assert_eq!(layout.index(Channel::Q(7)).unwrap(), 16);
        assert_eq!(layout.index(Channel::Theta(34)).unwrap(), 20 + 39 + 33);
        assert!(layout.index(Channel::P(11)).is_err());
        assert!("X4".parse::<Channel>().is_err());
        assert!(layout.is_angle(97) && !layout.is_angle(58));
    }

    #[test]
    fn frame_vector_layout() {
        let z = DVector::from_fn(10, |i, _| i as f64);
        let mut f = MeasurementFrame::from_vector(2, &z, vec![true; 10], 0.5);
        assert_eq!(f.q[1], 3.0);
        assert_eq!(f.theta[0], 7.0);
        assert_eq!(f.get(8), 8.0);
        f.set(2, -1.0);
        assert_eq!(f.q[0], -1.0);
        assert_eq!(f.to_vector()[2], -1.0);
    }

    #[test]
    fn angle_wrapping() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(0.3), 0.3);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-3.0 * PI) - PI).abs() < 1e-12);
    }
}
