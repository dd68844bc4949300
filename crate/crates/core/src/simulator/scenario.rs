//! Scenario files: TOML with a `version = 1` header.
//!
//! ```toml
//! version = 1
//! name = "comm-loss"
//! duration = 10.0
//! seed = 42
//!
//! [noise]
//! process = 1e-4
//! measurement = 1e-4
//!
//! [disturbance]
//! kind = "load-scale"
//! target = 16
//! factor = 1.5
//! t_start = 0.5
//! t_end = 0.6
//!
//! [[faults]]
//! kind = "comm-loss"
//! channels = ["P5", "Q5", "V34", "theta34"]
//! t_start = 4.0
//! t_end = 6.0
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{DseError, Result};
use crate::power_model::{Channel, ChannelLayout};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Simulated time, seconds.
    pub duration: f64,
    pub seed: u64,
    /// Integration and reporting step; defaults to one cycle.
    pub dt: Option<f64>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub disturbance: Option<Disturbance>,
    #[serde(default)]
    pub faults: Vec<Fault>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Diagonal of W.
    #[serde(default = "default_variance")]
    pub process: f64,
    /// Diagonal of R.
    #[serde(default = "default_variance")]
    pub measurement: f64,
    /// Diagonal of the initial filter covariance; defaults to `process`.
    pub initial: Option<f64>,
    /// Also drive the true trajectory with process noise.
    #[serde(default)]
    pub perturb_truth: bool,
}

fn default_variance() -> f64 {
    1e-4
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            process: default_variance(),
            measurement: default_variance(),
            initial: None,
            perturb_truth: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    /// Multiply the P and Q load of bus `target`.
    LoadScale,
    /// Multiply the mechanical power of the machine at bus `target`.
    MechPowerStep,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub kind: DisturbanceKind,
    pub target: i64,
    pub factor: f64,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    /// Channels read zero and are flagged invalid.
    CommLoss,
    /// Channels are overwritten with `value`.
    GrossError,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    pub kind: FaultKind,
    pub channels: Vec<String>,
    pub t_start: f64,
    /// Open-ended when absent.
    pub t_end: Option<f64>,
    #[serde(default)]
    pub value: f64,
}

impl Fault {
    /// True when `t` falls in `[t_start, t_end]`.
    pub fn active(&self, t: f64) -> bool {
        const EPS: f64 = 1e-9;
        t >= self.t_start - EPS && self.t_end.is_none_or(|end| t <= end + EPS)
    }

    pub fn channel_indices(&self, layout: &ChannelLayout) -> Result<Vec<usize>> {
        self.channels
            .iter()
            .map(|name| layout.index(name.parse::<Channel>()?))
            .collect()
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| DseError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            DseError::Scenario(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1.0 / 60.0)
    }

    /// Number of filter steps after the initial instant.
    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt()).round() as usize
    }

    pub fn initial_variance(&self) -> f64 {
        self.noise.initial.unwrap_or(self.noise.process)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DseError::Scenario(msg));
        if self.version != SCENARIO_VERSION {
            return bad(format!("unsupported scenario version {}", self.version));
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        if !(self.dt() > 0.0) {
            return bad("dt must be positive".into());
        }
        if !(self.noise.process > 0.0 && self.noise.measurement >= 0.0) {
            return bad("process variance must be positive, measurement non-negative".into());
        }
        if self.initial_variance() <= 0.0 {
            return bad("initial variance must be positive".into());
        }
        let window = |start: f64, end: f64| 0.0 <= start && start < end && end <= self.duration;
        if let Some(d) = &self.disturbance {
            if !window(d.t_start, d.t_end) {
                return bad(format!("disturbance window [{}, {}]", d.t_start, d.t_end));
            }
            if !(d.factor.is_finite() && d.factor >= 0.0) {
                return bad(format!("disturbance factor {}", d.factor));
            }
        }
        for f in &self.faults {
            let end = f.t_end.unwrap_or(self.duration);
            if !window(f.t_start, end) {
                return bad(format!("fault window [{}, {end}]", f.t_start));
            }
            if f.channels.is_empty() {
                return bad("fault lists no channels".into());
            }
            for name in &f.channels {
                name.parse::<Channel>()?;
            }
            if !f.value.is_finite() {
                return bad("fault value must be finite".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenarios_parse() {
        for text in [
            crate::scenarios::CLEAN,
            crate::scenarios::COMM_LOSS,
            crate::scenarios::BAD_DATA,
        ] {
            let sc = Scenario::parse(text).unwrap();
            assert_eq!(sc.n_steps(), 600);
            assert!(sc.disturbance.is_some());
        }
        let comm = Scenario::parse(crate::scenarios::COMM_LOSS).unwrap();
        assert_eq!(comm.faults[0].kind, FaultKind::CommLoss);
        assert_eq!(comm.faults[0].channels.len(), 4);
    }

    #[test]
    fn rejects_bad_files() {
        let base = "version = 1\nduration = 2.0\nseed = 1\n";
        assert!(Scenario::parse(base).is_ok());
        assert!(Scenario::parse(&base.replace("version = 1", "version = 2")).is_err());
        assert!(Scenario::parse(&format!("{base}colour = 3\n")).is_err());
        let bad_window = format!(
            "{base}[[faults]]\nkind = \"comm-loss\"\nchannels = [\"P1\"]\nt_start = 1.5\nt_end = 1.0\n"
        );
        assert!(Scenario::parse(&bad_window).is_err());
        let bad_channel = format!(
            "{base}[[faults]]\nkind = \"gross-error\"\nchannels = [\"X1\"]\nt_start = 1.0\nvalue = 3\n"
        );
        assert!(matches!(
            Scenario::parse(&bad_channel),
            Err(DseError::UnknownChannel(_))
        ));
    }

    #[test]
    fn fault_windows_are_closed() {
        let f = Fault {
            kind: FaultKind::CommLoss,
            channels: vec!["P1".into()],
            t_start: 4.0,
            t_end: Some(6.0),
            value: 0.0,
        };
        assert!(!f.active(3.99));
        assert!(f.active(4.0) && f.active(6.0));
        assert!(!f.active(6.01));
    }
}
