//! Dynamic state estimation for multimachine power systems.
//!
//! The crate models a network of classical (second-order) synchronous
//! machines observed by PMUs, and estimates rotor angles and speeds with
//! three filters that share one model interface:
//!
//! * [`filters::Ekf`], the standard extended Kalman filter;
//! * [`filters::GmEkf`], a robust GM-estimator based EKF that solves a
//!   prewhitened batch regression by IRLS with Huber weights and
//!   projection-statistics leverage weights;
//! * [`filters::Ukf`], an unscented Kalman filter baseline.
//!
//! [`simulator`] produces ground-truth trajectories and PMU streams with
//! communication-loss and gross-error faults.
//!
//! ```
//! use dse_core::power_model::CaseData;
//! use dse_core::simulator::{run_filter, Experiment, FilterKind, FilterSettings, Scenario};
//!
//! let case = CaseData::parse(dse_core::CASE39)?;
//! let mut scenario = Scenario::parse(dse_core::scenarios::BAD_DATA)?;
//! scenario.duration = 5.0;
//! let exp = Experiment::prepare(&case, &scenario)?;
//! let run = run_filter(&exp, FilterKind::GmEkf, &FilterSettings::default())?;
//! assert!(run.error < 0.05);
//! # Ok::<(), dse_core::DseError>(())
//! ```

pub mod error;
pub mod filters;
pub mod power_model;
pub mod robust_stats;
pub mod simulator;

pub use error::{DseError, Result};

/// The shipped New England 39-bus case, see `docs/case-format.md`.
pub const CASE39: &str = include_str!("../data/case39.txt");

/// Shipped scenario files reproducing the three experiments.
pub mod scenarios {
    pub const CLEAN: &str = include_str!("../data/scenarios/case1_clean.toml");
    pub const COMM_LOSS: &str = include_str!("../data/scenarios/case2_comm_loss.toml");
    pub const BAD_DATA: &str = include_str!("../data/scenarios/case3_bad_data.toml");
}
