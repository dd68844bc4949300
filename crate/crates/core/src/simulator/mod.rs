//! Ground truth, synthetic PMU streams and fault injection.

mod runner;
mod scenario;

pub use runner::{build_estimator, run_filter, Experiment, FilterKind, FilterRun, FilterSettings};
pub use scenario::{
    Disturbance, DisturbanceKind, Fault, FaultKind, NoiseSpec, Scenario, SCENARIO_VERSION,
};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DseError, Result};
use crate::power_model::{CaseData, ChannelLayout, DynamicState, MeasurementFrame, PowerSystem};

/// RNG stream reserved for process noise on the true trajectory.
const TRUTH_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DynamicState>,
    /// Noise-free measurements of each state.
    pub frames: Vec<MeasurementFrame>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_vectors(&self) -> Vec<DVector<f64>> {
        self.states.iter().map(DynamicState::to_vector).collect()
    }
}

/// Models in force before, during and after the disturbance window.
fn disturbed_system(case: &CaseData, d: &Disturbance, dt: f64) -> Result<PowerSystem> {
    match d.kind {
        DisturbanceKind::LoadScale => PowerSystem::from_case(&case.with_scaled_load(d.target, d.factor)?, dt),
        DisturbanceKind::MechPowerStep => {
            let mut ps = PowerSystem::from_case(case, dt)?;
            let i = case
                .generators
                .iter()
                .position(|g| g.bus == d.target)
                .ok_or_else(|| DseError::Scenario(format!("no generator at bus {}", d.target)))?;
            ps.gens[i].mech_power_pm *= d.factor;
            Ok(ps)
        }
    }
}

/// Integrates the swing equations from the power-flow equilibrium,
/// switching to the disturbed model for steps that start inside the
/// disturbance window.
pub fn simulate_truth(case: &CaseData, scenario: &Scenario) -> Result<Trajectory> {
    let dt = scenario.dt();
    let nominal = PowerSystem::from_case(case, dt)?;
    let disturbed = scenario
        .disturbance
        .as_ref()
        .map(|d| disturbed_system(case, d, dt))
        .transpose()?;
    let in_window = |t: f64| {
        scenario
            .disturbance
            .as_ref()
            .is_some_and(|d| t >= d.t_start - 1e-9 && t < d.t_end - 1e-9)
    };
    let mut truth_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    truth_rng.set_stream(TRUTH_STREAM);
    let process_std = scenario.noise.process.sqrt();

    let steps = scenario.n_steps();
    let mut state = PowerSystem::initial_state(case)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut frames = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let active = match (&disturbed, in_window(t)) {
            (Some(d), true) => d,
            _ => &nominal,
        };
        let mut frame = active.measure(&state)?;
        frame.timestamp = t;
        times.push(t);
        states.push(state.clone());
        frames.push(frame);
        if k == steps {
            break;
        }
        let mut next = active
            .step(&state)
            .map_err(|_| DseError::UnstableTrajectory(t))?;
        if scenario.noise.perturb_truth {
            let mut x = next.to_vector();
            for v in x.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut truth_rng);
                *v += process_std * e;
            }
            next = DynamicState::from_vector(&x);
        }
        if next.delta.iter().any(|d| d.abs() > 1e3) {
            return Err(DseError::UnstableTrajectory(t));
        }
        state = next;
    }
    Ok(Trajectory {
        times,
        states,
        frames,
    })
}

/// `z_k = g(x_k) + v_k` with `v_k ~ N(0, R)`. A diagonal `R` may contain
/// zeros; otherwise it must be positive definite.
pub fn synthesize_measurements(
    traj: &Trajectory,
    r: &DMatrix<f64>,
    seed: u64,
) -> Result<Vec<MeasurementFrame>> {
    let Some(first) = traj.frames.first() else {
        return Ok(Vec::new());
    };
    let m = first.n_channels();
    if r.shape() != (m, m) {
        return Err(DseError::DimensionMismatch(format!(
            "R is {:?} for {m} channels",
            r.shape()
        )));
    }
    let is_diagonal = (0..m).all(|i| (0..m).all(|j| i == j || r[(i, j)] == 0.0));
    let factor = if is_diagonal {
        if r.diagonal().iter().any(|v| *v < 0.0) {
            return Err(DseError::CovarianceNotPd);
        }
        DMatrix::from_diagonal(&r.diagonal().map(f64::sqrt))
    } else {
        r.clone()
            .cholesky()
            .ok_or(DseError::CovarianceNotPd)?
            .unpack()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_gen = first.p.len();
    Ok(traj
        .frames
        .iter()
        .map(|frame| {
            let e = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            let z = frame.to_vector() + &factor * e;
            MeasurementFrame::from_vector(n_gen, &z, frame.valid.clone(), frame.timestamp)
        })
        .collect())
}

/// Overwrites faulted channels inside their windows. Frames outside every
/// window are returned unchanged.
pub fn apply_faults(
    stream: &[MeasurementFrame],
    scenario: &Scenario,
    layout: &ChannelLayout,
) -> Result<Vec<MeasurementFrame>> {
    let resolved = scenario
        .faults
        .iter()
        .map(|f| Ok((f, f.channel_indices(layout)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = stream.to_vec();
    for frame in &mut out {
        for (fault, channels) in &resolved {
            if !fault.active(frame.timestamp) {
                continue;
            }
            for &c in channels {
                match fault.kind {
                    FaultKind::CommLoss => {
                        frame.set(c, 0.0);
                        frame.valid[c] = false;
                    }
                    FaultKind::GrossError => frame.set(c, fault.value),
                }
            }
        }
    }
    Ok(out)
}

/// Root-mean-square error over every state and every step.
pub fn overall_error(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(DseError::DimensionMismatch(format!(
            "{} estimates against {} true states",
            estimates.len(),
            truth.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != t.len() {
            return Err(DseError::DimensionMismatch("state length".into()));
        }
        sum += (e - t).norm_squared();
        count += e.len();
    }
    Ok((sum / count as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case() -> CaseData {
        CaseData::parse(crate::CASE39).unwrap()
    }

    fn quiet(duration: f64) -> Scenario {
        Scenario::parse(&format!("version = 1\nduration = {duration}\nseed = 3\n")).unwrap()
    }

    #[test]
    fn equilibrium_is_held() {
        let traj = simulate_truth(&case(), &quiet(10.0)).unwrap();
        assert_eq!(traj.len(), 601);
        let x0 = traj.states[0].to_vector();
        let drift = traj
            .states
            .iter()
            .map(|s| (s.to_vector() - &x0).amax())
            .fold(0.0, f64::max);
        assert!(drift < 1e-8, "drift {drift}");
    }

    #[test]
    fn disturbance_starts_oscillations() {
        let sc = Scenario::parse(crate::scenarios::CLEAN).unwrap();
        let traj = simulate_truth(&case(), &sc).unwrap();
        let ws = case().omega_s();
        let d = sc.disturbance.as_ref().unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let dev = (&s.omega - DVector::from_element(10, ws)).amax();
            if *t <= d.t_start {
                assert!(dev < 1e-8);
            }
        }
        let late = traj.states.last().unwrap();
        let spread = late.omega.max() - late.omega.min();
        assert!(spread > 1e-3, "speed spread {spread}");
        let dt = traj.times[1] - traj.times[0];
        assert!(traj.times.windows(2).all(|w| (w[1] - w[0] - dt).abs() < 1e-12));
    }

    #[test]
    fn zero_noise_and_seeded_noise() {
        let traj = simulate_truth(&case(), &quiet(1.0)).unwrap();
        let zero = synthesize_measurements(&traj, &DMatrix::zeros(98, 98), 1).unwrap();
        assert_eq!(zero, traj.frames);
        let r = DMatrix::identity(98, 98) * 1e-4;
        let a = synthesize_measurements(&traj, &r, 5).unwrap();
        let b = synthesize_measurements(&traj, &r, 5).unwrap();
        let c = synthesize_measurements(&traj, &r, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn measurement_noise_has_the_requested_variance() {
        let mut sc = quiet(1.0);
        sc.duration = 10_000.0 / 60.0;
        let base = simulate_truth(&case(), &quiet(0.1)).unwrap();
        let frame = base.frames[0].clone();
        let traj = Trajectory {
            times: (0..10_000).map(|k| k as f64).collect(),
            states: vec![base.states[0].clone(); 10_000],
            frames: vec![frame.clone(); 10_000],
        };
        let r = DMatrix::identity(98, 98) * 1e-4;
        let noisy = synthesize_measurements(&traj, &r, 77).unwrap();
        let clean = frame.to_vector();
        for ch in [0, 13, 50, 97] {
            let var: f64 = noisy
                .iter()
                .map(|f| (f.get(ch) - clean[ch]).powi(2))
                .sum::<f64>()
                / noisy.len() as f64;
            assert!((0.9e-4..=1.1e-4).contains(&var), "channel {ch}: {var}");
        }
    }

    #[test]
    fn faults_are_window_local() {
        let sc = Scenario::parse(crate::scenarios::COMM_LOSS).unwrap();
        let c = case();
        let sys = PowerSystem::from_case(&c, sc.dt()).unwrap();
        let traj = simulate_truth(&c, &sc).unwrap();
        let faulted = apply_faults(&traj.frames, &sc, &sys.layout).unwrap();
        let idx = sc.faults[0].channel_indices(&sys.layout).unwrap();
        for (orig, f) in traj.frames.iter().zip(&faulted) {
            if (4.0..=6.0).contains(&f.timestamp) {
                for &i in &idx {
                    assert_eq!(f.get(i), 0.0);
                    assert!(!f.valid[i]);
                }
            } else if f.timestamp < 3.99 || f.timestamp > 6.01 {
                assert_eq!(orig, f);
            }
        }
        let twice = apply_faults(&faulted, &sc, &sys.layout).unwrap();
        assert_eq!(twice, faulted);

        let clean = Scenario::parse(crate::scenarios::CLEAN).unwrap();
        assert_eq!(apply_faults(&traj.frames, &clean, &sys.layout).unwrap(), traj.frames);
    }

    #[test]
    fn gross_error_holds_from_onset() {
        let sc = Scenario::parse(crate::scenarios::BAD_DATA).unwrap();
        let c = case();
        let sys = PowerSystem::from_case(&c, sc.dt()).unwrap();
        let traj = simulate_truth(&c, &sc).unwrap();
        let faulted = apply_faults(&traj.frames, &sc, &sys.layout).unwrap();
        let q7 = sys.layout.index("Q7".parse().unwrap()).unwrap();
        for f in &faulted {
            if f.timestamp >= 4.0 - 1e-9 {
                assert_eq!(f.get(q7), 10.0);
            } else {
                assert!(f.get(q7).abs() < 2.2);
            }
        }
    }

    #[test]
    fn error_metric() {
        let t = vec![DVector::from_vec(vec![1.0, 2.0]); 4];
        assert_eq!(overall_error(&t, &t).unwrap(), 0.0);
        let e: Vec<_> = t.iter().map(|v| v.add_scalar(0.25)).collect();
        assert!((overall_error(&e, &t).unwrap() - 0.25).abs() < 1e-15);
        assert!(overall_error(&e[..3], &t).is_err());
    }
}
