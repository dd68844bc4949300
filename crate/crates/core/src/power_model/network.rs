//! Admittance matrices and reduction to generator internal nodes.

use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix, DVector};

use super::case::CaseData;
use crate::error::{DseError, Result};

pub type C64 = Complex<f64>;

/// Network seen from the generator internal EMFs.
///
/// `y_aug` orders the `n_gen` internal nodes first, then the `n_bus`
/// buses in case-file order. Loads are constant admittances evaluated at
/// the solved operating point.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub y_aug: DMatrix<C64>,
    pub n_gen: usize,
    pub n_bus: usize,
    /// Bus position of each generator terminal.
    pub gen_bus: Vec<usize>,
    /// Admittance `1 / (j x'd)` linking each EMF to its terminal bus.
    pub link_admittance: Vec<C64>,
    /// `-Y_bb^-1 Y_bg`: maps internal EMF phasors to bus voltage phasors.
    voltage_map: DMatrix<C64>,
}

impl ReducedNetwork {
    /// Bus voltage phasors for the given internal EMF phasors.
    pub fn bus_voltages(&self, emf: &DVector<C64>) -> DVector<C64> {
        &self.voltage_map * emf
    }

    /// Network known only through its reduced matrices. Bus voltages are
    /// unavailable (`n_bus = 0`).
    pub fn from_reduced(g: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let n = g.nrows();
        assert!(g.is_square() && b.shape() == g.shape());
        Self {
            g,
            b,
            y_aug: DMatrix::zeros(n, n),
            n_gen: n,
            n_bus: 0,
            gen_bus: Vec::new(),
            link_admittance: Vec::new(),
            voltage_map: DMatrix::zeros(0, n),
        }
    }

    pub fn y_reduced(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n_gen, self.n_gen, |i, j| {
            C64::new(self.g[(i, j)], self.b[(i, j)])
        })
    }
}

/// Bus admittance matrix of the branch network, charging included,
/// loads excluded.
pub fn bus_admittance(case: &CaseData) -> DMatrix<C64> {
    let index = case.bus_index();
    let n = case.buses.len();
    let mut y = DMatrix::<C64>::zeros(n, n);
    for br in &case.branches {
        let (i, j) = (index[&br.from], index[&br.to]);
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let charging = C64::new(0.0, 0.5 * br.b_shunt);
        y[(i, i)] += (ys + charging) / (br.tap * br.tap);
        y[(j, j)] += ys + charging;
        y[(i, j)] -= ys / br.tap;
        y[(j, i)] -= ys / br.tap;
    }
    y
}

/// Constant-impedance equivalent of each bus load at its solved voltage.
pub fn load_admittances(case: &CaseData) -> Vec<C64> {
    case.buses
        .iter()
        .map(|b| C64::new(b.p_load, -b.q_load) / (b.v_mag * b.v_mag))
        .collect()
}

fn check_connected(case: &CaseData) -> Result<()> {
    let index = case.bus_index();
    let n = case.buses.len();
    let mut adjacency = vec![Vec::new(); n];
    for br in &case.branches {
        let (i, j) = (index[&br.from], index[&br.to]);
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(k) => Err(DseError::IslandDetected(case.buses[k].id)),
        None => Ok(()),
    }
}

/// Eliminates every node after the first `n_keep`, one pivot at a time.
pub fn kron_reduce(y: &DMatrix<C64>, n_keep: usize) -> Result<DMatrix<C64>> {
    let n = y.nrows();
    assert!(y.is_square() && n_keep <= n);
    let scale = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut work = y.clone();
    for k in (n_keep..n).rev() {
        let pivot = work[(k, k)];
        if !(pivot.norm() > 1e-12 * scale) {
            return Err(DseError::NetworkNotReducible);
        }
        for j in 0..k {
            let factor = work[(k, j)] / pivot;
            if factor == C64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..k {
                let yik = work[(i, k)];
                work[(i, j)] -= yik * factor;
            }
        }
    }
    Ok(work.view((0, 0), (n_keep, n_keep)).into_owned())
}

/// Builds the augmented admittance matrix and reduces it onto the
/// generator internal nodes.
pub fn reduce_network(case: &CaseData) -> Result<ReducedNetwork> {
    check_connected(case)?;
    let index = case.bus_index();
    let n_bus = case.buses.len();
    let n_gen = case.generators.len();
    let n = n_gen + n_bus;

    let y_bus = bus_admittance(case);
    let loads = load_admittances(case);
    let mut y_aug = DMatrix::<C64>::zeros(n, n);
    y_aug
        .view_mut((n_gen, n_gen), (n_bus, n_bus))
        .copy_from(&y_bus);
    for (k, yl) in loads.iter().enumerate() {
        y_aug[(n_gen + k, n_gen + k)] += yl;
    }
    let mut gen_bus = Vec::with_capacity(n_gen);
    let mut link_admittance = Vec::with_capacity(n_gen);
    for (i, gen) in case.generators.iter().enumerate() {
        let k = index[&gen.bus];
        let yg = C64::new(0.0, -1.0 / gen.xd_prime);
        y_aug[(i, i)] += yg;
        y_aug[(n_gen + k, n_gen + k)] += yg;
        y_aug[(i, n_gen + k)] -= yg;
        y_aug[(n_gen + k, i)] -= yg;
        gen_bus.push(k);
        link_admittance.push(yg);
    }

    let y_red = kron_reduce(&y_aug, n_gen)?;

    let y_bb = y_aug.view((n_gen, n_gen), (n_bus, n_bus)).into_owned();
    let y_bg = y_aug.view((n_gen, 0), (n_bus, n_gen)).into_owned();
    let voltage_map = y_bb
        .lu()
        .solve(&(-y_bg))
        .filter(|m| m.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
        .ok_or(DseError::NetworkSolveFailed)?;

    // Y_red is symmetric in exact arithmetic; average away the rounding.
    let sym = |i: usize, j: usize| 0.5 * (y_red[(i, j)] + y_red[(j, i)]);
    Ok(ReducedNetwork {
        g: DMatrix::from_fn(n_gen, n_gen, |i, j| sym(i, j).re),
        b: DMatrix::from_fn(n_gen, n_gen, |i, j| sym(i, j).im),
        y_aug,
        n_gen,
        n_bus,
        gen_bus,
        link_admittance,
        voltage_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn two_node_closed_form() {
        // One machine on one bus feeding a shunt load.
        let text = "version 1\n[system]\nbase_mva 100\nfrequency 50\n\
                    [buses]\n1 0.8 0.3 1.0 0\n[branches]\n[generators]\n1 3 0 0.25 0.8 1.1\n";
        let case = CaseData::parse(text).unwrap();
        let net = reduce_network(&case).unwrap();
        let yl = c(0.8, -0.3);
        let yg = c(0.0, -4.0);
        let expected = yg * yl / (yg + yl);
        assert!((net.g[(0, 0)] - expected.re).abs() < 1e-14);
        assert!((net.b[(0, 0)] - expected.im).abs() < 1e-14);
    }

    #[test]
    fn symmetric_ring_gives_equal_entries() {
        let text = "version 1\n[system]\nbase_mva 100\nfrequency 60\n\
            [buses]\n1 0.5 0.1 1 0\n2 0.5 0.1 1 0\n3 0.5 0.1 1 0\n\
            [branches]\n1 2 0.01 0.1 0.05\n2 3 0.01 0.1 0.05\n3 1 0.01 0.1 0.05\n\
            [generators]\n1 4 0 0.2 0.5 1\n2 4 0 0.2 0.5 1\n3 4 0 0.2 0.5 1\n";
        let net = reduce_network(&CaseData::parse(text).unwrap()).unwrap();
        let y = net.y_reduced();
        for i in 0..3 {
            assert!((y[(i, i)] - y[(0, 0)]).norm() < 1e-12);
            for j in 0..3 {
                if i != j {
                    assert!((y[(i, j)] - y[(0, 1)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kron_matches_dense_inverse_oracle_on_case39() {
        let case = CaseData::parse(crate::CASE39).unwrap();
        let net = reduce_network(&case).unwrap();
        assert_eq!((net.g.nrows(), net.b.ncols()), (10, 10));
        let ng = net.n_gen;
        let nb = net.n_bus;
        let y = &net.y_aug;
        let ygg = y.view((0, 0), (ng, ng));
        let ygb = y.view((0, ng), (ng, nb));
        let ybg = y.view((ng, 0), (nb, ng));
        let ybb_inv = y
            .view((ng, ng), (nb, nb))
            .into_owned()
            .try_inverse()
            .unwrap();
        let oracle = ygg - ygb * ybb_inv * ybg;
        let diff = (oracle - net.y_reduced()).map(|v| v.norm()).max();
        assert!(diff < 1e-9, "max deviation {diff}");
        assert!((&net.g - net.g.transpose()).amax() == 0.0);
    }

    #[test]
    fn detects_islands_and_singular_networks() {
        let island = "version 1\n[system]\nbase_mva 100\nfrequency 60\n\
            [buses]\n1 0 0 1 0\n2 0 0 1 0\n[branches]\n[generators]\n1 4 0 0.2 0 1\n";
        assert!(matches!(
            reduce_network(&CaseData::parse(island).unwrap()),
            Err(DseError::IslandDetected(2))
        ));
        let y = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(kron_reduce(&y, 1), Err(DseError::NetworkNotReducible)));
    }
}
