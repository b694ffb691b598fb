#![allow(dead_code)]

use std::sync::Arc;

use noma_mimo::code_domain::{SpreadingBook, Spreading};
use noma_mimo::linalg::{self, CMat, CVec};
use noma_mimo::network_scenario::{assign_subcluster_codes, ChannelModel, CoherenceBudget, Position, Scenario};
use noma_mimo::pilot_mmse::PilotBook;
use noma_mimo::spatial_channel::{ArrayGeometry, CorrelationMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random full-rank Hermitian PSD matrix with `tr(R)/M = beta`.
pub fn random_correlation<R: Rng>(rng: &mut R, m: usize, beta: f64) -> CorrelationMatrix {
    let a = CMat::from_fn(m, m, |_, _| linalg::complex_normal(rng));
    let mut r = &a * a.adjoint() + CMat::identity(m, m) * linalg::real(0.05 * m as f64);
    linalg::hermitize(&mut r);
    let scale = beta * m as f64 / r.trace().re;
    CorrelationMatrix::from_matrix(r * linalg::real(scale)).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    linalg::complex_normal_vec(rng, n)
}

/// Small multi-cell scenario with random correlation matrices, shared
/// orthogonal pilots (τ_p = K) and random subcluster codes of length `n`.
pub fn small_scenario<R: Rng>(rng: &mut R, cells: usize, k: usize, m: usize, n: usize, noise: f64) -> Scenario {
    let pilots = PilotBook::orthogonal_shared(cells, k).unwrap();
    small_scenario_with_pilots(rng, cells, k, m, n, noise, pilots)
}

pub fn small_scenario_with_pilots<R: Rng>(
    rng: &mut R,
    cells: usize,
    k: usize,
    m: usize,
    n: usize,
    noise: f64,
    pilots: PilotBook,
) -> Scenario {
    let ues = cells * k;
    let correlation: Vec<Vec<CorrelationMatrix>> = (0..ues)
        .map(|ue| {
            (0..cells)
                .map(|bs| {
                    // Serving links are stronger than cross links.
                    let beta = if ue / k == bs { 1.0 } else { 0.1 + 0.3 * rng.random::<f64>() };
                    random_correlation(rng, m, beta)
                })
                .collect()
        })
        .collect();
    let powers = (0..ues).map(|_| 0.5 + rng.random::<f64>()).collect();
    let (spreading, subclusters) = assign_subcluster_codes(cells, k, n, rng).unwrap();
    let tau_p = pilots.tau_p();
    Scenario {
        cells,
        ues_per_cell: k,
        model: ChannelModel::TwoD,
        geometry: ArrayGeometry::linear(m).unwrap(),
        cell_side_m: 250.0,
        bs_positions: (0..cells).map(|l| Position::new(250.0 * l as f64, 0.0)).collect(),
        ue_positions: (0..ues).map(|ue| Position::new(250.0 * (ue / k) as f64 + 50.0, 0.0)).collect(),
        powers,
        noise_power: noise,
        correlation: Arc::new(correlation),
        budget: CoherenceBudget::uplink_only(200, tau_p).unwrap(),
        pilots,
        spreading,
        subclusters,
        cluster_centers: Vec::new(),
    }
}

/// Unit-modulus random pilots; generally not orthogonal.
pub fn random_pilot_book<R: Rng>(rng: &mut R, tau_p: usize, count: usize, ues: usize) -> PilotBook {
    let sequences = (0..count)
        .map(|_| CVec::from_fn(tau_p, |_, _| linalg::C64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)))
        .collect();
    let assignment = (0..ues).map(|ue| ue % count).collect();
    PilotBook::new(sequences, assignment).unwrap()
}

pub fn trivial_spreading(ues: usize) -> Spreading {
    Spreading::trivial(ues)
}

pub fn dft_spreading(n: usize, assignment: Vec<usize>) -> Spreading {
    Spreading::new(SpreadingBook::dft(n).unwrap(), assignment).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn vec_rel(a: &CVec, b: &CVec) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    a.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// One realization seen from BS `bs`: effective estimates `u ⊗ ĥ` under the
/// scenario's spreading, the matching residual covariance, the raw
/// estimates and the error covariances.
pub struct Instance {
    pub g_hat: Vec<CVec>,
    pub z: CMat,
    pub h_hat: Vec<CVec>,
    pub errors: Vec<CMat>,
}

pub fn instance<R: Rng>(s: &Scenario, rng: &mut R, bs: usize) -> Instance {
    use noma_mimo::code_domain::{build_z, effective_channel};
    use noma_mimo::pilot_mmse::{draw_channels, simulate_pilot_phase, EstimatorBank};
    let bank = EstimatorBank::new(s).unwrap();
    let channels = draw_channels(s, rng);
    let obs = simulate_pilot_phase(s, &channels, rng).unwrap();
    let h_hat = bank.estimate_all(&obs).swap_remove(bs);
    let errors = bank.error_covariances(bs).to_vec();
    let g_hat = h_hat
        .iter()
        .enumerate()
        .map(|(ue, h)| effective_channel(s.spreading.code_of(ue), h))
        .collect();
    let z = build_z(&s.spreading, &s.powers, &errors, s.noise_power).unwrap();
    Instance { g_hat, z, h_hat, errors }
}
