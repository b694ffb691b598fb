//! Pilot transmission and MMSE channel estimation.
//!
//! The general estimator works for any pilot book by solving against the
//! `Mτ_p × Mτ_p` covariance of the vectorized observation. When the pilot
//! book is orthogonal the observation decouples per pilot after despreading,
//! and only `M × M` systems remain.

use rand::Rng;

use crate::code_domain::SpreadingBook;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::network_scenario::Scenario;

/// Pilot sequences (‖φ‖² = τ_p) and the UE → sequence assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    sequences: Vec<CVec>,
    assignment: Vec<usize>,
    orthogonal: bool,
}

impl PilotBook {
    pub fn new(sequences: Vec<CVec>, assignment: Vec<usize>) -> Result<Self> {
        let tau_p = sequences
            .first()
            .map(|s| s.len())
            .ok_or_else(|| Error::domain("pilot book is empty"))?;
        for (i, s) in sequences.iter().enumerate() {
            if s.len() != tau_p {
                return Err(Error::dimension(format!("pilot {i} has length {}, expected {tau_p}", s.len())));
            }
            let energy = s.norm_squared();
            if (energy - tau_p as f64).abs() > 1e-9 * tau_p as f64 {
                return Err(Error::domain(format!("pilot {i} has energy {energy}, expected {tau_p}")));
            }
        }
        if let Some(&bad) = assignment.iter().find(|&&i| i >= sequences.len()) {
            return Err(Error::domain(format!("pilot index {bad} outside a book of {}", sequences.len())));
        }
        let orthogonal = (0..sequences.len()).all(|i| {
            (0..i).all(|k| sequences[i].dotc(&sequences[k]).norm() <= 1e-9 * tau_p as f64)
        });
        Ok(Self {
            sequences,
            assignment,
            orthogonal,
        })
    }

    /// `K` orthogonal pilots of length `K`, reused in every cell: UE `k` of
    /// each cell sends pilot `k`.
    pub fn orthogonal_shared(cells: usize, ues_per_cell: usize) -> Result<Self> {
        let book = SpreadingBook::orthogonal(ues_per_cell)?;
        let assignment = (0..cells * ues_per_cell).map(|ue| ue % ues_per_cell).collect();
        Self::new(book.sequences().to_vec(), assignment)
    }

    pub fn tau_p(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn sequences(&self) -> &[CVec] {
        &self.sequences
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn pilot_of(&self, ue: usize) -> usize {
        self.assignment[ue]
    }

    pub fn sequence_of(&self, ue: usize) -> &CVec {
        &self.sequences[self.assignment[ue]]
    }

    /// Distinct sequences of the book are mutually orthogonal.
    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }
}

/// Channels of every UE to every BS, indexed `[ue][bs]`.
pub type ChannelSet = Vec<Vec<CVec>>;

pub fn draw_channels<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> ChannelSet {
    let m = scenario.antennas();
    scenario
        .correlation
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| r.factor() * linalg::complex_normal_vec(rng, m))
                .collect()
        })
        .collect()
}

/// Received pilot matrices `Y_j` (M × τ_p), one per BS.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub y: Vec<CMat>,
}

/// `Y_j = Σ_{l,i} √p h φᵀ + N_j` with fresh CN(0, σ²) noise at every BS.
pub fn simulate_pilot_phase<R: Rng + ?Sized>(
    scenario: &Scenario,
    channels: &ChannelSet,
    rng: &mut R,
) -> Result<PilotObservation> {
    let (m, tau_p) = (scenario.antennas(), scenario.pilots.tau_p());
    if channels.len() != scenario.total_ues() || channels.iter().any(|row| row.len() != scenario.cells) {
        return Err(Error::dimension("channel set does not cover every (UE, BS) pair"));
    }
    let noise_std = scenario.noise_power.sqrt();
    let mut y = Vec::with_capacity(scenario.cells);
    for bs in 0..scenario.cells {
        let mut yj = CMat::zeros(m, tau_p);
        for (ue, row) in channels.iter().enumerate() {
            let h = &row[bs];
            if h.len() != m {
                return Err(Error::dimension(format!("channel of UE {ue} has length {}", h.len())));
            }
            let phi = scenario.pilots.sequence_of(ue);
            let amp = scenario.powers[ue].sqrt();
            for t in 0..tau_p {
                let s = phi[t] * amp;
                for a in 0..m {
                    yj[(a, t)] += h[a] * s;
                }
            }
        }
        for t in 0..tau_p {
            for a in 0..m {
                yj[(a, t)] += linalg::complex_normal(rng) * noise_std;
            }
        }
        y.push(yj);
    }
    Ok(PilotObservation { y })
}

/// `Q_j = Σ p (φ φᴴ) ⊗ R + σ² I_{Mτ_p}`; the same for every target at BS `bs`.
pub fn build_q(scenario: &Scenario, bs: usize) -> Result<CMat> {
    if bs >= scenario.cells {
        return Err(Error::dimension(format!("BS {bs} out of range")));
    }
    let (m, tau_p) = (scenario.antennas(), scenario.pilots.tau_p());
    let mut q = CMat::identity(m * tau_p, m * tau_p) * linalg::real(scenario.noise_power);
    for ue in 0..scenario.total_ues() {
        let phi = scenario.pilots.sequence_of(ue);
        let r = scenario.correlation(ue, bs).matrix();
        let p = scenario.powers[ue];
        if p == 0.0 {
            continue;
        }
        for a in 0..tau_p {
            for b in 0..tau_p {
                let s = phi[a] * phi[b].conj() * p;
                let mut block = q.view_mut((a * m, b * m), (m, m));
                block += r * s;
            }
        }
    }
    Ok(q)
}

/// MMSE estimate of one channel with its estimate and error covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOutput {
    pub h_hat: CVec,
    /// Covariance of the estimate.
    pub phi: CMat,
    /// Covariance of the estimation error, `R - Φ`.
    pub c: CMat,
}

/// Column-stacked `vec(Y)`.
fn vectorize(y: &CMat) -> CVec {
    CVec::from_column_slice(y.as_slice())
}

/// Estimator for all UEs at one BS through the full Kronecker covariance.
#[derive(Debug, Clone)]
pub struct GeneralEstimator {
    /// Per UE: `W = √p (φᴴ ⊗ R) Q⁻¹`, M × Mτ_p.
    maps: Vec<CMat>,
    phi: Vec<CMat>,
    error: Vec<CMat>,
}

impl GeneralEstimator {
    pub fn new(scenario: &Scenario, bs: usize) -> Result<Self> {
        let q = build_q(scenario, bs)?;
        let chol = q
            .cholesky()
            .ok_or_else(|| Error::numerical(format!("pilot covariance at BS {bs} is not positive definite")))?;
        let m = scenario.antennas();
        let ues = scenario.total_ues();
        let mut maps = Vec::with_capacity(ues);
        let mut phis = Vec::with_capacity(ues);
        let mut errors = Vec::with_capacity(ues);
        for ue in 0..ues {
            let r = scenario.correlation(ue, bs).matrix();
            let p = scenario.powers[ue];
            // (φ ⊗ R), Mτ_p × M
            let stacked = linalg::kron(
                &CMat::from_column_slice(scenario.pilots.tau_p(), 1, scenario.pilots.sequence_of(ue).as_slice()),
                r,
            );
            let x = chol.solve(&stacked);
            let w = x.adjoint() * linalg::real(p.sqrt());
            let mut phi = stacked.adjoint() * &x * linalg::real(p);
            linalg::hermitize(&mut phi);
            let c = r - &phi;
            debug_assert_eq!(w.nrows(), m);
            maps.push(w);
            phis.push(phi);
            errors.push(c);
        }
        Ok(Self {
            maps,
            phi: phis,
            error: errors,
        })
    }

    pub fn estimate(&self, y: &CMat, ue: usize) -> CVec {
        &self.maps[ue] * vectorize(y)
    }

    pub fn output(&self, y: &CMat, ue: usize) -> EstimationOutput {
        EstimationOutput {
            h_hat: self.estimate(y, ue),
            phi: self.phi[ue].clone(),
            c: self.error[ue].clone(),
        }
    }
}

/// Estimator for all UEs at one BS when the pilot book is orthogonal.
#[derive(Debug, Clone)]
pub struct OrthogonalEstimator {
    /// Per UE: `A = √(p τ_p) R Ψ⁻¹`, applied to the despread observation.
    maps: Vec<CMat>,
    phi: Vec<CMat>,
    error: Vec<CMat>,
    despreaders: Vec<CVec>,
    pilot_of: Vec<usize>,
}

impl OrthogonalEstimator {
    pub fn new(scenario: &Scenario, bs: usize) -> Result<Self> {
        let pilots = &scenario.pilots;
        if !pilots.is_orthogonal() {
            return Err(Error::misuse("orthogonal fast path called with a non-orthogonal pilot book"));
        }
        if bs >= scenario.cells {
            return Err(Error::dimension(format!("BS {bs} out of range")));
        }
        let m = scenario.antennas();
        let tau_p = pilots.tau_p() as f64;
        let ues = scenario.total_ues();

        // Ψ_t = Σ_{UEs on pilot t} p τ_p R + σ² I
        let mut psi: Vec<CMat> = (0..pilots.sequences().len())
            .map(|_| CMat::identity(m, m) * linalg::real(scenario.noise_power))
            .collect();
        for ue in 0..ues {
            let w = scenario.powers[ue] * tau_p;
            if w != 0.0 {
                psi[pilots.pilot_of(ue)] += scenario.correlation(ue, bs).matrix() * linalg::real(w);
            }
        }
        let psi_inv = psi.iter().map(linalg::hermitian_inverse).collect::<Result<Vec<_>>>()?;

        let mut maps = Vec::with_capacity(ues);
        let mut phis = Vec::with_capacity(ues);
        let mut errors = Vec::with_capacity(ues);
        for ue in 0..ues {
            let r = scenario.correlation(ue, bs).matrix();
            let gain = (scenario.powers[ue] * tau_p).sqrt();
            let a = r * &psi_inv[pilots.pilot_of(ue)] * linalg::real(gain);
            let mut phi = &a * r * linalg::real(gain);
            linalg::hermitize(&mut phi);
            errors.push(r - &phi);
            phis.push(phi);
            maps.push(a);
        }
        let scale = linalg::real(1.0 / tau_p.sqrt());
        let despreaders = pilots.sequences().iter().map(|s| s.conjugate() * scale).collect();
        Ok(Self {
            maps,
            phi: phis,
            error: errors,
            despreaders,
            pilot_of: pilots.assignment().to_vec(),
        })
    }

    /// `Y φ* / √τ_p` for every pilot in the book.
    pub fn despread(&self, y: &CMat) -> Vec<CVec> {
        self.despreaders.iter().map(|d| y * d).collect()
    }

    pub fn estimate_from_despread(&self, despread: &[CVec], ue: usize) -> CVec {
        &self.maps[ue] * &despread[self.pilot_of[ue]]
    }

    pub fn estimate(&self, y: &CMat, ue: usize) -> CVec {
        let t = self.pilot_of[ue];
        &self.maps[ue] * (y * &self.despreaders[t])
    }

    pub fn output(&self, y: &CMat, ue: usize) -> EstimationOutput {
        EstimationOutput {
            h_hat: self.estimate(y, ue),
            phi: self.phi[ue].clone(),
            c: self.error[ue].clone(),
        }
    }
}

/// MMSE estimate of UE `ue` at BS `bs` through the general Kronecker path.
pub fn mmse_estimate(y: &CMat, ue: usize, bs: usize, scenario: &Scenario) -> Result<EstimationOutput> {
    check_target(y, ue, scenario)?;
    Ok(GeneralEstimator::new(scenario, bs)?.output(y, ue))
}

/// Same estimate via per-pilot `M × M` systems; requires orthogonal pilots.
pub fn mmse_estimate_orthogonal_fastpath(
    y: &CMat,
    ue: usize,
    bs: usize,
    scenario: &Scenario,
) -> Result<EstimationOutput> {
    check_target(y, ue, scenario)?;
    Ok(OrthogonalEstimator::new(scenario, bs)?.output(y, ue))
}

fn check_target(y: &CMat, ue: usize, scenario: &Scenario) -> Result<()> {
    if ue >= scenario.total_ues() {
        return Err(Error::dimension(format!("UE {ue} out of range")));
    }
    if y.shape() != (scenario.antennas(), scenario.pilots.tau_p()) {
        return Err(Error::dimension(format!("pilot observation has shape {:?}", y.shape())));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum BsEstimator {
    General(GeneralEstimator),
    Orthogonal(OrthogonalEstimator),
}

/// Estimators for every (UE, BS) pair of a scenario. Precomputed once per
/// scenario; each trial only applies the linear maps.
#[derive(Debug, Clone)]
pub struct EstimatorBank {
    per_bs: Vec<BsEstimator>,
}

impl EstimatorBank {
    /// Uses the fast path whenever the pilot book allows it.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        if scenario.pilots.is_orthogonal() {
            Self::orthogonal(scenario)
        } else {
            Self::general(scenario)
        }
    }

    pub fn general(scenario: &Scenario) -> Result<Self> {
        let per_bs = (0..scenario.cells)
            .map(|bs| GeneralEstimator::new(scenario, bs).map(BsEstimator::General))
            .collect::<Result<_>>()?;
        Ok(Self { per_bs })
    }

    pub fn orthogonal(scenario: &Scenario) -> Result<Self> {
        let per_bs = (0..scenario.cells)
            .map(|bs| OrthogonalEstimator::new(scenario, bs).map(BsEstimator::Orthogonal))
            .collect::<Result<_>>()?;
        Ok(Self { per_bs })
    }

    /// Estimates `[bs][ue]` of every channel at every BS.
    pub fn estimate_all(&self, observation: &PilotObservation) -> Vec<Vec<CVec>> {
        self.per_bs
            .iter()
            .zip(&observation.y)
            .map(|(est, y)| match est {
                BsEstimator::General(g) => (0..g.maps.len()).map(|ue| g.estimate(y, ue)).collect(),
                BsEstimator::Orthogonal(o) => {
                    let despread = o.despread(y);
                    (0..o.maps.len()).map(|ue| o.estimate_from_despread(&despread, ue)).collect()
                }
            })
            .collect()
    }

    pub fn error_covariance(&self, bs: usize, ue: usize) -> &CMat {
        match &self.per_bs[bs] {
            BsEstimator::General(g) => &g.error[ue],
            BsEstimator::Orthogonal(o) => &o.error[ue],
        }
    }

    pub fn estimate_covariance(&self, bs: usize, ue: usize) -> &CMat {
        match &self.per_bs[bs] {
            BsEstimator::General(g) => &g.phi[ue],
            BsEstimator::Orthogonal(o) => &o.phi[ue],
        }
    }

    /// Error covariances of all UEs at BS `bs`.
    pub fn error_covariances(&self, bs: usize) -> &[CMat] {
        match &self.per_bs[bs] {
            BsEstimator::General(g) => &g.error,
            BsEstimator::Orthogonal(o) => &o.error,
        }
    }
}
