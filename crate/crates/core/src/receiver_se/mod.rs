//! Receive combining, instantaneous SINR and spectral efficiency.
//!
//! All functions take the effective channel estimates of every UE at one BS
//! (`estimates[ue]`, length MN, or M for classical processing), the transmit
//! powers indexed the same way, and the residual covariance `Z`.

mod engine;

pub use engine::{
    evaluate_trial, run_monte_carlo, stream_rng, DropSetup, FixedScenario, MonteCarloConfig, NomaVariantKind,
    PreparedScenario, ScenarioFamily, TrialSinr,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::network_scenario::{ChannelModel, CoherenceBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CombinerKind {
    #[serde(rename = "mr")]
    Mr,
    #[serde(rename = "mmmse")]
    MMmse,
}

impl CombinerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CombinerKind::Mr => "mr",
            CombinerKind::MMmse => "mmmse",
        }
    }
}

impl fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Classical Massive MIMO, one symbol per channel use.
    #[serde(rename = "mmimo")]
    Classical,
    /// Code-domain NOMA with length-N spreading.
    #[serde(rename = "noma")]
    Noma,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Classical => "mmimo",
            Scheme::Noma => "noma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    pub v: CVec,
    pub kind: CombinerKind,
}

/// Maximum-ratio combining: the (effective) estimate itself.
pub fn mr_combiner(g_hat: &CVec) -> Combiner {
    Combiner {
        v: g_hat.clone(),
        kind: CombinerKind::Mr,
    }
}

fn check_inputs(estimates: &[CVec], z: &CMat, powers: &[f64], target: usize) -> Result<usize> {
    if estimates.len() != powers.len() {
        return Err(Error::dimension(format!("{} estimates but {} powers", estimates.len(), powers.len())));
    }
    if target >= estimates.len() {
        return Err(Error::dimension(format!("target {target} out of range")));
    }
    let dim = z.nrows();
    if z.ncols() != dim || estimates.iter().any(|g| g.len() != dim) {
        return Err(Error::dimension(format!("estimates and Z disagree on dimension {dim}")));
    }
    Ok(dim)
}

/// `Σ_{ue ∉ skip} p ĝ ĝᴴ + Z`.
fn interference_matrix(estimates: &[CVec], z: &CMat, powers: &[f64], skip: Option<usize>) -> CMat {
    let mut b = z.clone();
    for (ue, g) in estimates.iter().enumerate() {
        if Some(ue) != skip && powers[ue] != 0.0 {
            linalg::add_outer(&mut b, g, powers[ue]);
        }
    }
    b
}

/// Multicell MMSE combining `p_k (Σ p ĝ ĝᴴ + Z)⁻¹ ĝ_k`.
pub fn mmse_combiner(estimates: &[CVec], z: &CMat, powers: &[f64], target: usize) -> Result<Combiner> {
    let dim = check_inputs(estimates, z, powers, target)?;
    let b = interference_matrix(estimates, z, powers, None);
    let rhs = CMat::from_column_slice(dim, 1, estimates[target].as_slice());
    let x = linalg::hermitian_solve(&b, &rhs)?;
    Ok(Combiner {
        v: x.column(0).into_owned() * linalg::real(powers[target]),
        kind: CombinerKind::MMmse,
    })
}

/// SINR of combiner `v` for UE `target`, conditioned on all estimates:
/// `p |vᴴĝ|² / vᴴ(Σ_{other} p ĝĝᴴ + Z) v`.
pub fn instantaneous_sinr(v: &CVec, estimates: &[CVec], z: &CMat, powers: &[f64], target: usize) -> Result<f64> {
    let dim = check_inputs(estimates, z, powers, target)?;
    if v.len() != dim {
        return Err(Error::dimension(format!("combiner has length {}, expected {dim}", v.len())));
    }
    if v.iter().all(|x| *x == linalg::ZERO) {
        return Err(Error::domain("SINR is undefined for the zero combiner"));
    }
    let signal = powers[target] * v.dotc(&estimates[target]).norm_sqr();
    let b = interference_matrix(estimates, z, powers, Some(target));
    let denominator = v.dotc(&(&b * v)).re;
    Ok(signal / denominator)
}

/// Maximum SINR reached by MMSE combining, computed directly as
/// `p ĝᴴ (Σ_{other} p ĝĝᴴ + Z)⁻¹ ĝ`.
pub fn max_sinr(estimates: &[CVec], z: &CMat, powers: &[f64], target: usize) -> Result<f64> {
    let dim = check_inputs(estimates, z, powers, target)?;
    let b = interference_matrix(estimates, z, powers, Some(target));
    let g = &estimates[target];
    let x = linalg::hermitian_solve(&b, &CMat::from_column_slice(dim, 1, g.as_slice()))?;
    Ok(powers[target] * g.dotc(&x.column(0).into_owned()).re)
}

/// Pre-log factor `(1/N) τ_u / τ_c`.
pub fn prelog(budget: &CoherenceBudget, spreading_len: usize) -> f64 {
    budget.uplink_fraction() / spreading_len as f64
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::domain("no samples"));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, stderr, samples: n })
    }
}

/// `(1/N)(τ_u/τ_c) · mean(log2(1 + γ))` with its standard error.
pub fn spectral_efficiency(sinr: &[f64], budget: &CoherenceBudget, spreading_len: usize) -> Result<MeanEstimate> {
    if sinr.is_empty() {
        return Err(Error::domain("spectral efficiency needs at least one SINR sample"));
    }
    if let Some(bad) = sinr.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::domain(format!("SINR sample {bad} is negative or NaN")));
    }
    let factor = prelog(budget, spreading_len);
    let rates: Vec<f64> = sinr.iter().map(|g| factor * (1.0 + g).log2()).collect();
    MeanEstimate::from_samples(&rates)
}

/// Monte-Carlo result for one (scheme, combiner) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SeRecord {
    pub scheme: Scheme,
    pub combiner: CombinerKind,
    pub model: ChannelModel,
    pub spreading_len: usize,
    pub ues_per_cell: usize,
    pub antennas: usize,
    pub cells: usize,
    /// Number of channel realizations averaged (drops × trials).
    pub trials: usize,
    pub seed: u64,
    /// Average SE of every UE, indexed `cell * K + k`.
    pub per_ue_se: Vec<f64>,
    /// Sum SE per cell, averaged over cells and realizations.
    pub sum_se: MeanEstimate,
}
