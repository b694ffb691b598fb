//! Monte-Carlo evaluation: draw channels, send pilots, estimate, combine and
//! collect SINRs for every served UE.
//!
//! Every (drop, trial) pair owns a ChaCha stream derived from the seed, so
//! results do not depend on how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{prelog, CombinerKind, MeanEstimate, Scheme, SeRecord};
use crate::code_domain::{self, Spreading};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::network_scenario::Scenario;
use crate::pilot_mmse::{draw_channels, simulate_pilot_phase, EstimatorBank};

const TRIAL_BITS: u32 = 20;
const DROP_BITS: u32 = 20;
/// Trial slot reserved for the drop's own layout randomness.
const LAYOUT_SLOT: u64 = (1 << TRIAL_BITS) - 1;

/// ChaCha8 stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stream_id(point: u64, drop: usize, slot: u64) -> u64 {
    (point << (TRIAL_BITS + DROP_BITS)) | ((drop as u64) << TRIAL_BITS) | slot
}

/// How NOMA receivers are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NomaVariantKind {
    /// Rotate into the code basis: with an orthogonal book every UE lives in
    /// the M-dimensional block of its code, so each BS solves N systems of
    /// size M instead of one of size MN.
    CodeBlocks,
    /// Full MN-dimensional processing; required for non-orthogonal books.
    Full,
}

#[derive(Debug, Clone)]
enum NomaReceiver {
    CodeBlocks {
        spreading_len: usize,
        code_of: Vec<usize>,
        /// `[bs][code]`: `σ² I + N Σ_{UEs on code} p C`.
        z: Vec<Vec<CMat>>,
    },
    Full {
        spreading: Spreading,
        /// `[bs]`: MN × MN residual covariance.
        z: Vec<CMat>,
    },
}

impl NomaReceiver {
    fn spreading_len(&self) -> usize {
        match self {
            NomaReceiver::CodeBlocks { spreading_len, .. } => *spreading_len,
            NomaReceiver::Full { spreading, .. } => spreading.sequence_len(),
        }
    }
}

/// Everything about a scenario that does not change between fading draws.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    scenario: Scenario,
    estimators: EstimatorBank,
    /// `[bs]`: `Σ p C + σ² I_M`.
    classical_z: Vec<CMat>,
    noma: Vec<NomaReceiver>,
}

impl PreparedScenario {
    /// Prepares classical processing plus one NOMA receiver per spreading
    /// configuration, choosing the code-block form where it applies.
    pub fn new(scenario: Scenario, noma: &[Spreading]) -> Result<Self> {
        let kinds: Vec<NomaVariantKind> = noma
            .iter()
            .map(|s| {
                if s.book.is_orthogonal() {
                    NomaVariantKind::CodeBlocks
                } else {
                    NomaVariantKind::Full
                }
            })
            .collect();
        Self::with_kinds(scenario, noma, &kinds)
    }

    pub fn with_kinds(scenario: Scenario, noma: &[Spreading], kinds: &[NomaVariantKind]) -> Result<Self> {
        scenario.validate()?;
        if noma.len() != kinds.len() {
            return Err(Error::dimension("one receiver kind is needed per NOMA variant"));
        }
        let estimators = EstimatorBank::new(&scenario)?;
        let m = scenario.antennas();
        let ues = scenario.total_ues();
        let noise = scenario.noise_power;

        let classical_z = (0..scenario.cells)
            .map(|bs| {
                let mut z = CMat::identity(m, m) * linalg::real(noise);
                for (ue, c) in estimators.error_covariances(bs).iter().enumerate() {
                    z += c * linalg::real(scenario.powers[ue]);
                }
                z
            })
            .collect();

        let mut receivers = Vec::with_capacity(noma.len());
        for (spreading, kind) in noma.iter().zip(kinds) {
            if spreading.assignment.len() != ues {
                return Err(Error::dimension("spreading assignment does not cover every UE"));
            }
            let receiver = match kind {
                NomaVariantKind::CodeBlocks => {
                    if !spreading.book.is_orthogonal() {
                        return Err(Error::misuse("code-block receiver needs a full orthogonal book"));
                    }
                    let n = spreading.sequence_len();
                    let z = (0..scenario.cells)
                        .map(|bs| {
                            let mut blocks = vec![CMat::identity(m, m) * linalg::real(noise); n];
                            for (ue, c) in estimators.error_covariances(bs).iter().enumerate() {
                                blocks[spreading.assignment[ue]] += c * linalg::real(n as f64 * scenario.powers[ue]);
                            }
                            blocks
                        })
                        .collect();
                    NomaReceiver::CodeBlocks {
                        spreading_len: n,
                        code_of: spreading.assignment.clone(),
                        z,
                    }
                }
                NomaVariantKind::Full => {
                    let z = (0..scenario.cells)
                        .map(|bs| {
                            code_domain::build_z(
                                spreading,
                                &scenario.powers,
                                estimators.error_covariances(bs),
                                noise,
                            )
                        })
                        .collect::<Result<_>>()?;
                    NomaReceiver::Full {
                        spreading: spreading.clone(),
                        z,
                    }
                }
            };
            receivers.push(receiver);
        }
        Ok(Self {
            scenario,
            estimators,
            classical_z,
            noma: receivers,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn estimators(&self) -> &EstimatorBank {
        &self.estimators
    }

    pub fn noma_variants(&self) -> usize {
        self.noma.len()
    }

    pub fn noma_spreading_len(&self, variant: usize) -> usize {
        self.noma[variant].spreading_len()
    }
}

/// SINRs of every UE at its serving BS for one fading realization, indexed
/// `cell * K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSinr {
    pub classical_mr: Vec<f64>,
    pub classical_mmse: Vec<f64>,
    /// Per NOMA variant: (MR, M-MMSE).
    pub noma: Vec<(Vec<f64>, Vec<f64>)>,
}

/// `Σ p x xᴴ + Z` over the selected UEs, factorized once and queried for
/// the MR and MMSE SINR of each target.
struct Receiver {
    b: CMat,
    chol: nalgebra::linalg::Cholesky<linalg::C64, nalgebra::Dyn>,
}

impl Receiver {
    fn new<'a>(z: &CMat, terms: impl Iterator<Item = (&'a CVec, f64)>, scale: f64) -> Result<Self> {
        let mut b = z.clone();
        for (g, p) in terms {
            if p != 0.0 {
                linalg::add_outer(&mut b, g, p * scale);
            }
        }
        let chol = b
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("combining matrix is not positive definite"))?;
        Ok(Self { b, chol })
    }

    /// SINR of MR combining for an effective estimate `g` (= √scale · ĥ).
    fn mr(&self, h: &CVec, p: f64, scale: f64) -> f64 {
        // v = ĥ; with g = √scale ĥ: num = p scale ‖ĥ‖⁴, total = vᴴ B v.
        let gain = h.norm_squared();
        let signal = p * scale * gain * gain;
        let total = h.dotc(&(&self.b * h)).re;
        signal / (total - signal)
    }

    fn mmse(&self, h: &CVec, p: f64, scale: f64) -> f64 {
        let x = self.chol.solve(h);
        let a = scale * h.dotc(&x).re;
        p * a / (1.0 - p * a)
    }
}

/// One fading realization of a prepared scenario.
pub fn evaluate_trial(prepared: &PreparedScenario, rng: &mut ChaCha8Rng) -> Result<TrialSinr> {
    let s = &prepared.scenario;
    let channels = draw_channels(s, rng);
    let observation = simulate_pilot_phase(s, &channels, rng)?;
    let estimates = prepared.estimators.estimate_all(&observation);
    let ues = s.total_ues();
    let k = s.ues_per_cell;

    let mut out = TrialSinr {
        classical_mr: vec![0.0; ues],
        classical_mmse: vec![0.0; ues],
        noma: vec![(vec![0.0; ues], vec![0.0; ues]); prepared.noma.len()],
    };

    for bs in 0..s.cells {
        let at_bs = &estimates[bs];
        let served = bs * k..(bs + 1) * k;

        let rx = Receiver::new(&prepared.classical_z[bs], at_bs.iter().zip(s.powers.iter().copied()), 1.0)?;
        for ue in served.clone() {
            out.classical_mr[ue] = rx.mr(&at_bs[ue], s.powers[ue], 1.0);
            out.classical_mmse[ue] = rx.mmse(&at_bs[ue], s.powers[ue], 1.0);
        }

        for (variant, receiver) in prepared.noma.iter().enumerate() {
            let (mr_out, mmse_out) = &mut out.noma[variant];
            match receiver {
                NomaReceiver::CodeBlocks {
                    spreading_len,
                    code_of,
                    z,
                } => {
                    let n = *spreading_len as f64;
                    for (code, zc) in z[bs].iter().enumerate() {
                        let members = (0..ues).filter(|&ue| code_of[ue] == code);
                        let rx = Receiver::new(zc, members.map(|ue| (&at_bs[ue], s.powers[ue])), n)?;
                        for ue in served.clone().filter(|&ue| code_of[ue] == code) {
                            mr_out[ue] = rx.mr(&at_bs[ue], s.powers[ue], n);
                            mmse_out[ue] = rx.mmse(&at_bs[ue], s.powers[ue], n);
                        }
                    }
                }
                NomaReceiver::Full { spreading, z } => {
                    let effective: Vec<CVec> = (0..ues)
                        .map(|ue| code_domain::effective_channel(spreading.code_of(ue), &at_bs[ue]))
                        .collect();
                    let rx = Receiver::new(&z[bs], effective.iter().zip(s.powers.iter().copied()), 1.0)?;
                    for ue in served.clone() {
                        mr_out[ue] = rx.mr(&effective[ue], s.powers[ue], 1.0);
                        mmse_out[ue] = rx.mmse(&effective[ue], s.powers[ue], 1.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A scenario plus the NOMA spreading configurations to evaluate on it.
#[derive(Debug, Clone)]
pub struct DropSetup {
    pub scenario: Scenario,
    pub noma: Vec<Spreading>,
}

/// Source of network drops for the Monte-Carlo engine.
pub trait ScenarioFamily: Sync {
    fn drops(&self) -> usize;

    /// Builds drop `drop` from its own random stream.
    fn build(&self, drop: usize, rng: &mut ChaCha8Rng) -> Result<DropSetup>;
}

/// A single deterministic scenario, evaluated with its own spreading.
#[derive(Debug, Clone)]
pub struct FixedScenario(pub Scenario);

impl ScenarioFamily for FixedScenario {
    fn drops(&self) -> usize {
        1
    }

    fn build(&self, _drop: usize, _rng: &mut ChaCha8Rng) -> Result<DropSetup> {
        Ok(DropSetup {
            scenario: self.0.clone(),
            noma: vec![self.0.spreading.clone()],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    /// Fading realizations per drop.
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    /// Distinguishes the random streams of different sweep points.
    pub point: u64,
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.trials as u64 >= LAYOUT_SLOT {
            return Err(Error::config(format!("at most {} trials per drop", LAYOUT_SLOT - 1)));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.point >= 1 << (64 - TRIAL_BITS - DROP_BITS) {
            return Err(Error::config("sweep point index too large"));
        }
        Ok(())
    }
}

/// Runs every drop of `family` for `config.trials` realizations and returns
/// records in the order: classical MR, classical M-MMSE, then MR and M-MMSE
/// for each NOMA variant.
pub fn run_monte_carlo(family: &dyn ScenarioFamily, config: &MonteCarloConfig) -> Result<Vec<SeRecord>> {
    config.validate()?;
    let drops = family.drops();
    if drops == 0 {
        return Err(Error::config("scenario family has no drops"));
    }
    if drops as u64 >= 1 << DROP_BITS {
        return Err(Error::config("too many drops"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let mut outcomes: Vec<(TrialSinr, f64, Vec<f64>)> = Vec::with_capacity(drops * config.trials);
        let mut template: Option<(Scenario, Vec<usize>)> = None;
        for drop in 0..drops {
            let mut layout_rng = stream_rng(config.seed, stream_id(config.point, drop, LAYOUT_SLOT));
            let setup = family.build(drop, &mut layout_rng)?;
            let lens: Vec<usize> = setup.noma.iter().map(|s| s.sequence_len()).collect();
            match &template {
                None => template = Some((setup.scenario.clone(), lens.clone())),
                Some((_, known)) if *known != lens => {
                    return Err(Error::config("drops disagree on the NOMA variants"));
                }
                Some(_) => {}
            }
            let prepared = PreparedScenario::new(setup.scenario, &setup.noma)?;
            let classical_prelog = prelog(&prepared.scenario.budget, 1);
            let noma_prelog: Vec<f64> = lens.iter().map(|&n| prelog(&prepared.scenario.budget, n)).collect();
            let batch: Vec<(TrialSinr, f64, Vec<f64>)> = (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = stream_rng(config.seed, stream_id(config.point, drop, trial as u64));
                    let index = drop * config.trials + trial;
                    evaluate_trial(&prepared, &mut rng)
                        .map(|s| (s, classical_prelog, noma_prelog.clone()))
                        .map_err(|e| e.in_trial(index))
                })
                .collect::<Result<_>>()?;
            outcomes.extend(batch);
        }
        let (scenario, lens) = template.expect("at least one drop");
        aggregate(&scenario, &lens, &outcomes, config.seed)
    })
}

fn aggregate(
    scenario: &Scenario,
    lens: &[usize],
    outcomes: &[(TrialSinr, f64, Vec<f64>)],
    seed: u64,
) -> Result<Vec<SeRecord>> {
    let cells = scenario.cells;
    let k = scenario.ues_per_cell;
    let record = |scheme: Scheme, combiner: CombinerKind, n: usize, pick: &dyn Fn(&(TrialSinr, f64, Vec<f64>)) -> (&[f64], f64)| {
        let ues = cells * k;
        let mut per_ue = vec![0.0; ues];
        let mut sums = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let (sinr, factor) = pick(o);
            let mut total = 0.0;
            for (ue, g) in sinr.iter().enumerate() {
                let se = factor * (1.0 + g).log2();
                per_ue[ue] += se;
                total += se;
            }
            sums.push(total / cells as f64);
        }
        for v in &mut per_ue {
            *v /= outcomes.len() as f64;
        }
        Ok(SeRecord {
            scheme,
            combiner,
            model: scenario.model,
            spreading_len: n,
            ues_per_cell: k,
            antennas: scenario.antennas(),
            cells,
            trials: outcomes.len(),
            seed,
            per_ue_se: per_ue,
            sum_se: MeanEstimate::from_samples(&sums)?,
        })
    };
    let mut records = vec![
        record(Scheme::Classical, CombinerKind::Mr, 1, &|o| (&o.0.classical_mr, o.1))?,
        record(Scheme::Classical, CombinerKind::MMmse, 1, &|o| (&o.0.classical_mmse, o.1))?,
    ];
    for (variant, &n) in lens.iter().enumerate() {
        records.push(record(Scheme::Noma, CombinerKind::Mr, n, &|o| (&o.0.noma[variant].0, o.2[variant]))?);
        records.push(record(Scheme::Noma, CombinerKind::MMmse, n, &|o| (&o.0.noma[variant].1, o.2[variant]))?);
    }
    Ok(records)
}
