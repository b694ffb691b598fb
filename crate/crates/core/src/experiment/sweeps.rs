use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ExperimentKind};
use super::results::ResultRow;
use crate::error::{Error, Result};
use crate::network_scenario::{assign_subcluster_codes, build_cluster_scenario, build_two_user_scenario, ChannelModel, ClusterSpec, NetworkParams};
use crate::receiver_se::{run_monte_carlo, DropSetup, FixedScenario, MonteCarloConfig, ScenarioFamily, SeRecord};
use crate::spatial_channel::{favorable_propagation_variance, CorrelationMatrix};

const ANGLE_VAR: &str = "interferer_angle_deg";

fn record_row(config: &ExperimentConfig, record: &SeRecord, sweep_var: &str, sweep_value: f64) -> ResultRow {
    ResultRow {
        experiment: config.experiment.as_str().into(),
        model: record.model.as_str().into(),
        scheme: record.scheme.as_str().into(),
        combiner: record.combiner.as_str().into(),
        antennas: record.antennas,
        spreading_len: record.spreading_len,
        ues_per_cell: record.ues_per_cell,
        cells: record.cells,
        sweep_var: sweep_var.into(),
        sweep_value,
        sum_se_mean: record.sum_se.mean,
        sum_se_stderr: record.sum_se.stderr,
        trials: record.trials,
        seed: record.seed,
    }
}

fn monte_carlo(config: &ExperimentConfig) -> MonteCarloConfig {
    // Every sweep point reuses the same streams (common random numbers).
    MonteCarloConfig {
        trials: config.trials,
        seed: config.seed,
        workers: config.workers,
        point: 0,
    }
}

/// Two-user single-cell sweep of the interferer azimuth. Four rows per angle:
/// classical and NOMA, each with MR and M-MMSE.
pub fn angle_sweep(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<Vec<ResultRow>> {
    let mc = monte_carlo(config);
    let mut rows = Vec::with_capacity(config.angles_deg.len() * 4);
    for (i, &angle) in config.angles_deg.iter().enumerate() {
        let scenario = build_two_user_scenario(angle, config.model, config.antennas, config.asd_deg, &config.network)?;
        let records = run_monte_carlo(&FixedScenario(scenario), &mc)?;
        rows.extend(records.iter().map(|r| record_row(config, r, ANGLE_VAR, angle)));
        progress(&format!("angle {angle} deg ({}/{})", i + 1, config.angles_deg.len()));
    }
    Ok(rows)
}

/// Favorable-propagation variance of the two-user setup against the
/// interferer azimuth, for the linear one-ring model, the planar model and
/// uncorrelated fading. The variance goes in `sum_se_mean`.
pub fn variance_sweep(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<Vec<ResultRow>> {
    let m = config.antennas;
    let row = |model: &str, angle: f64, value: f64| ResultRow {
        experiment: ExperimentKind::VarianceSweep.as_str().into(),
        model: model.into(),
        scheme: "none".into(),
        combiner: "none".into(),
        antennas: m,
        spreading_len: 1,
        ues_per_cell: 2,
        cells: 1,
        sweep_var: ANGLE_VAR.into(),
        sweep_value: angle,
        sum_se_mean: value,
        sum_se_stderr: 0.0,
        trials: 0,
        seed: config.seed,
    };
    let identity = CorrelationMatrix::identity(m, 1.0);
    let uncorrelated = favorable_propagation_variance(&identity, &identity)?;
    let mut rows = Vec::with_capacity(config.angles_deg.len() * 3);
    for (i, &angle) in config.angles_deg.iter().enumerate() {
        for model in [ChannelModel::TwoD, ChannelModel::ThreeD] {
            let s = build_two_user_scenario(angle, model, m, config.asd_deg, &config.network)?;
            let value = favorable_propagation_variance(s.correlation(0, 0), s.correlation(1, 0))?;
            rows.push(row(model.as_str(), angle, value));
        }
        rows.push(row("uncorrelated", angle, uncorrelated));
        if (i + 1) % 30 == 0 || i + 1 == config.angles_deg.len() {
            progress(&format!("angle {angle} deg ({}/{})", i + 1, config.angles_deg.len()));
        }
    }
    Ok(rows)
}

/// Random clustered drops for one value of K. The scenario carries the code
/// assignment for the first spreading length; the others are drawn on top.
#[derive(Debug, Clone)]
pub struct ClusterFamily {
    pub cells: usize,
    pub ues_per_cell: usize,
    pub spreading_lens: Vec<usize>,
    pub antennas: usize,
    pub model: ChannelModel,
    pub asd_deg: f64,
    pub radius_m: f64,
    pub min_bs_distance_m: f64,
    pub network: NetworkParams,
    pub drops: usize,
}

impl ClusterFamily {
    pub fn from_config(config: &ExperimentConfig, ues_per_cell: usize) -> Result<Self> {
        if let Some(&n) = config.n_values.iter().find(|&&n| ues_per_cell % n != 0) {
            return Err(Error::config(format!("K = {ues_per_cell} is not a multiple of N = {n}")));
        }
        Ok(Self {
            cells: config.cells,
            ues_per_cell,
            spreading_lens: config.n_values.clone(),
            antennas: config.antennas,
            model: config.model,
            asd_deg: config.asd_deg,
            radius_m: config.cluster_radius_m,
            min_bs_distance_m: config.min_bs_dist_m,
            network: config.network.clone(),
            drops: config.drops,
        })
    }
}

impl ScenarioFamily for ClusterFamily {
    fn drops(&self) -> usize {
        self.drops
    }

    fn build(&self, _drop: usize, rng: &mut ChaCha8Rng) -> Result<DropSetup> {
        let first = *self
            .spreading_lens
            .first()
            .ok_or_else(|| Error::config("no spreading lengths given"))?;
        let cluster = ClusterSpec {
            radius_m: self.radius_m,
            min_bs_distance_m: self.min_bs_distance_m,
            subcluster_size: first,
        };
        let scenario = build_cluster_scenario(
            self.cells,
            self.ues_per_cell,
            first,
            self.antennas,
            self.model,
            self.asd_deg,
            &cluster,
            &self.network,
            rng,
        )?;
        let mut noma = vec![scenario.spreading.clone()];
        for &n in &self.spreading_lens[1..] {
            noma.push(assign_subcluster_codes(self.cells, self.ues_per_cell, n, rng)?.0);
        }
        Ok(DropSetup { scenario, noma })
    }
}

/// Clustered multi-cell sweep over K. Per K: classical with MR and M-MMSE,
/// then NOMA with MR and M-MMSE for every N.
pub fn cluster_sweep(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<Vec<ResultRow>> {
    let mc = monte_carlo(config);
    let mut rows = Vec::new();
    for (i, &k) in config.k_values.iter().enumerate() {
        let family = ClusterFamily::from_config(config, k)?;
        let records = run_monte_carlo(&family, &mc)?;
        rows.extend(records.iter().map(|r| record_row(config, r, "K", k as f64)));
        progress(&format!("K = {k} ({}/{})", i + 1, config.k_values.len()));
    }
    Ok(rows)
}

pub fn run_experiment(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<Vec<ResultRow>> {
    match config.experiment {
        ExperimentKind::AngleSweep => angle_sweep(config, progress),
        ExperimentKind::VarianceSweep => variance_sweep(config, progress),
        ExperimentKind::ClusterSweep => cluster_sweep(config, progress),
    }
}
