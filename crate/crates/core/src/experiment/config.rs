use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network_scenario::{ChannelModel, ClusterSpec, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    AngleSweep,
    VarianceSweep,
    ClusterSweep,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::AngleSweep => "angle-sweep",
            ExperimentKind::VarianceSweep => "variance-sweep",
            ExperimentKind::ClusterSweep => "cluster-sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angle-sweep" => Ok(ExperimentKind::AngleSweep),
            "variance-sweep" => Ok(ExperimentKind::VarianceSweep),
            "cluster-sweep" => Ok(ExperimentKind::ClusterSweep),
            other => Err(Error::config(format!("unknown experiment '{other}'"))),
        }
    }
}

pub const DEFAULT_K_VALUES: [usize; 8] = [8, 16, 24, 32, 40, 48, 56, 64];
pub const DEFAULT_N_VALUES: [usize; 3] = [2, 4, 8];

/// Configuration file as written by the user (TOML). Every key is optional;
/// missing keys take the defaults of the selected experiment.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<ChannelModel>,
    #[serde(rename = "L")]
    pub cells: Option<usize>,
    #[serde(rename = "K")]
    pub ues_per_cell: Option<usize>,
    #[serde(rename = "M")]
    pub antennas: Option<usize>,
    #[serde(rename = "N")]
    pub spreading_len: Option<usize>,
    pub asd_deg: Option<f64>,
    pub cell_side_m: Option<f64>,
    pub cluster_radius_m: Option<f64>,
    pub min_bs_dist_m: Option<f64>,
    pub tau_c: Option<usize>,
    pub p_dbm: Option<f64>,
    pub noise_dbm: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub drops: Option<usize>,
    pub workers: Option<usize>,
    pub angle_start_deg: Option<f64>,
    pub angle_stop_deg: Option<f64>,
    pub angle_step_deg: Option<f64>,
    #[serde(rename = "K_values")]
    pub k_values: Option<Vec<usize>>,
    #[serde(rename = "N_values")]
    pub n_values: Option<Vec<usize>>,
    pub ue_distance_m: Option<f64>,
    pub shadow_std_db: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved and validated experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ChannelModel,
    pub cells: usize,
    pub antennas: usize,
    /// Angle grid in degrees (angle and variance sweeps).
    pub angles_deg: Vec<f64>,
    /// UEs per cell to sweep (cluster sweep); `[2]` for the angle setups.
    pub k_values: Vec<usize>,
    /// Spreading lengths evaluated with NOMA.
    pub n_values: Vec<usize>,
    pub asd_deg: f64,
    pub cluster_radius_m: f64,
    pub min_bs_dist_m: f64,
    pub network: NetworkParams,
    /// Fading realizations per drop.
    pub trials: usize,
    pub drops: usize,
    pub seed: u64,
    pub workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl ExperimentConfig {
    /// Resolves defaults for `experiment` and validates everything.
    pub fn resolve(experiment: ExperimentKind, file: &ConfigFile) -> Result<Self> {
        let defaults = NetworkParams::default();
        let network = NetworkParams {
            cell_side_m: file.cell_side_m.unwrap_or(defaults.cell_side_m),
            p_dbm: file.p_dbm.unwrap_or(defaults.p_dbm),
            noise_dbm: file.noise_dbm.unwrap_or(defaults.noise_dbm),
            tau_c: file.tau_c.unwrap_or(defaults.tau_c),
            shadow_std_db: file.shadow_std_db.unwrap_or(defaults.shadow_std_db),
            two_user_distance_m: file.ue_distance_m.unwrap_or(defaults.two_user_distance_m),
            ..defaults
        };
        let two_user = experiment != ExperimentKind::ClusterSweep;
        let model = match (experiment, file.model) {
            (_, Some(m)) => m,
            (ExperimentKind::VarianceSweep, None) => ChannelModel::TwoD,
            (_, None) => return Err(Error::config("key 'model' is required (\"2d\" or \"3d\")")),
        };

        let cells = file.cells.unwrap_or(if two_user { 1 } else { 4 });
        let k_values = match (&file.k_values, file.ues_per_cell) {
            (Some(_), Some(_)) => return Err(Error::config("give either 'K' or 'K_values', not both")),
            (Some(v), None) => v.clone(),
            (None, Some(k)) => vec![k],
            (None, None) if two_user => vec![2],
            (None, None) => DEFAULT_K_VALUES.to_vec(),
        };
        let n_values = match (&file.n_values, file.spreading_len) {
            (Some(_), Some(_)) => return Err(Error::config("give either 'N' or 'N_values', not both")),
            (Some(v), None) => v.clone(),
            (None, Some(n)) => vec![n],
            (None, None) if two_user => vec![2],
            (None, None) => DEFAULT_N_VALUES.to_vec(),
        };
        let start = file.angle_start_deg.unwrap_or(-180.0);
        let stop = file.angle_stop_deg.unwrap_or(180.0);
        let step = file.angle_step_deg.unwrap_or(2.0);
        let (default_trials, default_drops) = match experiment {
            ExperimentKind::ClusterSweep => (500, 20),
            _ => (2000, 1),
        };

        let config = Self {
            experiment,
            model,
            cells,
            antennas: file.antennas.unwrap_or(64),
            angles_deg: angle_grid(start, stop, step)?,
            k_values,
            n_values,
            asd_deg: file.asd_deg.unwrap_or(2.0),
            cluster_radius_m: file.cluster_radius_m.unwrap_or(10.0),
            min_bs_dist_m: file.min_bs_dist_m.unwrap_or(25.0),
            network,
            trials: file.trials.unwrap_or(default_trials),
            drops: file.drops.unwrap_or(default_drops),
            seed: file.seed.unwrap_or(1),
            workers: file.workers.unwrap_or_else(default_workers),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn cluster_spec(&self, n: usize) -> ClusterSpec {
        ClusterSpec {
            radius_m: self.cluster_radius_m,
            min_bs_distance_m: self.min_bs_dist_m,
            subcluster_size: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("asd_deg", self.asd_deg),
            ("cell_side_m", self.network.cell_side_m),
            ("cluster_radius_m", self.cluster_radius_m),
            ("ue_distance_m", self.network.two_user_distance_m),
        ];
        for (key, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(format!("'{key}' must be positive, got {value}")));
            }
        }
        for (key, value) in [("p_dbm", self.network.p_dbm), ("noise_dbm", self.network.noise_dbm)] {
            if !value.is_finite() {
                return Err(Error::config(format!("'{key}' must be finite")));
            }
        }
        if !(self.min_bs_dist_m >= 0.0) || self.min_bs_dist_m >= self.network.cell_side_m / 2.0 {
            return Err(Error::config(format!(
                "'min_bs_dist_m' must lie in [0, cell_side_m / 2), got {}",
                self.min_bs_dist_m
            )));
        }
        if !(self.network.shadow_std_db >= 0.0) {
            return Err(Error::config("'shadow_std_db' must be non-negative"));
        }
        if self.trials == 0 {
            return Err(Error::config("'trials' must be at least 1"));
        }
        if self.drops == 0 {
            return Err(Error::config("'drops' must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("'workers' must be at least 1"));
        }
        if self.antennas == 0 {
            return Err(Error::config("'M' must be at least 1"));
        }
        let needs_square = self.model == ChannelModel::ThreeD || self.experiment == ExperimentKind::VarianceSweep;
        if needs_square {
            ChannelModel::ThreeD
                .geometry(self.antennas)
                .map_err(|_| Error::config(format!("'M' = {} must be a perfect square for the planar array", self.antennas)))?;
        }
        if self.k_values.is_empty() || self.n_values.is_empty() {
            return Err(Error::config("'K_values' and 'N_values' must be non-empty"));
        }
        if self.k_values.contains(&0) || self.n_values.contains(&0) {
            return Err(Error::config("K and N values must be positive"));
        }
        match self.experiment {
            ExperimentKind::AngleSweep | ExperimentKind::VarianceSweep => {
                if self.cells != 1 || self.k_values != [2] {
                    return Err(Error::config("the angle setups use a single cell with K = 2"));
                }
                if self.n_values != [2] {
                    return Err(Error::config("the angle setups use N = 2 (one code per UE)"));
                }
            }
            ExperimentKind::ClusterSweep => {
                let side = (self.cells as f64).sqrt().round() as usize;
                if side * side != self.cells {
                    return Err(Error::config(format!("'L' = {} does not form a square cell grid", self.cells)));
                }
                for &k in &self.k_values {
                    for &n in &self.n_values {
                        if k % n != 0 {
                            return Err(Error::config(format!(
                                "K = {k} is not a multiple of N = {n}; every (K, N) pair must split into whole subclusters"
                            )));
                        }
                    }
                    if k > self.network.tau_c {
                        return Err(Error::config(format!("K = {k} pilots do not fit in tau_c = {}", self.network.tau_c)));
                    }
                }
            }
        }
        if self.network.tau_c <= self.k_values.iter().copied().max().unwrap_or(0) {
            return Err(Error::config("'tau_c' leaves no samples for uplink data"));
        }
        Ok(())
    }
}

fn angle_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::config(format!("'angle_step_deg' must be positive, got {step}")));
    }
    if !(-180.0..=180.0).contains(&start) || !(-180.0..=180.0).contains(&stop) || start > stop {
        return Err(Error::config(format!(
            "angle range [{start}, {stop}] must lie within [-180, 180] with start <= stop"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_table() {
        let c = ExperimentConfig::resolve(ExperimentKind::AngleSweep, &ConfigFile::parse("model = \"3d\"").unwrap()).unwrap();
        assert_eq!(c.network.cell_side_m, 250.0);
        assert_eq!(c.network.noise_dbm, -94.0);
        assert_eq!(c.network.p_dbm, 20.0);
        assert_eq!(c.network.tau_c, 200);
        assert_eq!(c.antennas, 64);
        assert_eq!(c.angles_deg.len(), 181);
        assert_eq!(c.angles_deg[0], -180.0);
        assert_eq!(*c.angles_deg.last().unwrap(), 180.0);
        assert_eq!(c.trials, 2000);

        let c = ExperimentConfig::resolve(ExperimentKind::ClusterSweep, &ConfigFile::parse("model = \"2d\"").unwrap()).unwrap();
        assert_eq!((c.cells, c.trials, c.drops), (4, 500, 20));
        assert_eq!(c.n_values, vec![2, 4, 8]);
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let err = ConfigFile::parse("model = \"2d\"\nbogus = 3\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line 2") || err.contains("2 |"), "{err}");
    }

    #[test]
    fn incompatible_k_n_pairs_are_rejected() {
        let file = ConfigFile::parse("model = \"3d\"\nK_values = [8, 12]\nN_values = [8]").unwrap();
        let err = ExperimentConfig::resolve(ExperimentKind::ClusterSweep, &file).unwrap_err().to_string();
        assert!(err.contains("K = 12"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "model = \"3d\"\nM = 60",
            "model = \"2d\"\ntrials = 0",
            "model = \"2d\"\nasd_deg = -1.0",
            "model = \"2d\"\nangle_start_deg = 10.0\nangle_stop_deg = 0.0",
            "model = \"2d\"\nangle_stop_deg = 200.0",
            "model = \"2d\"\nL = 2",
        ] {
            let file = ConfigFile::parse(text).unwrap();
            assert!(ExperimentConfig::resolve(ExperimentKind::AngleSweep, &file).is_err(), "{text}");
        }
        assert!(ExperimentConfig::resolve(ExperimentKind::AngleSweep, &ConfigFile::default()).is_err());
        let file = ConfigFile::parse("model = \"2d\"\nL = 3").unwrap();
        assert!(ExperimentConfig::resolve(ExperimentKind::ClusterSweep, &file).is_err());
    }
}
