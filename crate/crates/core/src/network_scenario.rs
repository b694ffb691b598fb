//! Network layouts: path loss, the single-cell two-user angle setup and the
//! clustered multi-cell setup, with their pilot and spreading assignments.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code_domain::{Spreading, SpreadingBook};
use crate::error::{Error, Result};
use crate::pilot_mmse::PilotBook;
use crate::spatial_channel::{correlation_2d, correlation_3d, AngularSpec, ArrayGeometry, CorrelationMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelModel {
    /// One-ring model for a uniform linear array.
    #[serde(rename = "2d")]
    TwoD,
    /// One-ring model for a square planar array.
    #[serde(rename = "3d")]
    ThreeD,
}

impl ChannelModel {
    pub fn geometry(self, antennas: usize) -> Result<ArrayGeometry> {
        match self {
            ChannelModel::TwoD => ArrayGeometry::linear(antennas),
            ChannelModel::ThreeD => ArrayGeometry::planar(antennas),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelModel::TwoD => "2d",
            ChannelModel::ThreeD => "3d",
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Split of a coherence block into pilot, uplink and downlink samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoherenceBudget {
    pub tau_c: usize,
    pub tau_p: usize,
    pub tau_u: usize,
    pub tau_d: usize,
}

impl CoherenceBudget {
    pub fn new(tau_c: usize, tau_p: usize, tau_u: usize, tau_d: usize) -> Result<Self> {
        if tau_p + tau_u + tau_d != tau_c {
            return Err(Error::config(format!(
                "coherence budget does not add up: {tau_p} + {tau_u} + {tau_d} != {tau_c}"
            )));
        }
        Ok(Self { tau_c, tau_p, tau_u, tau_d })
    }

    /// All non-pilot samples carry uplink data.
    pub fn uplink_only(tau_c: usize, tau_p: usize) -> Result<Self> {
        if tau_p > tau_c {
            return Err(Error::config(format!("{tau_p} pilot samples exceed the block length {tau_c}")));
        }
        Self::new(tau_c, tau_p, tau_c - tau_p, 0)
    }

    pub fn uplink_fraction(&self) -> f64 {
        self.tau_u as f64 / self.tau_c as f64
    }
}

/// Physical constants of the deployment. Defaults follow the reference
/// parameter table: 250 m cells, 20 dBm UL power, -94 dBm noise, τ_c = 200.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub cell_side_m: f64,
    pub p_dbm: f64,
    pub noise_dbm: f64,
    pub tau_c: usize,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    /// Standard deviation of log-normal shadowing.
    pub shadow_std_db: f64,
    /// BS-UE distance used by the two-user angle setup.
    pub two_user_distance_m: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            cell_side_m: 250.0,
            p_dbm: 20.0,
            noise_dbm: -94.0,
            tau_c: 200,
            bs_height_m: 25.0,
            ue_height_m: 1.5,
            shadow_std_db: 10.0,
            two_user_distance_m: 140.0,
        }
    }
}

impl NetworkParams {
    pub fn ue_power(&self) -> f64 {
        dbm_to_watts(self.p_dbm)
    }

    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// Nominal elevation (degrees, negative = below the array) seen from the
    /// BS for a UE at horizontal distance `distance_m`.
    pub fn elevation_deg(&self, distance_m: f64) -> f64 {
        -((self.bs_height_m - self.ue_height_m) / distance_m).atan().to_degrees()
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Linear large-scale gain `-148.1 - 37.6 log10(d / 1 km) + F` dB.
pub fn large_scale_gain(distance_km: f64, shadow_db: f64) -> Result<f64> {
    if !(distance_km > 0.0) || !distance_km.is_finite() {
        return Err(Error::domain(format!("distance must be positive, got {distance_km} km")));
    }
    Ok(10f64.powf(large_scale_gain_db(distance_km, shadow_db) / 10.0))
}

pub fn large_scale_gain_db(distance_km: f64, shadow_db: f64) -> f64 {
    -148.1 - 37.6 * distance_km.log10() + shadow_db
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Azimuth of `self` seen from `origin`, degrees in [-180, 180].
    pub fn azimuth_from(&self, origin: &Position) -> f64 {
        (self.y - origin.y).atan2(self.x - origin.x).to_degrees()
    }
}

/// Cluster placement: one disk of `radius_m` per cell, centered at least
/// `min_bs_distance_m` from the serving BS, split into subclusters of
/// `subcluster_size` UEs that share one orthogonal code book.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSpec {
    pub radius_m: f64,
    pub min_bs_distance_m: f64,
    pub subcluster_size: usize,
}

impl ClusterSpec {
    pub fn validate(&self, ues_per_cell: usize) -> Result<()> {
        if !(self.radius_m > 0.0) {
            return Err(Error::config(format!("cluster radius must be positive, got {}", self.radius_m)));
        }
        if !(self.min_bs_distance_m >= 0.0) {
            return Err(Error::config("minimum BS distance must be non-negative"));
        }
        if self.subcluster_size == 0 || ues_per_cell % self.subcluster_size != 0 {
            return Err(Error::config(format!(
                "K = {ues_per_cell} is not a multiple of the subcluster size N = {}",
                self.subcluster_size
            )));
        }
        Ok(())
    }
}

/// A complete network snapshot. UEs are indexed `cell * K + k`; correlation
/// matrices are indexed `[ue][bs]`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cells: usize,
    pub ues_per_cell: usize,
    pub model: ChannelModel,
    pub geometry: ArrayGeometry,
    pub cell_side_m: f64,
    pub bs_positions: Vec<Position>,
    pub ue_positions: Vec<Position>,
    pub powers: Vec<f64>,
    pub noise_power: f64,
    pub correlation: Arc<Vec<Vec<CorrelationMatrix>>>,
    pub budget: CoherenceBudget,
    pub pilots: PilotBook,
    pub spreading: Spreading,
    /// Groups of UEs sharing one code book (empty when not clustered).
    pub subclusters: Vec<Vec<usize>>,
    pub cluster_centers: Vec<Position>,
}

impl Scenario {
    pub fn antennas(&self) -> usize {
        self.geometry.antennas()
    }

    pub fn total_ues(&self) -> usize {
        self.cells * self.ues_per_cell
    }

    pub fn ue_index(&self, cell: usize, k: usize) -> usize {
        cell * self.ues_per_cell + k
    }

    pub fn cell_of(&self, ue: usize) -> usize {
        ue / self.ues_per_cell
    }

    pub fn correlation(&self, ue: usize, bs: usize) -> &CorrelationMatrix {
        &self.correlation[ue][bs]
    }

    pub fn with_spreading(mut self, spreading: Spreading) -> Result<Self> {
        if spreading.assignment.len() != self.total_ues() {
            return Err(Error::dimension("spreading assignment does not cover every UE"));
        }
        self.spreading = spreading;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ues = self.total_ues();
        if self.cells == 0 || self.ues_per_cell == 0 {
            return Err(Error::config("scenario needs at least one cell and one UE per cell"));
        }
        if self.bs_positions.len() != self.cells || self.ue_positions.len() != ues {
            return Err(Error::dimension("position lists do not match the cell and UE counts"));
        }
        if self.powers.len() != ues || self.correlation.len() != ues {
            return Err(Error::dimension("power or correlation list does not cover every UE"));
        }
        if self.powers.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain("transmit powers must be finite and non-negative"));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::domain("noise power must be positive"));
        }
        let m = self.antennas();
        for (ue, row) in self.correlation.iter().enumerate() {
            if row.len() != self.cells {
                return Err(Error::dimension(format!("UE {ue} has {} correlation matrices", row.len())));
            }
            if row.iter().any(|r| r.antennas() != m) {
                return Err(Error::dimension(format!("UE {ue} has a correlation matrix of the wrong size")));
            }
        }
        if self.pilots.assignment().len() != ues || self.spreading.assignment.len() != ues {
            return Err(Error::dimension("pilot or code assignment does not cover every UE"));
        }
        if self.pilots.tau_p() != self.budget.tau_p {
            return Err(Error::config(format!(
                "pilot length {} differs from the budget's tau_p {}",
                self.pilots.tau_p(),
                self.budget.tau_p
            )));
        }
        Ok(())
    }
}

fn correlation_for(
    model: ChannelModel,
    geometry: &ArrayGeometry,
    azimuth_deg: f64,
    elevation_deg: f64,
    asd_deg: f64,
    beta: f64,
) -> Result<CorrelationMatrix> {
    let angles = AngularSpec::new(azimuth_deg, elevation_deg, asd_deg)?;
    match model {
        ChannelModel::TwoD => correlation_2d(geometry, &angles, beta),
        ChannelModel::ThreeD => correlation_3d(geometry, &angles, beta),
    }
}

/// Maps an angle in [-180, 180] to (-180, 180].
pub fn wrap_angle_deg(angle: f64) -> Result<f64> {
    if !(-180.0..=180.0).contains(&angle) {
        return Err(Error::domain(format!("angle {angle} outside [-180, 180]")));
    }
    Ok(if angle == -180.0 { 180.0 } else { angle })
}

/// Nominal azimuth of the fixed UE in the two-user setup.
pub const TWO_USER_REFERENCE_DEG: f64 = 30.0;

/// Single cell, two UEs at equal distance from the BS: UE 0 at 30°, UE 1 at
/// `interferer_angle_deg`. Both use length-2 orthogonal codes (one each).
pub fn build_two_user_scenario(
    interferer_angle_deg: f64,
    model: ChannelModel,
    antennas: usize,
    asd_deg: f64,
    params: &NetworkParams,
) -> Result<Scenario> {
    let interferer = wrap_angle_deg(interferer_angle_deg)?;
    let geometry = model.geometry(antennas)?;
    let distance = params.two_user_distance_m;
    let beta = large_scale_gain(distance / 1000.0, 0.0)?;
    let elevation = params.elevation_deg(distance);
    let half = params.cell_side_m / 2.0;
    let bs = Position::new(half, half);
    let place = |deg: f64| {
        let a = deg.to_radians();
        Position::new(bs.x + distance * a.cos(), bs.y + distance * a.sin())
    };
    let correlation = vec![
        vec![correlation_for(model, &geometry, TWO_USER_REFERENCE_DEG, elevation, asd_deg, beta)?],
        vec![correlation_for(model, &geometry, interferer, elevation, asd_deg, beta)?],
    ];
    let scenario = Scenario {
        cells: 1,
        ues_per_cell: 2,
        model,
        geometry,
        cell_side_m: params.cell_side_m,
        bs_positions: vec![bs],
        ue_positions: vec![place(TWO_USER_REFERENCE_DEG), place(interferer)],
        powers: vec![params.ue_power(); 2],
        noise_power: params.noise_power(),
        correlation: Arc::new(correlation),
        budget: CoherenceBudget::uplink_only(params.tau_c, 2)?,
        pilots: PilotBook::orthogonal_shared(1, 2)?,
        spreading: Spreading::new(SpreadingBook::orthogonal(2)?, vec![0, 1])?,
        subclusters: vec![vec![0, 1]],
        cluster_centers: Vec::new(),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Side length of the square cell grid for `cells` cells.
fn grid_side(cells: usize) -> Result<usize> {
    let side = (cells as f64).sqrt().round() as usize;
    if cells == 0 || side * side != cells {
        return Err(Error::config(format!("cell count {cells} does not form a square grid")));
    }
    Ok(side)
}

/// Splits each cell's UEs uniformly at random into subclusters of size `n`
/// and hands out the `n` orthogonal codes within every subcluster by a
/// random permutation.
pub fn assign_subcluster_codes<R: Rng + ?Sized>(
    cells: usize,
    ues_per_cell: usize,
    n: usize,
    rng: &mut R,
) -> Result<(Spreading, Vec<Vec<usize>>)> {
    if n == 0 || ues_per_cell % n != 0 {
        return Err(Error::config(format!("K = {ues_per_cell} is not a multiple of N = {n}")));
    }
    let book = SpreadingBook::orthogonal(n)?;
    let mut assignment = vec![0; cells * ues_per_cell];
    let mut groups = Vec::with_capacity(cells * ues_per_cell / n);
    for cell in 0..cells {
        let mut order: Vec<usize> = (0..ues_per_cell).map(|k| cell * ues_per_cell + k).collect();
        order.shuffle(rng);
        for chunk in order.chunks(n) {
            let mut codes: Vec<usize> = (0..n).collect();
            codes.shuffle(rng);
            for (&ue, &code) in chunk.iter().zip(&codes) {
                assignment[ue] = code;
            }
            let mut group = chunk.to_vec();
            group.sort_unstable();
            groups.push(group);
        }
    }
    Ok((Spreading::new(book, assignment)?, groups))
}

/// Clustered multi-cell drop on a square grid of square cells with the BS
/// at each cell center.
#[allow(clippy::too_many_arguments)]
pub fn build_cluster_scenario<R: Rng + ?Sized>(
    cells: usize,
    ues_per_cell: usize,
    spreading_len: usize,
    antennas: usize,
    model: ChannelModel,
    asd_deg: f64,
    cluster: &ClusterSpec,
    params: &NetworkParams,
    rng: &mut R,
) -> Result<Scenario> {
    if cluster.subcluster_size != spreading_len {
        return Err(Error::config("subcluster size must equal the spreading length"));
    }
    cluster.validate(ues_per_cell)?;
    let side_cells = grid_side(cells)?;
    let geometry = model.geometry(antennas)?;
    let side = params.cell_side_m;
    if cluster.min_bs_distance_m >= side / 2.0 {
        return Err(Error::config(format!(
            "minimum BS distance {} m leaves no room in a {side} m cell",
            cluster.min_bs_distance_m
        )));
    }
    if !(params.shadow_std_db >= 0.0) {
        return Err(Error::config("shadow-fading deviation must be non-negative"));
    }

    let bs_positions: Vec<Position> = (0..cells)
        .map(|l| {
            let (col, row) = (l % side_cells, l / side_cells);
            Position::new((col as f64 + 0.5) * side, (row as f64 + 0.5) * side)
        })
        .collect();

    let mut centers = Vec::with_capacity(cells);
    let mut ue_positions = Vec::with_capacity(cells * ues_per_cell);
    for bs in &bs_positions {
        let center = loop {
            let c = Position::new(
                bs.x + (rng.random::<f64>() - 0.5) * side,
                bs.y + (rng.random::<f64>() - 0.5) * side,
            );
            if c.distance(bs) >= cluster.min_bs_distance_m {
                break c;
            }
        };
        centers.push(center);
        for _ in 0..ues_per_cell {
            let radius = cluster.radius_m * rng.random::<f64>().sqrt();
            let angle = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            ue_positions.push(Position::new(center.x + radius * angle.cos(), center.y + radius * angle.sin()));
        }
    }

    let shadow = Normal::new(0.0, params.shadow_std_db).map_err(|e| Error::config(e.to_string()))?;
    let links: Vec<(usize, usize, f64)> = (0..ue_positions.len())
        .flat_map(|ue| (0..cells).map(move |bs| (ue, bs)))
        .map(|(ue, bs)| (ue, bs, shadow.sample(rng)))
        .collect();

    let (spreading, subclusters) = assign_subcluster_codes(cells, ues_per_cell, spreading_len, rng)?;

    let flat: Vec<CorrelationMatrix> = links
        .par_iter()
        .map(|&(ue, bs, shadow_db)| {
            let (u, b) = (&ue_positions[ue], &bs_positions[bs]);
            let d = u.distance(b);
            let beta = large_scale_gain(d / 1000.0, shadow_db)?;
            correlation_for(model, &geometry, u.azimuth_from(b), params.elevation_deg(d), asd_deg, beta)
        })
        .collect::<Result<_>>()?;
    let mut correlation = Vec::with_capacity(ue_positions.len());
    let mut it = flat.into_iter();
    for _ in 0..ue_positions.len() {
        correlation.push(it.by_ref().take(cells).collect());
    }

    let scenario = Scenario {
        cells,
        ues_per_cell,
        model,
        geometry,
        cell_side_m: side,
        bs_positions,
        powers: vec![params.ue_power(); ue_positions.len()],
        ue_positions,
        noise_power: params.noise_power(),
        correlation: Arc::new(correlation),
        budget: CoherenceBudget::uplink_only(params.tau_c, ues_per_cell)?,
        pilots: PilotBook::orthogonal_shared(cells, ues_per_cell)?,
        spreading,
        subclusters,
        cluster_centers: centers,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial_channel::favorable_propagation_variance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_loss_reference_points() {
        let g = large_scale_gain(1.0, 0.0).unwrap();
        assert!((g - 10f64.powf(-14.81)).abs() / g < 1e-12);
        assert!((g - 1.549e-15).abs() < 1e-18);
        assert!((large_scale_gain_db(0.1, 0.0) + 110.5).abs() < 1e-12);
        // -148.1 - 37.6 log10(0.25) + 3 = -148.1 + 22.637... + 3
        let db = 10.0 * large_scale_gain(0.25, 3.0).unwrap().log10();
        assert!((db + 122.46).abs() < 0.01, "{db}");
    }

    #[test]
    fn path_loss_rejects_non_positive_distance() {
        assert!(matches!(large_scale_gain(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(large_scale_gain(-1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn path_loss_decreases_with_distance() {
        let mut last = f64::INFINITY;
        for d in [0.01, 0.02, 0.05, 0.1, 0.14, 0.5, 1.0, 3.0] {
            let g = large_scale_gain(d, 0.0).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn budget_must_add_up() {
        assert!(CoherenceBudget::new(200, 2, 198, 0).is_ok());
        assert!(CoherenceBudget::new(200, 2, 190, 0).is_err());
        assert!(CoherenceBudget::uplink_only(10, 11).is_err());
        let b = CoherenceBudget::uplink_only(200, 32).unwrap();
        assert_eq!(b.tau_u, 168);
        assert!((b.uplink_fraction() - 0.84).abs() < 1e-15);
    }

    #[test]
    fn same_angle_gives_identical_correlation() {
        let p = NetworkParams::default();
        let s = build_two_user_scenario(30.0, ChannelModel::ThreeD, 16, 2.0, &p).unwrap();
        assert_eq!(s.correlation(0, 0).matrix(), s.correlation(1, 0).matrix());
    }

    #[test]
    fn angle_wraps_at_180() {
        let p = NetworkParams::default();
        let a = build_two_user_scenario(-180.0, ChannelModel::TwoD, 8, 2.0, &p).unwrap();
        let b = build_two_user_scenario(180.0, ChannelModel::TwoD, 8, 2.0, &p).unwrap();
        assert_eq!(a.correlation(1, 0).matrix(), b.correlation(1, 0).matrix());
        assert_eq!(a.ue_positions, b.ue_positions);
        assert!(build_two_user_scenario(181.0, ChannelModel::TwoD, 8, 2.0, &p).is_err());
    }

    #[test]
    fn linear_array_mirror_ambiguity() {
        let p = NetworkParams::default();
        let at = |deg| {
            let s = build_two_user_scenario(deg, ChannelModel::TwoD, 64, 2.0, &p).unwrap();
            favorable_propagation_variance(s.correlation(0, 0), s.correlation(1, 0)).unwrap()
        };
        assert!((at(150.0) - at(30.0)).abs() < 1e-6);
    }

    #[test]
    fn cluster_rejects_incompatible_subclusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cluster = ClusterSpec {
            radius_m: 10.0,
            min_bs_distance_m: 25.0,
            subcluster_size: 3,
        };
        let r = build_cluster_scenario(
            4,
            8,
            3,
            4,
            ChannelModel::TwoD,
            2.0,
            &cluster,
            &NetworkParams::default(),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    fn small_cluster(seed: u64, k: usize, n: usize) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cluster = ClusterSpec {
            radius_m: 10.0,
            min_bs_distance_m: 25.0,
            subcluster_size: n,
        };
        build_cluster_scenario(
            4,
            k,
            n,
            4,
            ChannelModel::ThreeD,
            2.0,
            &cluster,
            &NetworkParams::default(),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn cluster_geometry_invariants() {
        for seed in 0..20 {
            let s = small_cluster(seed, 8, 4);
            for (cell, center) in s.cluster_centers.iter().enumerate() {
                assert!(center.distance(&s.bs_positions[cell]) >= 25.0);
                for k in 0..s.ues_per_cell {
                    assert!(s.ue_positions[s.ue_index(cell, k)].distance(center) <= 10.0);
                }
            }
        }
    }

    #[test]
    fn subcluster_partition_is_exact() {
        let s = small_cluster(3, 8, 4);
        assert_eq!(s.subclusters.len(), 4 * 2);
        let mut seen = vec![0; s.total_ues()];
        for group in &s.subclusters {
            assert_eq!(group.len(), 4);
            let cell = s.cell_of(group[0]);
            assert!(group.iter().all(|&ue| s.cell_of(ue) == cell));
            let mut codes: Vec<usize> = group.iter().map(|&ue| s.spreading.assignment[ue]).collect();
            codes.sort_unstable();
            assert_eq!(codes, vec![0, 1, 2, 3]);
            for &ue in group {
                seen[ue] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn full_and_trivial_subclusters() {
        let s = small_cluster(5, 4, 4);
        for cell in 0..4 {
            let mut codes: Vec<usize> = (0..4).map(|k| s.spreading.assignment[s.ue_index(cell, k)]).collect();
            codes.sort_unstable();
            assert_eq!(codes, vec![0, 1, 2, 3]);
        }
        let s = small_cluster(5, 4, 1);
        assert_eq!(s.spreading.sequence_len(), 1);
        assert!(s.spreading.assignment.iter().all(|&c| c == 0));
    }

    #[test]
    fn cluster_drop_is_reproducible() {
        let a = small_cluster(11, 8, 4);
        let b = small_cluster(11, 8, 4);
        assert_eq!(a.ue_positions, b.ue_positions);
        assert_eq!(a.spreading, b.spreading);
        assert_eq!(a.subclusters.len(), 2 * 4);
        for ue in 0..a.total_ues() {
            for bs in 0..4 {
                assert_eq!(a.correlation(ue, bs).matrix(), b.correlation(ue, bs).matrix());
            }
        }
    }
}
