//! One-ring spatial correlation for linear and planar arrays, correlated
//! Rayleigh channel draws and the favorable-propagation variance.
//!
//! Antennas are half a wavelength apart in every direction. Scatterers are
//! uniformly distributed within `±asd` around the nominal angles, and the
//! angular integrals are evaluated with Gauss–Legendre quadrature.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::quadrature::GaussLegendre;

/// Quadrature nodes per angular dimension.
pub const QUADRATURE_NODES: usize = 200;

/// Relative tolerance for negative eigenvalues that are treated as round-off.
pub const PSD_CLIP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Linear,
    /// Square planar array; `side` antennas per row and per column.
    Planar { side: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    kind: ArrayKind,
    antennas: usize,
}

impl ArrayGeometry {
    pub fn linear(antennas: usize) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::domain("array needs at least one antenna"));
        }
        Ok(Self {
            kind: ArrayKind::Linear,
            antennas,
        })
    }

    /// Square planar array with `√antennas` rows of `√antennas` elements.
    pub fn planar(antennas: usize) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::domain("array needs at least one antenna"));
        }
        let side = (antennas as f64).sqrt().round() as usize;
        if side * side != antennas {
            return Err(Error::domain(format!(
                "planar array needs a perfect-square antenna count, got {antennas}"
            )));
        }
        Ok(Self {
            kind: ArrayKind::Planar { side },
            antennas,
        })
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// (vertical row, horizontal column) of antenna `m`; vertical-major order.
    pub fn planar_index(&self, m: usize) -> Option<(usize, usize)> {
        match self.kind {
            ArrayKind::Planar { side } => Some((m % side, m / side)),
            ArrayKind::Linear => None,
        }
    }
}

/// Nominal angles of arrival and angular spread, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularSpec {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub asd_deg: f64,
}

impl AngularSpec {
    pub fn new(azimuth_deg: f64, elevation_deg: f64, asd_deg: f64) -> Result<Self> {
        if !(asd_deg > 0.0) || !asd_deg.is_finite() {
            return Err(Error::domain(format!("angular spread must be positive, got {asd_deg}")));
        }
        if !(-180.0..=180.0).contains(&azimuth_deg) {
            return Err(Error::domain(format!("azimuth {azimuth_deg} outside [-180, 180]")));
        }
        if !elevation_deg.is_finite() {
            return Err(Error::domain("elevation must be finite"));
        }
        Ok(Self {
            azimuth_deg,
            elevation_deg,
            asd_deg,
        })
    }

    pub fn azimuth(azimuth_deg: f64, asd_deg: f64) -> Result<Self> {
        Self::new(azimuth_deg, 0.0, asd_deg)
    }
}

/// Hermitian PSD spatial correlation matrix with its average gain
/// `beta = tr(R)/M` and a cached square-root factor for sampling.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    r: CMat,
    beta: f64,
    factor: CMat,
}

impl CorrelationMatrix {
    /// Validates Hermitian symmetry and positive semidefiniteness.
    pub fn from_matrix(r: CMat) -> Result<Self> {
        let m = r.nrows();
        if m == 0 || r.ncols() != m {
            return Err(Error::dimension(format!("correlation matrix must be square and non-empty, got {:?}", r.shape())));
        }
        let defect = linalg::hermitian_defect(&r);
        if defect > 1e-12 {
            return Err(Error::domain(format!("correlation matrix is not Hermitian (defect {defect:e})")));
        }
        let beta = r.trace().re / m as f64;
        let (factor, _) = linalg::psd_factor(&r, PSD_CLIP_TOLERANCE * beta.abs())?;
        Ok(Self { r, beta, factor })
    }

    pub fn identity(m: usize, beta: f64) -> Self {
        let r = CMat::identity(m, m) * linalg::real(beta);
        let factor = CMat::identity(m, m) * linalg::real(beta.sqrt());
        Self { r, beta, factor }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            r: CMat::zeros(m, m),
            beta: 0.0,
            factor: CMat::zeros(m, m),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.r
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn antennas(&self) -> usize {
        self.r.nrows()
    }

    /// `F` with `F Fᴴ = R` after clipping round-off negative eigenvalues.
    pub fn factor(&self) -> &CMat {
        &self.factor
    }

    pub fn scaled(&self, a: f64) -> Self {
        assert!(a >= 0.0);
        Self {
            r: &self.r * linalg::real(a),
            beta: self.beta * a,
            factor: &self.factor * linalg::real(a.sqrt()),
        }
    }
}

pub type SharedCorrelation = Arc<CorrelationMatrix>;

/// One-ring correlation of a half-wavelength uniform linear array.
pub fn correlation_2d(geometry: &ArrayGeometry, angles: &AngularSpec, beta: f64) -> Result<CorrelationMatrix> {
    correlation_2d_with_nodes(geometry, angles, beta, QUADRATURE_NODES)
}

pub fn correlation_2d_with_nodes(
    geometry: &ArrayGeometry,
    angles: &AngularSpec,
    beta: f64,
    nodes: usize,
) -> Result<CorrelationMatrix> {
    if geometry.kind() != ArrayKind::Linear {
        return Err(Error::misuse("2D one-ring model requires a linear array"));
    }
    check_gain(beta)?;
    check_spread(angles)?;
    let m = geometry.antennas();
    let rule = GaussLegendre::new(nodes);
    let center = angles.azimuth_deg.to_radians();
    let half = angles.asd_deg.to_radians();
    let sines: Vec<(f64, f64)> = rule.uniform_average(center, half).map(|(a, w)| (a.sin(), w)).collect();

    // Toeplitz: entry (m1, m2) depends only on m1 - m2 >= 0 (lower part).
    let lags: Vec<C64> = (0..m)
        .map(|d| {
            let d = d as f64;
            sines
                .iter()
                .map(|&(s, w)| C64::from_polar(w, std::f64::consts::PI * d * s))
                .sum::<C64>()
                * beta
        })
        .collect();
    let r = CMat::from_fn(m, m, |i, j| if i >= j { lags[i - j] } else { lags[j - i].conj() });
    finish(r, beta)
}

/// One-ring correlation of a square half-wavelength planar array, with
/// scatterers uniform over the azimuth/elevation rectangle `±asd`.
pub fn correlation_3d(geometry: &ArrayGeometry, angles: &AngularSpec, beta: f64) -> Result<CorrelationMatrix> {
    correlation_3d_with_nodes(geometry, angles, beta, QUADRATURE_NODES)
}

pub fn correlation_3d_with_nodes(
    geometry: &ArrayGeometry,
    angles: &AngularSpec,
    beta: f64,
    nodes: usize,
) -> Result<CorrelationMatrix> {
    let side = match geometry.kind() {
        ArrayKind::Planar { side } => side,
        ArrayKind::Linear => return Err(Error::misuse("3D one-ring model requires a planar array")),
    };
    check_gain(beta)?;
    check_spread(angles)?;
    let rule = GaussLegendre::new(nodes);
    let half = angles.asd_deg.to_radians();
    let azimuths: Vec<(f64, f64)> = rule
        .uniform_average(angles.azimuth_deg.to_radians(), half)
        .map(|(a, w)| (a.sin(), w))
        .collect();
    let elevations: Vec<(f64, f64, f64)> = rule
        .uniform_average(angles.elevation_deg.to_radians(), half)
        .map(|(t, w)| (t.sin(), t.cos(), w))
        .collect();
    let pi = std::f64::consts::PI;

    // horizontal[dc][k] = Σ_i w_i exp(jπ dc cosθ_k sinφ_i) for dc >= 0.
    let mut horizontal = vec![vec![C64::new(0.0, 0.0); elevations.len()]; side];
    for (k, &(_, cos_t, _)) in elevations.iter().enumerate() {
        for &(sin_p, w) in &azimuths {
            let step = C64::from_polar(1.0, pi * cos_t * sin_p);
            let mut phasor = C64::new(w, 0.0);
            for row in horizontal.iter_mut() {
                row[k] += phasor;
                phasor *= step;
            }
        }
    }

    // table[dr][dc] for dr in 0..side and dc in -(side-1)..side.
    let span = 2 * side - 1;
    let mut table = vec![C64::new(0.0, 0.0); side * span];
    for (k, &(sin_t, _, w)) in elevations.iter().enumerate() {
        let step = C64::from_polar(1.0, pi * sin_t);
        let mut vertical = C64::new(w, 0.0);
        for dr in 0..side {
            for dc in 0..side {
                let hz = horizontal[dc][k];
                table[dr * span + (side - 1 + dc)] += vertical * hz;
                if dc > 0 {
                    table[dr * span + (side - 1 - dc)] += vertical * hz.conj();
                }
            }
            vertical *= step;
        }
    }

    let m = geometry.antennas();
    let lookup = |dr: isize, dc: isize| -> C64 {
        if dr >= 0 {
            table[dr as usize * span + (side as isize - 1 + dc) as usize]
        } else {
            table[(-dr) as usize * span + (side as isize - 1 - dc) as usize].conj()
        }
    };
    let mut r = CMat::zeros(m, m);
    for j in 0..m {
        let (r2, c2) = (j % side, j / side);
        for i in j..m {
            let (r1, c1) = (i % side, i / side);
            let v = lookup(r1 as isize - r2 as isize, c1 as isize - c2 as isize) * beta;
            r[(i, j)] = v;
            r[(j, i)] = v.conj();
        }
        r[(j, j)] = linalg::real(r[(j, j)].re);
    }
    finish(r, beta)
}

fn check_gain(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!("average gain must be non-negative, got {beta}")));
    }
    Ok(())
}

fn check_spread(angles: &AngularSpec) -> Result<()> {
    if !(angles.asd_deg > 0.0) {
        return Err(Error::domain(format!("angular spread must be positive, got {}", angles.asd_deg)));
    }
    Ok(())
}

fn finish(r: CMat, beta: f64) -> Result<CorrelationMatrix> {
    let m = r.nrows();
    let (factor, _) = linalg::psd_factor(&r, PSD_CLIP_TOLERANCE * beta)?;
    Ok(CorrelationMatrix {
        beta: r.trace().re / m as f64,
        r,
        factor,
    })
}

/// One correlated Rayleigh fading draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CVec,
}

pub fn realize_channel<R: Rng + ?Sized>(correlation: &CorrelationMatrix, rng: &mut R) -> ChannelRealization {
    let z = linalg::complex_normal_vec(rng, correlation.antennas());
    ChannelRealization {
        h: correlation.factor() * z,
    }
}

/// `tr(R1 R2) / (tr(R1) tr(R2))`: the variance of the normalized inner
/// product of two independent channels. Smaller means more orthogonal.
pub fn favorable_propagation_variance(r1: &CorrelationMatrix, r2: &CorrelationMatrix) -> Result<f64> {
    if r1.antennas() != r2.antennas() {
        return Err(Error::dimension(format!(
            "correlation matrices have {} and {} antennas",
            r1.antennas(),
            r2.antennas()
        )));
    }
    let t1 = r1.matrix().trace().re;
    let t2 = r2.matrix().trace().re;
    if t1 <= 0.0 || t2 <= 0.0 {
        return Err(Error::domain("favorable-propagation variance needs matrices with positive trace"));
    }
    Ok(linalg::trace_of_product(r1.matrix(), r2.matrix()).re / (t1 * t2))
}
