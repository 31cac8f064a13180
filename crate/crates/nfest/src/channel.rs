//! Near-field channel synthesis for uniform planar arrays.
//!
//! Builds exact spherical-wavefront steering matrices and their rank-1
//! (outer product of two ULA steering vectors) approximation, from which
//! multipath channels are assembled.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NfestError, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Fresnel boundary coefficient from Balanis' reactive near-field limit,
/// 0.62*sqrt(D^3/lambda).
const FRESNEL_COEFF: f64 = 0.62;

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Physical description of a uniform planar array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaGeometry {
    /// Antennas along the horizontal axis.
    pub n_x: usize,
    /// Antennas along the vertical axis.
    pub n_y: usize,
    /// Inter-element spacing in meters (both axes).
    pub d: f64,
    /// Carrier wavelength in meters.
    pub lambda_c: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
}

impl UpaGeometry {
    /// Array with arbitrary spacing; `lambda_c` is derived from `f_c`.
    pub fn new(n_x: usize, n_y: usize, d: f64, f_c: f64) -> Result<Self> {
        if n_x == 0 || n_y == 0 {
            return Err(NfestError::Argument("array dimensions must be >= 1".into()));
        }
        if d <= 0.0 || f_c <= 0.0 {
            return Err(NfestError::Domain("spacing and frequency must be positive".into()));
        }
        Ok(Self { n_x, n_y, d, lambda_c: SPEED_OF_LIGHT / f_c, f_c })
    }

    /// Half-wavelength-spaced array at carrier `f_c`.
    pub fn half_wavelength(n_x: usize, n_y: usize, f_c: f64) -> Result<Self> {
        let lambda_c = SPEED_OF_LIGHT / f_c;
        Self::new(n_x, n_y, lambda_c / 2.0, f_c)
    }

    /// Total antenna count N = N_x * N_y.
    pub fn n_total(&self) -> usize {
        self.n_x * self.n_y
    }
}

/// One propagation path: complex gain and spherical coordinates of the
/// scatterer/user seen from the reference antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Complex path gain (delay phase already absorbed).
    pub gain: Complex64,
    /// Distance from the reference antenna, meters.
    pub r: f64,
    /// Elevation angle, radians.
    pub theta: f64,
    /// Azimuth angle, radians.
    pub phi: f64,
    /// cos(theta); horizontal-axis direction cosine.
    pub zeta_a: f64,
    /// sin(theta)*sin(phi); vertical-axis direction cosine.
    pub zeta_e: f64,
}

impl PathParams {
    pub fn new(gain: Complex64, r: f64, theta: f64, phi: f64) -> Result<Self> {
        if r <= 0.0 {
            return Err(NfestError::Domain(format!("path distance must be positive, got {r}")));
        }
        Ok(Self {
            gain,
            r,
            theta,
            phi,
            zeta_a: theta.cos(),
            zeta_e: theta.sin() * phi.sin(),
        })
    }
}

/// Near-field region boundaries of an aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBoundaries {
    /// Fresnel (reactive near-field) distance, meters.
    pub fresnel: f64,
    /// Rayleigh (far-field) distance, meters.
    pub rayleigh: f64,
    /// Aperture (diagonal extent of the array), meters.
    pub aperture: f64,
}

/// Exact distance from array element (n_x, n_y) to the path target.
pub fn distance_exact(geom: &UpaGeometry, path: &PathParams, n_x: usize, n_y: usize) -> Result<f64> {
    check_bounds(geom, n_x, n_y)?;
    let r = path.r;
    let (st, ct) = (path.theta.sin(), path.theta.cos());
    let (sp, cp) = (path.phi.sin(), path.phi.cos());
    let a = r * st * cp;
    let b = r * ct - n_x as f64 * geom.d;
    let c = r * st * sp - n_y as f64 * geom.d;
    Ok((a * a + b * b + c * c).sqrt())
}

/// Second-order distance approximation with the bilinear cross term dropped.
pub fn distance_approx(geom: &UpaGeometry, path: &PathParams, n_x: usize, n_y: usize) -> Result<f64> {
    check_bounds(geom, n_x, n_y)?;
    let r = path.r;
    let d = geom.d;
    let (nx, ny) = (n_x as f64, n_y as f64);
    let (za, ze) = (path.zeta_a, path.zeta_e);
    Ok(r - d * (nx * za + ny * ze)
        + d * d / (2.0 * r) * (nx * nx * (1.0 - za * za) + ny * ny * (1.0 - ze * ze)))
}

fn check_bounds(geom: &UpaGeometry, n_x: usize, n_y: usize) -> Result<()> {
    if n_x >= geom.n_x || n_y >= geom.n_y {
        return Err(NfestError::IndexOutOfRange(n_x, n_y, geom.n_x, geom.n_y));
    }
    Ok(())
}

/// Near-field ULA steering vector a(zeta, r, n).
///
/// Element k carries a linear phase in the direction cosine `zeta` plus a
/// quadratic spherical-wavefront correction decaying with `r`.
pub fn ula_steering_vector(zeta: f64, r: f64, n: usize, geom: &UpaGeometry) -> Result<ComplexVector> {
    if r <= 0.0 {
        return Err(NfestError::Domain(format!("distance must be positive, got {r}")));
    }
    if zeta.abs() > 1.0 {
        return Err(NfestError::Domain(format!("|zeta| must be <= 1, got {zeta}")));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let wave = 2.0 * std::f64::consts::PI / geom.lambda_c;
    let d = geom.d;
    Ok(ComplexVector::from_fn(n, |k, _| {
        let kf = k as f64;
        let phase = -wave * (-kf * d * zeta + kf * kf * d * d / (2.0 * r) * (1.0 - zeta * zeta));
        Complex64::from_polar(scale, phase)
    }))
}

/// Exact UPA steering matrix: unit-modulus phases from per-element exact distances.
pub fn steering_matrix_exact(geom: &UpaGeometry, path: &PathParams) -> Result<ComplexMatrix> {
    let scale = 1.0 / (geom.n_total() as f64).sqrt();
    let wave = 2.0 * std::f64::consts::PI / geom.lambda_c;
    let mut m = ComplexMatrix::zeros(geom.n_x, geom.n_y);
    for j in 0..geom.n_y {
        for i in 0..geom.n_x {
            let delta = distance_exact(geom, path, i, j)? - path.r;
            m[(i, j)] = Complex64::from_polar(scale, -wave * delta);
        }
    }
    Ok(m)
}

/// Rank-1 factored steering matrix: outer product of the two ULA steering
/// vectors along the array axes.
pub fn steering_matrix_factored(geom: &UpaGeometry, path: &PathParams) -> Result<ComplexMatrix> {
    let ax = ula_steering_vector(path.zeta_a, path.r, geom.n_x, geom)?;
    let ay = ula_steering_vector(path.zeta_e, path.r, geom.n_y, geom)?;
    Ok(&ax * ay.transpose())
}

/// Steering matrix construction used by [`synthesize_channel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    Exact,
    Factored,
}

/// Multipath UPA channel H = sum_l gain_l * A_l.
pub fn synthesize_channel(
    geom: &UpaGeometry,
    paths: &[PathParams],
    mode: ChannelMode,
) -> Result<ComplexMatrix> {
    if paths.is_empty() {
        return Err(NfestError::Argument("path list must be non-empty".into()));
    }
    let mut h = ComplexMatrix::zeros(geom.n_x, geom.n_y);
    for p in paths {
        let a = match mode {
            ChannelMode::Exact => steering_matrix_exact(geom, p)?,
            ChannelMode::Factored => steering_matrix_factored(geom, p)?,
        };
        h += a * p.gain;
    }
    Ok(h)
}

/// Fresnel/Rayleigh boundaries of the array, with the aperture taken as the
/// diagonal extent of the element grid.
pub fn field_boundaries(geom: &UpaGeometry) -> FieldBoundaries {
    let dx = (geom.n_x - 1) as f64 * geom.d;
    let dy = (geom.n_y - 1) as f64 * geom.d;
    let aperture = (dx * dx + dy * dy).sqrt();
    FieldBoundaries {
        fresnel: FRESNEL_COEFF * (aperture.powi(3) / geom.lambda_c).sqrt(),
        rayleigh: 2.0 * aperture * aperture / geom.lambda_c,
        aperture,
    }
}
