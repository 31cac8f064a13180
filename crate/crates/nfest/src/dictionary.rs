//! Modified DFT dictionaries and the sparse-domain representation.
//!
//! A near-field ULA steering vector becomes block-sparse under a unitary DFT
//! whose columns are pre-rotated by the quadratic spherical-wavefront phase.
//! The Kronecker lift of the two per-axis dictionaries carries the UPA channel
//! into a 2D block-sparse coefficient grid. The polar-domain dictionary is the
//! overcomplete angle-distance grid used by the OMP baseline.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{field_boundaries, ula_steering_vector, ComplexMatrix, ComplexVector, UpaGeometry};
use crate::error::{NfestError, Result};

/// Which array axis a per-axis dictionary spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Unitary DFT with a quadratic-phase pre-rotation tuned to a reference
/// direction cosine and distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedDft {
    pub matrix: ComplexMatrix,
    pub zeta_ref: f64,
    pub r_ref: f64,
    pub axis: Axis,
}

impl ModifiedDft {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Vectorized sparse-domain coefficients with their 2D grid shape and block
/// partition metadata. Storage is column-major: index n = i + j * grid_nx.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGridCoefficients {
    pub values: ComplexVector,
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub block_size: usize,
}

impl SparseGridCoefficients {
    pub fn new(values: ComplexVector, grid_nx: usize, grid_ny: usize, block_size: usize) -> Result<Self> {
        if values.len() != grid_nx * grid_ny {
            return Err(NfestError::DimensionMismatch(format!(
                "coefficient length {} != {}x{}",
                values.len(),
                grid_nx,
                grid_ny
            )));
        }
        if block_size == 0 {
            return Err(NfestError::Argument("block size must be >= 1".into()));
        }
        Ok(Self { values, grid_nx, grid_ny, block_size })
    }
}

/// Contiguous equal blocks of size `block`, last block possibly shorter.
pub fn block_partition(n: usize, block: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(block))
        .map(|p| p * block..((p + 1) * block).min(n))
        .collect()
}

/// Overcomplete angle-distance grid dictionary for the polar-OMP baseline.
#[derive(Debug, Clone)]
pub struct PolarDictionary {
    /// N x N_p atom matrix; each column is a vectorized factored steering matrix.
    pub atoms: ComplexMatrix,
    /// (zeta_a, zeta_e, r) per atom, aligned with the columns.
    pub grid: Vec<(f64, f64, f64)>,
}

impl PolarDictionary {
    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }
}

/// Build the size-n modified DFT tuned to (zeta, r).
pub fn modified_dft(n: usize, zeta: f64, r: f64, geom: &UpaGeometry, axis: Axis) -> Result<ModifiedDft> {
    if r <= 0.0 {
        return Err(NfestError::Domain(format!("reference distance must be positive, got {r}")));
    }
    if zeta.abs() > 1.0 {
        return Err(NfestError::Domain(format!("|zeta_ref| must be <= 1, got {zeta}")));
    }
    let wave = 2.0 * std::f64::consts::PI / geom.lambda_c;
    let d = geom.d;
    let scale = 1.0 / (n as f64).sqrt();
    let mut m = ComplexMatrix::zeros(n, n);
    for row in 0..n {
        let rf = row as f64;
        let quad = -wave * rf * rf * d * d / (2.0 * r) * (1.0 - zeta * zeta);
        for col in 0..n {
            let dft = -2.0 * std::f64::consts::PI * (row * col % n) as f64 / n as f64;
            m[(row, col)] = Complex64::from_polar(scale, quad + dft);
        }
    }
    Ok(ModifiedDft { matrix: m, zeta_ref: zeta, r_ref: r, axis })
}

/// Transform a length-n vector into the sparse domain: beta = M^H a.
pub fn to_sparse_domain(a: &ComplexVector, dft: &ModifiedDft) -> Result<ComplexVector> {
    if a.len() != dft.size() {
        return Err(NfestError::DimensionMismatch(format!(
            "vector length {} != dictionary size {}",
            a.len(),
            dft.size()
        )));
    }
    Ok(dft.matrix.adjoint() * a)
}

/// Kronecker lift D_y (x) D_x mapping the vectorized coefficient grid to the
/// vectorized channel.
pub fn kron_dictionary(dx: &ModifiedDft, dy: &ModifiedDft) -> Result<ComplexMatrix> {
    if dx.axis != Axis::Horizontal || dy.axis != Axis::Vertical {
        return Err(NfestError::Argument(
            "kron_dictionary expects (horizontal, vertical) inputs".into(),
        ));
    }
    Ok(dy.matrix.kronecker(&dx.matrix))
}

/// Active 2D block indices: blocks whose energy exceeds `threshold` times the
/// maximum block energy.
pub fn sigma_support(beta: &SparseGridCoefficients, threshold: f64) -> Result<BTreeSet<(usize, usize)>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(NfestError::Domain(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let px = block_partition(beta.grid_nx, beta.block_size);
    let py = block_partition(beta.grid_ny, beta.block_size);
    let mut energy = vec![vec![0.0f64; py.len()]; px.len()];
    let mut max_e = 0.0f64;
    for (p, rx) in px.iter().enumerate() {
        for (q, ry) in py.iter().enumerate() {
            let mut e = 0.0;
            for j in ry.clone() {
                for i in rx.clone() {
                    e += beta.values[i + j * beta.grid_nx].norm_sqr();
                }
            }
            energy[p][q] = e;
            max_e = max_e.max(e);
        }
    }
    let mut out = BTreeSet::new();
    if max_e == 0.0 {
        return Ok(out);
    }
    for p in 0..px.len() {
        for q in 0..py.len() {
            if energy[p][q] > threshold * max_e {
                out.insert((p, q));
            }
        }
    }
    Ok(out)
}

/// Factored-atom polar dictionary: direction cosines uniform on [-1, 1] per
/// axis, distances sampled as F_R / s with s = 0 meaning far field.
pub fn polar_dictionary(
    geom: &UpaGeometry,
    angle_samples: usize,
    distance_samples: usize,
) -> Result<PolarDictionary> {
    if angle_samples == 0 || distance_samples == 0 {
        return Err(NfestError::Argument("sample counts must be >= 1".into()));
    }
    let fb = field_boundaries(geom);
    let far = 1e12;
    let distances: Vec<f64> = (0..distance_samples)
        .map(|s| if s == 0 { far } else { fb.rayleigh.max(geom.lambda_c) / s as f64 })
        .collect();
    let zeta = |k: usize| -> f64 {
        if angle_samples == 1 {
            0.0
        } else {
            -1.0 + 2.0 * k as f64 / (angle_samples - 1) as f64
        }
    };
    let n = geom.n_total();
    let n_atoms = angle_samples * angle_samples * distance_samples;
    let mut atoms = ComplexMatrix::zeros(n, n_atoms);
    let mut grid = Vec::with_capacity(n_atoms);
    let mut col = 0usize;
    for &r in &distances {
        for ke in 0..angle_samples {
            for ka in 0..angle_samples {
                let (za, ze) = (zeta(ka), zeta(ke));
                let ax = ula_steering_vector(za, r, geom.n_x, geom)?;
                let ay = ula_steering_vector(ze, r, geom.n_y, geom)?;
                // vec(ax * ay^T) column-major = ay (x) ax
                let mut atom = DVector::zeros(n);
                for j in 0..geom.n_y {
                    for i in 0..geom.n_x {
                        atom[i + j * geom.n_x] = ax[i] * ay[j];
                    }
                }
                let nrm = atom.norm();
                atom /= Complex64::new(nrm, 0.0);
                atoms.set_column(col, &atom);
                grid.push((za, ze, r));
                col += 1;
            }
        }
    }
    Ok(PolarDictionary { atoms, grid })
}

/// Frobenius distance of M^H M from the identity, used by unitarity checks.
pub fn unitarity_defect(m: &ComplexMatrix) -> f64 {
    let g = m.adjoint() * m;
    let n = g.nrows();
    (&g - DMatrix::<Complex64>::identity(n, n)).norm()
}
