//! Channel estimators: pattern-coupled SBL (1D and 2D coupling), block-OMP
//! over the modified-DFT coefficient grid, and OMP over the polar-domain
//! dictionary.

use nalgebra::DVector;

use crate::channel::{ComplexMatrix, ComplexVector, UpaGeometry};
use crate::dictionary::{block_partition, PolarDictionary, SparseGridCoefficients};
use crate::error::{NfestError, Result};
use crate::gamp::{gamp_gaussian, posterior_direct, GampConfig, GampResult};

/// Hyperparameter coupling pattern across the coefficient grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    OneDimensional,
    TwoDimensional,
}

/// Hyperpriors and loop controls for pattern-coupled SBL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcsblHyperParams {
    /// Gamma shape hyperprior; must exceed 1 for positive precision updates.
    pub a: f64,
    /// Gamma rate hyperprior.
    pub b: f64,
    /// Neighbor coupling coefficient in [0, 1].
    pub rho: f64,
    pub coupling: Coupling,
    /// EM stops when the squared change of the coefficient estimate drops
    /// below this.
    pub eps: f64,
    pub t_max: usize,
}

impl PcsblHyperParams {
    /// The hyperprior shape a = 1.5 is tuned empirically: it clearly beats
    /// a = 2 in NMSE at 16x16 scale and preserves the expected advantage of
    /// the 2D coupling over the 1D chain.
    pub fn defaults(coupling: Coupling) -> Self {
        Self { a: 1.5, b: 1e-6, rho: 1.0, coupling, eps: 1e-6, t_max: 50 }
    }

    fn validate(&self) -> Result<()> {
        if self.a <= 1.0 || self.b <= 0.0 || !(0.0..=1.0).contains(&self.rho) || self.t_max == 0 {
            return Err(NfestError::Config("invalid PCSBL hyperparameters".into()));
        }
        Ok(())
    }
}

/// Posterior-inference engine used for the E-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EStep {
    Gamp(GampConfig),
    /// Dense-inversion reference; small problems only.
    Direct,
}

/// Snapshot of the EM state after the final iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PcsblState {
    pub alpha: DVector<f64>,
    pub eta: DVector<f64>,
    pub mu: ComplexVector,
    pub psi_diag: DVector<f64>,
    pub iter: usize,
}

/// Output of any estimator: sparse coefficients plus the reconstructed channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub beta_hat: SparseGridCoefficients,
    pub h_hat: ComplexVector,
    pub h_mat: ComplexMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
}

/// Kronecker dictionary together with its coefficient-grid metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDictionary {
    pub matrix: ComplexMatrix,
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub block_size: usize,
}

impl GridDictionary {
    pub fn n_coeffs(&self) -> usize {
        self.grid_nx * self.grid_ny
    }
}

/// Grid neighbors of coefficient n under the given coupling pattern.
pub fn neighbor_set(n: usize, grid_nx: usize, grid_ny: usize, coupling: Coupling) -> Vec<usize> {
    let total = grid_nx * grid_ny;
    debug_assert!(n < total);
    match coupling {
        Coupling::OneDimensional => {
            let mut out = Vec::with_capacity(2);
            if n > 0 {
                out.push(n - 1);
            }
            if n + 1 < total {
                out.push(n + 1);
            }
            out
        }
        Coupling::TwoDimensional => {
            let (i, j) = (n % grid_nx, n / grid_nx);
            let mut out = Vec::with_capacity(4);
            if i > 0 {
                out.push(n - 1);
            }
            if i + 1 < grid_nx {
                out.push(n + 1);
            }
            if j > 0 {
                out.push(n - grid_nx);
            }
            if j + 1 < grid_ny {
                out.push(n + grid_nx);
            }
            out.sort_unstable();
            out
        }
    }
}

/// Coupled precisions eta_n = alpha_n + rho * sum of neighbor alphas.
fn coupled_precisions(alpha: &DVector<f64>, neighbors: &[Vec<usize>], rho: f64) -> DVector<f64> {
    DVector::from_fn(alpha.len(), |n, _| {
        let s: f64 = neighbors[n].iter().map(|&k| alpha[k]).sum();
        alpha[n] + rho * s
    })
}

/// M-step precision update from the coupled second moments.
fn m_step_alpha(moment: &DVector<f64>, neighbors: &[Vec<usize>], rho: f64, a: f64, b: f64) -> DVector<f64> {
    DVector::from_fn(moment.len(), |n, _| {
        let s: f64 = neighbors[n].iter().map(|&k| moment[k]).sum();
        let omega = moment[n] + rho * s;
        (a - 1.0) / (0.5 * omega + b)
    })
}

fn reconstruct(dict: &GridDictionary, beta: ComplexVector) -> Result<RecoveryResult> {
    let h_hat = &dict.matrix * &beta;
    let h_mat = ComplexMatrix::from_column_slice(dict.grid_nx, dict.grid_ny, h_hat.as_slice());
    let beta_hat = SparseGridCoefficients::new(beta, dict.grid_nx, dict.grid_ny, dict.block_size)?;
    Ok(RecoveryResult {
        beta_hat,
        h_hat,
        h_mat,
        iterations: 0,
        converged: true,
        residual_norm: 0.0,
    })
}

fn run_e_step(
    phi: &ComplexMatrix,
    y: &ComplexVector,
    eta: &DVector<f64>,
    gamma: f64,
    e_step: &EStep,
) -> Result<GampResult> {
    match e_step {
        EStep::Gamp(cfg) => gamp_gaussian(phi, y, eta, gamma, cfg),
        EStep::Direct => posterior_direct(phi, y, eta, gamma),
    }
}

/// Pattern-coupled SBL over the measurement model y = phi * beta + n, with
/// phi = F * D for the grid dictionary D.
pub fn pcsbl_estimate(
    y: &ComplexVector,
    phi: &ComplexMatrix,
    dict: &GridDictionary,
    hp: &PcsblHyperParams,
    gamma: f64,
    e_step: &EStep,
) -> Result<RecoveryResult> {
    pcsbl_estimate_with_state(y, phi, dict, hp, gamma, e_step).map(|(r, _)| r)
}

/// As [`pcsbl_estimate`], also returning the final EM state.
pub fn pcsbl_estimate_with_state(
    y: &ComplexVector,
    phi: &ComplexMatrix,
    dict: &GridDictionary,
    hp: &PcsblHyperParams,
    gamma: f64,
    e_step: &EStep,
) -> Result<(RecoveryResult, PcsblState)> {
    hp.validate()?;
    let n = phi.ncols();
    if n != dict.n_coeffs() {
        return Err(NfestError::DimensionMismatch(format!(
            "phi has {} columns but the grid holds {} coefficients",
            n,
            dict.n_coeffs()
        )));
    }
    let max_inner = match e_step {
        EStep::Gamp(cfg) => cfg.max_inner_iters,
        EStep::Direct => 0,
    };
    let neighbors: Vec<Vec<usize>> =
        (0..n).map(|k| neighbor_set(k, dict.grid_nx, dict.grid_ny, hp.coupling)).collect();

    let mut alpha = DVector::from_element(n, 1.0);
    let mut beta_prev = ComplexVector::zeros(n);
    let mut eta = coupled_precisions(&alpha, &neighbors, hp.rho);
    let mut post = run_e_step(phi, y, &eta, gamma, e_step)?;
    let mut em_converged = false;
    let mut any_diverged = false;
    let mut iters = 0usize;

    for t in 1..=hp.t_max {
        iters = t;
        if t > 1 {
            eta = coupled_precisions(&alpha, &neighbors, hp.rho);
            post = run_e_step(phi, y, &eta, gamma, e_step)?;
        }
        // Early unconverged return from GAMP only happens on divergence.
        if !post.converged && post.iters_used < max_inner {
            any_diverged = true;
        }
        let moment = DVector::<f64>::from_fn(n, |k, _| post.mean[k].norm_sqr() + post.variance[k]);
        alpha = m_step_alpha(&moment, &neighbors, hp.rho, hp.a, hp.b);
        let change = (&post.mean - &beta_prev).norm_squared();
        beta_prev = post.mean.clone();
        if change < hp.eps {
            em_converged = true;
            break;
        }
    }

    // Keep the state self-consistent: eta always reflects the stored alpha.
    eta = coupled_precisions(&alpha, &neighbors, hp.rho);
    let state = PcsblState {
        alpha,
        eta,
        mu: post.mean.clone(),
        psi_diag: post.variance.clone(),
        iter: iters,
    };
    let residual_norm = (y - phi * &post.mean).norm();
    let mut result = reconstruct(dict, post.mean)?;
    result.iterations = iters;
    result.converged = em_converged && !any_diverged;
    result.residual_norm = residual_norm;
    Ok((result, state))
}

/// 2D block indices and their flattened column sets, tiling the coefficient
/// grid with block_size x block_size rectangles.
fn grid_blocks(dict: &GridDictionary) -> Vec<Vec<usize>> {
    let px = block_partition(dict.grid_nx, dict.block_size);
    let py = block_partition(dict.grid_ny, dict.block_size);
    let mut blocks = Vec::with_capacity(px.len() * py.len());
    for ry in &py {
        for rx in &px {
            let mut cols = Vec::with_capacity(rx.len() * ry.len());
            for j in ry.clone() {
                for i in rx.clone() {
                    cols.push(i + j * dict.grid_nx);
                }
            }
            blocks.push(cols);
        }
    }
    blocks
}

/// Least squares via the normal equations; errors if the Gram matrix is not
/// positive definite.
fn least_squares(a: &ComplexMatrix, y: &ComplexVector) -> Result<ComplexVector> {
    let gram = a.adjoint() * a;
    let chol = gram
        .cholesky()
        .ok_or_else(|| NfestError::Decomposition("rank-deficient column set".into()))?;
    Ok(chol.solve(&(a.adjoint() * y)))
}

fn gather_columns(phi: &ComplexMatrix, cols: &[usize]) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(phi.nrows(), cols.len());
    for (k, &c) in cols.iter().enumerate() {
        a.set_column(k, &phi.column(c));
    }
    a
}

/// Greedy block-OMP on the 2D block tiling of the coefficient grid.
pub fn bomp_estimate(
    y: &ComplexVector,
    phi: &ComplexMatrix,
    dict: &GridDictionary,
    max_blocks: usize,
    residual_tol: f64,
) -> Result<RecoveryResult> {
    if phi.ncols() != dict.n_coeffs() {
        return Err(NfestError::DimensionMismatch(format!(
            "phi has {} columns but the grid holds {} coefficients",
            phi.ncols(),
            dict.n_coeffs()
        )));
    }
    let blocks = grid_blocks(dict);
    let n = dict.n_coeffs();
    let mut residual = y.clone();
    let mut selected_cols: Vec<usize> = Vec::new();
    let mut used = vec![false; blocks.len()];
    let mut solution: Option<ComplexVector> = None;
    let mut iterations = 0usize;
    let mut rank_ok = true;

    while iterations < max_blocks && residual.norm() > residual_tol {
        let corr = phi.adjoint() * &residual;
        // Maximal correlation energy; ties broken by lowest block index.
        // Past the first block, the refit must stay at least 2x
        // overdetermined, otherwise noise amplification swamps the estimate.
        let mut best: Option<(usize, f64)> = None;
        for (bi, cols) in blocks.iter().enumerate() {
            let over_budget = selected_cols.len() + cols.len() > y.len() / 2;
            if used[bi] || (over_budget && !selected_cols.is_empty()) {
                continue;
            }
            let e: f64 = cols.iter().map(|&c| corr[c].norm_sqr()).sum();
            if best.map_or(true, |(_, be)| e > be) {
                best = Some((bi, e));
            }
        }
        let Some((bi, _)) = best else { break };
        used[bi] = true;
        iterations += 1;
        let mut candidate = selected_cols.clone();
        candidate.extend_from_slice(&blocks[bi]);
        let a = gather_columns(phi, &candidate);
        match least_squares(&a, y) {
            Ok(x) => {
                residual = y - &a * &x;
                selected_cols = candidate;
                solution = Some(x);
            }
            Err(_) => {
                // Drop the offending block and keep going.
                rank_ok = false;
            }
        }
    }

    let mut beta = ComplexVector::zeros(n);
    if let Some(x) = solution {
        for (k, &c) in selected_cols.iter().enumerate() {
            beta[c] = x[k];
        }
    }
    let residual_norm = residual.norm();
    let mut result = reconstruct(dict, beta)?;
    result.iterations = iterations;
    result.converged = rank_ok;
    result.residual_norm = residual_norm;
    Ok(result)
}

/// Standard OMP over the polar-domain dictionary composed with the pilot
/// matrix. The returned coefficients live on the polar atom grid, so the
/// 2D grid metadata degenerates to a single row.
pub fn polar_omp_estimate(
    y: &ComplexVector,
    f: &ComplexMatrix,
    polar: &PolarDictionary,
    geom: &UpaGeometry,
    max_atoms: usize,
    residual_tol: f64,
) -> Result<RecoveryResult> {
    if f.ncols() != polar.atoms.nrows() || f.nrows() != y.len() {
        return Err(NfestError::DimensionMismatch(format!(
            "F is {}x{}, atoms are {}x{}, y has {}",
            f.nrows(),
            f.ncols(),
            polar.atoms.nrows(),
            polar.atoms.ncols(),
            y.len()
        )));
    }
    let phi = f * &polar.atoms;
    let n_atoms = polar.n_atoms();
    let mut residual = y.clone();
    let mut selected: Vec<usize> = Vec::new();
    let mut used = vec![false; n_atoms];
    let mut solution: Option<ComplexVector> = None;
    let mut iterations = 0usize;
    let mut rank_ok = true;

    while iterations < max_atoms && residual.norm() > residual_tol {
        let corr = phi.adjoint() * &residual;
        let mut best: Option<(usize, f64)> = None;
        for k in 0..n_atoms {
            if used[k] {
                continue;
            }
            let e = corr[k].norm_sqr();
            if best.map_or(true, |(_, be)| e > be) {
                best = Some((k, e));
            }
        }
        let Some((k, _)) = best else { break };
        used[k] = true;
        iterations += 1;
        let mut candidate = selected.clone();
        candidate.push(k);
        let a = gather_columns(&phi, &candidate);
        match least_squares(&a, y) {
            Ok(x) => {
                residual = y - &a * &x;
                selected = candidate;
                solution = Some(x);
            }
            Err(_) => {
                rank_ok = false;
            }
        }
    }

    let mut coeffs = ComplexVector::zeros(n_atoms);
    let mut h_hat = ComplexVector::zeros(geom.n_total());
    if let Some(x) = solution {
        for (j, &k) in selected.iter().enumerate() {
            coeffs[k] = x[j];
            h_hat += polar.atoms.column(k) * x[j];
        }
    }
    let h_mat = ComplexMatrix::from_column_slice(geom.n_x, geom.n_y, h_hat.as_slice());
    Ok(RecoveryResult {
        beta_hat: SparseGridCoefficients::new(coeffs, n_atoms, 1, 1)?,
        h_hat,
        h_mat,
        iterations,
        converged: rank_ok,
        residual_norm: residual.norm(),
    })
}
