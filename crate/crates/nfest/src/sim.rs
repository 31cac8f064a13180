//! Scenario generation, pilot/noise synthesis, Monte-Carlo orchestration and
//! result persistence.
//!
//! Trials run in parallel; every trial owns a counter-based RNG stream derived
//! from the master seed, so sweep output is identical regardless of thread
//! count or scheduling.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{
    field_boundaries, synthesize_channel, ChannelMode, ComplexMatrix, ComplexVector, PathParams,
    UpaGeometry,
};
use crate::dictionary::{kron_dictionary, modified_dft, polar_dictionary, Axis, PolarDictionary};
use crate::error::{NfestError, Result};
use crate::estimators::{
    bomp_estimate, pcsbl_estimate, polar_omp_estimate, Coupling, EStep, GridDictionary,
    PcsblHyperParams,
};
use crate::gamp::GampConfig;

/// Pilot (precoding) entry distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    /// Every entry has modulus 1/sqrt(N) with i.i.d. uniform phase.
    ConstantModulusRandomPhase,
    /// i.i.d. zero-mean complex Gaussian entries with variance 1/sqrt(N).
    ComplexGaussian,
}

impl PilotMode {
    pub fn name(&self) -> &'static str {
        match self {
            PilotMode::ConstantModulusRandomPhase => "constant_modulus",
            PilotMode::ComplexGaussian => "gaussian",
        }
    }
}

/// How the dictionary reference parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DictMode {
    /// Use the true LoS path parameters (genie-aided reproduction runs).
    Genie,
    /// Fixed reference parameters for blind operation.
    Nominal { zeta_ref: f64, r_ref: f64 },
}

/// One Monte-Carlo experiment point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub geom: UpaGeometry,
    pub n_paths: usize,
    /// NLoS gain below LoS, in dB.
    pub nlos_gain_db: f64,
    pub angle_range: (f64, f64),
    pub distance_range: (f64, f64),
    pub t_samples: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.trials == 0 || self.t_samples == 0 {
            return Err(NfestError::Config("paths, trials and t_samples must be >= 1".into()));
        }
        if !(self.distance_range.0 > 0.0 && self.distance_range.1 >= self.distance_range.0) {
            return Err(NfestError::Config("invalid distance range".into()));
        }
        Ok(())
    }
}

/// Estimator selection for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    TwoDimPcsbl,
    Pcsbl,
    Bomp,
    PolarOmp,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::TwoDimPcsbl,
        EstimatorKind::Pcsbl,
        EstimatorKind::Bomp,
        EstimatorKind::PolarOmp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::TwoDimPcsbl => "2d-pcsbl",
            EstimatorKind::Pcsbl => "pcsbl",
            EstimatorKind::Bomp => "bomp",
            EstimatorKind::PolarOmp => "polar-omp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "2d-pcsbl" => Ok(EstimatorKind::TwoDimPcsbl),
            "pcsbl" => Ok(EstimatorKind::Pcsbl),
            "bomp" => Ok(EstimatorKind::Bomp),
            "polar-omp" => Ok(EstimatorKind::PolarOmp),
            other => Err(NfestError::Config(format!(
                "unknown estimator '{other}' (valid: 2d-pcsbl, pcsbl, bomp, polar-omp)"
            ))),
        }
    }
}

/// Shared estimator parameterization for a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings {
    pub pilot_mode: PilotMode,
    pub dict_mode: DictMode,
    pub block_size: usize,
    pub pcsbl_a: f64,
    pub pcsbl_b: f64,
    pub pcsbl_rho: f64,
    pub pcsbl_eps: f64,
    pub pcsbl_t_max: usize,
    pub gamp: GampConfig,
    pub bomp_max_blocks: usize,
    pub bomp_residual_tol: f64,
    pub polar_angle_samples: usize,
    pub polar_distance_samples: usize,
    pub polar_max_atoms: usize,
    pub polar_residual_tol: f64,
}

impl EstimatorSettings {
    /// Defaults sized for the standard L = 3 multipath scenario.
    pub fn defaults(geom: &UpaGeometry) -> Self {
        Self {
            pilot_mode: PilotMode::ConstantModulusRandomPhase,
            dict_mode: DictMode::Genie,
            block_size: 6,
            pcsbl_a: 1.5,
            pcsbl_b: 1e-6,
            pcsbl_rho: 1.0,
            pcsbl_eps: 1e-6,
            pcsbl_t_max: 50,
            gamp: GampConfig::default(),
            bomp_max_blocks: 6,
            bomp_residual_tol: 1e-9,
            polar_angle_samples: geom.n_x.max(geom.n_y),
            polar_distance_samples: 4,
            polar_max_atoms: 12,
            polar_residual_tol: 1e-9,
        }
    }

    fn hyper(&self, coupling: Coupling) -> PcsblHyperParams {
        PcsblHyperParams {
            a: self.pcsbl_a,
            b: self.pcsbl_b,
            rho: self.pcsbl_rho,
            eps: self.pcsbl_eps,
            t_max: self.pcsbl_t_max,
            coupling,
        }
    }
}

/// One estimator run inside one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub estimator_name: &'static str,
    pub nmse_db: f64,
    /// Linear error ratio; aggregated before the dB conversion.
    pub nmse_ratio: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
}

/// Per (config, estimator) aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub estimator_name: &'static str,
    pub snr_db: f64,
    pub t_samples: usize,
    pub mean_nmse_db: f64,
    pub trials: usize,
    pub mean_wall_time_s: f64,
    pub relative_runtime: f64,
}

/// Everything run_sweep produced, for the CLI manifest and for tests.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub aggregates: Vec<AggregateRecord>,
    pub trial_csv: PathBuf,
    pub aggregate_csv: PathBuf,
    pub chart_svg: Option<PathBuf>,
}

/// splitmix64, used to derive independent per-trial seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

pub fn trial_rng(master_seed: u64, config_idx: usize, trial_id: usize) -> ChaCha12Rng {
    let mix = splitmix64(master_seed ^ splitmix64(((config_idx as u64) << 32) | trial_id as u64));
    ChaCha12Rng::seed_from_u64(mix)
}

/// Draw the multipath geometry for one trial. Path 0 is the LoS path with
/// unit magnitude; the rest sit `nlos_gain_db` below it.
pub fn draw_paths(cfg: &ScenarioConfig, rng: &mut impl RngExt) -> Result<Vec<PathParams>> {
    cfg.validate()?;
    let (amin, amax) = cfg.angle_range;
    let (rmin, rmax) = cfg.distance_range;
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for l in 0..cfg.n_paths {
        let magnitude = if l == 0 { 1.0 } else { 10f64.powf(-cfg.nlos_gain_db / 20.0) };
        let gain = Complex64::from_polar(magnitude, rng.random_range(0.0..std::f64::consts::TAU));
        let theta = rng.random_range(amin..=amax);
        let phi = rng.random_range(amin..=amax);
        let r = rng.random_range(rmin..=rmax);
        paths.push(PathParams::new(gain, r, theta, phi)?);
    }
    Ok(paths)
}

/// Pilot matrix F with rows vec(B(t))^T.
pub fn generate_pilots(
    geom: &UpaGeometry,
    t_samples: usize,
    mode: PilotMode,
    rng: &mut impl RngExt,
) -> ComplexMatrix {
    let n = geom.n_total();
    match mode {
        PilotMode::ConstantModulusRandomPhase => {
            let modulus = 1.0 / (n as f64).sqrt();
            ComplexMatrix::from_fn(t_samples, n, |_, _| {
                Complex64::from_polar(modulus, rng.random_range(0.0..std::f64::consts::TAU))
            })
        }
        PilotMode::ComplexGaussian => {
            // Per-entry variance 1/sqrt(N), split across both components.
            let std = (1.0 / (n as f64).sqrt() / 2.0).sqrt();
            ComplexMatrix::from_fn(t_samples, n, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * std
            })
        }
    }
}

/// Measure y = F h + n with the noise variance calibrated per realization to
/// the requested SNR. Returns y and the noise precision gamma.
pub fn observe(
    f: &ComplexMatrix,
    h: &ComplexVector,
    snr_db: f64,
    rng: &mut impl RngExt,
) -> Result<(ComplexVector, f64)> {
    if f.ncols() != h.len() {
        return Err(NfestError::DimensionMismatch(format!(
            "F has {} columns, h has {}",
            f.ncols(),
            h.len()
        )));
    }
    let signal = f * h;
    let signal_energy = signal.norm_squared();
    if signal_energy == 0.0 {
        return Err(NfestError::Domain("zero channel gives a degenerate SNR".into()));
    }
    let snr_db = snr_db.min(300.0);
    let t = f.nrows() as f64;
    let sigma_sq = signal_energy / (t * 10f64.powf(snr_db / 10.0));
    let std = (sigma_sq / 2.0).sqrt();
    let noise = ComplexVector::from_fn(f.nrows(), |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * std
    });
    Ok((signal + noise, 1.0 / sigma_sq))
}

/// Single-trial NMSE in dB, floored at -300 dB.
pub fn nmse_db(h_true: &ComplexMatrix, h_est: &ComplexMatrix) -> Result<f64> {
    Ok(10.0 * nmse_ratio(h_true, h_est)?.log10().max(-30.0))
}

/// Linear error-energy ratio, the quantity averaged across trials.
pub fn nmse_ratio(h_true: &ComplexMatrix, h_est: &ComplexMatrix) -> Result<f64> {
    if h_true.shape() != h_est.shape() {
        return Err(NfestError::DimensionMismatch(format!(
            "shapes {:?} vs {:?}",
            h_true.shape(),
            h_est.shape()
        )));
    }
    let denom = h_true.norm_squared();
    if denom == 0.0 {
        return Err(NfestError::Domain("NMSE undefined for a zero channel".into()));
    }
    Ok((h_true - h_est).norm_squared() / denom)
}

/// Build the per-trial grid dictionary according to the dictionary mode.
pub fn build_grid_dictionary(
    geom: &UpaGeometry,
    mode: &DictMode,
    los: &PathParams,
    block_size: usize,
) -> Result<GridDictionary> {
    let (zeta_a, zeta_e, r) = match mode {
        DictMode::Genie => (los.zeta_a, los.zeta_e, los.r),
        DictMode::Nominal { zeta_ref, r_ref } => (*zeta_ref, *zeta_ref, *r_ref),
    };
    let dx = modified_dft(geom.n_x, zeta_a, r, geom, Axis::Horizontal)?;
    let dy = modified_dft(geom.n_y, zeta_e, r, geom, Axis::Vertical)?;
    Ok(GridDictionary {
        matrix: kron_dictionary(&dx, &dy)?,
        grid_nx: geom.n_x,
        grid_ny: geom.n_y,
        block_size,
    })
}

fn run_single_trial(
    cfg: &ScenarioConfig,
    settings: &EstimatorSettings,
    estimators: &[EstimatorKind],
    polar: &PolarDictionary,
    config_idx: usize,
    trial_id: usize,
) -> Result<Vec<TrialRecord>> {
    let mut rng = trial_rng(cfg.rng_seed, config_idx, trial_id);
    let paths = draw_paths(cfg, &mut rng)?;
    let h_true = synthesize_channel(&cfg.geom, &paths, ChannelMode::Exact)?;
    let h_vec = ComplexVector::from_column_slice(h_true.as_slice());
    let f = generate_pilots(&cfg.geom, cfg.t_samples, settings.pilot_mode, &mut rng);
    let (y, gamma) = observe(&f, &h_vec, cfg.snr_db, &mut rng)?;

    let needs_grid = estimators.iter().any(|e| *e != EstimatorKind::PolarOmp);
    let grid = if needs_grid {
        let dict = build_grid_dictionary(&cfg.geom, &settings.dict_mode, &paths[0], settings.block_size)?;
        let phi = &f * &dict.matrix;
        Some((dict, phi))
    } else {
        None
    };

    let mut records = Vec::with_capacity(estimators.len());
    for est in estimators {
        let start = Instant::now();
        let outcome = match est {
            EstimatorKind::TwoDimPcsbl | EstimatorKind::Pcsbl => {
                let coupling = if *est == EstimatorKind::TwoDimPcsbl {
                    Coupling::TwoDimensional
                } else {
                    Coupling::OneDimensional
                };
                let (dict, phi) = grid.as_ref().unwrap();
                pcsbl_estimate(&y, phi, dict, &settings.hyper(coupling), gamma, &EStep::Gamp(settings.gamp))
            }
            EstimatorKind::Bomp => {
                let (dict, phi) = grid.as_ref().unwrap();
                bomp_estimate(&y, phi, dict, settings.bomp_max_blocks, settings.bomp_residual_tol)
            }
            EstimatorKind::PolarOmp => polar_omp_estimate(
                &y,
                &f,
                polar,
                &cfg.geom,
                settings.polar_max_atoms,
                settings.polar_residual_tol,
            ),
        };
        let wall_time_s = start.elapsed().as_secs_f64();
        let record = match outcome {
            Ok(res) => {
                let ratio = nmse_ratio(&h_true, &res.h_mat)?;
                TrialRecord {
                    trial_id,
                    estimator_name: est.name(),
                    nmse_db: 10.0 * ratio.log10().max(-30.0),
                    nmse_ratio: ratio,
                    iterations: res.iterations,
                    wall_time_s,
                    converged: res.converged,
                }
            }
            // A failed estimator run counts as the zero estimate (ratio 1).
            Err(_) => TrialRecord {
                trial_id,
                estimator_name: est.name(),
                nmse_db: 0.0,
                nmse_ratio: 1.0,
                iterations: 0,
                wall_time_s,
                converged: false,
            },
        };
        records.push(record);
    }
    Ok(records)
}

/// Run the full config grid, persist per-trial and aggregate CSVs plus an
/// optional SVG chart, and return the aggregates.
///
/// The relative-runtime column is normalized by `reference` (estimator,
/// config-index); the reference cell itself reads 1.00.
pub fn run_sweep(
    configs: &[ScenarioConfig],
    estimators: &[EstimatorKind],
    settings: &EstimatorSettings,
    reference: (EstimatorKind, usize),
    output_dir: &Path,
    emit_chart: bool,
) -> Result<SweepSummary> {
    if configs.is_empty() || estimators.is_empty() {
        return Err(NfestError::Argument("configs and estimators must be non-empty".into()));
    }
    for cfg in configs {
        cfg.validate()?;
    }
    std::fs::create_dir_all(output_dir).map_err(|e| NfestError::Io {
        path: output_dir.display().to_string(),
        source: e,
    })?;

    let mut all_trials: Vec<(usize, Vec<TrialRecord>)> = Vec::new();
    let mut aggregates: Vec<AggregateRecord> = Vec::new();

    for (config_idx, cfg) in configs.iter().enumerate() {
        let polar = polar_dictionary(
            &cfg.geom,
            settings.polar_angle_samples,
            settings.polar_distance_samples,
        )?;
        let trial_results: Vec<Result<Vec<TrialRecord>>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial_id| run_single_trial(cfg, settings, estimators, &polar, config_idx, trial_id))
            .collect();
        let mut per_config: Vec<Vec<TrialRecord>> = Vec::with_capacity(cfg.trials);
        for r in trial_results {
            per_config.push(r?);
        }
        for est in estimators {
            let rows: Vec<&TrialRecord> = per_config
                .iter()
                .flatten()
                .filter(|t| t.estimator_name == est.name())
                .collect();
            let n = rows.len() as f64;
            let mean_ratio = rows.iter().map(|t| t.nmse_ratio).sum::<f64>() / n;
            let mean_wall = rows.iter().map(|t| t.wall_time_s).sum::<f64>() / n;
            aggregates.push(AggregateRecord {
                estimator_name: est.name(),
                snr_db: cfg.snr_db,
                t_samples: cfg.t_samples,
                mean_nmse_db: 10.0 * mean_ratio.log10().max(-30.0),
                trials: rows.len(),
                mean_wall_time_s: mean_wall,
                relative_runtime: f64::NAN, // filled below
            });
        }
        all_trials.push((config_idx, per_config.into_iter().flatten().collect()));
    }

    // Normalize runtimes against the declared reference cell.
    let ref_cfg = &configs[reference.1.min(configs.len() - 1)];
    let ref_time = aggregates
        .iter()
        .find(|a| {
            a.estimator_name == reference.0.name()
                && a.snr_db == ref_cfg.snr_db
                && a.t_samples == ref_cfg.t_samples
        })
        .map(|a| a.mean_wall_time_s);
    for a in &mut aggregates {
        a.relative_runtime = match ref_time {
            Some(t) if t > 0.0 => a.mean_wall_time_s / t,
            _ => f64::NAN,
        };
    }

    let trial_csv = output_dir.join("trials.csv");
    write_trial_csv(&trial_csv, configs, &all_trials)?;
    let aggregate_csv = output_dir.join("aggregate.csv");
    write_aggregate_csv(&aggregate_csv, &aggregates)?;
    let chart_svg = if emit_chart {
        let path = output_dir.join("sweep.svg");
        let svg = crate::plot::nmse_chart(configs, estimators, &aggregates);
        write_file(&path, &svg)?;
        Some(path)
    } else {
        None
    };

    Ok(SweepSummary { aggregates, trial_csv, aggregate_csv, chart_svg })
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = File::create(path)
        .map_err(|e| NfestError::Io { path: path.display().to_string(), source: e })?;
    f.write_all(content.as_bytes())
        .map_err(|e| NfestError::Io { path: path.display().to_string(), source: e })
}

fn write_trial_csv(
    path: &Path,
    configs: &[ScenarioConfig],
    all: &[(usize, Vec<TrialRecord>)],
) -> Result<()> {
    let mut out = String::from(
        "trial_id,estimator,snr_db,t_samples,n_x,n_y,seed,nmse_db,iterations,converged,wall_time_s\n",
    );
    for (config_idx, records) in all {
        let cfg = &configs[*config_idx];
        for r in records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6},{},{},{:.6}\n",
                r.trial_id,
                r.estimator_name,
                cfg.snr_db,
                cfg.t_samples,
                cfg.geom.n_x,
                cfg.geom.n_y,
                cfg.rng_seed,
                r.nmse_db,
                r.iterations,
                r.converged,
                r.wall_time_s
            ));
        }
    }
    write_file(path, &out)
}

fn write_aggregate_csv(path: &Path, aggregates: &[AggregateRecord]) -> Result<()> {
    let mut out = String::from(
        "estimator,snr_db,t_samples,mean_nmse_db,trials,mean_wall_time_s,relative_runtime\n",
    );
    for a in aggregates {
        out.push_str(&format!(
            "{},{},{},{:.6},{},{:.6},{:.4}\n",
            a.estimator_name,
            a.snr_db,
            a.t_samples,
            a.mean_nmse_db,
            a.trials,
            a.mean_wall_time_s,
            a.relative_runtime
        ));
    }
    write_file(path, &out)
}

/// Default near-field scenario for a geometry: standard angle range and
/// the array's own Fresnel-to-Rayleigh distance span.
pub fn default_scenario(geom: UpaGeometry, t_samples: usize, snr_db: f64, trials: usize, seed: u64) -> ScenarioConfig {
    let fb = field_boundaries(&geom);
    let third = std::f64::consts::FRAC_PI_3;
    ScenarioConfig {
        geom,
        n_paths: 3,
        nlos_gain_db: 13.0,
        angle_range: (-third, third),
        distance_range: (fb.fresnel.max(1e-3), fb.rayleigh.max(2e-3)),
        t_samples,
        snr_db,
        trials,
        rng_seed: seed,
    }
}
