use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use nfest::channel::{synthesize_channel, ChannelMode, ComplexVector};
use nfest::config::{RawConfig, RunManifest};
use nfest::dictionary::{
    modified_dft, sigma_support, unitarity_defect, Axis, SparseGridCoefficients,
};
use nfest::estimators::{
    pcsbl_estimate_with_state, Coupling, EStep, GridDictionary, PcsblHyperParams,
};
use nfest::gamp::{gamp_gaussian, posterior_direct, GampConfig};
use nfest::sim::{build_grid_dictionary, draw_paths, run_sweep, trial_rng};
use nfest::{NfestError, Result};

/// Arrays past this element count need --full-scale (memory and runtime).
const DESK_SCALE_LIMIT: usize = 2048;

#[derive(Parser)]
#[command(name = "nfest", version, about = "Near-field UPA channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write CSV/SVG results plus a manifest.
    Sweep {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Override a config key, e.g. --set snr_db=5 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Rayon worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Unlock array sizes beyond the desk-scale limit.
        #[arg(long)]
        full_scale: bool,
    },
    /// Render one channel's sparse-domain magnitude grid as CSV + heatmap.
    InspectSparsity {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        full_scale: bool,
    },
    /// Run the fast invariant suite and report pass/fail per property.
    Selftest {
        /// Test hook: corrupt the dictionary to confirm the unitarity check trips.
        #[arg(long, hide = true)]
        corrupt_dictionary: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep { config, overrides, out, seed, threads, full_scale } => {
            cmd_sweep(&config, &overrides, &out, seed, threads, full_scale)
        }
        Command::InspectSparsity { config, overrides, out, seed, full_scale } => {
            cmd_inspect_sparsity(&config, &overrides, &out, seed, full_scale)
        }
        Command::Selftest { corrupt_dictionary } => cmd_selftest(corrupt_dictionary),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn resolve_config(path: &PathBuf, overrides: &[String], seed: Option<u64>) -> Result<RawConfig> {
    let mut cfg = RawConfig::load(path)?;
    for o in overrides {
        cfg.set(o)?;
    }
    if let Some(s) = seed {
        cfg.set(&format!("seed={s}"))?;
    }
    Ok(cfg)
}

fn check_scale(max_antennas: usize, full_scale: bool) -> Result<()> {
    if max_antennas > DESK_SCALE_LIMIT && !full_scale {
        return Err(NfestError::Config(format!(
            "configuration instantiates {max_antennas} antennas (> {DESK_SCALE_LIMIT}); \
             pass --full-scale to allow it"
        )));
    }
    Ok(())
}

fn cmd_sweep(
    config: &PathBuf,
    overrides: &[String],
    out: &PathBuf,
    seed: Option<u64>,
    threads: Option<usize>,
    full_scale: bool,
) -> Result<ExitCode> {
    let cfg = resolve_config(config, overrides, seed)?;
    let plan = cfg.build_plan()?;
    check_scale(plan.max_antennas(), full_scale)?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| NfestError::Config(format!("thread pool: {e}")))?;
    }

    let started_at = chrono::Utc::now().to_rfc3339();
    let summary = run_sweep(
        &plan.configs,
        &plan.estimators,
        &plan.settings,
        plan.reference,
        out,
        plan.emit_chart,
    )?;
    let finished_at = chrono::Utc::now().to_rfc3339();

    let mut outputs: Vec<String> = vec![
        summary.trial_csv.display().to_string(),
        summary.aggregate_csv.display().to_string(),
    ];
    if let Some(svg) = &summary.chart_svg {
        outputs.push(svg.display().to_string());
    }
    let manifest = RunManifest {
        config_digest: cfg.digest(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at,
        outputs,
        resolved_config: cfg.resolved(),
    };
    manifest.write(out)?;

    println!("wrote {} aggregate points to {}", summary.aggregates.len(), out.display());
    for a in &summary.aggregates {
        println!(
            "  {:<10} snr={:>5.1}dB T={:<4} NMSE={:>8.2}dB RT={:.2}",
            a.estimator_name, a.snr_db, a.t_samples, a.mean_nmse_db, a.relative_runtime
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect_sparsity(
    config: &PathBuf,
    overrides: &[String],
    out: &PathBuf,
    seed: Option<u64>,
    full_scale: bool,
) -> Result<ExitCode> {
    let cfg = resolve_config(config, overrides, seed)?;
    let plan = cfg.build_plan()?;
    check_scale(plan.max_antennas(), full_scale)?;
    let scenario = &plan.configs[0];
    let geom = &scenario.geom;

    let started_at = chrono::Utc::now().to_rfc3339();
    let mut rng = trial_rng(plan.seed, 0, 0);
    let paths = draw_paths(scenario, &mut rng)?;
    let h = synthesize_channel(geom, &paths, ChannelMode::Exact)?;
    let h_vec = ComplexVector::from_column_slice(h.as_slice());
    let dict = build_grid_dictionary(geom, &plan.settings.dict_mode, &paths[0], plan.settings.block_size)?;
    let beta = dict.matrix.adjoint() * &h_vec;

    std::fs::create_dir_all(out)
        .map_err(|e| NfestError::Io { path: out.display().to_string(), source: e })?;
    let mut csv = String::from("ix,iy,magnitude\n");
    let mut magnitudes = Vec::with_capacity(beta.len());
    for j in 0..geom.n_y {
        for i in 0..geom.n_x {
            let v = beta[i + j * geom.n_x].norm();
            csv.push_str(&format!("{i},{j},{v:.8e}\n"));
        }
    }
    for idx in 0..beta.len() {
        magnitudes.push(beta[idx].norm());
    }
    let csv_path = out.join("sigma.csv");
    std::fs::write(&csv_path, &csv)
        .map_err(|e| NfestError::Io { path: csv_path.display().to_string(), source: e })?;
    let svg = nfest::plot::magnitude_heatmap(
        &magnitudes,
        geom.n_x,
        geom.n_y,
        &format!("|Sigma| grid, {}x{} UPA, L={}", geom.n_x, geom.n_y, scenario.n_paths),
    );
    let svg_path = out.join("sigma.svg");
    std::fs::write(&svg_path, &svg)
        .map_err(|e| NfestError::Io { path: svg_path.display().to_string(), source: e })?;
    let finished_at = chrono::Utc::now().to_rfc3339();

    let manifest = RunManifest {
        config_digest: cfg.digest(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at,
        outputs: vec![csv_path.display().to_string(), svg_path.display().to_string()],
        resolved_config: cfg.resolved(),
    };
    manifest.write(out)?;
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest(corrupt_dictionary: bool) -> Result<ExitCode> {
    let start = Instant::now();
    let mut all_ok = true;
    let mut report = |name: &str, ok: bool| {
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, name);
        all_ok &= ok;
    };

    report("dictionary unitarity", check_unitarity(corrupt_dictionary)?);
    report("rank-1 support factorization", check_support_factorization()?);
    report("gamp matches direct posterior", check_gamp_oracle()?);
    report("rho=0 coupling equivalence", check_rho_zero()?);

    println!("selftest finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn check_unitarity(corrupt: bool) -> Result<bool> {
    let geom = nfest::channel::UpaGeometry::half_wavelength(32, 32, 0.1e12)?;
    let fb = nfest::channel::field_boundaries(&geom);
    let mut worst = 0.0f64;
    for (zeta, r) in [(0.0, fb.rayleigh), (0.5, fb.fresnel.max(1e-3)), (-0.8, 10.0 * fb.fresnel)] {
        let mut d = modified_dft(32, zeta, r, &geom, Axis::Horizontal)?;
        if corrupt {
            d.matrix[(0, 0)] += Complex64::new(0.5, 0.0);
        }
        worst = worst.max(unitarity_defect(&d.matrix));
    }
    Ok(worst < 1e-9)
}

fn check_support_factorization() -> Result<bool> {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let grid = 16;
    let block = 4;
    for _ in 0..100 {
        let bx: BTreeSet<usize> = (0..grid / block).filter(|_| rng.random_bool(0.5)).collect();
        let by: BTreeSet<usize> = (0..grid / block).filter(|_| rng.random_bool(0.5)).collect();
        if bx.is_empty() || by.is_empty() {
            continue;
        }
        let mut values = ComplexVector::zeros(grid * grid);
        for j in 0..grid {
            for i in 0..grid {
                if bx.contains(&(i / block)) && by.contains(&(j / block)) {
                    values[i + j * grid] = Complex64::from_polar(
                        rng.random_range(0.5..1.5),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    );
                }
            }
        }
        let beta = SparseGridCoefficients::new(values, grid, grid, block)?;
        let support = sigma_support(&beta, 1e-6)?;
        let expected: BTreeSet<(usize, usize)> =
            bx.iter().flat_map(|&i| by.iter().map(move |&j| (i, j))).collect();
        if support != expected {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_gamp_oracle() -> Result<bool> {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    for _ in 0..10 {
        let t = 48;
        let n = 24;
        let phi = DMatrix::from_fn(t, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                / (t as f64).sqrt()
        });
        let x = ComplexVector::from_fn(n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let y = &phi * &x;
        let eta = nalgebra::DVector::from_element(n, 1.0);
        let gamma = 100.0;
        let cfg = GampConfig { max_inner_iters: 300, tol: 1e-10, ..GampConfig::default() };
        let gamp = gamp_gaussian(&phi, &y, &eta, gamma, &cfg)?;
        let direct = posterior_direct(&phi, &y, &eta, gamma)?;
        let rel = (&gamp.mean - &direct.mean).norm() / direct.mean.norm();
        if rel > 1e-2 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_rho_zero() -> Result<bool> {
    let mut rng = ChaCha12Rng::seed_from_u64(13);
    for _ in 0..3 {
        let grid = 8;
        let n = grid * grid;
        let t = 48;
        let phi = DMatrix::from_fn(t, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                / (t as f64).sqrt()
        });
        let mut x = ComplexVector::zeros(n);
        for _ in 0..6 {
            let idx = rng.random_range(0..n);
            x[idx] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let y = &phi * &x;
        let dict = GridDictionary {
            matrix: DMatrix::identity(n, n),
            grid_nx: grid,
            grid_ny: grid,
            block_size: 2,
        };
        let run = |coupling| -> Result<_> {
            let hp = PcsblHyperParams { rho: 0.0, t_max: 10, ..PcsblHyperParams::defaults(coupling) };
            pcsbl_estimate_with_state(&y, &phi, &dict, &hp, 1e4, &EStep::Gamp(GampConfig::default()))
        };
        let (r1, s1) = run(Coupling::OneDimensional)?;
        let (r2, s2) = run(Coupling::TwoDimensional)?;
        if r1.beta_hat.values != r2.beta_hat.values || s1.alpha != s2.alpha {
            return Ok(false);
        }
    }
    Ok(true)
}
