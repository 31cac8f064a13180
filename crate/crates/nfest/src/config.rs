//! Flat `key = value` experiment configuration, override resolution, and the
//! run manifest written next to every output set.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::channel::{field_boundaries, UpaGeometry};
use crate::error::{NfestError, Result};
use crate::gamp::GampConfig;
use crate::sim::{DictMode, EstimatorKind, EstimatorSettings, PilotMode, ScenarioConfig};

/// Every recognized configuration key with its default, in display order.
/// Kept as one table so the usage error and the manifest stay in sync.
pub const KNOWN_KEYS: &[(&str, &str)] = &[
    ("geometry.n_x", "16"),
    ("geometry.n_y", "16"),
    ("geometry.f_c_hz", "1e11"),
    ("scenario.n_paths", "3"),
    ("scenario.nlos_gain_db", "13"),
    ("scenario.angle_max_rad", "1.0471975511965976"), // pi/3
    ("scenario.distance_min_m", "auto"),              // Fresnel distance
    ("scenario.distance_max_m", "auto"),              // Rayleigh distance
    ("scenario.trials", "100"),
    ("seed", "20240901"),
    ("snr_db", "0,5,10,15,20"),
    ("t_samples", "128"),
    ("estimators", "2d-pcsbl,pcsbl,bomp,polar-omp"),
    ("pilot.mode", "constant_modulus"),
    ("dict.mode", "genie"),
    ("dict.zeta_ref", "0"),
    ("dict.r_ref", "auto"), // Rayleigh distance
    ("dict.block_size", "6"),
    ("pcsbl.a", "1.5"),
    ("pcsbl.b", "1e-6"),
    ("pcsbl.rho", "1"),
    ("pcsbl.eps", "1e-6"),
    ("pcsbl.t_max", "50"),
    ("gamp.max_inner_iters", "50"),
    ("gamp.damping", "0.7"),
    ("gamp.tol", "1e-6"),
    ("bomp.max_blocks", "6"),
    ("bomp.residual_tol", "1e-9"),
    ("polar.angle_samples", "auto"), // max(n_x, n_y)
    ("polar.distance_samples", "4"),
    ("polar.max_atoms", "12"),
    ("polar.residual_tol", "1e-9"),
    ("runtime.reference_estimator", "polar-omp"),
    ("runtime.reference_point", "0"),
    ("chart", "true"),
];

/// Raw key/value map after file parsing and override application.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parse `key = value` lines; `#` starts a comment, blank lines skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                NfestError::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            Self::check_key(&key)?;
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NfestError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }

    fn check_key(key: &str) -> Result<()> {
        if KNOWN_KEYS.iter().any(|(k, _)| *k == key) {
            Ok(())
        } else {
            let valid: Vec<&str> = KNOWN_KEYS.iter().map(|(k, _)| *k).collect();
            Err(NfestError::Config(format!(
                "unknown key '{key}'; valid keys: {}",
                valid.join(", ")
            )))
        }
    }

    /// Apply a `key=value` override (after file values).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            NfestError::Config(format!("override '{assignment}' is not of the form key=value"))
        })?;
        let key = key.trim().to_string();
        Self::check_key(&key)?;
        self.entries.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Effective value: explicit entry or the documented default.
    pub fn get(&self, key: &str) -> &str {
        if let Some(v) = self.entries.get(key) {
            return v;
        }
        KNOWN_KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, d)| *d)
            .unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    /// Fully resolved key/value map (defaults filled in), sorted by key.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        KNOWN_KEYS
            .iter()
            .map(|(k, _)| (k.to_string(), self.get(k).to_string()))
            .collect()
    }

    /// Content digest of the resolved configuration. Stable under key
    /// reordering in the source file because resolution sorts the keys.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.resolved() {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn f64_key(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| NfestError::Config(format!("key '{key}': expected a number, got '{v}'")))
    }

    fn usize_key(&self, key: &str) -> Result<usize> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| NfestError::Config(format!("key '{key}': expected an integer, got '{v}'")))
    }

    fn bool_key(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(NfestError::Config(format!("key '{key}': expected a boolean, got '{v}'"))),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    NfestError::Config(format!("key '{key}': bad number '{}'", s.trim()))
                })
            })
            .collect()
    }

    fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    NfestError::Config(format!("key '{key}': bad integer '{}'", s.trim()))
                })
            })
            .collect()
    }

    /// Resolve into a runnable experiment plan.
    pub fn build_plan(&self) -> Result<ExperimentPlan> {
        let n_x = self.usize_key("geometry.n_x")?;
        let n_y = self.usize_key("geometry.n_y")?;
        let f_c = self.f64_key("geometry.f_c_hz")?;
        let geom = UpaGeometry::half_wavelength(n_x, n_y, f_c)?;
        let fb = field_boundaries(&geom);

        let auto_or = |key: &str, auto_value: f64| -> Result<f64> {
            if self.get(key) == "auto" {
                Ok(auto_value)
            } else {
                self.f64_key(key)
            }
        };
        let d_min = auto_or("scenario.distance_min_m", fb.fresnel)?;
        let d_max = auto_or("scenario.distance_max_m", fb.rayleigh)?;
        let angle_max = self.f64_key("scenario.angle_max_rad")?;

        let estimators: Vec<EstimatorKind> = self
            .get("estimators")
            .split(',')
            .map(|s| EstimatorKind::parse(s.trim()))
            .collect::<Result<_>>()?;

        let pilot_mode = match self.get("pilot.mode") {
            "constant_modulus" => PilotMode::ConstantModulusRandomPhase,
            "gaussian" => PilotMode::ComplexGaussian,
            v => {
                return Err(NfestError::Config(format!(
                    "pilot.mode must be constant_modulus or gaussian, got '{v}'"
                )))
            }
        };
        let dict_mode = match self.get("dict.mode") {
            "genie" => DictMode::Genie,
            "nominal" => DictMode::Nominal {
                zeta_ref: self.f64_key("dict.zeta_ref")?,
                r_ref: auto_or("dict.r_ref", fb.rayleigh)?,
            },
            v => {
                return Err(NfestError::Config(format!(
                    "dict.mode must be genie or nominal, got '{v}'"
                )))
            }
        };

        let polar_angle_samples = if self.get("polar.angle_samples") == "auto" {
            n_x.max(n_y)
        } else {
            self.usize_key("polar.angle_samples")?
        };

        let settings = EstimatorSettings {
            pilot_mode,
            dict_mode,
            block_size: self.usize_key("dict.block_size")?,
            pcsbl_a: self.f64_key("pcsbl.a")?,
            pcsbl_b: self.f64_key("pcsbl.b")?,
            pcsbl_rho: self.f64_key("pcsbl.rho")?,
            pcsbl_eps: self.f64_key("pcsbl.eps")?,
            pcsbl_t_max: self.usize_key("pcsbl.t_max")?,
            gamp: GampConfig {
                max_inner_iters: self.usize_key("gamp.max_inner_iters")?,
                damping: self.f64_key("gamp.damping")?,
                tol: self.f64_key("gamp.tol")?,
                ..GampConfig::default()
            },
            bomp_max_blocks: self.usize_key("bomp.max_blocks")?,
            bomp_residual_tol: self.f64_key("bomp.residual_tol")?,
            polar_angle_samples,
            polar_distance_samples: self.usize_key("polar.distance_samples")?,
            polar_max_atoms: self.usize_key("polar.max_atoms")?,
            polar_residual_tol: self.f64_key("polar.residual_tol")?,
        };

        let seed: u64 = self.get("seed").parse().map_err(|_| {
            NfestError::Config(format!("key 'seed': expected u64, got '{}'", self.get("seed")))
        })?;
        let trials = self.usize_key("scenario.trials")?;
        let n_paths = self.usize_key("scenario.n_paths")?;
        let nlos_gain_db = self.f64_key("scenario.nlos_gain_db")?;

        let snrs = self.f64_list("snr_db")?;
        let ts = self.usize_list("t_samples")?;
        let mut configs = Vec::new();
        for &t in &ts {
            for &snr in &snrs {
                configs.push(ScenarioConfig {
                    geom,
                    n_paths,
                    nlos_gain_db,
                    angle_range: (-angle_max, angle_max),
                    distance_range: (d_min, d_max),
                    t_samples: t,
                    snr_db: snr,
                    trials,
                    rng_seed: seed,
                });
            }
        }

        let reference_estimator = EstimatorKind::parse(self.get("runtime.reference_estimator"))?;
        let reference_point = self.usize_key("runtime.reference_point")?;

        Ok(ExperimentPlan {
            configs,
            estimators,
            settings,
            reference: (reference_estimator, reference_point),
            emit_chart: self.bool_key("chart")?,
            seed,
        })
    }
}

/// Fully resolved, runnable experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub configs: Vec<ScenarioConfig>,
    pub estimators: Vec<EstimatorKind>,
    pub settings: EstimatorSettings,
    pub reference: (EstimatorKind, usize),
    pub emit_chart: bool,
    pub seed: u64,
}

impl ExperimentPlan {
    /// Largest array this plan instantiates; used for the full-scale gate.
    pub fn max_antennas(&self) -> usize {
        self.configs.iter().map(|c| c.geom.n_total()).max().unwrap_or(0)
    }
}

/// Provenance record written beside every output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    pub resolved_config: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| NfestError::Config(format!("manifest serialization failed: {e}")))?;
        std::fs::write(&path, json)
            .map_err(|e| NfestError::Io { path: path.display().to_string(), source: e })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_comments_and_overrides() {
        let mut cfg = RawConfig::parse("# header\nsnr_db = 5 # trailing\n\nseed=7\n").unwrap();
        assert_eq!(cfg.get("snr_db"), "5");
        assert_eq!(cfg.get("seed"), "7");
        assert_eq!(cfg.get("t_samples"), "128"); // default
        cfg.set("t_samples=64").unwrap();
        assert_eq!(cfg.get("t_samples"), "64");
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RawConfig::parse("bogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key 'bogus'"));
        assert!(msg.contains("geometry.n_x"));
        let mut cfg = RawConfig::default();
        assert!(cfg.set("also.bogus=2").is_err());
        assert!(cfg.set("no-equals-sign").is_err());
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = RawConfig::parse("snr_db = 5\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn digest_stable_under_reordering() {
        let a = RawConfig::parse("snr_db = 5\nseed = 1\n").unwrap();
        let b = RawConfig::parse("seed = 1\nsnr_db = 5\n").unwrap();
        let c = RawConfig::parse("seed = 2\nsnr_db = 5\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn plan_grid_is_t_times_snr() {
        let cfg = RawConfig::parse("snr_db = 0, 10\nt_samples = 64, 128\nscenario.trials = 2\n").unwrap();
        let plan = cfg.build_plan().unwrap();
        assert_eq!(plan.configs.len(), 4);
        assert_eq!(plan.estimators.len(), 4);
        assert_eq!(plan.configs[0].trials, 2);
        assert_eq!(plan.max_antennas(), 256);
        // auto distance range resolves to the array's field boundaries.
        let fb = field_boundaries(&plan.configs[0].geom);
        assert!((plan.configs[0].distance_range.0 - fb.fresnel).abs() < 1e-12);
        assert!((plan.configs[0].distance_range.1 - fb.rayleigh).abs() < 1e-12);
    }

    #[test]
    fn plan_rejects_bad_values() {
        assert!(RawConfig::parse("estimators = nope\n").unwrap().build_plan().is_err());
        assert!(RawConfig::parse("pilot.mode = qpsk\n").unwrap().build_plan().is_err());
        assert!(RawConfig::parse("snr_db = five\n").unwrap().build_plan().is_err());
    }

    #[test]
    fn nominal_dict_mode_resolves_auto_reference() {
        let cfg = RawConfig::parse("dict.mode = nominal\n").unwrap();
        let plan = cfg.build_plan().unwrap();
        let fb = field_boundaries(&plan.configs[0].geom);
        match plan.settings.dict_mode {
            DictMode::Nominal { zeta_ref, r_ref } => {
                assert_eq!(zeta_ref, 0.0);
                assert!((r_ref - fb.rayleigh).abs() < 1e-12);
            }
            _ => panic!("expected nominal mode"),
        }
    }
}
