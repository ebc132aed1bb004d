//! Run configuration. Versioned JSON; unknown fields are rejected and errors
//! name the offending field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::antenna::{BsPanelConfig, DeviceKind, GripProbTable, DEFAULT_IMBALANCE_DB};
use crate::coeffgen::FeatureFlags;
use crate::error::{invalid, GscmError, Result};
use crate::nearfield::AuxDistParams;
use crate::polarization::DEFAULT_VARIABILITY_DB;
use crate::scenario::{Scenario, ScenarioConfig};
use crate::sns::{BlockerParams, Blocker, StochasticSnsConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    /// Path to a scenario JSON file, relative to the run config.
    Path(PathBuf),
    Inline(ScenarioConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtDeviceConfig {
    pub kind: DeviceKind,
    /// Candidate location names.
    pub locations: Vec<String>,
    pub dual_polarized: bool,
}

impl Default for UtDeviceConfig {
    fn default() -> Self {
        Self {
            kind: DeviceKind::Handheld,
            locations: vec!["top_center".into(), "bottom_center".into()],
            dual_polarized: true,
        }
    }
}

/// Everything below the scenario that shapes a realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub bandwidth_hz: f64,
    pub n_time: usize,
    pub dt_s: f64,
    /// Generate clusters and coefficients. Off gives an LSP-only run.
    pub coefficients: bool,
    pub write_tensors: bool,
    pub bs_panel: BsPanelConfig,
    pub ut_device: UtDeviceConfig,
    pub sns: StochasticSnsConfig,
    pub blockers: Vec<Blocker>,
    pub blocker_params: BlockerParams,
    pub grip_probs: GripProbTable,
    pub imbalance_range_db: (f64, f64),
    pub aux_dist: AuxDistParams,
    pub pol_var_sigma_db: f64,
    pub min_rays: u32,
    pub cluster_extent_m: f64,
    pub elaa_threshold_wl: f64,
    /// Optional replacement for the shipped LSP table (CSV).
    pub lsp_table: Option<PathBuf>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            bandwidth_hz: 100e6,
            n_time: 1,
            dt_s: 1e-3,
            coefficients: true,
            write_tensors: true,
            bs_panel: BsPanelConfig::default(),
            ut_device: UtDeviceConfig::default(),
            sns: StochasticSnsConfig::default(),
            blockers: Vec::new(),
            blocker_params: BlockerParams::default(),
            grip_probs: GripProbTable::default(),
            imbalance_range_db: DEFAULT_IMBALANCE_DB,
            aux_dist: AuxDistParams::default(),
            pol_var_sigma_db: DEFAULT_VARIABILITY_DB,
            min_rays: 4,
            cluster_extent_m: 1.0,
            elaa_threshold_wl: 64.0,
            lsp_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "version_default")]
    pub version: u32,
    pub scenario: ScenarioSource,
    #[serde(default)]
    pub features: FeatureFlags,
    pub n_drops: usize,
    pub n_uts: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "formats_default")]
    pub report_formats: Vec<ReportFormat>,
    #[serde(default)]
    pub sim: SimSettings,
}

fn version_default() -> u32 {
    CONFIG_VERSION
}

fn formats_default() -> Vec<ReportFormat> {
    vec![ReportFormat::Json, ReportFormat::Table]
}

fn config_err(path: &Path, reason: impl Into<String>) -> GscmError {
    GscmError::Config {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        config_err(path, format!("field `{field}`: {}", e.inner()))
    })
}

impl RunConfig {
    /// Minimal config for `scenario` with default scenario parameters.
    pub fn new(scenario: Scenario, n_drops: usize, n_uts: usize, master_seed: u64) -> Self {
        Self {
            version: CONFIG_VERSION,
            scenario: ScenarioSource::Inline(ScenarioConfig::defaults(scenario)),
            features: FeatureFlags::default(),
            n_drops,
            n_uts,
            master_seed,
            output_dir: None,
            report_formats: formats_default(),
            sim: SimSettings::default(),
        }
    }

    /// Reads, resolves referenced files and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path, e.to_string()))?;
        let mut cfg: RunConfig = parse_json(path, &text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ScenarioSource::Path(p) = &cfg.scenario {
            let p = base.join(p);
            let text = std::fs::read_to_string(&p).map_err(|e| config_err(&p, e.to_string()))?;
            cfg.scenario = ScenarioSource::Inline(parse_json(&p, &text)?);
        }
        if let Some(t) = &cfg.sim.lsp_table {
            let t = base.join(t);
            if !t.is_file() {
                return Err(config_err(path, format!("field `sim.lsp_table`: {} does not exist", t.display())));
            }
            cfg.sim.lsp_table = Some(t);
        }
        cfg.validate().map_err(|e| config_err(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn scenario_config(&self) -> Result<&ScenarioConfig> {
        match &self.scenario {
            ScenarioSource::Inline(s) => Ok(s),
            ScenarioSource::Path(p) => Err(invalid("scenario", format!("unresolved scenario path {}", p.display()))),
        }
    }

    pub fn scenario_config_mut(&mut self) -> Result<&mut ScenarioConfig> {
        match &mut self.scenario {
            ScenarioSource::Inline(s) => Ok(s),
            ScenarioSource::Path(p) => Err(invalid("scenario", format!("unresolved scenario path {}", p.display()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid("version", format!("expected {CONFIG_VERSION}, got {}", self.version)));
        }
        if self.n_drops < 1 || self.n_uts < 1 {
            return Err(invalid("n_drops/n_uts", "must be >= 1"));
        }
        self.scenario_config()?.validate()?;
        let s = &self.sim;
        if s.n_time < 1 {
            return Err(invalid("sim.n_time", "must be >= 1"));
        }
        if !(s.dt_s >= 0.0) || !(s.bandwidth_hz >= 0.0) {
            return Err(invalid("sim", "dt_s and bandwidth_hz must be >= 0"));
        }
        if s.ut_device.locations.is_empty() {
            return Err(invalid("sim.ut_device.locations", "at least one location required"));
        }
        s.grip_probs.validate()?;
        for b in &s.blockers {
            b.validate()?;
        }
        Ok(())
    }

    /// Canonical JSON without the output location, used for hashing.
    pub fn canonical_json(&self) -> Result<Vec<u8>> {
        let mut c = self.clone();
        c.output_dir = None;
        Ok(serde_json::to_vec_pretty(&c)?)
    }

    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        Ok(hex::encode(Sha256::digest(self.canonical_json()?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_with_scenario_path() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sma.json"), r#"{"scenario": "SMa", "fc_ghz": 10}"#).unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"scenario": "sma.json", "n_drops": 2, "n_uts": 3, "master_seed": 9}"#).unwrap();
        let c = RunConfig::load(&p).unwrap();
        let s = c.scenario_config().unwrap();
        assert_eq!(s.scenario, Scenario::SMa);
        assert_eq!(s.fc_ghz, 10.0);
        assert_eq!(s.isd_m, 1500.0);
    }

    #[test]
    fn unknown_field_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(
            &p,
            r#"{"scenario": {"scenario": "UMi"}, "n_drops": 1, "n_uts": 1, "sim": {"bs_panel": {"rowz": 2}}}"#,
        )
        .unwrap();
        let e = RunConfig::load(&p).unwrap_err().to_string();
        assert!(e.contains("run.json") && e.contains("sim.bs_panel"), "{e}");
    }

    #[test]
    fn missing_file_and_zero_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"scenario": "nope.json", "n_drops": 1, "n_uts": 1}"#).unwrap();
        assert!(RunConfig::load(&p).unwrap_err().to_string().contains("nope.json"));
        std::fs::write(&p, r#"{"scenario": {"scenario": "UMi"}, "n_drops": 0, "n_uts": 1}"#).unwrap();
        assert!(RunConfig::load(&p).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = RunConfig::new(Scenario::UMi, 1, 1, 5);
        let h = a.hash().unwrap();
        a.output_dir = Some("/tmp/x".into());
        assert_eq!(a.hash().unwrap(), h);
        a.master_seed = 6;
        assert_ne!(a.hash().unwrap(), h);
    }
}
