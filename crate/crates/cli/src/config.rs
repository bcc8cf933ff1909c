//! TOML schemas for feeder and scenario files.
//!
//! A feeder file describes the physical network (buses, lines, impedance
//! configurations, static loads, capacitor shunts, per-unit bases). A
//! scenario file references a feeder, places batteries and data centers on
//! it, selects a controller, and specifies the disturbance trace.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

// ---------------------------------------------------------------------------
// Feeder file
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederFile {
    pub bases: BasesCfg,
    pub slack: SlackCfg,
    /// Line impedance configurations by name; 3x3 ohm/mile matrices.
    pub configs: BTreeMap<String, ImpedanceCfg>,
    #[serde(rename = "bus", default)]
    pub buses: Vec<BusCfg>,
    #[serde(rename = "line", default)]
    pub lines: Vec<LineCfg>,
    #[serde(rename = "load", default)]
    pub loads: Vec<LoadCfg>,
    #[serde(rename = "shunt", default)]
    pub shunts: Vec<ShuntCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasesCfg {
    pub s_base_kva: f64,
    pub v_base_kv: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlackCfg {
    pub bus: String,
    /// Per-phase voltage magnitude, p.u. (scalar applies to all phases).
    #[serde(default = "default_one")]
    pub v_pu: f64,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceCfg {
    pub r: [[f64; 3]; 3],
    pub x: [[f64; 3]; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusCfg {
    pub id: String,
    pub phases: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineCfg {
    pub from: String,
    pub to: String,
    pub phases: String,
    pub length_mi: f64,
    pub config: String,
}

/// Static spot load at one (bus, phase), kW / kvar.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCfg {
    pub bus: String,
    pub phase: String,
    pub kw: f64,
    pub kvar: f64,
}

/// Always-on capacitor bank at one (bus, phase), kvar injected.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuntCfg {
    pub bus: String,
    pub phase: String,
    pub kvar: f64,
}

// ---------------------------------------------------------------------------
// Scenario file
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Feeder file path, relative to the scenario file.
    pub feeder: String,
    pub dt_s: f64,
    pub duration_s: f64,
    #[serde(default = "default_warmup")]
    pub warmup_s: f64,
    /// Voltage magnitude limits, p.u.
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// "paper" (efficiency factors literal) or "physical" (round-trip loss).
    #[serde(default = "default_soc_mode")]
    pub soc_mode: String,
    /// Optional override of the feeder's slack voltage magnitude, p.u.
    pub slack_v_pu: Option<f64>,
    pub controller: ControllerCfg,
    #[serde(rename = "battery", default)]
    pub batteries: Vec<BatteryCfg>,
    #[serde(rename = "data_center", default)]
    pub data_centers: Vec<DataCenterCfg>,
    pub trace: TraceCfg,
}

fn default_warmup() -> f64 {
    120.0
}
fn default_v_min() -> f64 {
    0.95
}
fn default_v_max() -> f64 {
    1.05
}
fn default_soc_mode() -> String {
    "paper".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerCfg {
    /// none | ofo | ofo-no-smoothing | benchmark
    pub kind: String,
    #[serde(default)]
    pub ofo: OfoCfg,
    #[serde(default)]
    pub benchmark: BenchmarkCfg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfoCfg {
    pub rho: f64,
    pub c_vf: f64,
    pub c_p: f64,
    pub c_q: f64,
    pub anti_windup: bool,
}

impl Default for OfoCfg {
    fn default() -> Self {
        OfoCfg {
            rho: 0.05,
            c_vf: 1.0,
            c_p: 0.01,
            c_q: 0.01,
            anti_windup: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCfg {
    pub deadband: f64,
    pub dv_max: f64,
    pub v_dev_max: f64,
    pub v_set: f64,
    pub alpha: f64,
    pub theta: f64,
    pub rho: f64,
}

impl Default for BenchmarkCfg {
    fn default() -> Self {
        BenchmarkCfg {
            deadband: 0.01,
            dv_max: 0.02,
            v_dev_max: 0.05,
            v_set: 1.0,
            alpha: 0.5,
            theta: 0.5,
            rho: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryCfg {
    pub bus: String,
    pub phases: String,
    /// Apparent power limit per phase, kVA.
    pub s_max_kw: f64,
    pub capacity_kwh: f64,
    #[serde(default = "default_e_min_frac")]
    pub e_min_frac: f64,
    #[serde(default = "default_e_max_frac")]
    pub e_max_frac: f64,
    #[serde(default = "default_soc_init_frac")]
    pub soc_init_frac: f64,
    #[serde(default = "default_eta")]
    pub eta_dis: f64,
    #[serde(default = "default_eta")]
    pub eta_chg: f64,
}

fn default_e_min_frac() -> f64 {
    0.1
}
fn default_e_max_frac() -> f64 {
    0.9
}
fn default_soc_init_frac() -> f64 {
    0.5
}
fn default_eta() -> f64 {
    0.95
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataCenterCfg {
    pub bus: String,
    #[serde(default = "default_pf")]
    pub power_factor: f64,
    /// Optional per-data-center scaling range; defaults to the trace's.
    pub min_mw: Option<f64>,
    pub max_mw: Option<f64>,
}

fn default_pf() -> f64 {
    0.95
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceCfg {
    /// "synthetic" or "file".
    pub source: String,
    /// Trace file path, relative to the scenario file (source = "file").
    pub file: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub min_mw: f64,
    pub max_mw: f64,
    #[serde(default = "default_dwell")]
    pub mean_dwell_s: f64,
}

fn default_seed() -> u64 {
    1
}
fn default_dwell() -> f64 {
    30.0
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

pub fn load_feeder_file(path: &Path) -> Result<FeederFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_scenario_file(path: &Path) -> Result<(ScenarioFile, PathBuf), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let scenario: ScenarioFile =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((scenario, dir))
}
