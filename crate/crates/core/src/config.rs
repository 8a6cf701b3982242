//! Scenario configuration: a single hierarchical TOML file with every
//! deployment constant pre-populated. Unknown keys are rejected; an empty
//! file yields the full default deployment profile.

use crate::engine::SimTime;
use crate::fl::FlConfig;
use crate::mac::MacConfig;
use crate::metrics::MetricsConfig;
use crate::radio::{RadioConfig, PRB_BANDWIDTH_HZ};
use crate::rlc::RlcConfig;
use crate::traffic::UrllcConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config at {key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub duration_s: f64,
    /// Seeds used when the CLI does not override them.
    pub seeds: Vec<u64>,
    /// Collect per-grant allocation trace records.
    pub trace_allocations: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            duration_s: 20.0,
            seeds: vec![1],
            trace_allocations: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    /// Factory hall dimensions in meters (x, y, z).
    pub hall_m: [f64; 3],
    pub gnb_height_m: f64,
    pub device_height_m: f64,
    pub sector_azimuths_deg: [f64; 3],
    /// Number of URLLC devices (M).
    pub urllc_devices: u32,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        DeploymentConfig {
            hall_m: [15.0, 15.0, 11.0],
            gnb_height_m: 10.0,
            device_height_m: 1.5,
            sector_azimuths_deg: [0.0, 120.0, 240.0],
            urllc_devices: 10,
        }
    }
}

/// Channel bandwidth per direction; documentation of the FDD deployment.
/// The PRB count is what the allocator actually uses.
fn default_bandwidth_mhz() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sim: SimSection,
    pub deployment: DeploymentConfig,
    #[serde(rename = "bandwidth_mhz", default = "default_bandwidth_mhz")]
    pub bandwidth_mhz: f64,
    pub radio: RadioConfig,
    pub mac: MacConfig,
    pub rlc: RlcConfig,
    pub urllc: UrllcConfig,
    pub fl: FlConfig,
    pub metrics: MetricsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            sim: SimSection::default(),
            deployment: DeploymentConfig::default(),
            bandwidth_mhz: default_bandwidth_mhz(),
            radio: RadioConfig::default(),
            mac: MacConfig::default(),
            rlc: RlcConfig::default(),
            urllc: UrllcConfig::default(),
            fl: FlConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// Execution profile: desk scale for fast iteration, paper scale for the
/// full 100 s deployment horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile '{other}', expected desk|paper")),
        }
    }
}

impl ScenarioConfig {
    pub fn parse_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_secs_f64(self.sim.duration_s)
    }

    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Desk => {
                self.sim.duration_s = 20.0;
                self.fl.model_params = 500_000;
            }
            Profile::Paper => {
                self.sim.duration_s = 100.0;
            }
        }
    }

    /// Canonical serialized form, written next to outputs as the config echo.
    pub fn echo_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.echo_toml().as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sim.duration_s > 0.0) {
            return Err(invalid("sim.duration_s", "must be positive"));
        }
        if self.sim.seeds.is_empty() {
            return Err(invalid("sim.seeds", "need at least one seed"));
        }
        if self.deployment.hall_m.iter().any(|&d| d <= 0.0) {
            return Err(invalid("deployment.hall_m", "dimensions must be positive"));
        }
        let az = &self.deployment.sector_azimuths_deg;
        for i in 0..3 {
            for j in (i + 1)..3 {
                if (az[i].rem_euclid(360.0) - az[j].rem_euclid(360.0)).abs() < 1e-9 {
                    return Err(invalid(
                        "deployment.sector_azimuths_deg",
                        "azimuths must be distinct modulo 360",
                    ));
                }
            }
        }

        let r = &self.radio;
        if r.prbs < 1 {
            return Err(invalid("radio.prbs", "need at least one PRB"));
        }
        if r.prbs as f64 * PRB_BANDWIDTH_HZ > self.bandwidth_mhz * 1e6 {
            return Err(invalid(
                "radio.prbs",
                "PRB grid exceeds the channel bandwidth",
            ));
        }
        if !(0.0..1.0).contains(&r.overhead) {
            return Err(invalid("radio.overhead", "must be in [0, 1)"));
        }
        for (key, v) in [
            ("radio.bler_target_urllc", r.bler_target_urllc),
            ("radio.bler_target_ai", r.bler_target_ai),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(key, "must be in (0, 1)"));
            }
        }
        if !(r.tx_power_ul_w > 0.0 && r.tx_power_dl_w > 0.0) {
            return Err(invalid("radio.tx_power", "powers must be positive"));
        }
        if !(r.bler_slope_db > 0.0) {
            return Err(invalid("radio.bler_slope_db", "must be positive"));
        }
        if !(r.sinr_ema_alpha > 0.0 && r.sinr_ema_alpha <= 1.0) {
            return Err(invalid("radio.sinr_ema_alpha", "must be in (0, 1]"));
        }
        if let Some(p) = r.force_bler {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("radio.force_bler", "must be in [0, 1]"));
            }
        }
        if r.blocker_density_per_m2 < 0.0 || r.blocker_mean_width_m < 0.0 {
            return Err(invalid("radio.blocker", "blocker field must be non-negative"));
        }

        let m = &self.mac;
        if m.harq_rtt_ttis < 1 {
            return Err(invalid("mac.harq_rtt_ttis", "must be at least 1"));
        }
        for (key, v) in [
            ("mac.max_tx_urllc_ul", m.max_tx_urllc_ul),
            ("mac.max_tx_urllc_dl", m.max_tx_urllc_dl),
            ("mac.max_tx_ai_ul", m.max_tx_ai_ul),
            ("mac.max_tx_ai_dl", m.max_tx_ai_dl),
        ] {
            if v < 1 {
                return Err(invalid(key, "must be at least 1"));
            }
        }

        if self.rlc.header_bytes < 1 {
            return Err(invalid("rlc.header_bytes", "must be at least 1"));
        }
        if self.rlc.am_max_retx < 1 {
            return Err(invalid("rlc.am_max_retx", "must be at least 1"));
        }

        let u = &self.urllc;
        if !(u.period_ms > 0.0) {
            return Err(invalid("urllc.period_ms", "must be positive"));
        }
        if !(u.delay_bound_ul_ms > 0.0 && u.delay_bound_dl_ms > 0.0) {
            return Err(invalid("urllc.delay_bound", "bounds must be positive"));
        }
        if u.survival_time_ms < 0.0 {
            return Err(invalid("urllc.survival_time_ms", "must be non-negative"));
        }
        if u.ul_bytes < 1 || u.dl_bytes < 1 {
            return Err(invalid("urllc.bytes", "packet sizes must be at least 1"));
        }

        let f = &self.fl;
        if f.devices > 0 {
            if let Some(eta) = f.eta {
                if !(eta > 0.0 && eta <= 1.0) {
                    return Err(invalid("fl.eta", "must be in (0, 1]"));
                }
            }
            if let Some(n) = f.n {
                if n < 1 || n > f.devices {
                    return Err(invalid("fl.n", "must be in 1..=fl.devices"));
                }
                if let Some(eta) = f.eta {
                    let derived = ((eta * f.devices as f64).ceil() as u32).max(1);
                    if derived != n {
                        return Err(invalid(
                            "fl.n",
                            format!("inconsistent with fl.eta: ceil({eta} * {}) = {derived} != {n}", f.devices),
                        ));
                    }
                }
            }
            if f.model_params < 1 {
                return Err(invalid("fl.model_params", "must be at least 1"));
            }
            if f.bytes_per_param < 1 {
                return Err(invalid("fl.bytes_per_param", "must be at least 1"));
            }
            if f.dim < 1 {
                return Err(invalid("fl.dim", "must be at least 1"));
            }
            if !(f.step_size > 0.0) {
                return Err(invalid("fl.step_size", "must be positive"));
            }
            if f.local_steps < 1 {
                return Err(invalid("fl.local_steps", "must be at least 1"));
            }
            if f.problem_condition < 1.0 {
                return Err(invalid("fl.problem_condition", "must be at least 1"));
            }
            if f.compute_base_s < 0.0 || f.compute_per_param_ns < 0.0 || f.master_compute_s < 0.0 {
                return Err(invalid("fl.compute", "delays must be non-negative"));
            }
        }

        let k = &self.metrics;
        if !(k.availability_requirement > 0.0 && k.availability_requirement <= 1.0) {
            return Err(invalid("metrics.availability_requirement", "must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&k.sensitivity) {
            return Err(invalid("metrics.sensitivity", "must be in [0, 1]"));
        }
        Ok(())
    }
}
