//! Top-level JSON configuration: the circuit blocks plus HBT acquisition
//! settings, and the mapping from a filter choice to a signal fraction.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::{component_port_powers, CircuitConfig};
use crate::error::{Error, Result};
use crate::ring::Polarization;
use crate::stats::{DetectorModel, HbtScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HbtSettings {
    /// Emitter line whose statistics are measured.
    pub target_line: String,
    pub polarization: Polarization,
    /// Photon rate at the beamsplitter used for the Monte Carlo run.
    pub count_rate_cps: f64,
    pub tau_c_ps: f64,
    pub detector: DetectorModel,
    pub duration_s: f64,
    pub bin_ps: f64,
    pub window_ns: f64,
}

impl Default for HbtSettings {
    fn default() -> Self {
        HbtSettings {
            target_line: "T".into(),
            polarization: Polarization::TE,
            count_rate_cps: 2.0e6,
            tau_c_ps: 300.0,
            detector: DetectorModel::default(),
            duration_s: 2.0,
            bin_ps: 50.0,
            window_ns: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjectConfig {
    #[serde(flatten)]
    pub circuit: CircuitConfig,
    #[serde(default)]
    pub hbt: HbtSettings,
}

impl ProjectConfig {
    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        let h = &self.hbt;
        h.detector.validate()?;
        if !(h.count_rate_cps > 0.0 && h.tau_c_ps > 0.0 && h.duration_s > 0.0) {
            return Err(Error::config("hbt: count rate, correlation time and duration must be positive"));
        }
        if !(h.bin_ps > 0.0 && h.window_ns * 1e3 > h.bin_ps) {
            return Err(Error::config("hbt: bin width must be positive and smaller than the window"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProjectConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Spectral selection in front of the HBT setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// The full launched spectrum reaches the detectors.
    None,
    /// Drop port of the ring tuned onto the target line.
    Ring,
    /// Only the target line reaches the detectors.
    Ideal,
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterMode::None => "none",
            FilterMode::Ring => "ring",
            FilterMode::Ideal => "ideal",
        })
    }
}

impl FromStr for FilterMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(FilterMode::None),
            "ring" => Ok(FilterMode::Ring),
            "ideal" => Ok(FilterMode::Ideal),
            _ => Err(Error::config(format!("unknown filter '{s}' (none|ring|ideal)"))),
        }
    }
}

/// Count rates behind a filter, from the circuit's line-integrated powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredRates {
    pub filter: FilterMode,
    pub voltage: f64,
    pub signal_cps: f64,
    pub background_cps: f64,
}

impl FilteredRates {
    pub fn signal_fraction(&self) -> f64 {
        let total = self.signal_cps + self.background_cps;
        if total > 0.0 { self.signal_cps / total } else { 0.0 }
    }
}

pub fn filtered_rates(cfg: &ProjectConfig, filter: FilterMode) -> Result<FilteredRates> {
    let h = &cfg.hbt;
    let c = &cfg.circuit;
    c.source.line(&h.target_line)?;
    let voltage = match filter {
        FilterMode::Ring => c.aligned_voltage(&h.target_line, h.polarization)?,
        _ => 0.0,
    };
    let powers = component_port_powers(c, voltage, h.polarization)?;
    let (mut signal, mut background) = (0.0, 0.0);
    for p in &powers {
        let value = match filter {
            FilterMode::Ring => p.drop,
            FilterMode::None | FilterMode::Ideal => p.source,
        };
        if p.label == h.target_line {
            signal += value;
        } else if filter != FilterMode::Ideal {
            background += value;
        }
    }
    if !(signal > 0.0) {
        return Err(Error::numerical(format!("line '{}' delivers no signal through filter {filter}", h.target_line)));
    }
    Ok(FilteredRates { filter, voltage, signal_cps: signal, background_cps: background })
}

/// Monte Carlo scenario for the target line behind `filter`. Absolute
/// circuit rates only set the signal fraction; the simulated rate is
/// `count_rate_cps · rate_scale`.
pub fn hbt_scenario(cfg: &ProjectConfig, filter: FilterMode, rate_scale: f64) -> Result<(HbtScenario, FilteredRates)> {
    if !(rate_scale > 0.0) {
        return Err(Error::config("rate scale must be positive"));
    }
    let h = &cfg.hbt;
    let rates = filtered_rates(cfg, filter)?;
    let line = cfg.circuit.source.line(&h.target_line)?;
    let scenario = HbtScenario {
        total_rate_cps: h.count_rate_cps * rate_scale,
        signal_fraction: rates.signal_fraction(),
        g2_intrinsic: line.g2_intrinsic,
        lifetime_ns: line.lifetime,
        tau_c_ps: h.tau_c_ps,
        duration_s: h.duration_s,
        bin_ps: h.bin_ps,
        window_ns: h.window_ns,
        detector1: h.detector,
        detector2: h.detector,
    };
    scenario.validate()?;
    Ok((scenario, rates))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = ProjectConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        for key in ["ring", "tuning", "emitters", "backgrounds", "coupling", "losses", "pump_budget", "hbt"] {
            assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert_eq!(ProjectConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn hbt_block_is_optional() {
        let mut v = serde_json::to_value(ProjectConfig::default()).unwrap();
        v.as_object_mut().unwrap().remove("hbt");
        let cfg = ProjectConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(cfg.hbt, HbtSettings::default());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut v = serde_json::to_value(ProjectConfig::default()).unwrap();
        v["tuning"]["heater_ohms"] = (-1.0).into();
        assert!(matches!(ProjectConfig::from_json(&v.to_string()), Err(Error::Config(_))));
        assert!(matches!(ProjectConfig::from_json("{"), Err(Error::Json(_))));
    }

    #[test]
    fn filters_order_the_signal_fraction() {
        let cfg = ProjectConfig::default();
        let none = filtered_rates(&cfg, FilterMode::None).unwrap().signal_fraction();
        let ring = filtered_rates(&cfg, FilterMode::Ring).unwrap().signal_fraction();
        let ideal = filtered_rates(&cfg, FilterMode::Ideal).unwrap().signal_fraction();
        assert!(none < 0.01, "{none}");
        assert!(ring > 0.75 && ring < 0.9, "{ring}");
        assert_eq!(ideal, 1.0);
        assert_eq!("Ring".parse::<FilterMode>().unwrap(), FilterMode::Ring);
        assert!("mono".parse::<FilterMode>().is_err());
    }
}
