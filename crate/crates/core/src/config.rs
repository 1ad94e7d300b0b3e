//! Simulation configuration.
//!
//! Configs are TOML files: top-level `seed` plus one table per module.
//! Every key is optional and falls back to the defaults below, which are
//! the evaluated scenario (7 cells, 125 m radius, 200-sample coherence
//! blocks, 20 dBm uplink power, -94 dBm noise, path-loss exponent 3.76,
//! 10 dB shadowing, 12.5 kHz bandwidth).
//!
//! ```toml
//! seed = 7
//!
//! [network]
//! antennas = 64
//! devices_per_cell = 7
//! clusters_per_cell = 7
//!
//! [pilotopt]
//! time_budget_s = 10.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub cells: usize,
    pub devices_per_cell: usize,
    pub clusters_per_cell: usize,
    pub antennas: usize,
    pub cell_radius_m: f64,
    /// Samples per coherence block.
    pub coherence_samples: usize,
    /// Pilot length; defaults to one pilot per cluster.
    pub pilot_length: Option<usize>,
    pub ul_power_dbm: f64,
    pub noise_dbm: f64,
    pub pathloss_exponent: f64,
    /// Path loss at 1 m.
    pub pathloss_intercept_db: f64,
    pub shadow_sigma_db: f64,
    pub bandwidth_hz: f64,
    /// Devices are never dropped closer than this to their base station.
    pub min_distance_m: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            cells: 7,
            devices_per_cell: 7,
            clusters_per_cell: 7,
            antennas: 64,
            cell_radius_m: 125.0,
            coherence_samples: 200,
            pilot_length: None,
            ul_power_dbm: 20.0,
            noise_dbm: -94.0,
            pathloss_exponent: 3.76,
            pathloss_intercept_db: -35.3,
            shadow_sigma_db: 10.0,
            bandwidth_hz: 12_500.0,
            min_distance_m: 10.0,
        }
    }
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl NetworkConfig {
    pub fn tau_p(&self) -> usize {
        self.pilot_length.unwrap_or(self.clusters_per_cell)
    }

    /// Uplink transmit power in mW.
    pub fn power_mw(&self) -> f64 {
        dbm_to_mw(self.ul_power_dbm)
    }

    /// Receiver noise power in mW.
    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_dbm)
    }

    /// Fraction of the coherence block left for data.
    pub fn prelog(&self) -> f64 {
        (self.coherence_samples - self.tau_p()) as f64 / self.coherence_samples as f64
    }

    pub fn validate(&self) -> Result<()> {
        let f = |k: &str| format!("network.{k}");
        if self.cells < 1 {
            return Err(Error::config(f("cells"), "must be at least 1"));
        }
        if self.clusters_per_cell < 1 {
            return Err(Error::config(f("clusters_per_cell"), "must be at least 1"));
        }
        if self.devices_per_cell < self.clusters_per_cell {
            return Err(Error::config(
                f("devices_per_cell"),
                "must be at least clusters_per_cell",
            ));
        }
        if self.antennas < 1 {
            return Err(Error::config(f("antennas"), "must be at least 1"));
        }
        if self.tau_p() < self.clusters_per_cell {
            return Err(Error::config(
                f("pilot_length"),
                "must provide one orthogonal pilot per cluster",
            ));
        }
        if self.tau_p() > self.coherence_samples {
            return Err(Error::config(
                f("pilot_length"),
                "must not exceed coherence_samples",
            ));
        }
        if !(self.cell_radius_m.is_finite() && self.cell_radius_m > 0.0) {
            return Err(Error::config(f("cell_radius_m"), "must be positive"));
        }
        if !(self.min_distance_m.is_finite()
            && self.min_distance_m > 0.0
            && self.min_distance_m < 0.5 * self.cell_radius_m)
        {
            return Err(Error::config(
                f("min_distance_m"),
                "must be positive and below half the cell radius",
            ));
        }
        for (k, v) in [
            ("ul_power_dbm", self.ul_power_dbm),
            ("noise_dbm", self.noise_dbm),
            ("pathloss_intercept_db", self.pathloss_intercept_db),
        ] {
            if !v.is_finite() {
                return Err(Error::config(f(k), "must be finite"));
            }
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent > 0.0) {
            return Err(Error::config(f("pathloss_exponent"), "must be positive"));
        }
        if !(self.shadow_sigma_db.is_finite() && self.shadow_sigma_db >= 0.0) {
            return Err(Error::config(f("shadow_sigma_db"), "must be non-negative"));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::config(f("bandwidth_hz"), "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Angular standard deviation of the local scattering model.
    pub asd_deg: f64,
    /// Antenna spacing in wavelengths.
    pub antenna_spacing: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            asd_deg: 10.0,
            antenna_spacing: 0.5,
        }
    }
}

impl ChannelConfig {
    pub fn asd_rad(&self) -> f64 {
        self.asd_deg.to_radians()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.asd_deg.is_finite() && self.asd_deg > 0.0) {
            return Err(Error::config("channel.asd_deg", "must be positive"));
        }
        if !(self.antenna_spacing.is_finite() && self.antenna_spacing > 0.0) {
            return Err(Error::config("channel.antenna_spacing", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub max_iterations: usize,
    /// Extra random-initialization restarts after the greedy build.
    pub restarts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotOptConfig {
    /// Wall-clock budget per coloring solve.
    pub time_budget_s: f64,
    /// Branch-and-bound node budget per solve (0 = unlimited). Unlike the
    /// wall-clock budget it makes results independent of machine speed.
    pub node_limit: u64,
}

impl Default for PilotOptConfig {
    fn default() -> Self {
        Self {
            time_budget_s: 10.0,
            node_limit: 100_000,
        }
    }
}

impl PilotOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_budget_s.is_finite() && self.time_budget_s > 0.0) {
            return Err(Error::config("pilotopt.time_budget_s", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub drops: usize,
    /// Small-scale realizations per drop in the SE sweep.
    pub realizations_per_drop: usize,
    /// Realizations per activation block in the overhead sweep.
    pub overhead_realizations: usize,
    /// Cap on the SE / cluster-count fixed-point iteration.
    pub max_fixed_point_rounds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            drops: 20,
            realizations_per_drop: 20,
            overhead_realizations: 1,
            max_fixed_point_rounds: 10,
        }
    }
}

impl ExperimentConfig {
    pub const PAPER_REALIZATIONS: usize = 50;

    pub fn validate(&self) -> Result<()> {
        if self.drops < 1 {
            return Err(Error::config("experiment.drops", "must be at least 1"));
        }
        if self.realizations_per_drop < 1 {
            return Err(Error::config(
                "experiment.realizations_per_drop",
                "must be at least 1",
            ));
        }
        if self.overhead_realizations < 1 {
            return Err(Error::config(
                "experiment.overhead_realizations",
                "must be at least 1",
            ));
        }
        if self.max_fixed_point_rounds < 1 {
            return Err(Error::config(
                "experiment.max_fixed_point_rounds",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Full configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub channel: ChannelConfig,
    pub clustering: ClusteringConfig,
    pub pilotopt: PilotOptConfig,
    pub experiment: ExperimentConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            network: NetworkConfig::default(),
            channel: ChannelConfig::default(),
            clustering: ClusteringConfig::default(),
            pilotopt: PilotOptConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".to_string());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.channel.validate()?;
        self.pilotopt.validate()?;
        self.experiment.validate()?;
        Ok(())
    }
}
