//! Flat `key = value` configuration covering every tunable of a run.
//!
//! `#` starts a comment, blank lines are ignored and unknown keys are an
//! error. Floats are written with Rust's shortest round-trip formatting, so
//! `parse(to_text(c)) == c` holds bit for bit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::{ChannelConfig, McsTable};
use crate::energy::EnergyModel;
use crate::error::{ConfigError, SimError};
use crate::scenario::{PowerProfile, ScenarioConfig};
use crate::signaling::{AllocationMode, SignalingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub power: PowerProfile,
    pub channel: ChannelConfig,
    pub signaling: SignalingConfig,
    pub horizon_days: u32,
    pub kmeans_refine_passes: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: ScenarioConfig::default(),
            power: PowerProfile::default(),
            channel: ChannelConfig::default(),
            signaling: SignalingConfig::default(),
            horizon_days: 5500,
            kmeans_refine_passes: 0,
        }
    }
}

fn num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: e.to_string(),
    })
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        let mut c = SimConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line,
                text: body.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            c.set(line, key, value)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        let s = &mut self.scenario;
        let p = &mut self.power;
        let ch = &mut self.channel;
        let sg = &mut self.signaling;
        macro_rules! n {
            () => {
                num(line, key, v)?
            };
        }
        match key {
            "cell_radius_m" => s.cell_radius_m = n!(),
            "n_sensors" => s.n_sensors = n!(),
            "sensor_height_m" => s.sensor_height_m = n!(),
            "bs_height_m" => s.bs_height_m = n!(),
            "carrier_hz" => s.carrier_hz = n!(),
            "report_period_s" => s.report_period_s = n!(),
            "payload_bits" => s.payload_bits = n!(),
            "battery_wh" => s.battery_wh = n!(),
            "life_requirement_days" => s.life_requirement_days = n!(),
            "relay_min_distance_m" => s.relay_min_distance_m = n!(),
            "relay_battery_margin" => s.relay_battery_margin = n!(),
            "relay_budget" => s.relay_budget = n!(),
            "n_clusters" => s.n_clusters = n!(),
            "tms_period_days" => s.tms_period_days = n!(),
            "rng_seed" => s.rng_seed = n!(),

            "pa_efficiency" => p.pa_efficiency = n!(),
            "circuit_mw" => p.circuit_mw = n!(),
            "p_rx_mw" => p.p_rx_mw = n!(),
            "p_paging_mw" => p.p_paging_mw = n!(),
            "t_paging_s" => p.t_paging_s = n!(),
            "p_clock_mw" => p.p_clock_mw = n!(),
            "t_clock_s" => p.t_clock_s = n!(),
            "p_cp_mw" => p.p_cp_mw = n!(),
            "t_cp_s" => p.t_cp_s = n!(),
            "p_sleep_mw" => p.p_sleep_mw = n!(),
            "drx_per_day" => p.drx_per_day = n!(),
            "drx_cycle_h" => p.drx_cycle_h = n!(),

            "bandwidth_hz" => ch.bandwidth_hz = n!(),
            "noise_density_dbm_hz" => ch.noise_density_dbm_hz = n!(),
            "noise_figure_db" => ch.noise_figure_db = n!(),
            "target_snr_cell_db" => ch.target_snr_cell_db = n!(),
            "target_snr_side_db" => ch.target_snr_side_db = n!(),
            "outage_snr_db" => ch.outage_snr_db = n!(),
            "relay_snr_db" => ch.relay_snr_db = n!(),
            "max_tx_dbm" => ch.max_tx_dbm = n!(),
            "shadowing_sigma_cell_db" => ch.shadowing_sigma_cell_db = n!(),
            "shadowing_sigma_side_db" => ch.shadowing_sigma_side_db = n!(),
            "antenna_gain_db" => ch.antenna_gain_db = n!(),
            "sidelink_admission_pl_db" => ch.sidelink_admission_pl_db = Some(n!()),
            "cell_pl_intercept_db" => ch.cell_pl_intercept_db = Some(n!()),
            "cell_pl_slope_db" => ch.cell_pl_slope_db = Some(n!()),
            "side_pl_intercept_db" => ch.side_pl_intercept_db = Some(n!()),
            "side_pl_slope_db" => ch.side_pl_slope_db = n!(),
            "side_pl_min_distance_m" => ch.side_pl_min_distance_m = n!(),
            "mcs_table_path" => ch.mcs_table_path = Some(PathBuf::from(v)),

            "discovery_bits" => sg.discovery_bits = n!(),
            "ack_bits" => sg.ack_bits = n!(),
            "grant_bits" => sg.grant_bits = n!(),
            "page_bits" => sg.page_bits = n!(),
            "security_bits" => sg.security_bits = n!(),
            "allocation_mode" => {
                sg.allocation_mode =
                    AllocationMode::parse(v).ok_or_else(|| ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        reason: "expected semi_persistent or random_access".into(),
                    })?
            }
            "aggregation_ratio" => sg.aggregation_ratio = n!(),

            "horizon_days" => self.horizon_days = n!(),
            "kmeans_refine_passes" => self.kmeans_refine_passes = n!(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let p = &self.power;
        let ch = &self.channel;
        let sg = &self.signaling;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("cell_radius_m", s.cell_radius_m.to_string());
        kv("n_sensors", s.n_sensors.to_string());
        kv("sensor_height_m", s.sensor_height_m.to_string());
        kv("bs_height_m", s.bs_height_m.to_string());
        kv("carrier_hz", s.carrier_hz.to_string());
        kv("report_period_s", s.report_period_s.to_string());
        kv("payload_bits", s.payload_bits.to_string());
        kv("battery_wh", s.battery_wh.to_string());
        kv("life_requirement_days", s.life_requirement_days.to_string());
        kv("relay_min_distance_m", s.relay_min_distance_m.to_string());
        kv("relay_battery_margin", s.relay_battery_margin.to_string());
        kv("relay_budget", s.relay_budget.to_string());
        kv("n_clusters", s.n_clusters.to_string());
        kv("tms_period_days", s.tms_period_days.to_string());
        kv("rng_seed", s.rng_seed.to_string());

        kv("pa_efficiency", p.pa_efficiency.to_string());
        kv("circuit_mw", p.circuit_mw.to_string());
        kv("p_rx_mw", p.p_rx_mw.to_string());
        kv("p_paging_mw", p.p_paging_mw.to_string());
        kv("t_paging_s", p.t_paging_s.to_string());
        kv("p_clock_mw", p.p_clock_mw.to_string());
        kv("t_clock_s", p.t_clock_s.to_string());
        kv("p_cp_mw", p.p_cp_mw.to_string());
        kv("t_cp_s", p.t_cp_s.to_string());
        kv("p_sleep_mw", p.p_sleep_mw.to_string());
        kv("drx_per_day", p.drx_per_day.to_string());
        kv("drx_cycle_h", p.drx_cycle_h.to_string());

        kv("bandwidth_hz", ch.bandwidth_hz.to_string());
        kv("noise_density_dbm_hz", ch.noise_density_dbm_hz.to_string());
        kv("noise_figure_db", ch.noise_figure_db.to_string());
        kv("target_snr_cell_db", ch.target_snr_cell_db.to_string());
        kv("target_snr_side_db", ch.target_snr_side_db.to_string());
        kv("outage_snr_db", ch.outage_snr_db.to_string());
        kv("relay_snr_db", ch.relay_snr_db.to_string());
        kv("max_tx_dbm", ch.max_tx_dbm.to_string());
        kv("shadowing_sigma_cell_db", ch.shadowing_sigma_cell_db.to_string());
        kv("shadowing_sigma_side_db", ch.shadowing_sigma_side_db.to_string());
        kv("antenna_gain_db", ch.antenna_gain_db.to_string());
        if let Some(v) = ch.sidelink_admission_pl_db {
            kv("sidelink_admission_pl_db", v.to_string());
        }
        if let Some(v) = ch.cell_pl_intercept_db {
            kv("cell_pl_intercept_db", v.to_string());
        }
        if let Some(v) = ch.cell_pl_slope_db {
            kv("cell_pl_slope_db", v.to_string());
        }
        if let Some(v) = ch.side_pl_intercept_db {
            kv("side_pl_intercept_db", v.to_string());
        }
        kv("side_pl_slope_db", ch.side_pl_slope_db.to_string());
        kv("side_pl_min_distance_m", ch.side_pl_min_distance_m.to_string());
        if let Some(path) = &ch.mcs_table_path {
            kv("mcs_table_path", path.display().to_string());
        }

        kv("discovery_bits", sg.discovery_bits.to_string());
        kv("ack_bits", sg.ack_bits.to_string());
        kv("grant_bits", sg.grant_bits.to_string());
        kv("page_bits", sg.page_bits.to_string());
        kv("security_bits", sg.security_bits.to_string());
        kv("allocation_mode", sg.allocation_mode.as_str().to_string());
        kv("aggregation_ratio", sg.aggregation_ratio.to_string());

        kv("horizon_days", self.horizon_days.to_string());
        kv("kmeans_refine_passes", self.kmeans_refine_passes.to_string());
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        self.power.validate()?;
        self.channel.validate()?;
        let sg = &self.signaling;
        for (name, v) in [
            ("discovery_bits", sg.discovery_bits),
            ("ack_bits", sg.ack_bits),
            ("grant_bits", sg.grant_bits),
            ("page_bits", sg.page_bits),
            ("security_bits", sg.security_bits),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(format!("{name} must be > 0")));
            }
        }
        if !(sg.aggregation_ratio.is_finite() && sg.aggregation_ratio >= 0.0) {
            return Err(ConfigError::invalid("aggregation_ratio must be >= 0"));
        }
        if self.horizon_days < 1 {
            return Err(ConfigError::invalid("horizon_days must be >= 1"));
        }
        if self.scenario.n_clusters > self.scenario.n_sensors {
            return Err(ConfigError::invalid(format!(
                "n_clusters ({}) exceeds n_sensors ({})",
                self.scenario.n_clusters, self.scenario.n_sensors
            )));
        }
        Ok(())
    }

    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<SimConfig, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(SimConfig::parse(&text)?)
    }

    /// The MCS table in effect, checked against the outage threshold.
    pub fn mcs_table(&self) -> Result<McsTable, SimError> {
        let table = match &self.channel.mcs_table_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| SimError::Read {
                    path: path.clone(),
                    source,
                })?;
                McsTable::parse(&text)?
            }
            None => McsTable::default_table(),
        };
        check_table(&table, &self.channel)?;
        Ok(table)
    }

    pub fn energy_model(&self) -> EnergyModel {
        EnergyModel {
            profile: self.power.clone(),
            signaling: self.signaling.clone(),
            bandwidth_hz: self.channel.bandwidth_hz,
            payload_bits: f64::from(self.scenario.payload_bits),
            reports_per_day: self.scenario.reports_per_day(),
        }
    }
}

/// The lowest MCS threshold must coincide with the outage threshold.
pub fn check_table(table: &McsTable, channel: &ChannelConfig) -> Result<(), ConfigError> {
    let lowest = table.lowest().min_snr_db;
    if lowest != channel.outage_snr_db {
        return Err(ConfigError::invalid(format!(
            "lowest MCS threshold ({lowest} dB) must equal outage_snr_db ({} dB)",
            channel.outage_snr_db
        )));
    }
    Ok(())
}
