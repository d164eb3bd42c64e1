//! Deployment generation and the domain types shared across the simulator.
//!
//! Sensors are static and the only base station sits at the origin, so a
//! node's geometry is fully described by its distance and azimuth.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;

pub type SensorId = u32;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// RNG sub-stream identifiers. Each consumer gets its own ChaCha stream so
/// adding draws in one place never shifts another's sequence.
pub mod stream {
    pub const DEPLOYMENT: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const SIDELINK_SHADOWING: u64 = 3;
}

/// Seeded generator for one named sub-stream of a run.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransmissionMode {
    /// Uploads its own reports straight to the base station.
    Cellular,
    /// Collects remote reports over sidelinks and uploads them with its own.
    Relay,
    /// Sends its reports to a relay over a sidelink.
    Sidelink,
    /// Cannot currently deliver reports (no usable link, or battery empty).
    Unserved,
}

impl TransmissionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TransmissionMode::Cellular => "cellular",
            TransmissionMode::Relay => "relay",
            TransmissionMode::Sidelink => "sidelink",
            TransmissionMode::Unserved => "unserved",
        }
    }

    /// Whether reports sent in this mode reach the base station, assuming
    /// every hop involved is alive.
    pub fn delivers(self) -> bool {
        !matches!(self, TransmissionMode::Unserved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoverageClass {
    InCoverage,
    OutOfCoverage,
}

impl CoverageClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverageClass::InCoverage => "in",
            CoverageClass::OutOfCoverage => "out",
        }
    }
}

/// Cell geometry, traffic, battery and relay-policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub cell_radius_m: f64,
    pub n_sensors: u32,
    pub sensor_height_m: f64,
    pub bs_height_m: f64,
    pub carrier_hz: f64,
    pub report_period_s: f64,
    pub payload_bits: u32,
    pub battery_wh: f64,
    pub life_requirement_days: u32,
    pub relay_min_distance_m: f64,
    pub relay_battery_margin: f64,
    pub relay_budget: u32,
    pub n_clusters: u32,
    pub tms_period_days: u32,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            cell_radius_m: 2500.0,
            n_sensors: 100_000,
            sensor_height_m: 0.5,
            bs_height_m: 35.0,
            carrier_hz: 9.0e8,
            report_period_s: 150.0,
            payload_bits: 1000,
            battery_wh: 5.0,
            life_requirement_days: 3650,
            relay_min_distance_m: 1500.0,
            relay_battery_margin: 1.2,
            relay_budget: 100,
            n_clusters: 100,
            tms_period_days: 1,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(format!("{name} must be > 0 (got {v})")))
            }
        };
        finite_pos("cell_radius_m", self.cell_radius_m)?;
        finite_pos("sensor_height_m", self.sensor_height_m)?;
        finite_pos("bs_height_m", self.bs_height_m)?;
        finite_pos("carrier_hz", self.carrier_hz)?;
        finite_pos("report_period_s", self.report_period_s)?;
        finite_pos("battery_wh", self.battery_wh)?;
        finite_pos("relay_min_distance_m", self.relay_min_distance_m)?;
        finite_pos("relay_battery_margin", self.relay_battery_margin)?;
        if self.relay_min_distance_m >= self.cell_radius_m {
            return Err(ConfigError::invalid(format!(
                "cell_radius_m ({}) must exceed relay_min_distance_m ({})",
                self.cell_radius_m, self.relay_min_distance_m
            )));
        }
        for (name, v) in [
            ("n_sensors", self.n_sensors),
            ("payload_bits", self.payload_bits),
            ("life_requirement_days", self.life_requirement_days),
            ("relay_budget", self.relay_budget),
            ("n_clusters", self.n_clusters),
            ("tms_period_days", self.tms_period_days),
        ] {
            if v < 1 {
                return Err(ConfigError::invalid(format!("{name} must be >= 1")));
            }
        }
        if self.report_period_s > SECONDS_PER_DAY {
            return Err(ConfigError::invalid(format!(
                "report_period_s ({}) must not exceed one day",
                self.report_period_s
            )));
        }
        if f64::from(self.tms_period_days) * SECONDS_PER_DAY <= self.report_period_s {
            return Err(ConfigError::invalid(format!(
                "tms_period_days x 86400 must exceed report_period_s ({})",
                self.report_period_s
            )));
        }
        Ok(())
    }

    pub fn battery_j(&self) -> f64 {
        self.battery_wh * 3600.0
    }

    /// Whole report cycles per day; any fractional remainder is dropped.
    pub fn reports_per_day(&self) -> u32 {
        (SECONDS_PER_DAY / self.report_period_s).floor() as u32
    }
}

/// Device power-consumption constants. Powers are milliwatts, times seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub pa_efficiency: f64,
    pub circuit_mw: f64,
    pub p_rx_mw: f64,
    pub p_paging_mw: f64,
    pub t_paging_s: f64,
    pub p_clock_mw: f64,
    pub t_clock_s: f64,
    pub p_cp_mw: f64,
    pub t_cp_s: f64,
    pub p_sleep_mw: f64,
    pub drx_per_day: u32,
    pub drx_cycle_h: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        PowerProfile {
            pa_efficiency: 0.45,
            circuit_mw: 60.0,
            p_rx_mw: 100.0,
            p_paging_mw: 100.0,
            t_paging_s: 0.010,
            p_clock_mw: 100.0,
            t_clock_s: 0.010,
            p_cp_mw: 200.0,
            t_cp_s: 0.010,
            p_sleep_mw: 0.01,
            drx_per_day: 4,
            drx_cycle_h: 6.0,
        }
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return Err(ConfigError::invalid("pa_efficiency must be in (0, 1]"));
        }
        for (name, v) in [
            ("circuit_mw", self.circuit_mw),
            ("p_rx_mw", self.p_rx_mw),
            ("p_paging_mw", self.p_paging_mw),
            ("t_paging_s", self.t_paging_s),
            ("p_clock_mw", self.p_clock_mw),
            ("t_clock_s", self.t_clock_s),
            ("p_cp_mw", self.p_cp_mw),
            ("t_cp_s", self.t_cp_s),
            ("drx_cycle_h", self.drx_cycle_h),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(format!("{name} must be > 0")));
            }
        }
        if !(self.p_sleep_mw.is_finite() && self.p_sleep_mw >= 0.0) {
            return Err(ConfigError::invalid("p_sleep_mw must be >= 0"));
        }
        Ok(())
    }
}

/// One deployed device and its simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorNode {
    pub id: SensorId,
    pub distance_m: f64,
    /// Azimuth seen from the base station, in `[0, 2π)`.
    pub angle_rad: f64,
    /// Remaining battery energy in joules.
    pub battery_j: f64,
    pub tm: TransmissionMode,
    pub cluster_id: Option<u32>,
    pub relay_id: Option<SensorId>,
    pub served_days: f64,
    pub alive: bool,
    pub coverage_class: CoverageClass,
    /// Partners whose sidelink discovery failed; never paired again.
    pub blacklist: Vec<SensorId>,
}

impl SensorNode {
    pub fn is_blacklisted(&self, other: SensorId) -> bool {
        self.blacklist.contains(&other)
    }

    pub fn position_xy(&self) -> (f64, f64) {
        (
            self.distance_m * self.angle_rad.cos(),
            self.distance_m * self.angle_rad.sin(),
        )
    }
}

/// Drops `n_sensors` nodes uniformly over the cell disk.
///
/// Coverage class starts as `InCoverage`; the network builder classifies it
/// once the static cellular link is known.
pub fn generate_deployment(config: &ScenarioConfig) -> Result<Vec<SensorNode>, ConfigError> {
    config.validate()?;
    let mut rng = stream_rng(config.rng_seed, stream::DEPLOYMENT);
    let battery = config.battery_j();
    let nodes = (0..config.n_sensors)
        .map(|id| {
            let u: f64 = rng.random();
            let distance_m = config.cell_radius_m * u.sqrt();
            let mut angle_rad = TAU * rng.random::<f64>();
            if angle_rad >= TAU {
                angle_rad = 0.0;
            }
            SensorNode {
                id,
                distance_m,
                angle_rad,
                battery_j: battery,
                tm: TransmissionMode::Cellular,
                cluster_id: None,
                relay_id: None,
                served_days: 0.0,
                alive: true,
                coverage_class: CoverageClass::InCoverage,
                blacklist: Vec::new(),
            }
        })
        .collect();
    Ok(nodes)
}
