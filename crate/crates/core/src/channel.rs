//! Static link budget: pathloss, shadowing, open-loop power control and
//! SNR-to-MCS link adaptation.
//!
//! All quantities are in dB/dBm unless the name says otherwise. Every
//! function here is pure.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use crate::error::ConfigError;
use crate::scenario::{ScenarioConfig, SensorId};

/// Shortest distance the cellular model is evaluated at.
pub const CELL_MIN_DISTANCE_M: f64 = 10.0;

const DEFAULT_MCS_TABLE: &str = include_str!("../data/mcs_default.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub target_snr_cell_db: f64,
    pub target_snr_side_db: f64,
    pub outage_snr_db: f64,
    pub relay_snr_db: f64,
    pub max_tx_dbm: f64,
    pub shadowing_sigma_cell_db: f64,
    pub shadowing_sigma_side_db: f64,
    pub antenna_gain_db: f64,
    /// `None` means the largest pathloss at which the sidelink target SNR is
    /// reachable at full power.
    pub sidelink_admission_pl_db: Option<f64>,
    /// `None` derives the 1 km intercept from the rural-macro NLOS model at
    /// the scenario's carrier and antenna heights.
    pub cell_pl_intercept_db: Option<f64>,
    pub cell_pl_slope_db: Option<f64>,
    /// `None` uses free-space loss at 1 m for the carrier.
    pub side_pl_intercept_db: Option<f64>,
    pub side_pl_slope_db: f64,
    pub side_pl_min_distance_m: f64,
    pub mcs_table_path: Option<PathBuf>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            bandwidth_hz: 180_000.0,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 5.0,
            target_snr_cell_db: 3.0,
            target_snr_side_db: 10.0,
            outage_snr_db: -7.0,
            relay_snr_db: 6.0,
            max_tx_dbm: 20.0,
            shadowing_sigma_cell_db: 8.0,
            shadowing_sigma_side_db: 7.0,
            antenna_gain_db: 0.0,
            sidelink_admission_pl_db: None,
            cell_pl_intercept_db: None,
            cell_pl_slope_db: None,
            side_pl_intercept_db: None,
            side_pl_slope_db: 22.0,
            side_pl_min_distance_m: 3.0,
            mcs_table_path: None,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(ConfigError::invalid("bandwidth_hz must be > 0"));
        }
        if !(self.outage_snr_db < self.target_snr_cell_db
            && self.target_snr_cell_db < self.relay_snr_db)
        {
            return Err(ConfigError::invalid(
                "require outage_snr_db < target_snr_cell_db < relay_snr_db",
            ));
        }
        if self.shadowing_sigma_cell_db < 0.0 || self.shadowing_sigma_side_db < 0.0 {
            return Err(ConfigError::invalid("shadowing sigmas must be >= 0"));
        }
        if !(self.side_pl_min_distance_m > 0.0) {
            return Err(ConfigError::invalid("side_pl_min_distance_m must be > 0"));
        }
        Ok(())
    }

    pub fn admission_pl_db(&self) -> f64 {
        self.sidelink_admission_pl_db.unwrap_or_else(|| {
            self.max_tx_dbm - noise_floor_dbm(self) - self.target_snr_side_db
        })
    }

    /// Resolves the pathloss coefficients against the scenario geometry.
    pub fn pathloss_model(&self, scenario: &ScenarioConfig) -> PathlossModel {
        let carrier_ghz = scenario.carrier_hz / 1e9;
        PathlossModel {
            cell_intercept_db: self.cell_pl_intercept_db.unwrap_or_else(|| {
                rma_nlos_intercept_db(carrier_ghz, scenario.bs_height_m, scenario.sensor_height_m)
            }),
            cell_slope_db: self
                .cell_pl_slope_db
                .unwrap_or_else(|| rma_nlos_slope_db(scenario.bs_height_m)),
            side_intercept_db: self
                .side_pl_intercept_db
                .unwrap_or_else(|| free_space_1m_db(scenario.carrier_hz)),
            side_slope_db: self.side_pl_slope_db,
            side_min_distance_m: self.side_pl_min_distance_m,
        }
    }
}

// Rural macro NLOS with the usual 20 m street width and 5 m building height.
const RMA_STREET_WIDTH_M: f64 = 20.0;
const RMA_BUILDING_HEIGHT_M: f64 = 5.0;

/// Rural-macro NLOS pathloss at 1 km. The mobile height-gain term is
/// evaluated at the given height even below the model's 1 m floor.
pub fn rma_nlos_intercept_db(carrier_ghz: f64, bs_height_m: f64, ue_height_m: f64) -> f64 {
    let w = RMA_STREET_WIDTH_M;
    let h = RMA_BUILDING_HEIGHT_M;
    161.04 - 7.1 * w.log10() + 7.5 * h.log10()
        - (24.37 - 3.7 * (h / bs_height_m).powi(2)) * bs_height_m.log10()
        + 20.0 * carrier_ghz.log10()
        - (3.2 * (11.75 * ue_height_m).log10().powi(2) - 4.97)
}

/// dB per decade of the rural-macro NLOS model.
pub fn rma_nlos_slope_db(bs_height_m: f64) -> f64 {
    43.42 - 3.1 * bs_height_m.log10()
}

pub fn free_space_1m_db(carrier_hz: f64) -> f64 {
    let wavelength = 299_792_458.0 / carrier_hz;
    20.0 * (4.0 * PI / wavelength).log10()
}

/// Resolved pathloss coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossModel {
    /// Median cellular loss at 1 km.
    pub cell_intercept_db: f64,
    pub cell_slope_db: f64,
    /// Median sidelink loss at 1 m.
    pub side_intercept_db: f64,
    pub side_slope_db: f64,
    pub side_min_distance_m: f64,
}

/// Median cellular pathloss; distances under 10 m are clamped.
pub fn cellular_pathloss(distance_m: f64, model: &PathlossModel) -> f64 {
    let d = distance_m.max(CELL_MIN_DISTANCE_M);
    model.cell_intercept_db + model.cell_slope_db * (d / 1000.0).log10()
}

/// Median sidelink pathloss, log-distance from a 1 m reference.
pub fn sidelink_pathloss(distance_m: f64, model: &PathlossModel) -> f64 {
    let d = distance_m.max(model.side_min_distance_m);
    model.side_intercept_db + model.side_slope_db * d.log10()
}

pub fn noise_floor_dbm(config: &ChannelConfig) -> f64 {
    config.noise_density_dbm_hz + 10.0 * config.bandwidth_hz.log10() + config.noise_figure_db
}

/// Transmit power that reaches `target_snr_db`, capped at `max_tx_dbm`.
pub fn open_loop_power(target_snr_db: f64, pathloss_db: f64, config: &ChannelConfig) -> f64 {
    let required =
        target_snr_db + noise_floor_dbm(config) + pathloss_db - config.antenna_gain_db;
    required.min(config.max_tx_dbm)
}

pub fn achieved_snr(tx_dbm: f64, pathloss_db: f64, config: &ChannelConfig) -> f64 {
    tx_dbm - pathloss_db + config.antenna_gain_db - noise_floor_dbm(config)
}

/// Seconds needed to send `payload_bits` at the given efficiency.
pub fn tx_duration(payload_bits: f64, spectral_eff: f64, bandwidth_hz: f64) -> f64 {
    payload_bits / (spectral_eff * bandwidth_hz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub min_snr_db: f64,
    pub spectral_eff_bps_hz: f64,
}

/// Discrete link-adaptation table, strictly ascending in both columns.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self, ConfigError> {
        if entries.is_empty() {
            return Err(ConfigError::invalid("MCS table is empty"));
        }
        for (i, w) in entries.windows(2).enumerate() {
            if !(w[1].min_snr_db > w[0].min_snr_db
                && w[1].spectral_eff_bps_hz > w[0].spectral_eff_bps_hz)
            {
                return Err(ConfigError::McsTable {
                    line: i + 2,
                    reason: "entries must be strictly increasing in both columns".into(),
                });
            }
        }
        if entries
            .iter()
            .any(|e| !e.min_snr_db.is_finite() || !(e.spectral_eff_bps_hz > 0.0))
        {
            return Err(ConfigError::invalid("MCS efficiencies must be positive and finite"));
        }
        Ok(McsTable { entries })
    }

    /// Parses `min_snr_db,spectral_eff` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| ConfigError::McsTable {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| bad("expected `min_snr_db,spectral_eff`"))?;
            let min_snr_db = a.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?;
            let spectral_eff_bps_hz = b.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?;
            entries.push(McsEntry {
                min_snr_db,
                spectral_eff_bps_hz,
            });
        }
        McsTable::new(entries)
    }

    pub fn default_table() -> Self {
        McsTable::parse(DEFAULT_MCS_TABLE).expect("bundled MCS table is valid")
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lowest(&self) -> McsEntry {
        self.entries[0]
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{},{}\n", e.min_snr_db, e.spectral_eff_bps_hz))
            .collect()
    }
}

/// Efficiency of the highest entry whose threshold is at or below `snr_db`;
/// `None` means outage.
pub fn select_mcs(snr_db: f64, table: &McsTable) -> Option<f64> {
    let idx = table.entries.partition_point(|e| e.min_snr_db <= snr_db);
    idx.checked_sub(1).map(|i| table.entries[i].spectral_eff_bps_hz)
}

/// Cached budget of one static link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    /// Median pathloss plus the link's frozen shadowing draw.
    pub pathloss_db: f64,
    pub tx_power_dbm: f64,
    pub snr_db: f64,
    pub spectral_eff_bps_hz: Option<f64>,
    /// Airtime of one payload, present iff an MCS was selected.
    pub tx_duration_s: Option<f64>,
}

impl LinkState {
    /// Power-controls the link towards `target_snr_db` and picks its MCS.
    pub fn evaluate(
        pathloss_db: f64,
        target_snr_db: f64,
        config: &ChannelConfig,
        table: &McsTable,
        payload_bits: f64,
    ) -> LinkState {
        let tx_power_dbm = open_loop_power(target_snr_db, pathloss_db, config);
        let snr_db = achieved_snr(tx_power_dbm, pathloss_db, config);
        let spectral_eff_bps_hz = select_mcs(snr_db, table);
        let tx_duration_s =
            spectral_eff_bps_hz.map(|eff| tx_duration(payload_bits, eff, config.bandwidth_hz));
        LinkState {
            pathloss_db,
            tx_power_dbm,
            snr_db,
            spectral_eff_bps_hz,
            tx_duration_s,
        }
    }

    pub fn in_outage(&self) -> bool {
        self.spectral_eff_bps_hz.is_none()
    }
}

/// SNR a link would see at full transmit power: the quality figure used for
/// coverage and relay eligibility.
pub fn snr_at_max_power(pathloss_db: f64, config: &ChannelConfig) -> f64 {
    achieved_snr(config.max_tx_dbm, pathloss_db, config)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_open(bits: u64) -> f64 {
    // 53 random bits mapped into (0, 1).
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Frozen standard-normal draw for the unordered pair `{a, b}`.
///
/// Derived by hashing rather than from a sequential stream, so any pair can
/// be queried in any order and always gets the same value for a given seed.
pub fn pair_standard_normal(seed: u64, a: SensorId, b: SensorId) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let key = (u64::from(lo) << 32) | u64::from(hi);
    let h1 = splitmix64(splitmix64(seed ^ 0xD2D0_5EED_0000_0003) ^ key);
    let h2 = splitmix64(h1);
    let u1 = unit_open(h1);
    let u2 = unit_open(h2);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}
