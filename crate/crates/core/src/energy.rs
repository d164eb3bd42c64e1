//! Joule accounting: per-event energies, per-day energy by role, and
//! battery-life projection.

use crate::channel::{tx_duration, LinkState};
use crate::scenario::{PowerProfile, TransmissionMode, SECONDS_PER_DAY};
use crate::signaling::{AllocationMode, SignalingConfig};

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Energy of one transmission: PA draw plus circuit power over the airtime.
pub fn tx_energy(tx_dbm: f64, duration_s: f64, profile: &PowerProfile) -> f64 {
    (dbm_to_mw(tx_dbm) / profile.pa_efficiency + profile.circuit_mw) * duration_s / 1000.0
}

pub fn rx_energy(duration_s: f64, profile: &PowerProfile) -> f64 {
    profile.p_rx_mw * duration_s / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedEventEnergies {
    pub cp_j: f64,
    pub sync_j: f64,
    pub paging_j: f64,
    pub rx_per_second_j: f64,
}

pub fn fixed_event_energies(profile: &PowerProfile) -> FixedEventEnergies {
    FixedEventEnergies {
        cp_j: profile.p_cp_mw * profile.t_cp_s / 1000.0,
        sync_j: profile.p_clock_mw * profile.t_clock_s / 1000.0,
        paging_j: profile.p_paging_mw * profile.t_paging_s / 1000.0,
        rx_per_second_j: profile.p_rx_mw / 1000.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DailyEnergyBreakdown {
    pub tx_j: f64,
    pub rx_j: f64,
    pub cp_j: f64,
    pub sync_j: f64,
    pub paging_j: f64,
    pub sleep_j: f64,
    pub signaling_j: f64,
    pub total_j: f64,
}

impl DailyEnergyBreakdown {
    fn with_total(mut self) -> Self {
        self.total_j = self.tx_j
            + self.rx_j
            + self.cp_j
            + self.sync_j
            + self.paging_j
            + self.sleep_j
            + self.signaling_j;
        self
    }

    /// Energy spent in report-cycle messages (excludes sync, paging, sleep).
    pub fn message_j(&self) -> f64 {
        self.tx_j + self.rx_j + self.cp_j + self.signaling_j
    }
}

/// Per-cycle energy and airtime of one role, before scaling to a day.
#[derive(Debug, Clone, Copy, Default)]
struct Cycle {
    tx_j: f64,
    rx_j: f64,
    cp_j: f64,
    sync_j: f64,
    signaling_j: f64,
    active_s: f64,
}

/// Everything needed to turn links into daily energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub profile: PowerProfile,
    pub signaling: SignalingConfig,
    pub bandwidth_hz: f64,
    pub payload_bits: f64,
    pub reports_per_day: u32,
}

impl EnergyModel {
    fn airtime(&self, bits: f64, link: &LinkState) -> f64 {
        let eff = link
            .spectral_eff_bps_hz
            .expect("energy requested for a link in outage");
        tx_duration(bits, eff, self.bandwidth_hz)
    }

    fn fixed(&self) -> FixedEventEnergies {
        fixed_event_energies(&self.profile)
    }

    /// Bits of the relay's aggregated uplink carrying `n_remotes` reports.
    pub fn aggregate_bits(&self, n_remotes: usize) -> f64 {
        self.payload_bits * (1.0 + self.signaling.aggregation_ratio * n_remotes as f64)
    }

    fn cellular_cycle(&self, own: &LinkState, remotes: &[LinkState]) -> Cycle {
        let p = &self.profile;
        let f = self.fixed();
        let mut c = Cycle {
            cp_j: f.cp_j,
            sync_j: f.sync_j,
            active_s: p.t_cp_s + p.t_clock_s,
            ..Cycle::default()
        };
        let sig = &self.signaling;
        for r in remotes {
            let data = self.airtime(self.payload_bits, r);
            let ack = self.airtime(sig.ack_bits, r);
            c.rx_j += rx_energy(data, p);
            c.signaling_j += tx_energy(r.tx_power_dbm, ack, p);
            c.active_s += data + ack;
            if sig.allocation_mode == AllocationMode::RandomAccess {
                let preamble = self.airtime(sig.ack_bits, r);
                let grant = self.airtime(sig.grant_bits, r);
                c.signaling_j += rx_energy(preamble, p) + tx_energy(r.tx_power_dbm, grant, p);
                c.active_s += preamble + grant;
            }
        }
        let up = self.airtime(self.aggregate_bits(remotes.len()), own);
        c.tx_j = tx_energy(own.tx_power_dbm, up, p);
        c.active_s += up;
        c
    }

    fn sidelink_cycle(&self, own: &LinkState) -> Cycle {
        let p = &self.profile;
        let sig = &self.signaling;
        let data = self.airtime(self.payload_bits, own);
        let ack = self.airtime(sig.ack_bits, own);
        let mut c = Cycle {
            sync_j: self.fixed().sync_j,
            tx_j: tx_energy(own.tx_power_dbm, data, p),
            signaling_j: rx_energy(ack, p),
            active_s: p.t_clock_s + data + ack,
            ..Cycle::default()
        };
        if sig.allocation_mode == AllocationMode::RandomAccess {
            let preamble = self.airtime(sig.ack_bits, own);
            let grant = self.airtime(sig.grant_bits, own);
            c.signaling_j += tx_energy(own.tx_power_dbm, preamble, p) + rx_energy(grant, p);
            c.active_s += preamble + grant;
        }
        c
    }

    /// Daily energy of a node acting in `role`.
    ///
    /// `own_link` is the cellular link for Cellular and Relay and the sidelink
    /// to the serving relay for Sidelink; it is ignored for Unserved.
    /// `remote_links` are the sidelinks of a relay's attached remotes.
    pub fn daily_energy(
        &self,
        role: TransmissionMode,
        own_link: &LinkState,
        remote_links: &[LinkState],
    ) -> DailyEnergyBreakdown {
        let cycle = match role {
            TransmissionMode::Cellular => self.cellular_cycle(own_link, &[]),
            TransmissionMode::Relay => self.cellular_cycle(own_link, remote_links),
            TransmissionMode::Sidelink => self.sidelink_cycle(own_link),
            TransmissionMode::Unserved => Cycle::default(),
        };
        self.scale_to_day(cycle)
    }

    /// Paging plus sleep only.
    pub fn idle_daily_energy(&self) -> DailyEnergyBreakdown {
        self.scale_to_day(Cycle::default())
    }

    fn scale_to_day(&self, c: Cycle) -> DailyEnergyBreakdown {
        let p = &self.profile;
        let n = f64::from(self.reports_per_day);
        let drx = f64::from(p.drx_per_day);
        let active_s = n * c.active_s + drx * p.t_paging_s;
        DailyEnergyBreakdown {
            tx_j: n * c.tx_j,
            rx_j: n * c.rx_j,
            cp_j: n * c.cp_j,
            sync_j: n * c.sync_j,
            paging_j: drx * self.fixed().paging_j,
            sleep_j: p.p_sleep_mw * (SECONDS_PER_DAY - active_s).max(0.0) / 1000.0,
            signaling_j: n * c.signaling_j,
            total_j: 0.0,
        }
        .with_total()
    }
}

/// Adds extra signaling energy (one-off procedures) to a breakdown.
pub fn with_extra_signaling(b: DailyEnergyBreakdown, extra_j: f64) -> DailyEnergyBreakdown {
    DailyEnergyBreakdown {
        signaling_j: b.signaling_j + extra_j,
        ..b
    }
    .with_total()
}

/// Days a battery lasts at a constant daily drain; infinite for zero drain.
pub fn projected_life_days(battery_j: f64, daily_j: f64) -> f64 {
    if daily_j <= 0.0 {
        f64::INFINITY
    } else {
        battery_j / daily_j
    }
}
