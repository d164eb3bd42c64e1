//! Oracles and checks shared by the property, CLI and acceptance suites.
//! Each check returns `Err` with a description of the first violation.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use mmtc_sim::channel::{achieved_snr, open_loop_power, select_mcs, ChannelConfig, LinkState, McsTable};
use mmtc_sim::clustering::{kmeans_angular, AngularPoint};
use mmtc_sim::energy::{fixed_event_energies, EnergyModel, FixedEventEnergies};
use mmtc_sim::scenario::{CoverageClass, PowerProfile, SensorId, TransmissionMode};
use mmtc_sim::signaling::{
    run_attachment, run_report_cycle, run_tm_update, AllocationMode, Associations, AttachDecision,
    Endpoint, MessageKind, Outcome, PairCandidate, ProcedureEnv, Reconfiguration, RelayPairing,
    SignalingConfig, SignalingTranscript,
};
use mmtc_sim::{SimConfig, SimulationResult};

pub type Check = Result<(), String>;

/// Default configuration scaled down to `n` sensors.
pub fn scaled_config(n: u32, seed: u64, horizon_days: u32) -> SimConfig {
    let mut c = SimConfig::default();
    c.scenario.n_sensors = n;
    c.scenario.rng_seed = seed;
    c.scenario.n_clusters = c.scenario.n_clusters.min(n);
    c.horizon_days = horizon_days;
    c
}

pub fn energy_model(mode: AllocationMode, ratio: f64, payload: f64, reports: u32) -> EnergyModel {
    EnergyModel {
        profile: PowerProfile::default(),
        signaling: SignalingConfig {
            allocation_mode: mode,
            aggregation_ratio: ratio,
            ..SignalingConfig::default()
        },
        bandwidth_hz: 180e3,
        payload_bits: payload,
        reports_per_day: reports,
    }
}

/// A power-controlled link at the default channel with a 1000-bit payload.
pub fn link(pl: f64, target: f64) -> LinkState {
    LinkState::evaluate(pl, target, &ChannelConfig::default(), &McsTable::default_table(), 1000.0)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Energy: enumerate every event of a day and integrate power over time.

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub mw: f64,
    pub s: f64,
}

fn pa_draw_mw(model: &EnergyModel, dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / model.profile.pa_efficiency + model.profile.circuit_mw
}

fn air(model: &EnergyModel, bits: f64, link: &LinkState) -> f64 {
    bits / (link.spectral_eff_bps_hz.expect("link in service") * model.bandwidth_hz)
}

/// Every energy-consuming event of one day, sleep excluded.
pub fn day_events(
    model: &EnergyModel,
    role: TransmissionMode,
    own: &LinkState,
    remotes: &[LinkState],
) -> Vec<Event> {
    let p = &model.profile;
    let sig = &model.signaling;
    let ra = sig.allocation_mode == AllocationMode::RandomAccess;
    let mut ev = Vec::new();
    for _ in 0..model.reports_per_day {
        match role {
            TransmissionMode::Cellular | TransmissionMode::Relay => {
                let served: &[LinkState] = if role == TransmissionMode::Relay { remotes } else { &[] };
                ev.push(Event { mw: p.p_cp_mw, s: p.t_cp_s });
                ev.push(Event { mw: p.p_clock_mw, s: p.t_clock_s });
                for r in served {
                    if ra {
                        ev.push(Event { mw: p.p_rx_mw, s: air(model, sig.ack_bits, r) });
                        ev.push(Event { mw: pa_draw_mw(model, r.tx_power_dbm), s: air(model, sig.grant_bits, r) });
                    }
                    ev.push(Event { mw: p.p_rx_mw, s: air(model, model.payload_bits, r) });
                    ev.push(Event { mw: pa_draw_mw(model, r.tx_power_dbm), s: air(model, sig.ack_bits, r) });
                }
                let bits = model.payload_bits * (1.0 + sig.aggregation_ratio * served.len() as f64);
                ev.push(Event { mw: pa_draw_mw(model, own.tx_power_dbm), s: air(model, bits, own) });
            }
            TransmissionMode::Sidelink => {
                ev.push(Event { mw: p.p_clock_mw, s: p.t_clock_s });
                if ra {
                    ev.push(Event { mw: pa_draw_mw(model, own.tx_power_dbm), s: air(model, sig.ack_bits, own) });
                    ev.push(Event { mw: p.p_rx_mw, s: air(model, sig.grant_bits, own) });
                }
                ev.push(Event { mw: pa_draw_mw(model, own.tx_power_dbm), s: air(model, model.payload_bits, own) });
                ev.push(Event { mw: p.p_rx_mw, s: air(model, sig.ack_bits, own) });
            }
            TransmissionMode::Unserved => {}
        }
    }
    for _ in 0..p.drx_per_day {
        ev.push(Event { mw: p.p_paging_mw, s: p.t_paging_s });
    }
    ev
}

/// Joules per day: events plus deep sleep for the rest of the day.
pub fn oracle_daily_j(model: &EnergyModel, role: TransmissionMode, own: &LinkState, remotes: &[LinkState]) -> f64 {
    let ev = day_events(model, role, own, remotes);
    let busy: f64 = ev.iter().map(|e| e.s).sum();
    let active_mj: f64 = ev.iter().map(|e| e.mw * e.s).sum();
    (active_mj + model.profile.p_sleep_mw * (86_400.0 - busy).max(0.0)) / 1000.0
}

pub fn check_energy_oracle(
    model: &EnergyModel,
    role: TransmissionMode,
    own: &LinkState,
    remotes: &[LinkState],
) -> Check {
    let got = model.daily_energy(role, own, remotes).total_j;
    let want = oracle_daily_j(model, role, own, remotes);
    if rel_diff(got, want) <= 1e-9 {
        Ok(())
    } else {
        Err(format!("{role:?} with {} remotes: {got} J vs oracle {want} J", remotes.len()))
    }
}

// ---------------------------------------------------------------------------
// Link budget.

fn noise_floor_oracle(cfg: &ChannelConfig) -> f64 {
    cfg.noise_density_dbm_hz + 10.0 * cfg.bandwidth_hz.log10() + cfg.noise_figure_db
}

/// Transmit power reaches the target exactly unless capped, and a capped
/// link falls short of it.
pub fn check_power_control(cfg: &ChannelConfig, target_db: f64, pl_db: f64) -> Check {
    let p = open_loop_power(target_db, pl_db, cfg);
    let required = target_db + noise_floor_oracle(cfg) + pl_db - cfg.antenna_gain_db;
    let snr = achieved_snr(p, pl_db, cfg);
    if required <= cfg.max_tx_dbm {
        if (p - required).abs() > 1e-9 || (snr - target_db).abs() > 1e-9 {
            return Err(format!("pl {pl_db}: power {p} vs {required}, snr {snr} vs {target_db}"));
        }
    } else if p != cfg.max_tx_dbm || snr >= target_db {
        return Err(format!("pl {pl_db}: capped power {p}, snr {snr} for target {target_db}"));
    }
    Ok(())
}

/// A link is in outage exactly when no MCS entry fits its SNR; otherwise it
/// uses the highest entry whose threshold it clears.
pub fn check_outage_mcs(cfg: &ChannelConfig, table: &McsTable, target_db: f64, pl_db: f64) -> Check {
    let link = LinkState::evaluate(pl_db, target_db, cfg, table, 1000.0);
    let fitting = table
        .entries()
        .iter()
        .filter(|e| e.min_snr_db <= link.snr_db)
        .map(|e| e.spectral_eff_bps_hz)
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    if link.in_outage() != fitting.is_none() {
        return Err(format!("pl {pl_db}: outage {} but fitting entry {fitting:?}", link.in_outage()));
    }
    if link.in_outage() != (link.snr_db < table.lowest().min_snr_db) {
        return Err(format!("pl {pl_db}: outage flag disagrees with the lowest threshold"));
    }
    if link.spectral_eff_bps_hz != fitting || select_mcs(link.snr_db, table) != fitting {
        return Err(format!("pl {pl_db}: efficiency {:?} vs {fitting:?}", link.spectral_eff_bps_hz));
    }
    if let Some(eff) = fitting {
        let want = 1000.0 / (eff * cfg.bandwidth_hz);
        if link.tx_duration_s.is_none_or(|d| rel_diff(d, want) > 1e-12) {
            return Err(format!("pl {pl_db}: duration {:?} vs {want}", link.tx_duration_s));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulation-level invariants.

/// Every nanojoule leaving a battery is booked, and only empty batteries
/// belong to dead sensors.
pub fn check_ledger(r: &SimulationResult) -> Check {
    for (i, rec) in r.records.iter().enumerate() {
        let (init, fin, drained) = (r.initial_battery_nj[i], r.final_battery_nj[i], r.drained_nj[i]);
        if init.checked_sub(fin) != Some(drained) {
            return Err(format!("{:?} sensor {i}: {init} - {fin} != {drained}", r.scheme));
        }
        if (fin == 0) != rec.death_day.is_some() {
            return Err(format!("{:?} sensor {i}: battery {fin} nJ, death {:?}", r.scheme, rec.death_day));
        }
        if !(0.0..=f64::from(r.horizon_days)).contains(&rec.served_days) {
            return Err(format!("{:?} sensor {i}: served {} days", r.scheme, rec.served_days));
        }
    }
    Ok(())
}

/// Unserved(context) ⊆ Unserved(R13) ⊆ Unserved(R12) after day-1 selection.
/// Every sensor unserved on day 1 under `a` is also unserved under `b`.
pub fn check_unserved_subset(a: &SimulationResult, b: &SimulationResult) -> Check {
    let set = |r: &SimulationResult| r.day1_unserved.iter().copied().collect::<BTreeSet<SensorId>>();
    match set(a).difference(&set(b)).next() {
        Some(x) => Err(format!("sensor {x} unserved under {:?} but not {:?}", a.scheme, b.scheme)),
        None => Ok(()),
    }
}

pub fn check_availability_ordering(r12: &SimulationResult, r13: &SimulationResult, ca: &SimulationResult) -> Check {
    let set = |r: &SimulationResult| r.day1_unserved.iter().copied().collect::<BTreeSet<SensorId>>();
    let (a, b, c) = (set(ca), set(r13), set(r12));
    if let Some(x) = a.difference(&b).next() {
        return Err(format!("sensor {x} unserved under context but not R13"));
    }
    if let Some(x) = b.difference(&c).next() {
        return Err(format!("sensor {x} unserved under R13 but not R12"));
    }
    Ok(())
}

/// One parsed trace line.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub t: f64,
    pub kind: String,
    pub from: String,
    pub to: String,
    pub bits: f64,
    pub ids: Vec<SensorId>,
}

pub fn parse_trace_line(line: &str) -> Option<TraceLine> {
    let mut it = line.split_whitespace();
    let t = it.next()?.strip_prefix("t=")?.parse().ok()?;
    let kind = it.next()?.to_string();
    let (from, to) = it.next()?.split_once("->")?;
    let bits = it.next()?.strip_prefix("bits=")?.parse().ok()?;
    let ids = it.next()?.strip_prefix("ids=[")?.strip_suffix(']')?;
    let ids = if ids.is_empty() {
        Vec::new()
    } else {
        ids.split(',').map(|s| s.parse().ok()).collect::<Option<Vec<_>>>()?
    };
    Some(TraceLine { t, kind, from: from.into(), to: to.into(), bits, ids })
}

/// After a rejected discovery, the pair is never announced again.
/// Returns the number of rejections seen.
pub fn check_blacklist_non_reuse(trace: &[String]) -> Result<usize, String> {
    let mut rejected: BTreeSet<(SensorId, SensorId)> = BTreeSet::new();
    let key = |a: SensorId, b: SensorId| (a.min(b), a.max(b));
    for line in trace.iter().filter(|l| !l.starts_with('#')) {
        let m = parse_trace_line(line).ok_or_else(|| format!("unparsable trace line: {line}"))?;
        match m.kind.as_str() {
            "DiscoveryNack" => {
                let remote: SensorId = m.from.parse().map_err(|_| line.clone())?;
                let relay: SensorId = m.to.parse().map_err(|_| line.clone())?;
                rejected.insert(key(remote, relay));
            }
            "DiscoveryAnnounce" => {
                let relay = m.ids[0];
                for &target in &m.ids[1..] {
                    if rejected.contains(&key(relay, target)) {
                        return Err(format!("blacklisted pair re-announced: {line}"));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(rejected.len())
}

// ---------------------------------------------------------------------------
// Signaling grammar.

fn node(id: SensorId) -> Endpoint {
    Endpoint::Node(id)
}

fn expect(t: &SignalingTranscript, i: usize, kind: MessageKind, from: Endpoint, to: Endpoint) -> Check {
    let e = t
        .entries
        .get(i)
        .ok_or_else(|| format!("transcript ends before message {i} ({kind:?})"))?;
    if e.message.kind != kind || e.message.from != from || e.message.to != to {
        return Err(format!(
            "message {i}: got {:?} {}->{}, expected {kind:?} {from}->{to}",
            e.message.kind, e.message.from, e.message.to
        ));
    }
    Ok(())
}

/// Timestamps never decrease, charges are finite and non-negative, and the
/// base station is never charged.
pub fn check_transcript_basics(t: &SignalingTranscript) -> Check {
    let mut last = f64::NEG_INFINITY;
    for (i, e) in t.entries.iter().enumerate() {
        if e.timestamp_s < last {
            return Err(format!("message {i} goes back in time"));
        }
        last = e.timestamp_s;
        if !(e.sender_j.is_finite() && e.sender_j >= 0.0 && e.receiver_j.is_finite() && e.receiver_j >= 0.0) {
            return Err(format!("message {i} has charges {} / {}", e.sender_j, e.receiver_j));
        }
        if e.message.from == Endpoint::Bs && e.sender_j != 0.0 {
            return Err(format!("message {i} charges the base station"));
        }
    }
    Ok(())
}

/// Discovery, per-remote Ack/Nack, security for new pairs, result forward,
/// starting at entry `start`. Returns the index after the forward.
fn check_pairing_block(
    t: &SignalingTranscript,
    start: usize,
    pairing: &RelayPairing,
    assoc_before: &Associations,
    admission_pl_db: f64,
) -> Result<usize, String> {
    let relay = pairing.relay;
    let targets: Vec<SensorId> = pairing.remotes.iter().map(|r| r.remote).collect();
    expect(t, start, MessageKind::DiscoveryAnnounce, node(relay), Endpoint::Broadcast)?;
    let mut ids = vec![relay];
    ids.extend(&targets);
    if t.entries[start].message.carried_ids != ids {
        return Err("announcement does not carry relay and targets".into());
    }
    let mut i = start + 1;
    let mut acked = Vec::new();
    let mut nacked = Vec::new();
    for cand in &pairing.remotes {
        let ok = !cand.sidelink.in_outage() && cand.sidelink.pathloss_db <= admission_pl_db;
        let kind = if ok { MessageKind::DiscoveryAck } else { MessageKind::DiscoveryNack };
        expect(t, i, kind, node(cand.remote), node(relay))?;
        if ok {
            acked.push(cand.remote);
        } else {
            nacked.push((relay, cand.remote));
        }
        i += 1;
    }
    for &r in &acked {
        if !assoc_before.contains(relay, r) {
            expect(t, i, MessageKind::SecurityExchange, node(relay), node(r))?;
            expect(t, i + 1, MessageKind::SecurityExchange, node(r), node(relay))?;
            i += 2;
        }
    }
    expect(t, i, MessageKind::ResultForward, node(relay), Endpoint::Bs)?;
    if t.entries[i].message.carried_ids != targets {
        return Err("result forward does not carry the targets".into());
    }
    if t.accepted != acked {
        return Err(format!("accepted {:?}, expected {acked:?}", t.accepted));
    }
    if t.rejected != nacked {
        return Err(format!("rejected {:?}, expected {nacked:?}", t.rejected));
    }
    Ok(i + 1)
}

pub fn check_attachment(
    id: SensorId,
    decision: &AttachDecision,
    t: &SignalingTranscript,
    assoc_before: &Associations,
    admission_pl_db: f64,
) -> Check {
    check_transcript_basics(t)?;
    expect(t, 0, MessageKind::SSib, Endpoint::Bs, node(id))?;
    expect(t, 1, MessageKind::ContextReport, node(id), Endpoint::Bs)?;
    expect(t, 2, MessageKind::TmConfig, Endpoint::Bs, node(id))?;
    let end = match decision {
        AttachDecision::Sidelink { pairing } => {
            let end = check_pairing_block(t, 3, pairing, assoc_before, admission_pl_db)?;
            let want = if t.rejected.is_empty() {
                Outcome::Established
            } else {
                match pairing.remotes.iter().find(|r| r.remote == id).map(|r| r.coverage) {
                    Some(CoverageClass::OutOfCoverage) => Outcome::Failed,
                    _ => Outcome::FallbackCellular,
                }
            };
            if t.outcome != want {
                return Err(format!("outcome {:?}, expected {want:?}", t.outcome));
            }
            end
        }
        _ => {
            if t.outcome != Outcome::Established {
                return Err(format!("outcome {:?} for a direct attachment", t.outcome));
            }
            3
        }
    };
    if t.entries.len() != end {
        return Err(format!("{} trailing messages", t.entries.len() - end));
    }
    Ok(())
}

/// One transcript per pairing, then one per remaining reconfigured sensor.
pub fn check_tm_update(
    reconfigured: &[Reconfiguration],
    pairings: &[RelayPairing],
    transcripts: &[SignalingTranscript],
    assoc_before: &Associations,
    admission_pl_db: f64,
) -> Check {
    let mut in_pairing = BTreeSet::new();
    for p in pairings {
        in_pairing.insert(p.relay);
        in_pairing.extend(p.remotes.iter().map(|r| r.remote));
    }
    let others: Vec<&Reconfiguration> = reconfigured.iter().filter(|r| !in_pairing.contains(&r.node)).collect();
    if transcripts.len() != pairings.len() + others.len() {
        return Err(format!("{} transcripts for {} pairings and {} others", transcripts.len(), pairings.len(), others.len()));
    }
    // Associations established by earlier pairings in the same round count.
    let mut assoc = assoc_before.clone();
    for (p, t) in pairings.iter().zip(transcripts) {
        check_transcript_basics(t)?;
        let mut i = 0;
        for id in std::iter::once(p.relay).chain(p.remotes.iter().map(|r| r.remote)) {
            if let Some(r) = reconfigured.iter().find(|r| r.node == id) {
                expect(t, i, MessageKind::Page, Endpoint::Bs, node(id))?;
                expect(t, i + 1, MessageKind::TmConfig, Endpoint::Bs, node(id))?;
                if t.entries[i + 1].message.carried_ids != r.counterparts {
                    return Err(format!("TmConfig for {id} lists the wrong counterparts"));
                }
                i += 2;
            }
        }
        let end = check_pairing_block(t, i, p, &assoc, admission_pl_db)?;
        if t.entries.len() != end {
            return Err("trailing messages after result forward".into());
        }
        for &r in &t.accepted {
            assoc.insert(p.relay, r);
        }
    }
    for (r, t) in others.iter().zip(&transcripts[pairings.len()..]) {
        check_transcript_basics(t)?;
        expect(t, 0, MessageKind::Page, Endpoint::Bs, node(r.node))?;
        expect(t, 1, MessageKind::TmConfig, Endpoint::Bs, node(r.node))?;
        if t.entries.len() != 2 {
            return Err("extra messages for a plain reconfiguration".into());
        }
    }
    Ok(())
}

/// A delivered report cycle: per-remote exchange, then exactly one relay
/// uplink carrying one control-plane setup, then the downlink Ack.
pub fn check_report_cycle(
    relay: SensorId,
    remotes: &[(SensorId, LinkState)],
    t: &SignalingTranscript,
    model: &EnergyModel,
    relay_cellular: &LinkState,
    fixed: &FixedEventEnergies,
) -> Check {
    check_transcript_basics(t)?;
    if t.outcome != Outcome::Delivered {
        return Err(format!("outcome {:?}", t.outcome));
    }
    let ra = model.signaling.allocation_mode == AllocationMode::RandomAccess;
    let mut i = 0;
    for &(r, _) in remotes {
        if ra {
            expect(t, i, MessageKind::RaPreamble, node(r), node(relay))?;
            expect(t, i + 1, MessageKind::ResourceGrant, node(relay), node(r))?;
            i += 2;
        }
        expect(t, i, MessageKind::DataPacket, node(r), node(relay))?;
        expect(t, i + 1, MessageKind::Ack, node(relay), node(r))?;
        i += 2;
    }
    expect(t, i, MessageKind::AggregatedUplink, node(relay), Endpoint::Bs)?;
    expect(t, i + 1, MessageKind::Ack, Endpoint::Bs, node(relay))?;
    if t.entries.len() != i + 2 {
        return Err("trailing messages".into());
    }
    let uplinks: Vec<_> = t.entries.iter().filter(|e| e.message.to == Endpoint::Bs).collect();
    if uplinks.len() != 1 {
        return Err(format!("{} uplinks in one cycle", uplinks.len()));
    }
    let bits = model.payload_bits * (1.0 + model.signaling.aggregation_ratio * remotes.len() as f64);
    let tx_j = pa_draw_mw(model, relay_cellular.tx_power_dbm) * air(model, bits, relay_cellular) / 1000.0;
    let cp_charged = uplinks[0].sender_j - tx_j;
    if (cp_charged - fixed.cp_j).abs() > 1e-12 {
        return Err(format!("uplink carries {cp_charged} J of setup, expected one CP of {} J", fixed.cp_j));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Clustering: exhaustive search on a small instance.

/// Within-cluster sum of squared circular distances to each circular mean.
fn spread(angles: &[f64], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<f64> = angles.iter().zip(labels).filter(|(_, &l)| l == c).map(|(a, _)| *a).collect();
        let (s, co) = members.iter().fold((0.0, 0.0), |(s, co), a| (s + a.sin(), co + a.cos()));
        let mean = s.atan2(co);
        total += members
            .iter()
            .map(|a| {
                let d = (a - mean).rem_euclid(TAU);
                d.min(TAU - d).powi(2)
            })
            .sum::<f64>();
    }
    total
}

/// All set partitions of `n` items into `k` nonempty blocks, as canonical
/// label strings.
fn partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn go(i: usize, used: usize, labels: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if i == labels.len() {
            if used == k {
                out.push(labels.clone());
            }
            return;
        }
        for l in 0..(used + 1).min(k) {
            labels[i] = l;
            go(i + 1, used.max(l + 1), labels, k, out);
        }
    }
    go(0, 0, &mut labels, k, &mut out);
    out
}

/// Eight sensors evenly spaced in angle, four clusters: the result must be
/// one of the exhaustive-search optima.
pub fn check_kmeans_brute_force() -> Check {
    let angles: Vec<f64> = (0..8).map(|i| f64::from(i) * PI / 4.0).collect();
    let all = partitions(8, 4);
    if all.len() != 1701 {
        return Err(format!("enumerated {} partitions", all.len()));
    }
    let best = all.iter().map(|l| spread(&angles, l, 4)).fold(f64::INFINITY, f64::min);
    let optima: Vec<&Vec<usize>> = all.iter().filter(|l| spread(&angles, l, 4) <= best + 1e-9).collect();
    let pts: Vec<AngularPoint> = angles
        .iter()
        .enumerate()
        .map(|(i, &a)| AngularPoint { id: i as SensorId, angle: a })
        .collect();
    let set = kmeans_angular(&pts, 4, 0).map_err(|e| e.to_string())?;
    let mut relabel = BTreeMap::new();
    let labels: Vec<usize> = (0..8)
        .map(|i| {
            let c = set.assignments[&i];
            let next = relabel.len();
            *relabel.entry(c).or_insert(next)
        })
        .collect();
    if optima.contains(&&labels) {
        Ok(())
    } else {
        Err(format!("labels {labels:?} are not among the {} optima", optima.len()))
    }
}

// ---------------------------------------------------------------------------
// Fuzz cases over the signaling procedures, shared by the proptests and the
// acceptance sweep.

fn procedure_parts() -> (EnergyModel, ChannelConfig, McsTable) {
    (
        energy_model(AllocationMode::SemiPersistent, 1.0, 1000.0, 576),
        ChannelConfig::default(),
        McsTable::default_table(),
    )
}

pub fn candidate(remote: SensorId, pl: f64, out: bool) -> PairCandidate {
    PairCandidate {
        remote,
        coverage: if out { CoverageClass::OutOfCoverage } else { CoverageClass::InCoverage },
        sidelink: link(pl, 10.0),
    }
}

/// Initial attachment of sensor 7 under decision `kind` (0 cellular, 1 relay,
/// 2 unserved, otherwise sidelink to sensor 3).
pub fn attachment_case(kind: u8, pl: f64, out: bool, known: bool, relay_pl: f64) -> Check {
    let (energy, channel, mcs) = procedure_parts();
    let env = ProcedureEnv { energy: &energy, channel: &channel, mcs: &mcs };
    let (id, relay) = (7, 3);
    let decision = match kind {
        0 => AttachDecision::Cellular { cluster_id: Some(1) },
        1 => AttachDecision::Relay { cluster_id: None },
        2 => AttachDecision::Unserved,
        _ => AttachDecision::Sidelink {
            pairing: RelayPairing {
                relay,
                relay_cellular: link(relay_pl, 3.0),
                cluster_id: Some(2),
                remotes: vec![candidate(id, pl, out)],
            },
        },
    };
    let mut assoc = Associations::default();
    if known {
        assoc.insert(id, relay);
    }
    let before = assoc.clone();
    let t = run_attachment(id, &decision, env, &mut assoc, 12.5);
    check_attachment(id, &decision, &t, &before, channel.admission_pl_db())
        .map_err(|e| format!("{e}\n{}", t.trace_lines().join("\n")))
}

/// A selection round: one relay per group with the group's `(pathloss,
/// out_of_coverage)` remotes, plus `extra` plain cellular/unserved changes.
/// `known[i % len]` marks remote `i` as already associated.
pub fn tm_update_case(groups: &[Vec<(f64, bool)>], extra: &[bool], known: &[bool]) -> Check {
    let (energy, channel, mcs) = procedure_parts();
    let env = ProcedureEnv { energy: &energy, channel: &channel, mcs: &mcs };
    let mut next: SensorId = 0;
    let mut fresh = || {
        next += 1;
        next
    };
    let mut pairings = Vec::new();
    let mut reconfigured = Vec::new();
    for g in groups {
        let relay = fresh();
        let remotes: Vec<PairCandidate> = g.iter().map(|&(pl, out)| candidate(fresh(), pl, out)).collect();
        reconfigured.push(Reconfiguration {
            node: relay,
            mode: TransmissionMode::Relay,
            cluster_id: Some(relay),
            counterparts: remotes.iter().map(|r| r.remote).collect(),
        });
        for r in &remotes {
            reconfigured.push(Reconfiguration {
                node: r.remote,
                mode: TransmissionMode::Sidelink,
                cluster_id: Some(relay),
                counterparts: vec![relay],
            });
        }
        pairings.push(RelayPairing { relay, relay_cellular: link(110.0, 3.0), cluster_id: Some(relay), remotes });
    }
    for &cell in extra {
        let mode = if cell { TransmissionMode::Cellular } else { TransmissionMode::Unserved };
        reconfigured.push(Reconfiguration { node: fresh(), mode, cluster_id: None, counterparts: vec![] });
    }
    let mut assoc = Associations::default();
    for p in &pairings {
        for r in &p.remotes {
            if !known.is_empty() && known[r.remote as usize % known.len()] {
                assoc.insert(p.relay, r.remote);
            }
        }
    }
    let before = assoc.clone();
    let ts = run_tm_update(&reconfigured, &pairings, env, &mut assoc, 86_400.0);
    check_tm_update(&reconfigured, &pairings, &ts, &before, channel.admission_pl_db())
}

/// One aggregated report cycle of relay 0 with remotes at pathlosses `pls`:
/// a single control-plane setup, and per-cycle charges that reconcile with
/// the daily accounting of both roles. `None` when a link is in outage.
pub fn report_cycle_case(mode: AllocationMode, relay_pl: f64, pls: &[f64]) -> Option<Check> {
    let (mut energy, channel, mcs) = procedure_parts();
    energy.signaling.allocation_mode = mode;
    let env = ProcedureEnv { energy: &energy, channel: &channel, mcs: &mcs };
    let cell = link(relay_pl, 3.0);
    let remotes: Vec<(SensorId, LinkState)> =
        pls.iter().enumerate().map(|(i, &pl)| (i as SensorId + 1, link(pl, 10.0))).collect();
    if cell.in_outage() || remotes.iter().any(|(_, l)| l.in_outage()) {
        return None;
    }
    let t = run_report_cycle(0, &cell, &remotes, 1e9, env, 0.0);
    Some((|| {
        check_report_cycle(0, &remotes, &t, &energy, &cell, &fixed_event_energies(&energy.profile))?;
        let links: Vec<LinkState> = remotes.iter().map(|r| r.1).collect();
        let n = f64::from(energy.reports_per_day);
        let relay_day = energy.daily_energy(TransmissionMode::Relay, &cell, &links).message_j();
        if rel_diff(t.energy_of(0) * n, relay_day) >= 1e-12 {
            return Err(format!("relay cycle {} x {n} != daily {relay_day}", t.energy_of(0)));
        }
        for (id, l) in &remotes {
            let day = energy.daily_energy(TransmissionMode::Sidelink, l, &[]).message_j();
            if rel_diff(t.energy_of(*id) * n, day) >= 1e-12 {
                return Err(format!("remote {id} cycle {} x {n} != daily {day}", t.energy_of(*id)));
            }
        }
        Ok(())
    })())
}
