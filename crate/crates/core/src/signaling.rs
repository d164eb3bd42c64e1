//! Signaling procedures as explicit message sequences: initial attachment,
//! transmission-mode update, and the sidelink report cycle.
//!
//! Every procedure returns a transcript of the messages exchanged with the
//! energy each one costs its sender and each receiver. Base-station energy
//! is never counted.

use std::collections::BTreeSet;
use std::fmt;

use crate::channel::{tx_duration, ChannelConfig, LinkState, McsTable};
use crate::energy::{fixed_event_energies, rx_energy, tx_energy, EnergyModel};
use crate::scenario::{CoverageClass, SensorId, TransmissionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationMode {
    SemiPersistent,
    RandomAccess,
}

impl AllocationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AllocationMode::SemiPersistent => "semi_persistent",
            AllocationMode::RandomAccess => "random_access",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "semi_persistent" => Some(AllocationMode::SemiPersistent),
            "random_access" => Some(AllocationMode::RandomAccess),
            _ => None,
        }
    }
}

/// Message sizes and report-cycle options.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingConfig {
    pub discovery_bits: f64,
    pub ack_bits: f64,
    pub grant_bits: f64,
    pub page_bits: f64,
    pub security_bits: f64,
    pub allocation_mode: AllocationMode,
    /// Size of each carried remote report relative to the payload.
    pub aggregation_ratio: f64,
}

impl Default for SignalingConfig {
    fn default() -> Self {
        SignalingConfig {
            discovery_bits: 200.0,
            ack_bits: 50.0,
            grant_bits: 100.0,
            page_bits: 100.0,
            security_bits: 256.0,
            allocation_mode: AllocationMode::SemiPersistent,
            aggregation_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    SSib,
    ContextReport,
    TmConfig,
    Page,
    DiscoveryAnnounce,
    DiscoveryAck,
    DiscoveryNack,
    SecurityExchange,
    ResultForward,
    RaPreamble,
    ResourceGrant,
    DataPacket,
    Ack,
    Nack,
    AggregatedUplink,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::SSib => "SSib",
            MessageKind::ContextReport => "ContextReport",
            MessageKind::TmConfig => "TmConfig",
            MessageKind::Page => "Page",
            MessageKind::DiscoveryAnnounce => "DiscoveryAnnounce",
            MessageKind::DiscoveryAck => "DiscoveryAck",
            MessageKind::DiscoveryNack => "DiscoveryNack",
            MessageKind::SecurityExchange => "SecurityExchange",
            MessageKind::ResultForward => "ResultForward",
            MessageKind::RaPreamble => "RaPreamble",
            MessageKind::ResourceGrant => "ResourceGrant",
            MessageKind::DataPacket => "DataPacket",
            MessageKind::Ack => "Ack",
            MessageKind::Nack => "Nack",
            MessageKind::AggregatedUplink => "AggregatedUplink",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Bs,
    Node(SensorId),
    /// Sidelink multicast; receivers are the message's carried ids other
    /// than the sender.
    Broadcast,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Bs => write!(f, "bs"),
            Endpoint::Node(id) => write!(f, "{id}"),
            Endpoint::Broadcast => write!(f, "*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalingMessage {
    pub kind: MessageKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub size_bits: f64,
    pub carried_ids: Vec<SensorId>,
    /// Virtual cluster announced in a TmConfig.
    pub cluster_id: Option<u32>,
}

impl SignalingMessage {
    /// Sensors charged the receive energy of this message.
    pub fn receiving_nodes(&self) -> Vec<SensorId> {
        match self.to {
            Endpoint::Bs => Vec::new(),
            Endpoint::Node(id) => vec![id],
            Endpoint::Broadcast => self
                .carried_ids
                .iter()
                .copied()
                .filter(|&id| Endpoint::Node(id) != self.from)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub timestamp_s: f64,
    pub message: SignalingMessage,
    pub sender_j: f64,
    /// Charged to each receiving sensor.
    pub receiver_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Established,
    FallbackCellular,
    Delivered,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalingTranscript {
    pub entries: Vec<TranscriptEntry>,
    pub outcome: Outcome,
    /// Remotes whose discovery was acknowledged.
    pub accepted: Vec<SensorId>,
    /// (relay, remote) pairs whose discovery was rejected.
    pub rejected: Vec<(SensorId, SensorId)>,
}

impl SignalingTranscript {
    fn new() -> Self {
        SignalingTranscript {
            entries: Vec::new(),
            outcome: Outcome::Established,
            accepted: Vec::new(),
            rejected: Vec::new(),
        }
    }

    pub fn kinds(&self) -> Vec<MessageKind> {
        self.entries.iter().map(|e| e.message.kind).collect()
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.entries.iter().filter(|e| e.message.kind == kind).count()
    }

    /// Energy charged to `node` across the transcript.
    pub fn energy_of(&self, node: SensorId) -> f64 {
        let mut total = 0.0;
        for e in &self.entries {
            if e.message.from == Endpoint::Node(node) {
                total += e.sender_j;
            }
            if e.message.receiving_nodes().contains(&node) {
                total += e.receiver_j;
            }
        }
        total
    }

    /// Adds every sensor's charge into `acc`, indexed by sensor id.
    pub fn charge_into(&self, acc: &mut [f64]) {
        for e in &self.entries {
            if let Endpoint::Node(id) = e.message.from {
                acc[id as usize] += e.sender_j;
            }
            for id in e.message.receiving_nodes() {
                acc[id as usize] += e.receiver_j;
            }
        }
    }

    /// One line per message in the trace format.
    pub fn trace_lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                let ids: Vec<String> = e.message.carried_ids.iter().map(|i| i.to_string()).collect();
                format!(
                    "t={:.6} {} {}->{} bits={} ids=[{}]",
                    e.timestamp_s,
                    e.message.kind.as_str(),
                    e.message.from,
                    e.message.to,
                    e.message.size_bits,
                    ids.join(",")
                )
            })
            .collect()
    }
}

/// Sidelink security contexts already established, by unordered pair.
/// A stored context lets a pair resume without a new exchange.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Associations(BTreeSet<(SensorId, SensorId)>);

impl Associations {
    fn key(a: SensorId, b: SensorId) -> (SensorId, SensorId) {
        (a.min(b), a.max(b))
    }

    pub fn contains(&self, a: SensorId, b: SensorId) -> bool {
        self.0.contains(&Self::key(a, b))
    }

    pub fn insert(&mut self, a: SensorId, b: SensorId) {
        self.0.insert(Self::key(a, b));
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Models and tables the procedures price their messages with.
#[derive(Debug, Clone, Copy)]
pub struct ProcedureEnv<'a> {
    pub energy: &'a EnergyModel,
    pub channel: &'a ChannelConfig,
    pub mcs: &'a McsTable,
}

/// A remote proposed for a relay, with its true sidelink.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCandidate {
    pub remote: SensorId,
    pub coverage: CoverageClass,
    pub sidelink: LinkState,
}

/// A relay and the remotes newly proposed to it.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayPairing {
    pub relay: SensorId,
    pub relay_cellular: LinkState,
    pub cluster_id: Option<u32>,
    pub remotes: Vec<PairCandidate>,
}

pub enum AttachDecision {
    Cellular { cluster_id: Option<u32> },
    Relay { cluster_id: Option<u32> },
    Unserved,
    Sidelink {
        pairing: RelayPairing,
    },
}

struct Recorder<'a> {
    env: ProcedureEnv<'a>,
    t: f64,
    transcript: SignalingTranscript,
}

impl<'a> Recorder<'a> {
    fn new(env: ProcedureEnv<'a>, t0: f64) -> Self {
        Recorder {
            env,
            t: t0,
            transcript: SignalingTranscript::new(),
        }
    }

    fn profile(&self) -> &crate::scenario::PowerProfile {
        &self.env.energy.profile
    }

    fn sig(&self) -> &SignalingConfig {
        &self.env.energy.signaling
    }

    fn airtime(&self, bits: f64, eff: f64) -> f64 {
        tx_duration(bits, eff, self.env.channel.bandwidth_hz)
    }

    fn lowest_eff(&self) -> f64 {
        self.env.mcs.lowest().spectral_eff_bps_hz
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        kind: MessageKind,
        from: Endpoint,
        to: Endpoint,
        size_bits: f64,
        carried_ids: Vec<SensorId>,
        cluster_id: Option<u32>,
        airtime_s: f64,
        sender_j: f64,
        receiver_j: f64,
    ) {
        self.transcript.entries.push(TranscriptEntry {
            timestamp_s: self.t,
            message: SignalingMessage {
                kind,
                from,
                to,
                size_bits,
                carried_ids,
                cluster_id,
            },
            sender_j,
            receiver_j,
        });
        self.t += airtime_s;
    }

    /// A sidelink message sent with the pair's power-controlled link. Links
    /// in outage fall back to full power at the most robust MCS.
    fn sidelink_msg(
        &mut self,
        kind: MessageKind,
        from: SensorId,
        to: SensorId,
        bits: f64,
        link: &LinkState,
        carried: Vec<SensorId>,
    ) {
        let (power, eff) = match link.spectral_eff_bps_hz {
            Some(eff) => (link.tx_power_dbm, eff),
            None => (self.env.channel.max_tx_dbm, self.lowest_eff()),
        };
        let dur = self.airtime(bits, eff);
        let s = tx_energy(power, dur, self.profile());
        let r = rx_energy(dur, self.profile());
        self.push(kind, Endpoint::Node(from), Endpoint::Node(to), bits, carried, None, dur, s, r);
    }

    fn ssib(&mut self, node: SensorId) {
        let sync = fixed_event_energies(self.profile()).sync_j;
        let dur = self.profile().t_clock_s;
        self.push(MessageKind::SSib, Endpoint::Bs, Endpoint::Node(node), 0.0, vec![], None, dur, 0.0, sync);
    }

    fn context_report(&mut self, node: SensorId) {
        // Submitted by installation equipment, not the sensor's radio.
        self.push(MessageKind::ContextReport, Endpoint::Node(node), Endpoint::Bs, 0.0, vec![node], None, 0.0, 0.0, 0.0);
    }

    fn page(&mut self, node: SensorId) {
        // Received in an already budgeted paging occasion.
        self.push(MessageKind::Page, Endpoint::Bs, Endpoint::Node(node), 0.0, vec![node], None, 0.0, 0.0, 0.0);
    }

    fn tm_config(&mut self, node: SensorId, cluster_id: Option<u32>, counterparts: Vec<SensorId>) {
        let bits = self.sig().page_bits;
        let dur = self.airtime(bits, self.lowest_eff());
        let r = rx_energy(dur, self.profile());
        self.push(MessageKind::TmConfig, Endpoint::Bs, Endpoint::Node(node), bits, counterparts, cluster_id, dur, 0.0, r);
    }

    fn announce(&mut self, relay: SensorId, targets: &[SensorId]) {
        let bits = self.sig().discovery_bits;
        let dur = self.airtime(bits, self.lowest_eff());
        let s = tx_energy(self.env.channel.max_tx_dbm, dur, self.profile());
        let r = rx_energy(dur, self.profile());
        let mut ids = vec![relay];
        ids.extend_from_slice(targets);
        self.push(MessageKind::DiscoveryAnnounce, Endpoint::Node(relay), Endpoint::Broadcast, bits, ids, None, dur, s, r);
    }

    fn result_forward(&mut self, relay: SensorId, relay_cell: &LinkState, carried: Vec<SensorId>) {
        let bits = self.sig().ack_bits * carried.len().max(1) as f64;
        let eff = relay_cell
            .spectral_eff_bps_hz
            .unwrap_or_else(|| self.lowest_eff());
        let dur = self.airtime(bits, eff);
        let cp = fixed_event_energies(self.profile()).cp_j;
        let s = cp + tx_energy(relay_cell.tx_power_dbm, dur, self.profile());
        self.push(MessageKind::ResultForward, Endpoint::Node(relay), Endpoint::Bs, bits, carried, None, dur, s, 0.0);
    }

    /// Discovery handshake and security setup for every proposed remote.
    fn pair_up(&mut self, pairing: &RelayPairing, assoc: &mut Associations) {
        let admission = self.env.channel.admission_pl_db();
        let targets: Vec<SensorId> = pairing.remotes.iter().map(|r| r.remote).collect();
        self.announce(pairing.relay, &targets);
        let mut acked = Vec::new();
        for cand in &pairing.remotes {
            let ok = !cand.sidelink.in_outage() && cand.sidelink.pathloss_db <= admission;
            let kind = if ok {
                MessageKind::DiscoveryAck
            } else {
                MessageKind::DiscoveryNack
            };
            let bits = self.sig().ack_bits;
            self.sidelink_msg(kind, cand.remote, pairing.relay, bits, &cand.sidelink, vec![cand.remote]);
            if ok {
                acked.push(cand);
            } else {
                self.transcript.rejected.push((pairing.relay, cand.remote));
            }
        }
        for cand in acked {
            if !assoc.contains(pairing.relay, cand.remote) {
                let bits = self.sig().security_bits;
                self.sidelink_msg(MessageKind::SecurityExchange, pairing.relay, cand.remote, bits, &cand.sidelink, vec![pairing.relay, cand.remote]);
                self.sidelink_msg(MessageKind::SecurityExchange, cand.remote, pairing.relay, bits, &cand.sidelink, vec![cand.remote, pairing.relay]);
                assoc.insert(pairing.relay, cand.remote);
            }
            self.transcript.accepted.push(cand.remote);
        }
        self.result_forward(pairing.relay, &pairing.relay_cellular, targets);
    }
}

/// Initial attachment of one freshly deployed sensor.
///
/// A sidelink decision runs discovery with the proposed relay; a rejected
/// pair is recorded in `rejected` and the outcome falls back to cellular,
/// or to `Failed` for a sensor without coverage.
pub fn run_attachment(
    node: SensorId,
    decision: &AttachDecision,
    env: ProcedureEnv<'_>,
    assoc: &mut Associations,
    t0: f64,
) -> SignalingTranscript {
    let mut rec = Recorder::new(env, t0);
    rec.ssib(node);
    rec.context_report(node);
    match decision {
        AttachDecision::Cellular { cluster_id } | AttachDecision::Relay { cluster_id } => {
            rec.tm_config(node, *cluster_id, vec![]);
        }
        AttachDecision::Unserved => rec.tm_config(node, None, vec![]),
        AttachDecision::Sidelink { pairing } => {
            rec.tm_config(node, pairing.cluster_id, vec![pairing.relay]);
            rec.pair_up(pairing, assoc);
            if !rec.transcript.rejected.is_empty() {
                let coverage = pairing
                    .remotes
                    .iter()
                    .find(|r| r.remote == node)
                    .map(|r| r.coverage)
                    .unwrap_or(CoverageClass::InCoverage);
                rec.transcript.outcome = match coverage {
                    CoverageClass::InCoverage => Outcome::FallbackCellular,
                    CoverageClass::OutOfCoverage => Outcome::Failed,
                };
            }
        }
    }
    rec.transcript
}

/// A sensor whose mode changed in a selection round.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconfiguration {
    pub node: SensorId,
    pub mode: TransmissionMode,
    pub cluster_id: Option<u32>,
    pub counterparts: Vec<SensorId>,
}

/// Transmission-mode update after a selection round.
///
/// Each pairing yields one transcript: pages and configurations for the
/// relay and its new remotes, one multicast announcement, per-remote
/// Ack/Nack, security setup for new pairs and one result forward. Other
/// reconfigured sensors get a page and configuration each.
pub fn run_tm_update(
    reconfigured: &[Reconfiguration],
    pairings: &[RelayPairing],
    env: ProcedureEnv<'_>,
    assoc: &mut Associations,
    t0: f64,
) -> Vec<SignalingTranscript> {
    let mut in_pairing = BTreeSet::new();
    for p in pairings {
        in_pairing.insert(p.relay);
        in_pairing.extend(p.remotes.iter().map(|r| r.remote));
    }
    let find = |id: SensorId| reconfigured.iter().find(|r| r.node == id);
    let mut out = Vec::new();
    for p in pairings {
        let mut rec = Recorder::new(env, t0);
        let members = std::iter::once(p.relay).chain(p.remotes.iter().map(|r| r.remote));
        for id in members {
            if let Some(r) = find(id) {
                rec.page(id);
                rec.tm_config(id, r.cluster_id, r.counterparts.clone());
            }
        }
        rec.pair_up(p, assoc);
        if !rec.transcript.rejected.is_empty() {
            rec.transcript.outcome = if rec.transcript.accepted.is_empty() {
                Outcome::FallbackCellular
            } else {
                Outcome::Established
            };
        }
        out.push(rec.transcript);
    }
    for r in reconfigured.iter().filter(|r| !in_pairing.contains(&r.node)) {
        let mut rec = Recorder::new(env, t0);
        rec.page(r.node);
        rec.tm_config(r.node, r.cluster_id, r.counterparts.clone());
        out.push(rec.transcript);
    }
    out
}

/// One report cycle of a relay and its attached remotes. With no remotes
/// it is a plain cellular upload.
///
/// The relay's charges are checked against `relay_battery_j`; if the relay
/// runs dry the transcript stops there and the outcome is `Failed`.
pub fn run_report_cycle(
    relay: SensorId,
    relay_cellular: &LinkState,
    remotes: &[(SensorId, LinkState)],
    relay_battery_j: f64,
    env: ProcedureEnv<'_>,
    t0: f64,
) -> SignalingTranscript {
    let mut rec = Recorder::new(env, t0);
    rec.transcript.outcome = Outcome::Delivered;
    let sig = env.energy.signaling.clone();
    let payload = env.energy.payload_bits;
    let mut spent = 0.0;
    let mut fail = false;
    let charge = |rec: &Recorder<'_>, spent: &mut f64| -> bool {
        let e = rec.transcript.entries.last().expect("message pushed");
        let relay_j = if e.message.from == Endpoint::Node(relay) {
            e.sender_j
        } else {
            e.receiver_j
        };
        *spent += relay_j;
        *spent <= relay_battery_j
    };
    'cycle: {
        for (remote, link) in remotes {
            if sig.allocation_mode == AllocationMode::RandomAccess {
                rec.sidelink_msg(MessageKind::RaPreamble, *remote, relay, sig.ack_bits, link, vec![*remote]);
                if !charge(&rec, &mut spent) {
                    fail = true;
                    break 'cycle;
                }
                rec.sidelink_msg(MessageKind::ResourceGrant, relay, *remote, sig.grant_bits, link, vec![*remote]);
                if !charge(&rec, &mut spent) {
                    fail = true;
                    break 'cycle;
                }
            }
            rec.sidelink_msg(MessageKind::DataPacket, *remote, relay, payload, link, vec![*remote]);
            if !charge(&rec, &mut spent) {
                fail = true;
                break 'cycle;
            }
            rec.sidelink_msg(MessageKind::Ack, relay, *remote, sig.ack_bits, link, vec![*remote]);
            if !charge(&rec, &mut spent) {
                fail = true;
                break 'cycle;
            }
        }
        let bits = env.energy.aggregate_bits(remotes.len());
        let eff = relay_cellular
            .spectral_eff_bps_hz
            .expect("relay uplink must not be in outage");
        let dur = rec.airtime(bits, eff);
        let cp = fixed_event_energies(rec.profile()).cp_j;
        let s = cp + tx_energy(relay_cellular.tx_power_dbm, dur, rec.profile());
        let mut carried = vec![relay];
        carried.extend(remotes.iter().map(|r| r.0));
        rec.push(MessageKind::AggregatedUplink, Endpoint::Node(relay), Endpoint::Bs, bits, carried, None, dur, s, 0.0);
        if !charge(&rec, &mut spent) {
            fail = true;
            break 'cycle;
        }
        // Downlink acknowledgement; its reception shares the uplink wake-up.
        rec.push(MessageKind::Ack, Endpoint::Bs, Endpoint::Node(relay), sig.ack_bits, vec![relay], None, 0.0, 0.0, 0.0);
    }
    if fail {
        rec.transcript.outcome = Outcome::Failed;
    }
    rec.transcript
}

/// Adds each rejected pair to both sensors' blacklists.
pub fn apply_blacklist(nodes: &mut [crate::scenario::SensorNode], rejected: &[(SensorId, SensorId)]) {
    for &(a, b) in rejected {
        for (x, y) in [(a, b), (b, a)] {
            let n = &mut nodes[x as usize];
            if !n.blacklist.contains(&y) {
                n.blacklist.push(y);
            }
        }
    }
}
