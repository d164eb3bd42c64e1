//! Day-stepped simulation.
//!
//! Within a day every report cycle is identical, so each sensor's drain is
//! a closed form of its mode and links. Batteries are kept in integer
//! nanojoules so the energy ledger closes exactly.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};

use crate::channel::{
    cellular_pathloss, noise_floor_dbm, pair_standard_normal, sidelink_pathloss, snr_at_max_power,
    LinkState, McsTable, PathlossModel,
};
use crate::clustering::{kmeans_angular, AngularPoint, ClusterSet};
use crate::config::SimConfig;
use crate::energy::{DailyEnergyBreakdown, EnergyModel};
use crate::error::{ConfigError, SimError};
use crate::metrics::build_cdf;
use crate::scenario::{
    generate_deployment, stream, stream_rng, CoverageClass, SensorId, SensorNode,
    TransmissionMode, SECONDS_PER_DAY,
};
use crate::signaling::{
    apply_blacklist, run_attachment, run_report_cycle, run_tm_update, AttachDecision,
    Associations, PairCandidate, ProcedureEnv, Reconfiguration, RelayPairing,
    SignalingTranscript,
};
use crate::tms::{
    assign_context_aware, assign_r12, R13Selector, Scheme, SensorView,
    TmAssignment, TmsParams,
};

const NJ_PER_J: f64 = 1e9;

fn to_nj(j: f64) -> u64 {
    (j * NJ_PER_J).round() as u64
}

/// Static radio environment of one deployment.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: SimConfig,
    pub mcs: McsTable,
    pub pathloss: PathlossModel,
    /// Nodes as deployed, with coverage classified.
    pub nodes: Vec<SensorNode>,
    /// Power-controlled cellular link of each sensor.
    pub cellular: Vec<LinkState>,
    pub cell_snr_max_db: Vec<f64>,
    /// Daily energy under cellular accounting; `None` in outage.
    pub cellular_daily: Vec<Option<DailyEnergyBreakdown>>,
    pub energy: EnergyModel,
    pub admission_pl_db: f64,
}

impl Network {
    pub fn build(config: &SimConfig) -> Result<Network, SimError> {
        config.validate()?;
        let mcs = config.mcs_table()?;
        Ok(Network::with_table(config, mcs)?)
    }

    pub fn with_table(config: &SimConfig, mcs: McsTable) -> Result<Network, ConfigError> {
        config.validate()?;
        crate::config::check_table(&mcs, &config.channel)?;
        let ch = &config.channel;
        let pathloss = ch.pathloss_model(&config.scenario);
        let mut nodes = generate_deployment(&config.scenario)?;
        let mut rng = stream_rng(config.scenario.rng_seed, stream::SHADOWING);
        let normal = Normal::new(0.0, ch.shadowing_sigma_cell_db)
            .map_err(|e| ConfigError::invalid(format!("shadowing_sigma_cell_db: {e}")))?;
        let energy = config.energy_model();
        let payload = f64::from(config.scenario.payload_bits);
        let mut cellular = Vec::with_capacity(nodes.len());
        let mut snr_max = Vec::with_capacity(nodes.len());
        let mut daily = Vec::with_capacity(nodes.len());
        for node in &mut nodes {
            let pl = cellular_pathloss(node.distance_m, &pathloss) + normal.sample(&mut rng);
            let link = LinkState::evaluate(pl, ch.target_snr_cell_db, ch, &mcs, payload);
            let s = snr_at_max_power(pl, ch);
            node.coverage_class = if s >= ch.outage_snr_db {
                CoverageClass::InCoverage
            } else {
                CoverageClass::OutOfCoverage
            };
            daily.push(
                (!link.in_outage())
                    .then(|| energy.daily_energy(TransmissionMode::Cellular, &link, &[])),
            );
            cellular.push(link);
            snr_max.push(s);
        }
        Ok(Network {
            config: config.clone(),
            mcs,
            pathloss,
            nodes,
            cellular,
            cell_snr_max_db: snr_max,
            cellular_daily: daily,
            energy,
            admission_pl_db: ch.admission_pl_db(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn pair_distance(&self, a: SensorId, b: SensorId) -> f64 {
        let (ax, ay) = self.nodes[a as usize].position_xy();
        let (bx, by) = self.nodes[b as usize].position_xy();
        (ax - bx).hypot(ay - by)
    }

    /// Location-based median pathloss, as the base station estimates it.
    pub fn sidelink_estimated_pl(&self, a: SensorId, b: SensorId) -> f64 {
        sidelink_pathloss(self.pair_distance(a, b), &self.pathloss)
    }

    /// Pathloss the pair actually experiences, including frozen shadowing.
    pub fn sidelink_true_pl(&self, a: SensorId, b: SensorId) -> f64 {
        self.sidelink_estimated_pl(a, b)
            + self.config.channel.shadowing_sigma_side_db
                * pair_standard_normal(self.config.scenario.rng_seed, a, b)
    }

    pub fn sidelink_link(&self, a: SensorId, b: SensorId) -> LinkState {
        let ch = &self.config.channel;
        LinkState::evaluate(
            self.sidelink_true_pl(a, b),
            ch.target_snr_side_db,
            ch,
            &self.mcs,
            f64::from(self.config.scenario.payload_bits),
        )
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        noise_floor_dbm(&self.config.channel)
    }

    pub fn tms_params(&self) -> TmsParams {
        TmsParams::new(
            &self.config.scenario,
            self.config.channel.relay_snr_db,
            self.admission_pl_db,
        )
    }

    pub fn env(&self) -> ProcedureEnv<'_> {
        ProcedureEnv {
            energy: &self.energy,
            channel: &self.config.channel,
            mcs: &self.mcs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    pub id: SensorId,
    pub distance_m: f64,
    pub angle_rad: f64,
    pub coverage: CoverageClass,
    pub served_days: f64,
    /// Day (0-based) on which the battery ran out.
    pub death_day: Option<u32>,
    pub final_mode: TransmissionMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub scheme: Scheme,
    pub horizon_days: u32,
    pub life_requirement_days: u32,
    pub records: Vec<SensorRecord>,
    /// Sensors left without service after the first day's selection.
    pub day1_unserved: Vec<SensorId>,
    pub outage_fraction_day1: f64,
    pub fraction_meeting_requirement: f64,
    pub cdf: Vec<(f64, f64)>,
    pub initial_battery_nj: Vec<u64>,
    pub final_battery_nj: Vec<u64>,
    /// Per-sensor sum of every day's drain.
    pub drained_nj: Vec<u64>,
    /// Trace lines of the first `trace_days` days.
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub trace_days: u32,
}

struct Run<'a> {
    net: &'a Network,
    scheme: Scheme,
    nodes: Vec<SensorNode>,
    battery_nj: Vec<u64>,
    drained_nj: Vec<u64>,
    bs_battery_j: Vec<f64>,
    death_day: Vec<Option<u32>>,
    side_link: Vec<Option<LinkState>>,
    daily_j: Vec<f64>,
    /// Attached remotes per relay id, ascending.
    remotes: Vec<Vec<SensorId>>,
    assoc: Associations,
    clusters: Option<ClusterSet>,
    alive_count_at_clustering: usize,
    alive_count: usize,
    r13: Option<R13Selector>,
    trace: Vec<String>,
    trace_days: u32,
}

impl<'a> Run<'a> {
    fn new(net: &'a Network, scheme: Scheme, opts: SimOptions) -> Self {
        let n = net.len();
        let battery = to_nj(net.config.scenario.battery_j());
        let mut run = Run {
            net,
            scheme,
            nodes: net.nodes.clone(),
            battery_nj: vec![battery; n],
            drained_nj: vec![0; n],
            bs_battery_j: vec![net.config.scenario.battery_j(); n],
            death_day: vec![None; n],
            side_link: vec![None; n],
            daily_j: vec![0.0; n],
            remotes: vec![Vec::new(); n],
            assoc: Associations::default(),
            clusters: None,
            alive_count_at_clustering: 0,
            alive_count: n,
            r13: None,
            trace: Vec::new(),
            trace_days: opts.trace_days,
        };
        for i in 0..n {
            run.nodes[i].tm = TransmissionMode::Unserved;
            run.refresh_energy(i);
        }
        run
    }

    fn views(&self) -> Vec<SensorView> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| SensorView {
                id: n.id,
                alive: n.alive,
                coverage: n.coverage_class,
                distance_m: n.distance_m,
                cell_snr_max_db: self.net.cell_snr_max_db[i],
                cellular_daily_j: self.net.cellular_daily[i].map(|b| b.total_j),
                battery_j: self.bs_battery_j[i],
                served_days: n.served_days,
            })
            .collect()
    }

    fn select(&mut self) -> TmAssignment {
        let views = self.views();
        let params = self.net.tms_params();
        let nodes = &self.nodes;
        let blacklisted = |a: SensorId, b: SensorId| nodes[a as usize].is_blacklisted(b);
        match self.scheme {
            Scheme::R12 => assign_r12(&views),
            Scheme::ContextAware => {
                if self.clusters.is_none() || self.alive_count != self.alive_count_at_clustering {
                    let pts: Vec<AngularPoint> = self
                        .nodes
                        .iter()
                        .filter(|n| n.alive)
                        .map(AngularPoint::from)
                        .collect();
                    let k = (self.net.config.scenario.n_clusters as usize).min(pts.len());
                    self.clusters = if k == 0 {
                        Some(ClusterSet {
                            assignments: BTreeMap::new(),
                            centroids: Vec::new(),
                        })
                    } else {
                        Some(
                            kmeans_angular(&pts, k, self.net.config.kmeans_refine_passes)
                                .expect("k bounded by alive sensors"),
                        )
                    };
                    self.alive_count_at_clustering = self.alive_count;
                }
                let net = self.net;
                let est = |a: SensorId, b: SensorId| net.sidelink_estimated_pl(a, b);
                assign_context_aware(
                    &views,
                    self.clusters.as_ref().expect("clustered"),
                    &params,
                    &est,
                    &blacklisted,
                )
            }
            Scheme::R13 => {
                let net = self.net;
                let measured = |a: SensorId, b: SensorId| net.sidelink_true_pl(a, b);
                let blacklist_len = |a: SensorId| nodes[a as usize].blacklist.len();
                self.r13
                    .get_or_insert_with(|| R13Selector::new(&views, &params))
                    .select(&views, &params, &measured, &blacklisted, &blacklist_len)
            }
        }
    }

    /// Runs the signaling for a new assignment and adopts its outcome.
    fn apply(&mut self, day: u32, proposed: TmAssignment, procedure_j: &mut [f64]) {
        let net = self.net;
        let t0 = f64::from(day) * SECONDS_PER_DAY;
        let tracing = day < self.trace_days;
        let mut transcripts: Vec<SignalingTranscript> = Vec::new();
        let pair_candidate = |remote: SensorId, relay: SensorId| PairCandidate {
            remote,
            coverage: net.nodes[remote as usize].coverage_class,
            sidelink: net.sidelink_link(remote, relay),
        };

        if day == 0 {
            for i in 0..self.nodes.len() {
                let id = i as SensorId;
                let decision = match proposed.mode[i] {
                    TransmissionMode::Cellular => AttachDecision::Cellular {
                        cluster_id: proposed.cluster_of[i],
                    },
                    TransmissionMode::Relay => AttachDecision::Relay {
                        cluster_id: proposed.cluster_of[i],
                    },
                    TransmissionMode::Unserved => AttachDecision::Unserved,
                    TransmissionMode::Sidelink => {
                        let relay = proposed.relay_of[i].expect("sidelink has relay");
                        AttachDecision::Sidelink {
                            pairing: RelayPairing {
                                relay,
                                relay_cellular: net.cellular[relay as usize],
                                cluster_id: proposed.cluster_of[i],
                                remotes: vec![pair_candidate(id, relay)],
                            },
                        }
                    }
                };
                transcripts.push(run_attachment(id, &decision, net.env(), &mut self.assoc, t0));
            }
        } else {
            let mut reconfigured = Vec::new();
            let mut new_pairs: BTreeMap<SensorId, Vec<SensorId>> = BTreeMap::new();
            for (i, node) in self.nodes.iter().enumerate() {
                if !node.alive {
                    continue;
                }
                let mode = proposed.mode[i];
                let relay = proposed.relay_of[i];
                if mode == node.tm && relay == node.relay_id {
                    continue;
                }
                let counterparts = match mode {
                    TransmissionMode::Sidelink => relay.into_iter().collect(),
                    TransmissionMode::Relay => Vec::new(),
                    _ => Vec::new(),
                };
                reconfigured.push(Reconfiguration {
                    node: i as SensorId,
                    mode,
                    cluster_id: proposed.cluster_of[i],
                    counterparts,
                });
                if let (TransmissionMode::Sidelink, Some(r)) = (mode, relay) {
                    new_pairs.entry(r).or_default().push(i as SensorId);
                }
            }
            if reconfigured.iter().any(|rc| rc.mode == TransmissionMode::Relay) {
                let mut by_relay: BTreeMap<SensorId, Vec<SensorId>> = BTreeMap::new();
                for (i, r) in proposed.relay_of.iter().enumerate() {
                    if let Some(r) = r {
                        by_relay.entry(*r).or_default().push(i as SensorId);
                    }
                }
                for rc in &mut reconfigured {
                    if rc.mode == TransmissionMode::Relay {
                        rc.counterparts = by_relay.remove(&rc.node).unwrap_or_default();
                    }
                }
            }
            let pairings: Vec<RelayPairing> = new_pairs
                .into_iter()
                .map(|(relay, remotes)| RelayPairing {
                    relay,
                    relay_cellular: net.cellular[relay as usize],
                    cluster_id: proposed.cluster_of[relay as usize],
                    remotes: remotes.into_iter().map(|r| pair_candidate(r, relay)).collect(),
                })
                .collect();
            transcripts = run_tm_update(&reconfigured, &pairings, net.env(), &mut self.assoc, t0);
        }

        let mut mode = proposed.mode;
        let mut relay_of = proposed.relay_of;
        for t in &transcripts {
            t.charge_into(procedure_j);
            if !t.rejected.is_empty() {
                apply_blacklist(&mut self.nodes, &t.rejected);
                for &(_, remote) in &t.rejected {
                    let r = remote as usize;
                    relay_of[r] = None;
                    mode[r] = match self.nodes[r].coverage_class {
                        CoverageClass::InCoverage => TransmissionMode::Cellular,
                        CoverageClass::OutOfCoverage => TransmissionMode::Unserved,
                    };
                }
            }
            if tracing {
                self.trace.extend(t.trace_lines());
            }
        }
        // Relays left without any accepted remote revert to cellular.
        let mut has_remote = vec![false; mode.len()];
        for r in relay_of.iter().flatten() {
            has_remote[*r as usize] = true;
        }
        for i in 0..mode.len() {
            if mode[i] == TransmissionMode::Relay && !has_remote[i] {
                mode[i] = TransmissionMode::Cellular;
            }
        }

        let mut dirty = Vec::new();
        for i in 0..self.nodes.len() {
            if !self.nodes[i].alive {
                continue;
            }
            self.nodes[i].cluster_id = proposed.cluster_of[i];
            let (tm, relay) = (self.nodes[i].tm, self.nodes[i].relay_id);
            if tm != mode[i] || relay != relay_of[i] {
                self.set_mode(i, mode[i], relay_of[i]);
                dirty.push(i);
                // Relay loads change with their remote sets.
                dirty.extend(relay.map(|r| r as usize));
                dirty.extend(relay_of[i].map(|r| r as usize));
            }
        }
        for i in dirty {
            self.refresh_energy(i);
        }
    }

    /// Moves sensor `i` to a new mode, keeping the relay lists and sidelink
    /// state in step. Energy is not refreshed.
    fn set_mode(&mut self, i: usize, tm: TransmissionMode, relay: Option<SensorId>) {
        let id = i as SensorId;
        if let Some(old) = self.nodes[i].relay_id {
            let list = &mut self.remotes[old as usize];
            if let Ok(pos) = list.binary_search(&id) {
                list.remove(pos);
            }
        }
        let n = &mut self.nodes[i];
        n.tm = tm;
        n.relay_id = relay;
        self.side_link[i] = match (tm, relay) {
            (TransmissionMode::Sidelink, Some(r)) => {
                let list = &mut self.remotes[r as usize];
                let pos = list.binary_search(&id).unwrap_err();
                list.insert(pos, id);
                Some(self.net.sidelink_link(id, r))
            }
            _ => None,
        };
    }

    fn refresh_energy(&mut self, i: usize) {
        let net = self.net;
        let node = &self.nodes[i];
        let e = &net.energy;
        self.daily_j[i] = if !node.alive {
            0.0
        } else {
            match node.tm {
                TransmissionMode::Cellular => net.cellular_daily[i]
                    .expect("cellular sensor has coverage")
                    .total_j,
                TransmissionMode::Relay => {
                    let links: Vec<LinkState> = self.remotes[i]
                        .iter()
                        .map(|&r| self.side_link[r as usize].expect("remote link"))
                        .collect();
                    e.daily_energy(TransmissionMode::Relay, &net.cellular[i], &links)
                        .total_j
                }
                TransmissionMode::Sidelink => e
                    .daily_energy(
                        TransmissionMode::Sidelink,
                        &self.side_link[i].expect("sidelink state"),
                        &[],
                    )
                    .total_j,
                TransmissionMode::Unserved => e.idle_daily_energy().total_j,
            }
        };
    }

    fn trace_report_cycles(&mut self, day: u32) {
        let net = self.net;
        let t0 = f64::from(day) * SECONDS_PER_DAY + 1.0;
        for (relay, remotes) in self.remotes.iter().enumerate() {
            if remotes.is_empty() {
                continue;
            }
            let relay = relay as SensorId;
            let links: Vec<(SensorId, LinkState)> = remotes
                .iter()
                .map(|&r| (r, self.side_link[r as usize].expect("remote link")))
                .collect();
            let battery = self.battery_nj[relay as usize] as f64 / NJ_PER_J;
            let t = run_report_cycle(relay, &net.cellular[relay as usize], &links, battery, net.env(), t0);
            self.trace.extend(t.trace_lines());
        }
    }

    /// Drains one day and credits served time. Returns whether anyone died.
    fn step(&mut self, day: u32, procedure_j: &[f64]) -> bool {
        let n = self.nodes.len();
        let requirement = f64::from(self.net.config.scenario.life_requirement_days);
        let mut frac = vec![0.0f64; n];
        for i in 0..n {
            if !self.nodes[i].alive {
                continue;
            }
            let need = to_nj(self.daily_j[i] + procedure_j[i]);
            let have = self.battery_nj[i];
            let (f, drain) = if have >= need {
                (1.0, need)
            } else {
                (have as f64 / need as f64, have)
            };
            frac[i] = f;
            self.battery_nj[i] = have - drain;
            self.drained_nj[i] += drain;
        }
        let mut died = Vec::new();
        for i in 0..n {
            let node = &self.nodes[i];
            if !node.alive {
                continue;
            }
            let credit = match node.tm {
                TransmissionMode::Cellular | TransmissionMode::Relay => frac[i],
                TransmissionMode::Sidelink => {
                    let relay = node.relay_id.expect("sidelink has relay") as usize;
                    let c = frac[i].min(frac[relay]);
                    if self.scheme == Scheme::ContextAware {
                        c.min((requirement - node.served_days).max(0.0))
                    } else {
                        c
                    }
                }
                TransmissionMode::Unserved => 0.0,
            };
            let node = &mut self.nodes[i];
            node.served_days += credit;
            if credit > 0.0 {
                self.bs_battery_j[i] = self.battery_nj[i] as f64 / NJ_PER_J;
            }
            if frac[i] < 1.0 || self.battery_nj[i] == 0 {
                died.push(i);
            }
        }
        for &i in &died {
            self.nodes[i].alive = false;
            self.death_day[i] = Some(day);
            self.alive_count -= 1;
        }
        if !died.is_empty() {
            self.handle_deaths(&died);
        }
        !died.is_empty()
    }

    /// Orphaned remotes go unserved until the next selection round.
    fn handle_deaths(&mut self, died: &[usize]) {
        let mut dirty = Vec::new();
        for &i in died {
            let orphans = std::mem::take(&mut self.remotes[i]);
            for r in orphans {
                let r = r as usize;
                if self.nodes[r].alive {
                    dirty.push(r);
                }
                let n = &mut self.nodes[r];
                n.tm = TransmissionMode::Unserved;
                n.relay_id = None;
                self.side_link[r] = None;
            }
            if let Some(relay) = self.nodes[i].relay_id {
                dirty.push(relay as usize);
            }
            self.set_mode(i, TransmissionMode::Unserved, None);
            self.daily_j[i] = 0.0;
        }
        for i in dirty {
            if self.nodes[i].alive {
                self.refresh_energy(i);
            }
        }
    }

    fn finish(mut self) -> SimulationResult {
        let net = self.net;
        let horizon = net.config.horizon_days;
        let requirement = net.config.scenario.life_requirement_days;
        let mut day1_unserved = Vec::new();
        let mut procedure_j = vec![0.0f64; self.nodes.len()];
        let period = net.config.scenario.tms_period_days;
        for day in 0..horizon {
            if self.alive_count == 0 {
                break;
            }
            procedure_j.iter_mut().for_each(|x| *x = 0.0);
            if day % period == 0 {
                let proposed = self.select();
                self.apply(day, proposed, &mut procedure_j);
            }
            if day == 0 {
                day1_unserved = self
                    .nodes
                    .iter()
                    .filter(|n| n.tm == TransmissionMode::Unserved)
                    .map(|n| n.id)
                    .collect();
            }
            if day < self.trace_days {
                self.trace_report_cycles(day);
            }
            self.step(day, &procedure_j);
        }
        let records: Vec<SensorRecord> = self
            .nodes
            .iter()
            .map(|n| SensorRecord {
                id: n.id,
                distance_m: n.distance_m,
                angle_rad: n.angle_rad,
                coverage: n.coverage_class,
                served_days: n.served_days,
                death_day: self.death_day[n.id as usize],
                final_mode: n.tm,
            })
            .collect();
        let n = records.len().max(1) as f64;
        let served: Vec<f64> = records.iter().map(|r| r.served_days).collect();
        let meeting = served.iter().filter(|&&s| s >= f64::from(requirement)).count();
        SimulationResult {
            scheme: self.scheme,
            horizon_days: horizon,
            life_requirement_days: requirement,
            outage_fraction_day1: day1_unserved.len() as f64 / n,
            day1_unserved,
            fraction_meeting_requirement: meeting as f64 / n,
            cdf: build_cdf(&served).unwrap_or_default(),
            initial_battery_nj: vec![to_nj(net.config.scenario.battery_j()); records.len()],
            final_battery_nj: self.battery_nj,
            drained_nj: self.drained_nj,
            records,
            trace: self.trace,
        }
    }
}

/// Simulates one scheme on a prepared network.
pub fn simulate_network(net: &Network, scheme: Scheme, opts: SimOptions) -> SimulationResult {
    Run::new(net, scheme, opts).finish()
}

/// Builds the deployment for `config` and simulates one scheme on it.
pub fn simulate(config: &SimConfig, scheme: Scheme) -> Result<SimulationResult, SimError> {
    let net = Network::build(config)?;
    Ok(simulate_network(&net, scheme, SimOptions::default()))
}

/// Records split by coverage class: (in coverage, out of coverage).
pub fn split_by_coverage(result: &SimulationResult) -> (Vec<&SensorRecord>, Vec<&SensorRecord>) {
    result
        .records
        .iter()
        .partition(|r| r.coverage == CoverageClass::InCoverage)
}
