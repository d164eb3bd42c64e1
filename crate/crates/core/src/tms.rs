//! Transmission-mode selection for the three schemes.
//!
//! Selection works on the base station's view of each sensor: static link
//! quality plus the battery level and served days reported most recently.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::clustering::ClusterSet;
use crate::energy::projected_life_days;
use crate::scenario::{CoverageClass, ScenarioConfig, SensorId, TransmissionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    R12,
    R13,
    ContextAware,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::R12, Scheme::R13, Scheme::ContextAware];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::R12 => "r12",
            Scheme::R13 => "r13",
            Scheme::ContextAware => "context",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

/// What the base station knows about one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorView {
    pub id: SensorId,
    pub alive: bool,
    pub coverage: CoverageClass,
    pub distance_m: f64,
    /// Cellular SNR at full transmit power.
    pub cell_snr_max_db: f64,
    /// Daily energy under cellular accounting; `None` in outage.
    pub cellular_daily_j: Option<f64>,
    /// Last reported battery level.
    pub battery_j: f64,
    pub served_days: f64,
}

impl SensorView {
    fn projected_cellular_life(&self) -> f64 {
        match self.cellular_daily_j {
            Some(daily) => projected_life_days(self.battery_j, daily),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmsParams {
    pub life_requirement_days: f64,
    pub relay_snr_db: f64,
    pub relay_min_distance_m: f64,
    pub relay_battery_margin: f64,
    pub relay_budget: usize,
    pub admission_pl_db: f64,
}

impl TmsParams {
    pub fn new(scenario: &ScenarioConfig, relay_snr_db: f64, admission_pl_db: f64) -> Self {
        TmsParams {
            life_requirement_days: f64::from(scenario.life_requirement_days),
            relay_snr_db,
            relay_min_distance_m: scenario.relay_min_distance_m,
            relay_battery_margin: scenario.relay_battery_margin,
            relay_budget: scenario.relay_budget as usize,
            admission_pl_db,
        }
    }
}

/// Outcome of one selection round, indexed by sensor id.
#[derive(Debug, Clone, PartialEq)]
pub struct TmAssignment {
    pub mode: Vec<TransmissionMode>,
    pub relay_of: Vec<Option<SensorId>>,
    pub cluster_of: Vec<Option<u32>>,
    /// Relays with at least one attached remote.
    pub relays: BTreeSet<SensorId>,
}

impl TmAssignment {
    fn baseline(views: &[SensorView]) -> Self {
        let mode = views
            .iter()
            .map(|v| match (v.alive, v.coverage) {
                (true, CoverageClass::InCoverage) => TransmissionMode::Cellular,
                _ => TransmissionMode::Unserved,
            })
            .collect();
        TmAssignment {
            mode,
            relay_of: vec![None; views.len()],
            cluster_of: vec![None; views.len()],
            relays: BTreeSet::new(),
        }
    }

    fn attach(&mut self, remote: SensorId, relay: SensorId) {
        self.mode[remote as usize] = TransmissionMode::Sidelink;
        self.relay_of[remote as usize] = Some(relay);
        self.mode[relay as usize] = TransmissionMode::Relay;
        self.relays.insert(relay);
    }

    /// Remotes attached to each relay, in ascending remote id.
    pub fn remotes_of(&self, relay: SensorId) -> Vec<SensorId> {
        self.relay_of
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == Some(relay))
            .map(|(i, _)| i as SensorId)
            .collect()
    }

    pub fn count(&self, mode: TransmissionMode) -> usize {
        self.mode.iter().filter(|m| **m == mode).count()
    }
}

/// Needs a relay: no cellular coverage, or a projected cellular battery
/// life shorter than the days still owed.
pub fn is_remote(view: &SensorView, life_requirement_days: f64) -> bool {
    if view.coverage == CoverageClass::OutOfCoverage {
        return true;
    }
    let remaining = life_requirement_days - view.served_days;
    view.projected_cellular_life() < remaining
}

fn by_snr_desc(a: &SensorView, b: &SensorView) -> Ordering {
    b.cell_snr_max_db
        .partial_cmp(&a.cell_snr_max_db)
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

pub fn is_relay_candidate(view: &SensorView, params: &TmsParams) -> bool {
    let remaining = (params.life_requirement_days - view.served_days).max(0.0);
    view.alive
        && view.coverage == CoverageClass::InCoverage
        && view.cell_snr_max_db >= params.relay_snr_db
        && view.distance_m > params.relay_min_distance_m
        && view.projected_cellular_life() >= params.relay_battery_margin * remaining
}

/// Members eligible to relay, best cellular SNR first (id breaks ties).
pub fn relay_candidates(cluster: &[&SensorView], params: &TmsParams) -> Vec<SensorId> {
    let mut c: Vec<&SensorView> = cluster
        .iter()
        .copied()
        .filter(|v| is_relay_candidate(v, params))
        .collect();
    c.sort_by(|a, b| by_snr_desc(a, b));
    c.into_iter().map(|v| v.id).collect()
}

/// Context-aware selection.
///
/// `estimated_pl` is the base station's sidelink pathloss estimate for a
/// pair; `blacklisted` reports pairs whose discovery failed before.
pub fn assign_context_aware(
    views: &[SensorView],
    clusters: &ClusterSet,
    params: &TmsParams,
    estimated_pl: &dyn Fn(SensorId, SensorId) -> f64,
    blacklisted: &dyn Fn(SensorId, SensorId) -> bool,
) -> TmAssignment {
    let mut out = TmAssignment::baseline(views);
    for (&id, &c) in &clusters.assignments {
        out.cluster_of[id as usize] = Some(c);
    }
    let k = clusters.k();
    let mut remotes: Vec<Vec<SensorId>> = vec![Vec::new(); k];
    let mut best: Vec<Option<&SensorView>> = vec![None; k];
    for (&id, &c) in &clusters.assignments {
        let v = &views[id as usize];
        if !v.alive {
            continue;
        }
        let c = c as usize;
        // Sensors that already met the requirement are not served by relays.
        if v.served_days < params.life_requirement_days && is_remote(v, params.life_requirement_days) {
            remotes[c].push(id);
        } else if is_relay_candidate(v, params)
            && best[c].is_none_or(|b| by_snr_desc(v, b) == Ordering::Less)
        {
            best[c] = Some(v);
        }
    }

    // Global budget: clusters needing a relay compete on their best
    // candidate's SNR.
    let mut contenders: Vec<(usize, &SensorView)> = (0..k)
        .filter(|&c| !remotes[c].is_empty())
        .filter_map(|c| best[c].map(|b| (c, b)))
        .collect();
    contenders.sort_by(|a, b| by_snr_desc(a.1, b.1));
    contenders.truncate(params.relay_budget);

    for (c, relay) in contenders {
        for &r in &remotes[c] {
            if !blacklisted(r, relay.id) && estimated_pl(r, relay.id) <= params.admission_pl_db {
                out.attach(r, relay.id);
            }
        }
    }
    out
}

/// Every sensor R13 could ever schedule as a relay, best SNR first. The
/// order depends only on static link properties, so it can be computed once.
pub fn r13_relay_order(views: &[SensorView], params: &TmsParams) -> Vec<SensorId> {
    let mut elig: Vec<&SensorView> = views
        .iter()
        .filter(|v| v.coverage == CoverageClass::InCoverage && v.cell_snr_max_db >= params.relay_snr_db)
        .collect();
    elig.sort_by(|a, b| by_snr_desc(a, b));
    elig.into_iter().map(|v| v.id).collect()
}

/// Relays an R13 network would schedule: the best-SNR eligible sensors.
pub fn r13_relay_set(views: &[SensorView], params: &TmsParams) -> Vec<SensorId> {
    r13_schedule(&r13_relay_order(views, params), views, params)
}

/// The first `relay_budget` alive sensors of a precomputed relay order.
pub fn r13_schedule(order: &[SensorId], views: &[SensorView], params: &TmsParams) -> Vec<SensorId> {
    order
        .iter()
        .copied()
        .filter(|&id| views[id as usize].alive)
        .take(params.relay_budget)
        .collect()
}

/// R13-style selection: SNR-only relay eligibility, no battery context,
/// and each uncovered sensor picks the scheduled relay it hears best.
///
/// `measured_pl` is the pair pathloss the remote itself measures.
pub fn assign_r13(
    views: &[SensorView],
    params: &TmsParams,
    measured_pl: &dyn Fn(SensorId, SensorId) -> f64,
    blacklisted: &dyn Fn(SensorId, SensorId) -> bool,
) -> TmAssignment {
    let relays = r13_relay_set(views, params);
    assign_r13_with(views, &relays, params, measured_pl, blacklisted)
}

/// R13 attachment against an already scheduled relay set.
pub fn assign_r13_with(
    views: &[SensorView],
    relays: &[SensorId],
    params: &TmsParams,
    measured_pl: &dyn Fn(SensorId, SensorId) -> f64,
    blacklisted: &dyn Fn(SensorId, SensorId) -> bool,
) -> TmAssignment {
    let mut out = TmAssignment::baseline(views);
    for v in views
        .iter()
        .filter(|v| v.alive && v.coverage == CoverageClass::OutOfCoverage)
    {
        let mut pick: Option<(f64, SensorId)> = None;
        for &relay in relays {
            if blacklisted(v.id, relay) {
                continue;
            }
            let pl = measured_pl(v.id, relay);
            if pick.is_none_or(|(best, _)| pl < best) {
                pick = Some((pl, relay));
            }
        }
        if let Some((pl, relay)) = pick {
            if pl <= params.admission_pl_db {
                out.attach(v.id, relay);
            }
        }
    }
    out
}

/// R13 selection carried across rounds.
///
/// Gives the same assignment as `assign_r13_with` on the current schedule.
/// A remote's choice is rescanned only when its relay left the schedule or
/// its blacklist grew; otherwise only newly scheduled relays are compared.
#[derive(Debug, Clone)]
pub struct R13Selector {
    order: Vec<SensorId>,
    /// Position in `order` by sensor id.
    rank: Vec<u32>,
    scheduled: Vec<bool>,
    picks: Vec<Option<(f64, SensorId)>>,
    blacklist_seen: Vec<usize>,
    started: bool,
}

impl R13Selector {
    pub fn new(views: &[SensorView], params: &TmsParams) -> Self {
        let order = r13_relay_order(views, params);
        let mut rank = vec![u32::MAX; views.len()];
        for (pos, &id) in order.iter().enumerate() {
            rank[id as usize] = pos as u32;
        }
        R13Selector {
            order,
            rank,
            scheduled: vec![false; views.len()],
            picks: vec![None; views.len()],
            blacklist_seen: vec![0; views.len()],
            started: false,
        }
    }

    /// `blacklist_len` is the number of blacklist entries a sensor holds;
    /// entries are only ever added.
    pub fn select(
        &mut self,
        views: &[SensorView],
        params: &TmsParams,
        measured_pl: &dyn Fn(SensorId, SensorId) -> f64,
        blacklisted: &dyn Fn(SensorId, SensorId) -> bool,
        blacklist_len: &dyn Fn(SensorId) -> usize,
    ) -> TmAssignment {
        let relays = r13_schedule(&self.order, views, params);
        let mut added = Vec::new();
        let mut now = vec![false; views.len()];
        for &r in &relays {
            now[r as usize] = true;
            if !self.scheduled[r as usize] {
                added.push(r);
            }
        }
        self.scheduled = now;

        let mut out = TmAssignment::baseline(views);
        for v in views
            .iter()
            .filter(|v| v.alive && v.coverage == CoverageClass::OutOfCoverage)
        {
            let i = v.id as usize;
            let bl = blacklist_len(v.id);
            let stale = self.picks[i].is_some_and(|(_, r)| !self.scheduled[r as usize]);
            let (pool, mut pick) = if !self.started || stale || bl != self.blacklist_seen[i] {
                (&relays, None)
            } else {
                (&added, self.picks[i])
            };
            for &relay in pool {
                if blacklisted(v.id, relay) {
                    continue;
                }
                let pl = measured_pl(v.id, relay);
                let better = pick.is_none_or(|(best, b)| {
                    pl < best || (pl == best && self.rank[relay as usize] < self.rank[b as usize])
                });
                if better {
                    pick = Some((pl, relay));
                }
            }
            self.picks[i] = pick;
            self.blacklist_seen[i] = bl;
            if let Some((pl, relay)) = pick {
                if pl <= params.admission_pl_db {
                    out.attach(v.id, relay);
                }
            }
        }
        self.started = true;
        out
    }
}

/// Release-12 baseline: no relaying at all.
pub fn assign_r12(views: &[SensorView]) -> TmAssignment {
    TmAssignment::baseline(views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{kmeans_angular, AngularPoint};
    use std::collections::BTreeMap;

    fn params() -> TmsParams {
        TmsParams {
            life_requirement_days: 3650.0,
            relay_snr_db: 6.0,
            relay_min_distance_m: 1500.0,
            relay_battery_margin: 1.2,
            relay_budget: 100,
            admission_pl_db: 126.45,
        }
    }

    fn view(id: SensorId, snr: f64, dist: f64, life_days: f64) -> SensorView {
        SensorView {
            id,
            alive: true,
            coverage: if snr >= -7.0 {
                CoverageClass::InCoverage
            } else {
                CoverageClass::OutOfCoverage
            },
            distance_m: dist,
            cell_snr_max_db: snr,
            cellular_daily_j: (snr >= -7.0).then_some(4.0),
            battery_j: life_days * 4.0,
            served_days: 0.0,
        }
    }

    fn one_cluster(n: usize) -> ClusterSet {
        ClusterSet {
            assignments: (0..n as SensorId).map(|i| (i, 0)).collect(),
            centroids: vec![0],
        }
    }

    #[test]
    fn remote_rules() {
        let out = view(0, -9.0, 2400.0, 5000.0);
        assert!(is_remote(&out, 3650.0));
        assert!(!is_remote(&view(1, 10.0, 1000.0, 4000.0), 3650.0));
        assert!(is_remote(&view(2, 10.0, 1000.0, 3000.0), 3650.0));
        let mut served = view(3, 10.0, 1000.0, 3000.0);
        served.served_days = 1000.0;
        assert!(!is_remote(&served, 3650.0));
    }

    #[test]
    fn candidate_thresholds() {
        let p = params();
        let ok = view(0, 6.0, 1501.0, 1.2 * 3650.0);
        let at_distance = view(1, 8.0, 1500.0, 5000.0);
        let short = view(2, 8.0, 1600.0, 1.19 * 3650.0);
        let strong = view(3, 12.0, 1700.0, 5000.0);
        let members = [&ok, &at_distance, &short, &strong];
        assert_eq!(relay_candidates(&members, &p), vec![3, 0]);
    }

    #[test]
    fn no_candidates_means_fallback() {
        let views = vec![view(0, -9.0, 2400.0, 5000.0), view(1, 3.0, 2000.0, 3000.0), view(2, 8.0, 1000.0, 5000.0)];
        let a = assign_context_aware(&views, &one_cluster(3), &params(), &|_, _| 50.0, &|_, _| false);
        assert_eq!(
            a.mode,
            vec![TransmissionMode::Unserved, TransmissionMode::Cellular, TransmissionMode::Cellular]
        );
        assert!(a.relays.is_empty());
    }

    #[test]
    fn admission_is_inclusive_and_blacklist_respected() {
        let views = vec![view(0, -9.0, 2400.0, 5000.0), view(1, 10.0, 2000.0, 5000.0), view(2, -8.0, 2450.0, 5000.0)];
        let p = params();
        let pl = |a: SensorId, _b: SensorId| if a == 0 { p.admission_pl_db } else { 90.0 };
        let a = assign_context_aware(&views, &one_cluster(3), &p, &pl, &|_, _| false);
        assert_eq!(a.mode[0], TransmissionMode::Sidelink);
        assert_eq!(a.relay_of[0], Some(1));
        assert_eq!(a.mode[1], TransmissionMode::Relay);
        let a = assign_context_aware(&views, &one_cluster(3), &p, &pl, &|x, y| (x, y) == (2, 1));
        assert_eq!(a.mode[2], TransmissionMode::Unserved);
        assert_eq!(a.remotes_of(1), vec![0]);
    }

    #[test]
    fn requirement_met_ends_relay_service() {
        let mut out = view(0, -9.0, 2400.0, 5000.0);
        out.served_days = 3650.0;
        let mut short = view(2, 0.0, 2300.0, 100.0);
        short.served_days = 3650.0;
        let views = vec![out, view(1, 10.0, 2000.0, 5000.0), short];
        let a = assign_context_aware(&views, &one_cluster(3), &params(), &|_, _| 90.0, &|_, _| false);
        assert_eq!(a.mode[0], TransmissionMode::Unserved);
        assert_eq!(a.mode[2], TransmissionMode::Cellular);
        assert!(a.relays.is_empty());
    }

    /// 150 clusters, one remote and one candidate each, budget 100.
    #[test]
    fn budget_arbitration_picks_best_clusters() {
        let mut views = Vec::new();
        let mut assignments = BTreeMap::new();
        for c in 0..150u32 {
            let snr = 6.0 + f64::from((c * 37) % 150) * 0.1;
            views.push(view(2 * c, snr, 2000.0, 5000.0));
            views.push(view(2 * c + 1, -9.0, 2450.0, 5000.0));
            assignments.insert(2 * c, c);
            assignments.insert(2 * c + 1, c);
        }
        let clusters = ClusterSet {
            assignments,
            centroids: (0..150).map(|c| 2 * c).collect(),
        };
        let a = assign_context_aware(&views, &clusters, &params(), &|_, _| 90.0, &|_, _| false);
        assert_eq!(a.relays.len(), 100);
        let worst_selected = a
            .relays
            .iter()
            .map(|&r| views[r as usize].cell_snr_max_db)
            .fold(f64::INFINITY, f64::min);
        for c in 0..150u32 {
            let cand = 2 * c;
            if !a.relays.contains(&cand) {
                assert!(views[cand as usize].cell_snr_max_db <= worst_selected);
            }
        }
    }

    #[test]
    fn r13_ignores_battery() {
        let mut weak_relay = view(1, 15.0, 100.0, 5000.0);
        weak_relay.battery_j = 180.0;
        let views = vec![view(0, -9.0, 2400.0, 5000.0), weak_relay, view(2, 3.0, 2000.0, 100.0)];
        let a = assign_r13(&views, &params(), &|_, _| 100.0, &|_, _| false);
        assert_eq!(a.mode[1], TransmissionMode::Relay);
        assert_eq!(a.relay_of[0], Some(1));
        // The short-battery sensor in coverage gets no relay under R13...
        assert_eq!(a.mode[2], TransmissionMode::Cellular);
        // ...but does under the context-aware scheme.
        let mut views_ca = views.clone();
        views_ca[1] = view(1, 15.0, 1600.0, 5000.0);
        let ca = assign_context_aware(&views_ca, &one_cluster(3), &params(), &|_, _| 100.0, &|_, _| false);
        assert_eq!(ca.mode[2], TransmissionMode::Sidelink);
    }

    #[test]
    fn r13_picks_lowest_pathloss_relay() {
        let views = vec![view(0, -9.0, 2400.0, 5000.0), view(1, 15.0, 100.0, 5000.0), view(2, 12.0, 200.0, 5000.0)];
        let pl = |_a: SensorId, b: SensorId| if b == 2 { 95.0 } else { 105.0 };
        let a = assign_r13(&views, &params(), &pl, &|_, _| false);
        assert_eq!(a.relay_of[0], Some(2));
        assert_eq!(a.mode[1], TransmissionMode::Cellular);
        assert_eq!(a.relays.len(), 1);
    }

    #[test]
    fn r13_without_relays_equals_r12() {
        let views = vec![view(0, -9.0, 2400.0, 5000.0), view(1, 3.0, 100.0, 5000.0)];
        assert_eq!(assign_r13(&views, &params(), &|_, _| 10.0, &|_, _| false), assign_r12(&views));
    }

    #[test]
    fn r12_is_coverage_only() {
        let mut views = vec![view(0, -9.0, 2400.0, 5000.0), view(1, 3.0, 100.0, 1.0)];
        let a = assign_r12(&views);
        assert_eq!(a.mode, vec![TransmissionMode::Unserved, TransmissionMode::Cellular]);
        views[1].battery_j = 1e6;
        assert_eq!(assign_r12(&views), a);
    }

    #[test]
    fn clusters_feed_context_aware() {
        let pts: Vec<AngularPoint> = (0..40)
            .map(|i| AngularPoint { id: i, angle: f64::from(i) * 0.15 })
            .collect();
        let clusters = kmeans_angular(&pts, 4, 0).unwrap();
        let views: Vec<SensorView> = (0..40)
            .map(|i| if i % 5 == 0 { view(i, -9.0, 2400.0, 5000.0) } else { view(i, 7.0 + f64::from(i) * 0.01, 1800.0, 5000.0) })
            .collect();
        let a = assign_context_aware(&views, &clusters, &params(), &|_, _| 90.0, &|_, _| false);
        for (id, relay) in a.relay_of.iter().enumerate() {
            if let Some(r) = relay {
                assert_eq!(a.cluster_of[id], a.cluster_of[*r as usize]);
                assert_eq!(a.mode[*r as usize], TransmissionMode::Relay);
            }
        }
        assert_eq!(a.count(TransmissionMode::Sidelink), 8);
        assert_eq!(a.relays.len(), 4);
    }
}
