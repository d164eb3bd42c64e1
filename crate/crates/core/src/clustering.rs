//! Angular K-means over reference angles.
//!
//! Follows the single incremental pass literally: farthest-angle seeding,
//! then each remaining sensor (ascending id) joins the nearest centroid and
//! that cluster's centroid moves to the member nearest its circular mean.
//! Optional Lloyd passes refine the result afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use crate::error::ConfigError;
use crate::scenario::{SensorId, SensorNode};

/// Angular differences closer than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

pub fn reference_angle(node: &SensorNode) -> f64 {
    node.angle_rad
}

pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TAU;
    d.min(TAU - d)
}

/// `circular_distance` for angles already in [0, 2π).
fn gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(TAU - d)
}

fn normalize(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularPoint {
    pub id: SensorId,
    pub angle: f64,
}

impl From<&SensorNode> for AngularPoint {
    fn from(n: &SensorNode) -> Self {
        AngularPoint {
            id: n.id,
            angle: reference_angle(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub assignments: BTreeMap<SensorId, u32>,
    /// Centroid sensor of each cluster, indexed by cluster id.
    pub centroids: Vec<SensorId>,
}

impl ClusterSet {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_of(&self, id: SensorId) -> Option<u32> {
        self.assignments.get(&id).copied()
    }

    /// Members per cluster, each list in ascending id order.
    pub fn members(&self) -> Vec<Vec<SensorId>> {
        let mut out = vec![Vec::new(); self.k()];
        for (&id, &c) in &self.assignments {
            out[c as usize].push(id);
        }
        out
    }
}

/// Sort key for non-negative angles: the IEEE bit pattern is monotone.
fn key(angle: f64) -> u64 {
    angle.to_bits()
}

struct Cluster {
    sum_sin: f64,
    sum_cos: f64,
    by_angle: BTreeSet<(u64, SensorId)>,
    centroid: SensorId,
}

impl Cluster {
    fn new(p: AngularPoint) -> Self {
        let mut by_angle = BTreeSet::new();
        by_angle.insert((key(p.angle), p.id));
        Cluster {
            sum_sin: p.angle.sin(),
            sum_cos: p.angle.cos(),
            by_angle,
            centroid: p.id,
        }
    }

    fn add(&mut self, p: AngularPoint) {
        self.sum_sin += p.angle.sin();
        self.sum_cos += p.angle.cos();
        self.by_angle.insert((key(p.angle), p.id));
    }

    fn mean(&self) -> f64 {
        normalize(self.sum_sin.atan2(self.sum_cos))
    }

    /// Lowest id among members sitting exactly at `angle_key`.
    fn lowest_at(&self, angle_key: u64) -> SensorId {
        self.by_angle
            .range((angle_key, 0)..)
            .next()
            .map(|&(_, id)| id)
            .expect("angle present")
    }

    /// Member nearest the circular mean and its angle; ties go to the
    /// lowest id.
    fn nearest_to_mean(&self) -> (SensorId, f64) {
        let mean = self.mean();
        let m = key(mean);
        let succ = self
            .by_angle
            .range((m, 0)..)
            .next()
            .or_else(|| self.by_angle.iter().next())
            .copied()
            .expect("cluster nonempty");
        let pred = self
            .by_angle
            .range(..(m, 0))
            .next_back()
            .or_else(|| self.by_angle.iter().next_back())
            .copied()
            .expect("cluster nonempty");
        // `succ` is already the lowest id at its angle; `pred` is the highest.
        let (ks, is) = succ;
        let kp = pred.0;
        let ip = self.lowest_at(kp);
        let (as_, ap) = (f64::from_bits(ks), f64::from_bits(kp));
        let (ds, dp) = (gap(as_, mean), gap(ap, mean));
        if (ds - dp).abs() <= TIE_EPS {
            if is <= ip {
                (is, as_)
            } else {
                (ip, ap)
            }
        } else if ds < dp {
            (is, as_)
        } else {
            (ip, ap)
        }
    }
}

/// Index of the centroid nearest to `angle`. Among centroids within
/// `TIE_EPS` of the nearest distance, one the angle lies counterclockwise of
/// wins, then the lowest cluster index.
fn nearest_centroid(angle: f64, centroid_angles: &[f64]) -> usize {
    let min_d = centroid_angles
        .iter()
        .fold(f64::INFINITY, |m, &c| m.min(gap(angle, c)));
    let mut best = usize::MAX;
    for (i, &c) in centroid_angles.iter().enumerate() {
        if gap(angle, c) > min_d + TIE_EPS {
            continue;
        }
        let x = angle - c;
        let ccw = (if x < 0.0 { x + TAU } else { x }) <= PI;
        if ccw {
            return i;
        }
        if best == usize::MAX {
            best = i;
        }
    }
    best
}

/// Centroid angles kept sorted for logarithmic nearest-centroid queries.
/// Answers exactly as `nearest_centroid` does.
struct CentroidIndex {
    angles: Vec<f64>,
    sorted: Vec<(f64, usize)>,
}

impl CentroidIndex {
    /// Below this size a linear scan is as fast and avoids wrap-around cases.
    const LINEAR_MAX: usize = 8;

    fn new(angles: Vec<f64>) -> Self {
        let mut sorted: Vec<(f64, usize)> = angles.iter().copied().zip(0..).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        CentroidIndex { angles, sorted }
    }

    fn angle(&self, c: usize) -> f64 {
        self.angles[c]
    }

    fn set(&mut self, c: usize, angle: f64) {
        let old = (self.angles[c], c);
        let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
        let at = self
            .sorted
            .binary_search_by(|e| cmp(e, &old))
            .expect("centroid indexed");
        self.sorted.remove(at);
        let new = (angle, c);
        let to = self.sorted.binary_search_by(|e| cmp(e, &new)).unwrap_err();
        self.sorted.insert(to, new);
        self.angles[c] = angle;
    }

    fn nearest(&self, angle: f64) -> usize {
        let n = self.sorted.len();
        if n <= Self::LINEAR_MAX {
            return nearest_centroid(angle, &self.angles);
        }
        // The nearest centroid is one of the two circular neighbours; tied
        // ones sit next to them in sorted order.
        let p = self.sorted.partition_point(|e| e.0 < angle);
        let left = (p + n - 1) % n;
        let right = p % n;
        let limit = gap(angle, self.sorted[left].0).min(gap(angle, self.sorted[right].0)) + TIE_EPS;
        let mut best: Option<(bool, usize)> = None;
        let mut consider = |pos: usize| -> bool {
            let (c_angle, c) = self.sorted[pos];
            if gap(angle, c_angle) > limit {
                return false;
            }
            let x = angle - c_angle;
            let ccw = (if x < 0.0 { x + TAU } else { x }) <= PI;
            // Prefer counterclockwise, then the lowest index.
            if best.is_none_or(|(bccw, bc)| (ccw, std::cmp::Reverse(c)) > (bccw, std::cmp::Reverse(bc))) {
                best = Some((ccw, c));
            }
            true
        };
        let mut steps = 0;
        let mut pos = left;
        while steps < n && consider(pos) {
            pos = (pos + n - 1) % n;
            steps += 1;
        }
        let mut pos = right;
        while steps < 2 * n && consider(pos) {
            pos = (pos + 1) % n;
            steps += 1;
        }
        best.expect("a neighbour is within the limit").1
    }
}

/// Farthest-point seeding: the sensor closest to angle 0, then repeatedly
/// the sensor maximizing its minimum distance to those already chosen.
/// Distances within `TIE_EPS` of the best tie, and ties go to the lowest
/// index. `points` must be sorted by id.
pub fn farthest_angle_seeds(points: &[AngularPoint], k: usize) -> Vec<usize> {
    seeds_normalized(&normalized(points), k)
}

fn normalized(points: &[AngularPoint]) -> Vec<AngularPoint> {
    points
        .iter()
        .map(|p| AngularPoint {
            id: p.id,
            angle: normalize(p.angle),
        })
        .collect()
}

/// The unchosen points between two consecutive seeds in angular order.
struct Arc {
    /// Sorted positions of the bounding seeds.
    left: usize,
    right: usize,
    /// Best minimum distance inside the arc and the sorted position holding
    /// it; `None` for an empty arc.
    peak: Option<(f64, usize)>,
}

fn seeds_normalized(points: &[AngularPoint], k: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let to_zero = points
        .iter()
        .fold(f64::INFINITY, |m, p| m.min(gap(p.angle, 0.0)));
    let first = points
        .iter()
        .position(|p| gap(p.angle, 0.0) <= to_zero + TIE_EPS)
        .expect("nonempty");
    let mut seeds = vec![first];

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].angle.total_cmp(&points[b].angle).then(a.cmp(&b)));
    let mut pos_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        pos_of[i] = pos;
    }
    let angle_at = |pos: usize| points[order[pos % n]].angle;
    // Minimum distance of the point at sorted position `pos` to the arc's
    // bounding seeds.
    let dist = |arc: &Arc, pos: usize| gap(angle_at(pos), angle_at(arc.left)).min(gap(angle_at(pos), angle_at(arc.right)));
    // Number of members of an arc and the sorted position of member `j`.
    let span = |arc: &Arc| (arc.right + n - arc.left - 1) % n + if arc.left == arc.right { n } else { 0 };
    let member = |arc: &Arc, j: usize| (arc.left + 1 + j) % n;
    let find_peak = |arc: &Arc| -> Option<(f64, usize)> {
        let len = span(arc);
        if len == 0 {
            return None;
        }
        let base = angle_at(arc.left);
        let unwrap = |pos: usize| {
            let a = angle_at(pos);
            if a < base || (a == base && pos <= arc.left) { a + TAU } else { a }
        };
        let end = if arc.left == arc.right { base + TAU } else { unwrap(arc.right) };
        let mid = base + (end - base) / 2.0;
        let (mut lo, mut hi) = (0usize, len);
        while lo < hi {
            let m = (lo + hi) / 2;
            if unwrap(member(arc, m)) < mid {
                lo = m + 1;
            } else {
                hi = m;
            }
        }
        let mut best: Option<(f64, usize)> = None;
        for j in lo.saturating_sub(2)..(lo + 2).min(len) {
            let pos = member(arc, j);
            let d = dist(arc, pos);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, j));
            }
        }
        best
    };
    let first_pos = pos_of[first];
    let mut arcs = vec![Arc {
        left: first_pos,
        right: first_pos,
        peak: None,
    }];
    arcs[0].peak = find_peak(&arcs[0]);

    while seeds.len() < k {
        let top = arcs
            .iter()
            .filter_map(|a| a.peak.map(|p| p.0))
            .fold(f64::NEG_INFINITY, f64::max);
        let threshold = top - TIE_EPS;
        let mut pick: Option<(usize, usize)> = None;
        for (ai, arc) in arcs.iter().enumerate() {
            let Some((d, j)) = arc.peak else { continue };
            if d < threshold {
                continue;
            }
            let len = span(arc);
            let mut visit = |j: usize| {
                let idx = order[member(arc, j)];
                if pick.is_none_or(|(best, _)| idx < best) {
                    pick = Some((idx, ai));
                }
            };
            visit(j);
            let mut l = j;
            while l > 0 && dist(arc, member(arc, l - 1)) >= threshold {
                l -= 1;
                visit(l);
            }
            let mut r = j;
            while r + 1 < len && dist(arc, member(arc, r + 1)) >= threshold {
                r += 1;
                visit(r);
            }
        }
        let (idx, ai) = pick.expect("an unchosen point remains while seeds < n");
        seeds.push(idx);
        let split = pos_of[idx];
        let right = arcs[ai].right;
        arcs[ai].right = split;
        arcs[ai].peak = find_peak(&arcs[ai]);
        let mut tail = Arc {
            left: split,
            right,
            peak: None,
        };
        tail.peak = find_peak(&tail);
        arcs.push(tail);
    }
    seeds
}

/// Clusters `points` into exactly `k` angular clusters.
pub fn kmeans_angular(
    points: &[AngularPoint],
    k: usize,
    refine_passes: u32,
) -> Result<ClusterSet, ConfigError> {
    if k == 0 {
        return Err(ConfigError::invalid("number of clusters must be >= 1"));
    }
    if k > points.len() {
        return Err(ConfigError::invalid(format!(
            "number of clusters ({k}) exceeds alive sensors ({})",
            points.len()
        )));
    }
    let mut pts = normalized(points);
    pts.sort_by_key(|p| p.id);
    let seeds = seeds_normalized(&pts, k);
    let mut clusters: Vec<Cluster> = seeds.iter().map(|&i| Cluster::new(pts[i])).collect();
    let mut index = CentroidIndex::new(seeds.iter().map(|&i| pts[i].angle).collect());
    let mut assigned = vec![u32::MAX; pts.len()];
    for (c, &i) in seeds.iter().enumerate() {
        assigned[i] = c as u32;
    }

    for (i, p) in pts.iter().enumerate() {
        if assigned[i] != u32::MAX {
            continue;
        }
        let c = index.nearest(p.angle);
        clusters[c].add(*p);
        assigned[i] = c as u32;
        let (centroid, angle) = clusters[c].nearest_to_mean();
        clusters[c].centroid = centroid;
        if angle != index.angle(c) {
            index.set(c, angle);
        }
    }

    let mut set = ClusterSet {
        assignments: pts.iter().map(|p| p.id).zip(assigned).collect(),
        centroids: clusters.iter().map(|c| c.centroid).collect(),
    };
    for _ in 0..refine_passes {
        if !lloyd_pass(&pts, &mut set, &mut index) {
            break;
        }
    }
    Ok(set)
}

/// One reassign-then-recenter sweep. Returns whether anything moved.
fn lloyd_pass(pts: &[AngularPoint], set: &mut ClusterSet, index: &mut CentroidIndex) -> bool {
    let mut clusters: Vec<Option<Cluster>> = (0..set.k()).map(|_| None).collect();
    let mut changed = false;
    let mut moves = Vec::new();
    for p in pts {
        let c = index.nearest(p.angle);
        match &mut clusters[c] {
            Some(cl) => cl.add(*p),
            slot @ None => *slot = Some(Cluster::new(*p)),
        }
        if set.assignments.insert(p.id, c as u32) != Some(c as u32) {
            changed = true;
        }
    }
    for (c, cl) in clusters.iter().enumerate() {
        // A centroid is always nearest to itself, so no cluster empties.
        let cl = cl.as_ref().expect("cluster keeps its centroid");
        let (new, angle) = cl.nearest_to_mean();
        moves.push((c, angle));
        if new != set.centroids[c] {
            set.centroids[c] = new;
            changed = true;
        }
    }
    for (c, angle) in moves {
        if angle != index.angle(c) {
            index.set(c, angle);
        }
    }
    changed
}
