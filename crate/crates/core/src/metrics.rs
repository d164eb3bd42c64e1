//! Headline numbers, empirical CDFs and the CSV/summary exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::engine::{SensorRecord, SimulationResult};
use crate::error::SimError;
use crate::scenario::CoverageClass;
use crate::tms::Scheme;

/// Empirical CDF at the sorted distinct values; right-continuous.
pub fn build_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>, SimError> {
    if values.is_empty() {
        return Err(SimError::EmptyInput("CDF of an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    if let Some(last) = out.last_mut() {
        last.1 = 1.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subset {
    All,
    In,
    Out,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::All, Subset::In, Subset::Out];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::In => "in",
            Subset::Out => "out",
        }
    }

    pub fn contains(self, coverage: CoverageClass) -> bool {
        match self {
            Subset::All => true,
            Subset::In => coverage == CoverageClass::InCoverage,
            Subset::Out => coverage == CoverageClass::OutOfCoverage,
        }
    }
}

pub fn served_days(records: &[SensorRecord], subset: Subset) -> Vec<f64> {
    records
        .iter()
        .filter(|r| subset.contains(r.coverage))
        .map(|r| r.served_days)
        .collect()
}

/// Share of `values` at or above `threshold`; zero for an empty sample.
pub fn fraction_at_least(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v >= threshold).count() as f64 / values.len() as f64
}

/// Jump of the empirical CDF at exactly `x`.
pub fn cdf_step_at(values: &[f64], x: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v == x).count() as f64 / values.len() as f64
}

/// Distinct values each shared by at least `min_share` of the sample: the
/// flat steps visible in a CDF.
pub fn plateaus(values: &[f64], min_share: f64) -> Vec<(f64, usize)> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.to_bits()).or_default() += 1;
    }
    let need = (min_share * values.len() as f64).ceil().max(1.0) as usize;
    let mut out: Vec<(f64, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= need)
        .map(|(b, c)| (f64::from_bits(b), c))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SchemeHeadline {
    pub fraction_10y: f64,
    pub fraction_10y_in_coverage: f64,
    pub fraction_10y_out_of_coverage: f64,
    pub outage_fraction_day1: f64,
    /// CDF jump at the requirement, all sensors and out-of-coverage only.
    pub cdf_step_at_requirement: f64,
    pub cdf_step_at_requirement_out: f64,
    pub n_sensors: usize,
    pub n_in_coverage: usize,
    pub n_out_of_coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeadlineMetrics {
    /// Day-one outage under the baseline, when it was run.
    pub outage_fraction_r12: Option<f64>,
    pub per_scheme: BTreeMap<Scheme, SchemeHeadline>,
}

impl HeadlineMetrics {
    pub fn fraction_10y(&self, s: Scheme) -> Option<f64> {
        self.per_scheme.get(&s).map(|h| h.fraction_10y)
    }

    /// CDF jump at the requirement for the context-aware scheme.
    pub fn cdf_step_at_requirement(&self) -> Option<f64> {
        self.per_scheme
            .get(&Scheme::ContextAware)
            .map(|h| h.cdf_step_at_requirement)
    }
}

pub fn scheme_headline(records: &[SensorRecord], requirement: f64, outage_day1: f64) -> SchemeHeadline {
    let all = served_days(records, Subset::All);
    let inc = served_days(records, Subset::In);
    let out = served_days(records, Subset::Out);
    SchemeHeadline {
        fraction_10y: fraction_at_least(&all, requirement),
        fraction_10y_in_coverage: fraction_at_least(&inc, requirement),
        fraction_10y_out_of_coverage: fraction_at_least(&out, requirement),
        outage_fraction_day1: outage_day1,
        cdf_step_at_requirement: cdf_step_at(&all, requirement),
        cdf_step_at_requirement_out: cdf_step_at(&out, requirement),
        n_sensors: all.len(),
        n_in_coverage: inc.len(),
        n_out_of_coverage: out.len(),
    }
}

pub fn compute_headlines(results: &[SimulationResult]) -> HeadlineMetrics {
    let mut h = HeadlineMetrics::default();
    for r in results {
        let s = scheme_headline(
            &r.records,
            f64::from(r.life_requirement_days),
            r.outage_fraction_day1,
        );
        if r.scheme == Scheme::R12 {
            h.outage_fraction_r12 = Some(s.outage_fraction_day1);
        }
        h.per_scheme.insert(r.scheme, s);
    }
    h
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Write {
        path: "<csv>".into(),
        source: std::io::Error::other(e),
    }
}

pub const SENSOR_HEADER: [&str; 8] = [
    "scheme",
    "sensor_id",
    "distance_m",
    "angle_rad",
    "coverage",
    "served_days",
    "death_day",
    "final_mode",
];

/// One row per sensor. Floats use shortest round-trip formatting so the
/// file reproduces every headline exactly.
pub fn write_sensor_csv<W: Write>(result: &SimulationResult, w: W) -> Result<(), SimError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SENSOR_HEADER).map_err(csv_err)?;
    for r in &result.records {
        wr.write_record([
            result.scheme.as_str().to_string(),
            r.id.to_string(),
            r.distance_m.to_string(),
            r.angle_rad.to_string(),
            r.coverage.as_str().to_string(),
            r.served_days.to_string(),
            r.death_day.map(|d| d.to_string()).unwrap_or_default(),
            r.final_mode.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|source| SimError::Write {
        path: "<csv>".into(),
        source,
    })
}

/// Reads back `(coverage, served_days)` pairs from a sensor CSV.
pub fn read_sensor_csv<R: Read>(r: R) -> Result<Vec<(CoverageClass, f64)>, SimError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        let coverage = match &row[4] {
            "in" => CoverageClass::InCoverage,
            _ => CoverageClass::OutOfCoverage,
        };
        let served: f64 = row[5].parse().map_err(|_| SimError::EmptyInput("bad served_days"))?;
        out.push((coverage, served));
    }
    Ok(out)
}

pub fn write_cdf_csv<W: Write>(
    scheme: Scheme,
    subset: Subset,
    cdf: &[(f64, f64)],
    w: W,
) -> Result<(), SimError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["scheme", "subset", "x_days", "cum_fraction"])
        .map_err(csv_err)?;
    for (x, f) in cdf {
        wr.write_record([
            scheme.as_str().to_string(),
            subset.as_str().to_string(),
            x.to_string(),
            f.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|source| SimError::Write {
        path: "<csv>".into(),
        source,
    })
}

/// CDF of one subset; empty when the subset has no sensors.
pub fn subset_cdf(result: &SimulationResult, subset: Subset) -> Vec<(f64, f64)> {
    build_cdf(&served_days(&result.records, subset)).unwrap_or_default()
}

pub fn summary_text(h: &HeadlineMetrics) -> String {
    let mut s = String::new();
    if let Some(o) = h.outage_fraction_r12 {
        let _ = writeln!(s, "outage_fraction_r12 = {o}");
    }
    for (scheme, m) in &h.per_scheme {
        let p = scheme.as_str();
        let _ = writeln!(s, "{p}.n_sensors = {}", m.n_sensors);
        let _ = writeln!(s, "{p}.n_in_coverage = {}", m.n_in_coverage);
        let _ = writeln!(s, "{p}.n_out_of_coverage = {}", m.n_out_of_coverage);
        let _ = writeln!(s, "{p}.outage_fraction_day1 = {}", m.outage_fraction_day1);
        let _ = writeln!(s, "{p}.fraction_10y = {}", m.fraction_10y);
        let _ = writeln!(s, "{p}.fraction_10y_in_coverage = {}", m.fraction_10y_in_coverage);
        let _ = writeln!(s, "{p}.fraction_10y_out_of_coverage = {}", m.fraction_10y_out_of_coverage);
        let _ = writeln!(s, "{p}.cdf_step_at_requirement = {}", m.cdf_step_at_requirement);
        let _ = writeln!(s, "{p}.cdf_step_at_requirement_out = {}", m.cdf_step_at_requirement_out);
    }
    s
}
