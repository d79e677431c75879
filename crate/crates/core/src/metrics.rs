//! The four location-anonymity metrics.
//!
//! | metric                | centre | radius / area         | counted set |
//! |-----------------------|--------|-----------------------|-------------|
//! | `k_original`          | `a'`   | `d(a', a)`            | `B` or `A`  |
//! | `k_original_method`   | `a'`   | backward area `E'_a'` | `B` or `A`  |
//! | `k_moved`             | `a`    | `d(a, a')`            | `A'`        |
//! | `k_moved_method`      | `a`    | forward area `E_a`    | `A'`        |
//!
//! All circles are closed, so the linked point itself is always counted.
//! `k_moved` is the measure usually published as spatial k-anonymity.
//!
//! The free functions below are linear scans and serve as the reference;
//! [`compute_report`] answers the same questions through [`PointIndex`].

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{validate, AddressUniverse, LinkedDatasets};
use crate::error::{Error, Result};
use crate::geometry::{distance, restricted_count, Point, Region, StudyArea, EPSILON};
use crate::masking::MethodDescriptor;
use crate::spatial_index::PointIndex;

pub const K_ORIGINAL_B: &str = "k_original_B";
pub const K_ORIGINAL_A: &str = "k_original_A";
pub const K_ORIGINAL_METHOD_B: &str = "k_original_method_B";
pub const K_ORIGINAL_METHOD_A: &str = "k_original_method_A";
pub const K_MOVED: &str = "k_moved";
pub const K_MOVED_METHOD: &str = "k_moved_method";

pub const QUANTILES: [u32; 5] = [5, 25, 50, 75, 95];

fn contains_point(set: &[Point], p: Point) -> bool {
    set.iter().any(|y| distance(*y, p) <= EPSILON)
}

/// Candidates no farther from the masked point than its true origin.
pub fn k_original(a_prime: Point, a: Point, candidates: &[Point]) -> Result<usize> {
    if !contains_point(candidates, a) {
        return Err(Error::Domain(format!(
            "original address ({}, {}) is not among the candidates",
            a.x, a.y
        )));
    }
    Ok(restricted_count(
        candidates,
        &Region::disk(a_prime, distance(a_prime, a)),
    ))
}

/// Candidates inside the backward area of the masked point.
pub fn k_original_method(
    a_prime: Point,
    candidates: &[Point],
    method: &MethodDescriptor,
    area: &StudyArea,
) -> usize {
    restricted_count(candidates, &method.backward_area(a_prime, area))
}

/// Masked points no farther from the original than its own masked point.
pub fn k_moved(a: Point, a_prime: Point, masked: &[Point]) -> Result<usize> {
    if !contains_point(masked, a_prime) {
        return Err(Error::Domain(format!(
            "masked address ({}, {}) is not among the masked points",
            a_prime.x, a_prime.y
        )));
    }
    Ok(restricted_count(
        masked,
        &Region::disk(a, distance(a, a_prime)),
    ))
}

/// Masked points inside the forward area of the original.
pub fn k_moved_method(
    a: Point,
    masked: &[Point],
    method: &MethodDescriptor,
    area: &StudyArea,
) -> Result<usize> {
    Ok(restricted_count(masked, &method.forward_area(a, area)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMetrics {
    #[serde(rename = "k_original_B")]
    pub k_original_b: u64,
    #[serde(rename = "k_original_A")]
    pub k_original_a: u64,
    #[serde(rename = "k_original_method_B")]
    pub k_original_method_b: Option<u64>,
    #[serde(rename = "k_original_method_A")]
    pub k_original_method_a: Option<u64>,
    pub k_moved: u64,
    pub k_moved_method: Option<u64>,
}

impl RecordMetrics {
    pub fn get(&self, metric: &str) -> Option<u64> {
        match metric {
            K_ORIGINAL_B => Some(self.k_original_b),
            K_ORIGINAL_A => Some(self.k_original_a),
            K_ORIGINAL_METHOD_B => self.k_original_method_b,
            K_ORIGINAL_METHOD_A => self.k_original_method_a,
            K_MOVED => Some(self.k_moved),
            K_MOVED_METHOD => self.k_moved_method,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub min: Option<u64>,
    pub max: Option<u64>,
    pub mean: Option<f64>,
    /// Nearest-rank quantiles keyed `p05` .. `p95`.
    pub quantiles: BTreeMap<String, u64>,
    pub histogram: BTreeMap<u64, u64>,
    /// Histogram of the same metric counted over distinct coordinates.
    pub distinct_coordinate_histogram: BTreeMap<u64, u64>,
}

/// Nearest-rank quantile of sorted data: the value at rank `ceil(p/100 * n)`.
pub fn nearest_rank(sorted: &[u64], percent: u32) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (u64::from(percent) * sorted.len() as u64)
        .div_ceil(100)
        .max(1);
    Some(sorted[rank as usize - 1])
}

fn histogram(values: &[u64]) -> BTreeMap<u64, u64> {
    let mut h = BTreeMap::new();
    for v in values {
        *h.entry(*v).or_insert(0) += 1;
    }
    h
}

impl Summary {
    pub fn from_values(values: &[u64], distinct: &[u64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let quantiles = QUANTILES
            .iter()
            .filter_map(|p| nearest_rank(&sorted, *p).map(|v| (format!("p{p:02}"), v)))
            .collect();
        Summary {
            count: values.len() as u64,
            min: sorted.first().copied(),
            max: sorted.last().copied(),
            mean: (!values.is_empty())
                .then(|| values.iter().map(|v| *v as f64).sum::<f64>() / values.len() as f64),
            quantiles,
            histogram: histogram(values),
            distinct_coordinate_histogram: histogram(distinct),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSoundness {
    /// Supplied descriptor equals the one recorded at masking time.
    Sound,
    /// Descriptor differs from the generating method, or containment failed.
    Unsound,
    /// No generating method on record to compare against.
    Unverified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Warning {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

pub const WARN_NON_INVERTIBLE: &str = "method_invertible";
pub const WARN_UNIQUE_METHOD_K: &str = "method_related_k_equals_one";
pub const WARN_UNSOUND: &str = "method_descriptor_unsound";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheck {
    /// The configured minimum k; present only when explicitly disclosed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_k: Option<u64>,
    /// Per metric: whether every record reaches the threshold.
    pub passed: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_record: BTreeMap<String, RecordMetrics>,
    pub summary: BTreeMap<String, Summary>,
    pub method: Option<MethodDescriptor>,
    pub method_soundness: Option<MethodSoundness>,
    /// Metric variants present in this report.
    pub metrics_computed: Vec<String>,
    pub notes: Vec<String>,
    pub warnings: Vec<Warning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyCheck>,
}

pub const NOTE_K_MOVED: &str =
    "k_moved is the quantity commonly reported as spatial k-anonymity; it covers only attacks that start from known original addresses without method knowledge";

impl MetricReport {
    pub fn values(&self, metric: &str) -> Vec<u64> {
        self.per_record
            .values()
            .filter_map(|r| r.get(metric))
            .collect()
    }

    /// Pass/fail of each metric against a minimum k. The threshold itself is
    /// stored only when `disclose` is set.
    pub fn apply_policy(&mut self, min_k: u64, disclose: bool) {
        let passed = self
            .metrics_computed
            .iter()
            .map(|m| (m.clone(), self.values(m).iter().all(|k| *k >= min_k)))
            .collect();
        self.policy = Some(PolicyCheck {
            min_k: disclose.then_some(min_k),
            passed,
        });
    }
}

fn dedup_points(points: &[Point]) -> Vec<Point> {
    let mut seen = HashSet::new();
    points
        .iter()
        .filter(|p| seen.insert(p.key()))
        .copied()
        .collect()
}

struct Indexed {
    all: PointIndex,
    distinct: PointIndex,
}

impl Indexed {
    fn new(points: &[Point]) -> Self {
        Indexed {
            all: PointIndex::from_points(points),
            distinct: PointIndex::from_points(&dedup_points(points)),
        }
    }

    fn count(&self, region: &Region) -> (u64, u64) {
        (
            self.all.count_in_region(region) as u64,
            self.distinct.count_in_region(region) as u64,
        )
    }
}

/// Computes every applicable metric for every linked record. Method-related
/// metrics are computed only when `method` is supplied.
pub fn compute_report(
    linked: &LinkedDatasets,
    universe: &AddressUniverse,
    method: Option<&MethodDescriptor>,
) -> Result<MetricReport> {
    let mut check = linked.clone();
    check.universe = Some(universe.clone());
    let violations = validate(&check);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        return Err(Error::Data(format!(
            "{} dataset violation(s): {}",
            violations.len(),
            msgs.join("; ")
        )));
    }

    let area = &universe.area;
    let b = Indexed::new(&universe.locations());
    let a = Indexed::new(&crate::dataset::locations(&linked.original));
    let a_prime = Indexed::new(&crate::dataset::locations(&linked.masked));
    let pairs = linked.pairs();

    // (id, metrics, distinct-coordinate metrics)
    let rows = pairs
        .par_iter()
        .map(|(o, m)| {
            let (x, xp) = (o.location, m.location);
            let r = distance(xp, x);
            let around_masked = Region::disk(xp, r);
            let (kb, kb_d) = b.count(&around_masked);
            if kb == 0 || b.all.count_in_region(&Region::disk(x, 0.0)) == 0 {
                return Err(Error::for_record(
                    &o.id,
                    Error::Domain("original address is not in the address universe".into()),
                ));
            }
            let (ka, ka_d) = a.count(&around_masked);
            let (km, km_d) = a_prime.count(&Region::disk(x, distance(x, xp)));
            let mut row = RecordMetrics {
                k_original_b: kb,
                k_original_a: ka,
                k_original_method_b: None,
                k_original_method_a: None,
                k_moved: km,
                k_moved_method: None,
            };
            let mut distinct = row;
            distinct.k_original_b = kb_d;
            distinct.k_original_a = ka_d;
            distinct.k_moved = km_d;
            if let Some(desc) = method {
                let back = desc.backward_area(xp, area);
                let fwd = desc
                    .forward_area(x, area)
                    .map_err(|e| Error::for_record(&o.id, e))?;
                let (kmb, kmb_d) = b.count(&back);
                let (kma, kma_d) = a.count(&back);
                let (kmm, kmm_d) = a_prime.count(&fwd);
                row.k_original_method_b = Some(kmb);
                row.k_original_method_a = Some(kma);
                row.k_moved_method = Some(kmm);
                distinct.k_original_method_b = Some(kmb_d);
                distinct.k_original_method_a = Some(kma_d);
                distinct.k_moved_method = Some(kmm_d);
            }
            Ok((o.id.clone(), row, distinct))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut metrics_computed = vec![
        K_ORIGINAL_B.to_string(),
        K_ORIGINAL_A.to_string(),
        K_MOVED.to_string(),
    ];
    if method.is_some() {
        metrics_computed
            .extend([K_ORIGINAL_METHOD_B, K_ORIGINAL_METHOD_A, K_MOVED_METHOD].map(String::from));
    }
    metrics_computed.sort();

    let summary = metrics_computed
        .iter()
        .map(|name| {
            let vals: Vec<u64> = rows.iter().filter_map(|(_, r, _)| r.get(name)).collect();
            let dist: Vec<u64> = rows.iter().filter_map(|(_, _, d)| d.get(name)).collect();
            (name.clone(), Summary::from_values(&vals, &dist))
        })
        .collect();

    let per_record: BTreeMap<String, RecordMetrics> =
        rows.into_iter().map(|(id, r, _)| (id, r)).collect();

    let mut warnings = Vec::new();
    let method_soundness = method.map(|desc| {
        let method_values = per_record.values().flat_map(|r| {
            [
                r.k_original_method_a,
                r.k_original_method_b,
                r.k_moved_method,
            ]
            .into_iter()
            .flatten()
        });
        let containment_broken = method_values.clone().any(|k| k == 0);
        match linked.method {
            _ if containment_broken => MethodSoundness::Unsound,
            Some(generating) if generating != *desc => MethodSoundness::Unsound,
            Some(_) => MethodSoundness::Sound,
            None => MethodSoundness::Unverified,
        }
    });
    if method_soundness == Some(MethodSoundness::Unsound) {
        warnings.push(Warning::new(
            WARN_UNSOUND,
            "the supplied method descriptor does not match the generating method; method-related counts are not guarantees",
        ));
    }
    if let Some(desc) = method {
        if desc.method.is_deterministic() {
            warnings.push(Warning::new(
                WARN_NON_INVERTIBLE,
                format!(
                    "{} has no random component: anyone who knows it can reverse or reproduce the displacement exactly",
                    desc.method
                ),
            ));
        }
        let unique = per_record
            .values()
            .filter(|r| r.k_moved_method == Some(1) || r.k_original_method_a == Some(1))
            .count();
        if unique > 0 {
            warnings.push(Warning::new(
                WARN_UNIQUE_METHOD_K,
                format!(
                    "{unique} record(s) are uniquely linkable by an intruder who knows the method"
                ),
            ));
        }
    }

    Ok(MetricReport {
        per_record,
        summary,
        method: method.copied(),
        method_soundness,
        metrics_computed,
        notes: vec![NOTE_K_MOVED.to_string()],
        warnings,
        policy: None,
    })
}
