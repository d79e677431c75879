//! Re-identification attack simulation with ground-truth scoring.
//!
//! Two attack directions are modelled. Perspective 1 starts from masked
//! points and looks for their original addresses (identity disclosure);
//! perspective 2 starts from known addresses and looks for their masked
//! points (attribute disclosure). Each comes in four knowledge variants:
//!
//! | scenario | participation | method |
//! |----------|---------------|--------|
//! | x.1      | no            | no     |
//! | x.2      | yes           | no     |
//! | x.3      | no            | yes    |
//! | x.4      | yes           | yes    |
//!
//! Ground truth is only consulted for scoring.

pub mod assignment;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    matches_quasi_identifiers, validate, validate_external, AddressUniverse, AttrValue, Attributes,
    ExternalDataset, LinkedDatasets, Record,
};
use crate::error::{Error, Result};
use crate::geometry::{distance, Point, Region, StudyArea, EPSILON};
use crate::masking::MethodDescriptor;
use crate::metrics::Warning;
use crate::spatial_index::PointIndex;

/// Default cap on the smaller side of a cross-match assignment.
pub const DEFAULT_N_MAX: usize = 5_000;

pub const WARN_TRIVIAL_DISCLOSURE: &str = "trivial_attribute_disclosure";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScenarioId {
    /// 1: masked point → original address; 2: known address → masked point.
    pub perspective: u8,
    pub participation: bool,
    pub method: bool,
}

impl ScenarioId {
    pub fn new(perspective: u8, participation: bool, method: bool) -> Result<Self> {
        if perspective == 1 || perspective == 2 {
            Ok(ScenarioId {
                perspective,
                participation,
                method,
            })
        } else {
            Err(Error::Config(format!(
                "perspective must be 1 or 2, got {perspective}"
            )))
        }
    }

    pub fn all() -> [ScenarioId; 8] {
        let mut out = [ScenarioId {
            perspective: 1,
            participation: false,
            method: false,
        }; 8];
        for (i, s) in out.iter_mut().enumerate() {
            s.perspective = 1 + (i / 4) as u8;
            s.participation = i % 2 == 1;
            s.method = (i / 2) % 2 == 1;
        }
        out
    }

    fn variant(&self) -> u8 {
        1 + u8::from(self.participation) + 2 * u8::from(self.method)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.perspective, self.variant())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown scenario '{s}' (expected 1.1 .. 2.4)"));
        let (p, v) = s.trim().split_once('.').ok_or_else(bad)?;
        let p: u8 = p.parse().map_err(|_| bad())?;
        let v: u8 = v.parse().map_err(|_| bad())?;
        if !(1..=4).contains(&v) {
            return Err(bad());
        }
        ScenarioId::new(p, (v - 1) % 2 == 1, v >= 3).map_err(|_| bad())
    }
}

impl Serialize for ScenarioId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScenarioId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Single attack: each query goes to its nearest candidate.
    Nn,
    /// Database cross match: minimum-total-distance one-to-one assignment.
    CrossMatch,
    /// Method-aware narrowing: backward area (perspective 1) or forward
    /// area (perspective 2).
    Reversal,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "nn" => Ok(Strategy::Nn),
            "cross-match" | "crossmatch" => Ok(Strategy::CrossMatch),
            "reversal" | "forward" => Ok(Strategy::Reversal),
            _ => Err(Error::Config(format!(
                "unknown strategy '{s}' (expected nn, cross-match, reversal)"
            ))),
        }
    }
}

/// A point with its record id.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub id: String,
    pub location: Point,
}

impl Labeled {
    pub fn new(id: impl Into<String>, location: Point) -> Self {
        Labeled {
            id: id.into(),
            location,
        }
    }
}

impl From<&Record> for Labeled {
    fn from(r: &Record) -> Self {
        Labeled::new(r.id.clone(), r.location)
    }
}

/// An attack starting point together with the candidate ids that count as
/// a correct answer (empty when success is impossible).
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: String,
    pub location: Point,
    pub truth: Vec<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, location: Point, truth: Vec<String>) -> Self {
        Query {
            id: id.into(),
            location,
            truth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub truth_ids: Vec<String>,
    /// Tie set (nn), assigned partner (cross match), or surviving candidates
    /// (reversal).
    pub matched_ids: Vec<String>,
    /// The attack committed to an answer.
    pub answered: bool,
    pub correct: bool,
    /// Contribution to the success rate; ties of size t holding the truth
    /// score 1/t.
    pub score: f64,
    /// Candidates no farther than the truth (nn, cross match) or surviving
    /// the method filter (reversal).
    pub candidate_set_size: Option<u64>,
    /// 1 + candidates strictly closer to the query than the truth.
    pub rank_of_truth: Option<u64>,
    pub ties_at_best: u64,
    /// Success was impossible: the true partner is not in the data.
    pub structural_miss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub queries: u64,
    pub structural_misses: u64,
    pub success_rate: f64,
    /// Standard error of the per-query score mean.
    pub success_standard_error: f64,
    /// Success rate over queries whose truth exists in the data.
    pub success_rate_reachable: Option<f64>,
    pub mean_candidate_set_size: Option<f64>,
    /// Mean of 1/candidate_set_size.
    pub mean_inverse_k: Option<f64>,
}

impl Aggregate {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a QueryOutcome>) -> Self {
        let outcomes: Vec<&QueryOutcome> = outcomes.into_iter().collect();
        let n = outcomes.len();
        let scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let success_rate = mean(&scores).unwrap_or(0.0);
        let success_standard_error = if n > 1 {
            let var = scores
                .iter()
                .map(|s| (s - success_rate).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let reachable: Vec<f64> = outcomes
            .iter()
            .filter(|o| !o.structural_miss)
            .map(|o| o.score)
            .collect();
        let sizes: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.candidate_set_size)
            .filter(|k| *k > 0)
            .map(|k| k as f64)
            .collect();
        let inverse: Vec<f64> = sizes.iter().map(|k| 1.0 / k).collect();
        Aggregate {
            queries: n as u64,
            structural_misses: outcomes.iter().filter(|o| o.structural_miss).count() as u64,
            success_rate,
            success_standard_error,
            success_rate_reachable: mean(&reachable),
            mean_candidate_set_size: mean(&sizes),
            mean_inverse_k: mean(&inverse),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub scenario: ScenarioId,
    pub strategy: Strategy,
    /// `B`, `A` or `A'`.
    pub candidate_pool: String,
    pub per_query: BTreeMap<String, QueryOutcome>,
    pub aggregate: Aggregate,
    pub warnings: Vec<Warning>,
}

struct Pool<'a> {
    items: &'a [Labeled],
    index: PointIndex,
    by_id: HashMap<&'a str, usize>,
}

impl<'a> Pool<'a> {
    fn new(items: &'a [Labeled]) -> Self {
        Pool {
            items,
            index: PointIndex::from_points(&items.iter().map(|c| c.location).collect::<Vec<_>>()),
            by_id: items
                .iter()
                .enumerate()
                .map(|(i, c)| (c.id.as_str(), i))
                .collect(),
        }
    }

    /// Distance from `q` to the closest truth member present in the pool.
    fn truth_distance(&self, q: &Query) -> Option<f64> {
        q.truth
            .iter()
            .filter_map(|t| self.by_id.get(t.as_str()))
            .map(|i| distance(q.location, self.items[*i].location))
            .reduce(f64::min)
    }

    /// (candidate_set_size, rank_of_truth) by distance from the query.
    fn distance_rank(&self, q: &Query) -> (Option<u64>, Option<u64>) {
        match self.truth_distance(q) {
            None => (None, None),
            Some(dt) => {
                let inside = self
                    .index
                    .positions_in_region(&Region::disk(q.location, dt));
                let closer = inside
                    .iter()
                    .filter(|i| distance(q.location, self.items[**i].location) < dt - EPSILON)
                    .count();
                (Some(inside.len() as u64), Some(closer as u64 + 1))
            }
        }
    }

    fn ids(&self, positions: &[usize]) -> Vec<String> {
        positions
            .iter()
            .map(|i| self.items[*i].id.clone())
            .collect()
    }
}

fn truth_hits(q: &Query, matched: &[String]) -> usize {
    matched.iter().filter(|m| q.truth.contains(m)).count()
}

fn nn_with_pool(queries: &[Query], pool: &Pool<'_>) -> Result<Vec<QueryOutcome>> {
    queries
        .par_iter()
        .map(|q| {
            let nearest = pool.index.nearest(q.location)?;
            let matched = pool.ids(&nearest.positions);
            let hits = truth_hits(q, &matched);
            let (size, rank) = pool.distance_rank(q);
            Ok(QueryOutcome {
                truth_ids: q.truth.clone(),
                answered: true,
                correct: hits > 0,
                score: hits as f64 / matched.len() as f64,
                candidate_set_size: size,
                rank_of_truth: rank,
                ties_at_best: matched.len() as u64,
                structural_miss: q.truth.is_empty(),
                matched_ids: matched,
            })
        })
        .collect()
}

/// Nearest-neighbour single attack. Outcomes are in query order.
pub fn nn_attack(queries: &[Query], candidates: &[Labeled]) -> Result<Vec<QueryOutcome>> {
    if candidates.is_empty() {
        return Err(Error::Domain(
            "nearest-neighbour attack needs candidates".into(),
        ));
    }
    nn_with_pool(queries, &Pool::new(candidates))
}

/// One-to-one matching between two point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(x id, y id)` pairs sorted by x id.
    pub pairs: Vec<(String, String)>,
    pub total_cost: f64,
}

/// Minimum-total-distance injective matching of the smaller set into the
/// larger. Inputs are put into id order first, so the result does not depend
/// on input order.
pub fn cross_match(set_x: &[Labeled], set_y: &[Labeled], n_max: usize) -> Result<Matching> {
    if set_x.is_empty() || set_y.is_empty() {
        return Err(Error::Domain("cross match needs two non-empty sets".into()));
    }
    let smaller = set_x.len().min(set_y.len());
    if smaller > n_max {
        return Err(Error::Config(format!(
            "cross match of size {smaller} exceeds n_max = {n_max}"
        )));
    }
    let mut xs: Vec<&Labeled> = set_x.iter().collect();
    let mut ys: Vec<&Labeled> = set_y.iter().collect();
    xs.sort_by(|a, b| a.id.cmp(&b.id));
    ys.sort_by(|a, b| a.id.cmp(&b.id));

    let mut pairs: Vec<(&Labeled, &Labeled)> = if xs.len() <= ys.len() {
        let cols = assignment::solve(xs.len(), ys.len(), |i, j| {
            distance(xs[i].location, ys[j].location)
        });
        cols.iter()
            .enumerate()
            .map(|(i, j)| (xs[i], ys[*j]))
            .collect()
    } else {
        let cols = assignment::solve(ys.len(), xs.len(), |i, j| {
            distance(ys[i].location, xs[j].location)
        });
        cols.iter()
            .enumerate()
            .map(|(i, j)| (xs[*j], ys[i]))
            .collect()
    };
    pairs.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    let total_cost = matching_cost(pairs.iter().map(|(x, y)| (x.location, y.location)));
    Ok(Matching {
        pairs: pairs
            .into_iter()
            .map(|(x, y)| (x.id.clone(), y.id.clone()))
            .collect(),
        total_cost,
    })
}

/// Greedy baseline: in id order, each x takes its nearest still-unused y.
/// Requires `|set_x| ≤ |set_y|`.
pub fn greedy_injective_nn(set_x: &[Labeled], set_y: &[Labeled]) -> Matching {
    assert!(
        set_x.len() <= set_y.len(),
        "greedy matching needs |X| <= |Y|"
    );
    let mut xs: Vec<&Labeled> = set_x.iter().collect();
    xs.sort_by(|a, b| a.id.cmp(&b.id));
    let mut used = vec![false; set_y.len()];
    let mut pairs = Vec::with_capacity(xs.len());
    let mut total_cost = 0.0;
    for x in xs {
        let (j, d) = set_y
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, distance(x.location, y.location)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("free y exists");
        used[j] = true;
        total_cost += d;
        pairs.push((x.id.clone(), set_y[j].id.clone()));
    }
    Matching { pairs, total_cost }
}

/// Summed distance of a set of pairs, in the given order.
pub fn matching_cost(pairs: impl IntoIterator<Item = (Point, Point)>) -> f64 {
    pairs.into_iter().map(|(a, b)| distance(a, b)).sum()
}

/// Candidates inside the backward area of a masked point, as positions into
/// `candidates`. A single survivor is the attack's answer.
pub fn reversal_attack(
    a_prime: Point,
    candidates: &[Labeled],
    method: &MethodDescriptor,
    area: &StudyArea,
) -> Vec<usize> {
    let region = method.backward_area(a_prime, area);
    (0..candidates.len())
        .filter(|i| region.contains(candidates[*i].location))
        .collect()
}

/// Masked points inside the forward area of a known address.
pub fn forward_reproduction_attack(
    a: Point,
    masked: &[Labeled],
    method: &MethodDescriptor,
    area: &StudyArea,
) -> Result<Vec<usize>> {
    let region = method.forward_area(a, area)?;
    Ok((0..masked.len())
        .filter(|i| region.contains(masked[*i].location))
        .collect())
}

fn method_filter_with_pool(
    queries: &[Query],
    pool: &Pool<'_>,
    perspective: u8,
    method: &MethodDescriptor,
    area: &StudyArea,
) -> Result<Vec<QueryOutcome>> {
    queries
        .par_iter()
        .map(|q| {
            let region = if perspective == 1 {
                method.backward_area(q.location, area)
            } else {
                method
                    .forward_area(q.location, area)
                    .map_err(|e| Error::for_record(&q.id, e))?
            };
            let survivors = pool.ids(&pool.index.positions_in_region(&region));
            let answered = survivors.len() == 1;
            let correct = answered && truth_hits(q, &survivors) == 1;
            let (_, rank) = pool.distance_rank(q);
            Ok(QueryOutcome {
                truth_ids: q.truth.clone(),
                answered,
                correct,
                score: if correct { 1.0 } else { 0.0 },
                candidate_set_size: Some(survivors.len() as u64),
                rank_of_truth: rank,
                ties_at_best: survivors.len() as u64,
                structural_miss: q.truth.is_empty(),
                matched_ids: survivors,
            })
        })
        .collect()
}

fn cross_match_outcomes(
    queries: &[Query],
    pool_items: &[Labeled],
    n_max: usize,
) -> Result<Vec<QueryOutcome>> {
    let pool = Pool::new(pool_items);
    let xs: Vec<Labeled> = queries
        .iter()
        .map(|q| Labeled::new(q.id.clone(), q.location))
        .collect();
    let matching = cross_match(&xs, pool_items, n_max)?;
    let partner: HashMap<&str, &str> = matching
        .pairs
        .iter()
        .map(|(x, y)| (x.as_str(), y.as_str()))
        .collect();
    Ok(queries
        .iter()
        .map(|q| {
            let matched: Vec<String> = partner
                .get(q.id.as_str())
                .map(|y| vec![y.to_string()])
                .unwrap_or_default();
            let correct = truth_hits(q, &matched) > 0;
            let (size, rank) = pool.distance_rank(q);
            QueryOutcome {
                truth_ids: q.truth.clone(),
                answered: !matched.is_empty(),
                correct,
                score: if correct { 1.0 } else { 0.0 },
                candidate_set_size: size,
                rank_of_truth: rank,
                ties_at_best: matched.len() as u64,
                structural_miss: q.truth.is_empty(),
                matched_ids: matched,
            }
        })
        .collect())
}

fn empty_pool_outcome(q: &Query) -> QueryOutcome {
    QueryOutcome {
        truth_ids: q.truth.clone(),
        matched_ids: Vec::new(),
        answered: false,
        correct: false,
        score: 0.0,
        candidate_set_size: Some(0),
        rank_of_truth: None,
        ties_at_best: 0,
        structural_miss: q.truth.is_empty(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub strategy: Strategy,
    /// Method knowledge handed to the intruder; required for method
    /// scenarios (x.3, x.4).
    pub method: Option<MethodDescriptor>,
    pub n_max: usize,
    /// Attributes treated as sensitive, checked for trivial disclosure.
    pub sensitive_attributes: Vec<String>,
}

impl AttackConfig {
    pub fn new(strategy: Strategy) -> Self {
        AttackConfig {
            strategy,
            method: None,
            n_max: DEFAULT_N_MAX,
            sensitive_attributes: Vec::new(),
        }
    }

    pub fn with_method(mut self, method: MethodDescriptor) -> Self {
        self.method = Some(method);
        self
    }
}

fn key_index(records: &[Record]) -> HashMap<(u64, u64), Vec<&Record>> {
    let mut map: HashMap<(u64, u64), Vec<&Record>> = HashMap::new();
    for r in records {
        map.entry(r.location.key()).or_default().push(r);
    }
    map
}

/// Queries, their attributes (for quasi-identifier matching), the
/// candidate pool, and the pool's label.
struct Setup {
    queries: Vec<Query>,
    query_attrs: Vec<Attributes>,
    pool: Vec<Labeled>,
    pool_attrs: Vec<Attributes>,
    pool_label: &'static str,
    quasi_identifiers: Vec<String>,
}

fn perspective_one(s: ScenarioId, linked: &LinkedDatasets, universe: &AddressUniverse) -> Setup {
    let pool_records: &[Record] = if s.participation {
        &linked.original
    } else {
        &universe.records
    };
    let by_location = key_index(pool_records);
    let originals: HashMap<&str, &Record> =
        linked.original.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut masked: Vec<&Record> = linked.masked.iter().collect();
    masked.sort_by(|a, b| a.id.cmp(&b.id));
    let queries = masked
        .iter()
        .map(|m| {
            // any pool entry at the true address is a correct answer
            let truth = originals
                .get(m.id.as_str())
                .and_then(|o| by_location.get(&o.location.key()))
                .map(|rs| rs.iter().map(|r| r.id.clone()).collect())
                .unwrap_or_default();
            Query::new(m.id.clone(), m.location, truth)
        })
        .collect();
    Setup {
        query_attrs: masked.iter().map(|m| m.attributes.clone()).collect(),
        queries,
        pool: pool_records.iter().map(Labeled::from).collect(),
        pool_attrs: Vec::new(),
        pool_label: if s.participation { "A" } else { "B" },
        quasi_identifiers: Vec::new(),
    }
}

fn perspective_two(
    s: ScenarioId,
    linked: &LinkedDatasets,
    universe: &AddressUniverse,
    external: Option<&ExternalDataset>,
) -> Result<Setup> {
    let default_external;
    let external = match external {
        Some(e) => e,
        None => {
            default_external = if s.participation {
                ExternalDataset::new(linked.original.clone(), true)
            } else {
                ExternalDataset::new(universe.records.clone(), false)
            };
            &default_external
        }
    };
    if s.participation && !external.participation_knowledge {
        return Err(Error::Config(format!(
            "scenario {s} needs an external dataset with participation knowledge"
        )));
    }
    let mut check = linked.clone();
    check.universe = Some(universe.clone());
    let violations = validate_external(external, &check);
    if let Some(v) = violations.first() {
        return Err(Error::Data(format!(
            "{} external-data violation(s), first: {v}",
            violations.len()
        )));
    }

    let originals_at = key_index(&linked.original);
    let mut ext: Vec<&Record> = external.records.iter().collect();
    ext.sort_by(|a, b| a.id.cmp(&b.id));
    let queries = ext
        .iter()
        .map(|q| {
            // masked records whose original sits at this address; none for b ∉ A
            let truth = originals_at
                .get(&q.location.key())
                .map(|rs| rs.iter().map(|r| r.id.clone()).collect())
                .unwrap_or_default();
            Query::new(q.id.clone(), q.location, truth)
        })
        .collect();
    Ok(Setup {
        query_attrs: ext.iter().map(|q| q.attributes.clone()).collect(),
        queries,
        pool: linked.masked.iter().map(Labeled::from).collect(),
        pool_attrs: linked.masked.iter().map(|r| r.attributes.clone()).collect(),
        pool_label: "A'",
        quasi_identifiers: external.quasi_identifiers.clone(),
    })
}

/// Splits queries by their quasi-identifier values so each group can be
/// attacked against its own pre-filtered pool.
fn group_by_quasi_identifiers(setup: &Setup) -> Vec<(Vec<usize>, Vec<Labeled>)> {
    if setup.quasi_identifiers.is_empty() {
        return vec![((0..setup.queries.len()).collect(), setup.pool.clone())];
    }
    let mut groups: BTreeMap<Vec<Option<String>>, Vec<usize>> = BTreeMap::new();
    for (i, attrs) in setup.query_attrs.iter().enumerate() {
        let key = setup
            .quasi_identifiers
            .iter()
            .map(|n| attrs.get(n).map(AttrValue::to_string))
            .collect();
        groups.entry(key).or_default().push(i);
    }
    groups
        .into_values()
        .map(|members| {
            let q_attrs = &setup.query_attrs[members[0]];
            let pool = setup
                .pool
                .iter()
                .zip(&setup.pool_attrs)
                .filter(|(_, a)| matches_quasi_identifiers(q_attrs, a, &setup.quasi_identifiers))
                .map(|(c, _)| c.clone())
                .collect();
            (members, pool)
        })
        .collect()
}

fn trivial_disclosure_warnings(linked: &LinkedDatasets, sensitive: &[String]) -> Vec<Warning> {
    sensitive
        .iter()
        .filter_map(|name| {
            let values: HashSet<String> = linked
                .masked
                .iter()
                .filter_map(|r| r.attributes.get(name).map(AttrValue::to_string))
                .collect();
            (values.len() == 1 && !linked.masked.is_empty()).then(|| {
                Warning::new(
                    WARN_TRIVIAL_DISCLOSURE,
                    format!(
                        "every released record has the same '{name}'; knowing that a person participated already discloses it"
                    ),
                )
            })
        })
        .collect()
}

/// Runs one scenario with one strategy and scores it against ground truth.
pub fn run_scenario(
    s: ScenarioId,
    linked: &LinkedDatasets,
    universe: &AddressUniverse,
    external: Option<&ExternalDataset>,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    if config.strategy == Strategy::Reversal && !s.method {
        return Err(Error::Config(format!(
            "strategy 'reversal' needs method knowledge, which scenario {s} excludes"
        )));
    }
    if s.method && config.method.is_none() {
        return Err(Error::Config(format!(
            "scenario {s} assumes method knowledge but no method descriptor was supplied"
        )));
    }
    let mut check = linked.clone();
    check.universe = Some(universe.clone());
    let violations = validate(&check);
    if let Some(v) = violations.first() {
        return Err(Error::Data(format!(
            "{} dataset violation(s), first: {v}",
            violations.len()
        )));
    }

    let setup = if s.perspective == 1 {
        perspective_one(s, linked, universe)
    } else {
        perspective_two(s, linked, universe, external)?
    };

    let mut outcomes: Vec<Option<QueryOutcome>> = vec![None; setup.queries.len()];
    if config.strategy == Strategy::CrossMatch {
        // a global assignment cannot honour per-query filters
        if !setup.queries.is_empty() {
            let res = cross_match_outcomes(&setup.queries, &setup.pool, config.n_max)?;
            outcomes = res.into_iter().map(Some).collect();
        }
    } else {
        for (members, pool_items) in group_by_quasi_identifiers(&setup) {
            let qs: Vec<Query> = members.iter().map(|i| setup.queries[*i].clone()).collect();
            let res = if pool_items.is_empty() {
                qs.iter().map(empty_pool_outcome).collect()
            } else {
                let pool = Pool::new(&pool_items);
                match config.strategy {
                    Strategy::Nn => nn_with_pool(&qs, &pool)?,
                    _ => {
                        let method = config.method.as_ref().expect("checked above");
                        method_filter_with_pool(&qs, &pool, s.perspective, method, &universe.area)?
                    }
                }
            };
            for (i, o) in members.into_iter().zip(res) {
                outcomes[i] = Some(o);
            }
        }
    }

    let per_query: BTreeMap<String, QueryOutcome> = setup
        .queries
        .iter()
        .zip(outcomes)
        .map(|(q, o)| (q.id.clone(), o.expect("every query attacked")))
        .collect();
    let aggregate = Aggregate::from_outcomes(per_query.values());
    let warnings = if s.perspective == 2 && s.participation {
        trivial_disclosure_warnings(linked, &config.sensitive_attributes)
    } else {
        Vec::new()
    };
    Ok(AttackOutcome {
        scenario: s,
        strategy: config.strategy,
        candidate_pool: setup.pool_label.to_string(),
        per_query,
        aggregate,
        warnings,
    })
}
