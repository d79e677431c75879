//! Record model: the address universe `B`, the target data `P` with its
//! addresses `A`, the masked release `P'` with `A'`, and external data `Q`.
//!
//! Original and masked records are linked by shared ids. The link is ground
//! truth for scoring and is never consulted by a simulated attacker.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, StudyArea};
use crate::masking::MethodDescriptor;

/// Schemaless attribute scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl AttrValue {
    /// Numbers when the text parses as a finite float, text otherwise.
    pub fn parse(raw: &str) -> Self {
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => AttrValue::Number(v),
            _ => AttrValue::Text(raw.to_string()),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(v) => write!(f, "{v}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Number(v)
    }
}

impl From<&str> for AttrValue {
    fn from(v: &str) -> Self {
        AttrValue::Text(v.to_string())
    }
}

pub type Attributes = BTreeMap<String, AttrValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub location: Point,
    #[serde(default)]
    pub attributes: Attributes,
}

impl Record {
    pub fn new(id: impl Into<String>, location: Point) -> Self {
        Record {
            id: id.into(),
            location,
            attributes: Attributes::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: impl Into<AttrValue>) -> Self {
        self.attributes.insert(name.into(), value.into());
        self
    }
}

pub fn locations(records: &[Record]) -> Vec<Point> {
    records.iter().map(|r| r.location).collect()
}

/// All real residential addresses `B` in the study area.
#[derive(Debug, Clone, PartialEq)]
pub struct AddressUniverse {
    pub records: Vec<Record>,
    pub area: StudyArea,
}

impl AddressUniverse {
    pub fn new(records: Vec<Record>, area: StudyArea) -> Self {
        AddressUniverse { records, area }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn locations(&self) -> Vec<Point> {
        locations(&self.records)
    }
}

/// Original and masked data linked through shared record ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedDatasets {
    pub original: Vec<Record>,
    pub masked: Vec<Record>,
    pub universe: Option<AddressUniverse>,
    pub method: Option<MethodDescriptor>,
}

impl LinkedDatasets {
    pub fn new(original: Vec<Record>, masked: Vec<Record>) -> Self {
        LinkedDatasets {
            original,
            masked,
            universe: None,
            method: None,
        }
    }

    pub fn with_universe(mut self, universe: AddressUniverse) -> Self {
        self.universe = Some(universe);
        self
    }

    pub fn with_method(mut self, method: MethodDescriptor) -> Self {
        self.method = Some(method);
        self
    }

    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    /// `(original, masked)` pairs sorted by id. Unlinked records are skipped;
    /// run [`validate`] first to rule them out.
    pub fn pairs(&self) -> Vec<(&Record, &Record)> {
        let masked: HashMap<&str, &Record> =
            self.masked.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut out: Vec<_> = self
            .original
            .iter()
            .filter_map(|o| masked.get(o.id.as_str()).map(|m| (o, *m)))
            .collect();
        out.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        out
    }
}

/// Addresses the intruder already holds (`A^q`), with attributes usable as
/// quasi-identifiers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalDataset {
    pub records: Vec<Record>,
    /// When set, every address must be an original address (`A^q ⊆ A`).
    pub participation_knowledge: bool,
    /// Attribute names the intruder matches exactly before spatial matching.
    pub quasi_identifiers: Vec<String>,
}

impl ExternalDataset {
    pub fn new(records: Vec<Record>, participation_knowledge: bool) -> Self {
        ExternalDataset {
            records,
            participation_knowledge,
            quasi_identifiers: Vec::new(),
        }
    }

    pub fn with_quasi_identifiers(mut self, names: Vec<String>) -> Self {
        self.quasi_identifiers = names;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnowledgeProfile {
    pub participation: bool,
    pub method: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonFiniteLocation,
    DuplicateId,
    CardinalityMismatch,
    UnlinkedRecord,
    OriginalNotInUniverse,
    OutsideStudyArea,
    ExternalNotInOriginal,
    ExternalNotInUniverse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record_id: Option<String>,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.record_id {
            Some(id) => write!(f, "{:?} [{}]: {}", self.kind, id, self.message),
            None => write!(f, "{:?}: {}", self.kind, self.message),
        }
    }
}

fn violation(id: Option<&str>, kind: ViolationKind, message: impl Into<String>) -> Violation {
    Violation {
        record_id: id.map(str::to_string),
        kind,
        message: message.into(),
    }
}

fn check_records(label: &str, records: &[Record], out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for r in records {
        if !r.location.is_finite() {
            out.push(violation(
                Some(&r.id),
                ViolationKind::NonFiniteLocation,
                format!("{label} record has a non-finite location"),
            ));
        }
        if !seen.insert(r.id.as_str()) {
            out.push(violation(
                Some(&r.id),
                ViolationKind::DuplicateId,
                format!("id appears more than once in {label} data"),
            ));
        }
    }
}

/// Reports every broken invariant; an empty list means the datasets are
/// well formed. Never fails.
pub fn validate(linked: &LinkedDatasets) -> Vec<Violation> {
    let mut out = Vec::new();
    check_records("original", &linked.original, &mut out);
    check_records("masked", &linked.masked, &mut out);

    if linked.original.len() != linked.masked.len() {
        out.push(violation(
            None,
            ViolationKind::CardinalityMismatch,
            format!(
                "{} original records but {} masked records",
                linked.original.len(),
                linked.masked.len()
            ),
        ));
    }

    let original_ids: HashSet<&str> = linked.original.iter().map(|r| r.id.as_str()).collect();
    let masked_ids: HashSet<&str> = linked.masked.iter().map(|r| r.id.as_str()).collect();
    for r in &linked.original {
        if !masked_ids.contains(r.id.as_str()) {
            out.push(violation(
                Some(&r.id),
                ViolationKind::UnlinkedRecord,
                "original record has no masked counterpart",
            ));
        }
    }
    for r in &linked.masked {
        if !original_ids.contains(r.id.as_str()) {
            out.push(violation(
                Some(&r.id),
                ViolationKind::UnlinkedRecord,
                "masked record has no original counterpart",
            ));
        }
    }

    if let Some(universe) = &linked.universe {
        check_records("universe", &universe.records, &mut out);
        let addresses: HashSet<(u64, u64)> =
            universe.records.iter().map(|r| r.location.key()).collect();
        for r in &universe.records {
            if !universe.area.contains(r.location) {
                out.push(violation(
                    Some(&r.id),
                    ViolationKind::OutsideStudyArea,
                    "universe address lies outside the study area",
                ));
            }
        }
        for r in &linked.original {
            if !addresses.contains(&r.location.key()) {
                out.push(violation(
                    Some(&r.id),
                    ViolationKind::OriginalNotInUniverse,
                    format!(
                        "original address ({}, {}) is not in the address universe",
                        r.location.x, r.location.y
                    ),
                ));
            }
        }
    }
    out
}

/// Checks `A^q ⊆ A` (participation knowledge) or `A^q ⊆ B` otherwise.
pub fn validate_external(external: &ExternalDataset, linked: &LinkedDatasets) -> Vec<Violation> {
    let mut out = Vec::new();
    check_records("external", &external.records, &mut out);
    if external.participation_knowledge {
        let originals: HashSet<(u64, u64)> =
            linked.original.iter().map(|r| r.location.key()).collect();
        for r in &external.records {
            if !originals.contains(&r.location.key()) {
                out.push(violation(
                    Some(&r.id),
                    ViolationKind::ExternalNotInOriginal,
                    "participation knowledge declared but address is not an original address",
                ));
            }
        }
    } else if let Some(universe) = &linked.universe {
        let addresses: HashSet<(u64, u64)> =
            universe.records.iter().map(|r| r.location.key()).collect();
        for r in &external.records {
            if !addresses.contains(&r.location.key()) {
                out.push(violation(
                    Some(&r.id),
                    ViolationKind::ExternalNotInUniverse,
                    "external address is not in the address universe",
                ));
            }
        }
    }
    out
}

/// Keeps the records whose attributes satisfy `predicate`, preserving order.
pub fn attribute_prefilter<F>(records: &[Record], predicate: F) -> Vec<Record>
where
    F: Fn(&Attributes) -> bool,
{
    records
        .iter()
        .filter(|r| predicate(&r.attributes))
        .cloned()
        .collect()
}

/// Predicate requiring `name == value`. A missing attribute never matches.
pub fn attr_equals(name: &str, value: AttrValue) -> impl Fn(&Attributes) -> bool + '_ {
    move |attrs| attrs.get(name) == Some(&value)
}

/// True when `candidate` agrees with `query` on every named attribute. A
/// missing attribute on either side is a mismatch.
pub fn matches_quasi_identifiers(
    query: &Attributes,
    candidate: &Attributes,
    names: &[String],
) -> bool {
    names
        .iter()
        .all(|n| match (query.get(n), candidate.get(n)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use proptest::prelude::*;

    fn rec(id: &str, x: f64, y: f64) -> Record {
        Record::new(id, Point::new(x, y))
    }

    fn well_formed(n: usize) -> LinkedDatasets {
        let original: Vec<_> = (0..n)
            .map(|i| rec(&format!("r{i}"), i as f64, 0.0))
            .collect();
        let masked: Vec<_> = (0..n)
            .map(|i| rec(&format!("r{i}"), i as f64 + 0.5, 1.0))
            .collect();
        let area = StudyArea::new(Rect::new(-1.0, -1.0, 20.0, 20.0)).unwrap();
        let mut universe = original.clone();
        universe
            .iter_mut()
            .for_each(|r| r.id = format!("b-{}", r.id));
        universe.push(rec("extra", 15.0, 15.0));
        LinkedDatasets::new(original, masked).with_universe(AddressUniverse::new(universe, area))
    }

    #[test]
    fn well_formed_pair_has_no_violations() {
        let linked = well_formed(10);
        assert!(validate(&linked).is_empty());
        // idempotent
        assert_eq!(validate(&linked), validate(&linked));
    }

    #[test]
    fn cardinality_violation() {
        let original = vec![rec("a", 0.0, 0.0), rec("b", 1.0, 0.0), rec("c", 2.0, 0.0)];
        let masked = vec![rec("a", 0.0, 1.0), rec("b", 1.0, 1.0)];
        let v = validate(&LinkedDatasets::new(original, masked));
        let card: Vec<_> = v
            .iter()
            .filter(|v| v.kind == ViolationKind::CardinalityMismatch)
            .collect();
        assert_eq!(card.len(), 1);
        assert!(v.iter().any(
            |v| v.kind == ViolationKind::UnlinkedRecord && v.record_id.as_deref() == Some("c")
        ));
    }

    #[test]
    fn original_outside_universe_is_reported() {
        let mut linked = well_formed(3);
        linked.original[1].location = Point::new(7.5, 7.5);
        let v = validate(&linked);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::OriginalNotInUniverse);
        assert_eq!(v[0].record_id.as_deref(), Some("r1"));
    }

    #[test]
    fn duplicate_ids_are_reported() {
        let mut linked = well_formed(3);
        linked.masked[2].id = "r0".into();
        let v = validate(&linked);
        assert!(v
            .iter()
            .any(|v| v.kind == ViolationKind::DuplicateId && v.record_id.as_deref() == Some("r0")));
    }

    #[test]
    fn masked_points_need_not_be_addresses() {
        // A' ⊄ B is legal
        let linked = well_formed(4);
        assert!(linked.masked.iter().all(|m| linked
            .universe
            .as_ref()
            .unwrap()
            .records
            .iter()
            .all(|b| b.location != m.location)));
        assert!(validate(&linked).is_empty());
    }

    #[test]
    fn external_participation_requires_originals() {
        let linked = well_formed(3);
        let ok = ExternalDataset::new(vec![rec("q0", 1.0, 0.0)], true);
        assert!(validate_external(&ok, &linked).is_empty());
        let bad = ExternalDataset::new(vec![rec("q1", 15.0, 15.0)], true);
        assert_eq!(
            validate_external(&bad, &linked)[0].kind,
            ViolationKind::ExternalNotInOriginal
        );
        let in_b = ExternalDataset::new(vec![rec("q1", 15.0, 15.0)], false);
        assert!(validate_external(&in_b, &linked).is_empty());
        let nowhere = ExternalDataset::new(vec![rec("q2", 3.3, 3.3)], false);
        assert_eq!(
            validate_external(&nowhere, &linked)[0].kind,
            ViolationKind::ExternalNotInUniverse
        );
    }

    #[test]
    fn prefilter_examples() {
        let rs = vec![
            rec("1", 0.0, 0.0).with_attr("age", 40.0),
            rec("2", 0.0, 0.0).with_attr("age", 41.0),
            rec("3", 0.0, 0.0).with_attr("age", 40.0),
        ];
        let kept = attribute_prefilter(&rs, attr_equals("age", 40.0.into()));
        assert_eq!(
            kept.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            vec!["1", "3"]
        );
        assert_eq!(attribute_prefilter(&rs, |_| true), rs);
        assert!(attribute_prefilter(&rs, attr_equals("income", 1.0.into())).is_empty());
    }

    #[test]
    fn quasi_identifier_matching() {
        let q = rec("q", 0.0, 0.0).with_attr("age", 40.0).attributes;
        let c1 = rec("c", 0.0, 0.0).with_attr("age", 40.0).attributes;
        let c2 = rec("c", 0.0, 0.0).attributes;
        let names = vec!["age".to_string()];
        assert!(matches_quasi_identifiers(&q, &c1, &names));
        assert!(!matches_quasi_identifiers(&q, &c2, &names));
        assert!(matches_quasi_identifiers(&q, &c2, &[]));
    }

    #[test]
    fn attr_value_parsing() {
        assert_eq!(AttrValue::parse("40"), AttrValue::Number(40.0));
        assert_eq!(AttrValue::parse("x"), AttrValue::Text("x".into()));
        assert_eq!(AttrValue::parse("NaN"), AttrValue::Text("NaN".into()));
        assert_eq!(AttrValue::Number(40.0).to_string(), "40");
    }

    proptest! {
        #[test]
        fn prefilters_compose_as_conjunction(
            ages in prop::collection::vec(0u8..5, 0..40),
            sexes in prop::collection::vec(0u8..2, 40),
            a in 0u8..5,
            s in 0u8..2,
        ) {
            let rs: Vec<Record> = ages.iter().enumerate().map(|(i, age)| {
                rec(&i.to_string(), 0.0, 0.0)
                    .with_attr("age", *age as f64)
                    .with_attr("sex", sexes[i] as f64)
            }).collect();
            let p = attr_equals("age", (a as f64).into());
            let q = attr_equals("sex", (s as f64).into());
            let twice = attribute_prefilter(&attribute_prefilter(&rs, &p), &q);
            let once = attribute_prefilter(&rs, |x| p(x) && q(x));
            prop_assert_eq!(twice, once);
        }
    }
}
