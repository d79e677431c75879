//! Synthetic address universes and target samples.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dataset::{AddressUniverse, AttrValue, Record};
use crate::error::{Error, Result};
use crate::geometry::{Point, StudyArea};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    Uniform,
    /// Mixture of isotropic Gaussians around uniformly placed centres,
    /// truncated to the study area.
    Clustered {
        clusters: usize,
        sigma: f64,
    },
}

/// Categorical attribute with (label, weight) classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeGenerator {
    pub name: String,
    pub classes: Vec<(String, f64)>,
}

impl AttributeGenerator {
    /// Parses `name=A:0.5,B:0.5`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad attribute generator '{s}'"));
        let (name, rest) = s.split_once('=').ok_or_else(bad)?;
        let classes = rest
            .split(',')
            .map(|c| {
                let (label, w) = c.split_once(':').ok_or_else(bad)?;
                let w: f64 = w.trim().parse().map_err(|_| bad())?;
                Ok((label.trim().to_string(), w))
            })
            .collect::<Result<Vec<_>>>()?;
        let g = AttributeGenerator {
            name: name.trim().to_string(),
            classes,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let ok = !self.name.is_empty()
            && !self.classes.is_empty()
            && self.classes.iter().all(|(_, w)| w.is_finite() && *w >= 0.0)
            && self.classes.iter().any(|(_, w)| *w > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid attribute generator '{}'",
                self.name
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub area: StudyArea,
    pub universe_size: usize,
    pub pattern: Pattern,
    pub sample_size: usize,
    pub attributes: Vec<AttributeGenerator>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size > self.universe_size {
            return Err(Error::Config(format!(
                "sample size {} exceeds universe size {}",
                self.sample_size, self.universe_size
            )));
        }
        if let Pattern::Clustered { clusters, sigma } = self.pattern {
            if clusters == 0 || !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::Config(
                    "clustered pattern needs at least one cluster and sigma > 0".into(),
                ));
            }
        }
        self.attributes
            .iter()
            .try_for_each(AttributeGenerator::validate)
    }
}

const MAX_AREA_DRAWS: usize = 100_000;

fn uniform_in_area(area: &StudyArea, rng: &mut impl Rng) -> Result<Point> {
    let b = area.bounds;
    for _ in 0..MAX_AREA_DRAWS {
        let p = Point::new(
            rng.random_range(b.min_x..=b.max_x),
            rng.random_range(b.min_y..=b.max_y),
        );
        if area.contains(p) {
            return Ok(p);
        }
    }
    Err(Error::Sampling(
        "could not place a point inside the study area".into(),
    ))
}

fn zero_padded(prefix: &str, i: usize, total: usize) -> String {
    let width = total.max(1).to_string().len();
    format!("{prefix}{i:0width$}")
}

/// Generates `B`. Deterministic per seed.
pub fn generate_universe(spec: &SynthSpec) -> Result<AddressUniverse> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.universe_size;
    let points = match spec.pattern {
        Pattern::Uniform => (0..m)
            .map(|_| uniform_in_area(&spec.area, &mut rng))
            .collect::<Result<Vec<_>>>()?,
        Pattern::Clustered { clusters, sigma } => {
            let centers = (0..clusters)
                .map(|_| uniform_in_area(&spec.area, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
            (0..m)
                .map(|_| {
                    let c = centers[rng.random_range(0..clusters)];
                    for _ in 0..MAX_AREA_DRAWS {
                        let p = Point::new(
                            c.x + normal.sample(&mut rng),
                            c.y + normal.sample(&mut rng),
                        );
                        if spec.area.contains(p) {
                            return Ok(p);
                        }
                    }
                    Err(Error::Sampling(
                        "cluster draw kept leaving the study area".into(),
                    ))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let records = points
        .into_iter()
        .enumerate()
        .map(|(i, p)| Record::new(zero_padded("b", i, m), p))
        .collect();
    Ok(AddressUniverse::new(records, spec.area.clone()))
}

/// Draws `n` distinct universe addresses without replacement and attaches
/// attributes. Records come out in universe order with ids `p0..`.
pub fn sample_targets(
    universe: &AddressUniverse,
    n: usize,
    attributes: &[AttributeGenerator],
    seed: u64,
) -> Result<Vec<Record>> {
    let m = universe.len();
    if n > m {
        return Err(Error::Domain(format!(
            "cannot sample {n} targets from {m} addresses"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, m, n).into_vec();
    picked.sort_unstable();
    let samplers = attributes
        .iter()
        .map(|g| {
            g.validate()?;
            WeightedIndex::new(g.classes.iter().map(|(_, w)| *w))
                .map_err(|e| Error::Config(format!("attribute '{}': {e}", g.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(picked
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            let mut r = Record::new(zero_padded("p", i, n), universe.records[u].location);
            for (g, s) in attributes.iter().zip(&samplers) {
                let label = &g.classes[s.sample(&mut rng)].0;
                r.attributes.insert(g.name.clone(), AttrValue::parse(label));
            }
            r
        })
        .collect())
}

/// Clones each record `copies` times at the same coordinate (several persons
/// per address). Clone ids get a `-j` suffix; `copies == 1` is the identity.
pub fn with_multiplicity(records: &[Record], copies: usize) -> Vec<Record> {
    if copies <= 1 {
        return records.to_vec();
    }
    records
        .iter()
        .flat_map(|r| {
            (0..copies).map(move |j| Record {
                id: format!("{}-{j}", r.id),
                ..r.clone()
            })
        })
        .collect()
}
