//! Geomasking methods and their displacement areas.
//!
//! Each method knows three things: how to displace a point, the forward area
//! `E_x` a point can land in, and the backward area `E'_x'` that must hold
//! the original given a masked point. For every masked pair both
//! `x' ∈ E_x` and `x ∈ E'_x'` hold.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{LinkedDatasets, Record};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect, Region, StudyArea};

/// Upper bound on rejection draws per point when clipping to the study area.
pub const MAX_REJECTION_DRAWS: usize = 10_000;

/// Identity of the random stream, echoed into run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a64(record_id)))";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskMethod {
    /// Displacement uniform by area over the closed disk of radius `radius`.
    UniformDisk { radius: f64 },
    /// Displacement uniform by area over the closed annulus.
    Donut { r_min: f64, r_max: f64 },
    /// Deterministic snap to the centre of the containing grid cell. It is
    /// invertible up to the cell and serves as a negative example.
    GridSnap { cell: f64, origin: Point },
}

impl MaskMethod {
    pub fn uniform(radius: f64) -> Result<Self> {
        MaskMethod::UniformDisk { radius }.validated()
    }

    pub fn donut(r_min: f64, r_max: f64) -> Result<Self> {
        MaskMethod::Donut { r_min, r_max }.validated()
    }

    pub fn grid_snap(cell: f64, origin: Point) -> Result<Self> {
        MaskMethod::GridSnap { cell, origin }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            MaskMethod::UniformDisk { radius } => radius.is_finite() && radius > 0.0,
            MaskMethod::Donut { r_min, r_max } => {
                r_min.is_finite() && r_max.is_finite() && 0.0 < r_min && r_min < r_max
            }
            MaskMethod::GridSnap { cell, origin } => {
                cell.is_finite() && cell > 0.0 && origin.is_finite()
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Config(format!("invalid method parameters: {self}")))
        }
    }

    /// Whether masking involves no randomness (and can be reversed up to a
    /// bounded preimage).
    pub fn is_deterministic(&self) -> bool {
        matches!(self, MaskMethod::GridSnap { .. })
    }

    /// Returns the method with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            MaskMethod::UniformDisk { radius } => MaskMethod::UniformDisk {
                radius: radius * factor,
            },
            MaskMethod::Donut { r_min, r_max } => MaskMethod::Donut {
                r_min: r_min * factor,
                r_max: r_max * factor,
            },
            MaskMethod::GridSnap { cell, origin } => MaskMethod::GridSnap {
                cell: cell * factor,
                origin: Point::new(origin.x * factor, origin.y * factor),
            },
        }
    }

    fn grid_cell(cell: f64, origin: Point, p: Point) -> Rect {
        let i = ((p.x - origin.x) / cell).floor();
        let j = ((p.y - origin.y) / cell).floor();
        Rect::new(
            origin.x + i * cell,
            origin.y + j * cell,
            origin.x + (i + 1.0) * cell,
            origin.y + (j + 1.0) * cell,
        )
    }

    fn unclipped_forward(&self, x: Point) -> Region {
        match *self {
            MaskMethod::UniformDisk { radius } => Region::disk(x, radius),
            MaskMethod::Donut { r_min, r_max } => Region::annulus(x, r_min, r_max),
            MaskMethod::GridSnap { cell, origin } => {
                let c = Self::grid_cell(cell, origin, x).center();
                Region::cell(Rect::point(c))
            }
        }
    }

    fn unclipped_backward(&self, x_prime: Point) -> Region {
        match *self {
            MaskMethod::UniformDisk { radius } => Region::disk(x_prime, radius),
            MaskMethod::Donut { r_min, r_max } => Region::annulus(x_prime, r_min, r_max),
            MaskMethod::GridSnap { cell, origin } => {
                Region::cell(Self::grid_cell(cell, origin, x_prime))
            }
        }
    }

    /// Forward area `E_x`. Fails when `x` lies outside the study area.
    pub fn forward_area(&self, x: Point, area: &StudyArea, clip: bool) -> Result<Region> {
        if !area.contains(x) {
            return Err(Error::Domain(format!(
                "point ({}, {}) lies outside the study area",
                x.x, x.y
            )));
        }
        let r = self.unclipped_forward(x);
        Ok(if clip { r.clipped(area) } else { r })
    }

    /// Backward area `E'_x'`.
    pub fn backward_area(&self, x_prime: Point, area: &StudyArea, clip: bool) -> Region {
        let r = self.unclipped_backward(x_prime);
        if clip {
            r.clipped(area)
        } else {
            r
        }
    }

    fn draw<R: Rng + ?Sized>(&self, x: Point, rng: &mut R) -> Point {
        match *self {
            MaskMethod::UniformDisk { radius } => {
                let r = radius * rng.random::<f64>().sqrt();
                offset(x, r, rng.random::<f64>() * std::f64::consts::TAU)
            }
            MaskMethod::Donut { r_min, r_max } => {
                let u = rng.random::<f64>();
                let r = (u * (r_max * r_max - r_min * r_min) + r_min * r_min).sqrt();
                offset(x, r, rng.random::<f64>() * std::f64::consts::TAU)
            }
            MaskMethod::GridSnap { cell, origin } => Self::grid_cell(cell, origin, x).center(),
        }
    }

    /// Displaces one point. With `clip` the draw is repeated until it lands
    /// inside the study area.
    pub fn mask_point<R: Rng + ?Sized>(
        &self,
        x: Point,
        area: &StudyArea,
        clip: bool,
        rng: &mut R,
    ) -> Result<Point> {
        if !area.contains(x) {
            return Err(Error::Domain(format!(
                "point ({}, {}) lies outside the study area",
                x.x, x.y
            )));
        }
        let attempts = if self.is_deterministic() {
            1
        } else {
            MAX_REJECTION_DRAWS
        };
        for _ in 0..attempts {
            let p = self.draw(x, rng);
            if !clip || area.contains(p) {
                return Ok(p);
            }
        }
        Err(Error::Sampling(format!(
            "no displacement of ({}, {}) inside the study area after {attempts} draws",
            x.x, x.y
        )))
    }
}

fn offset(x: Point, r: f64, theta: f64) -> Point {
    Point::new(x.x + r * theta.cos(), x.y + r * theta.sin())
}

impl fmt::Display for MaskMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskMethod::UniformDisk { radius } => write!(f, "uniform:{radius}"),
            MaskMethod::Donut { r_min, r_max } => write!(f, "donut:{r_min},{r_max}"),
            MaskMethod::GridSnap { cell, origin } => {
                if origin.x == 0.0 && origin.y == 0.0 {
                    write!(f, "gridsnap:{cell}")
                } else {
                    write!(f, "gridsnap:{cell},{},{}", origin.x, origin.y)
                }
            }
        }
    }
}

impl FromStr for MaskMethod {
    type Err = Error;

    /// Parses `uniform:R`, `donut:rmin,rmax` or `gridsnap:cell[,ox,oy]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad method descriptor '{s}'"));
        let (name, params) = s.trim().split_once(':').ok_or_else(bad)?;
        let nums = params
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let method = match (name.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("uniform", [r]) => MaskMethod::UniformDisk { radius: *r },
            ("donut", [a, b]) => MaskMethod::Donut {
                r_min: *a,
                r_max: *b,
            },
            ("gridsnap", [c]) => MaskMethod::GridSnap {
                cell: *c,
                origin: Point::new(0.0, 0.0),
            },
            ("gridsnap", [c, ox, oy]) => MaskMethod::GridSnap {
                cell: *c,
                origin: Point::new(*ox, *oy),
            },
            _ => return Err(bad()),
        };
        method.validated()
    }
}

impl Serialize for MaskMethod {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MaskMethod {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What an informed intruder knows about the masking: the method with its
/// parameters and whether draws were clipped to the study area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    pub method: MaskMethod,
    pub clip_to_area: bool,
}

impl MethodDescriptor {
    pub fn new(method: MaskMethod, clip_to_area: bool) -> Self {
        MethodDescriptor {
            method,
            clip_to_area,
        }
    }

    pub fn forward_area(&self, x: Point, area: &StudyArea) -> Result<Region> {
        self.method.forward_area(x, area, self.clip_to_area)
    }

    pub fn backward_area(&self, x_prime: Point, area: &StudyArea) -> Region {
        self.method.backward_area(x_prime, area, self.clip_to_area)
    }
}

impl From<MaskMethod> for MethodDescriptor {
    fn from(method: MaskMethod) -> Self {
        MethodDescriptor::new(method, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskRun {
    pub method: MaskMethod,
    pub seed: u64,
    pub clip_to_area: bool,
}

impl MaskRun {
    pub fn new(method: MaskMethod, seed: u64) -> Self {
        MaskRun {
            method,
            seed,
            clip_to_area: false,
        }
    }

    pub fn clipped(mut self, clip: bool) -> Self {
        self.clip_to_area = clip;
        self
    }

    pub fn descriptor(&self) -> MethodDescriptor {
        MethodDescriptor::new(self.method, self.clip_to_area)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for one record, so results do not depend on
/// scheduling or record order.
pub fn record_rng(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a64(id.as_bytes())))
}

/// Masks every record, copying ids and attributes unchanged.
pub fn mask_dataset(
    original: &[Record],
    run: &MaskRun,
    area: &StudyArea,
) -> Result<LinkedDatasets> {
    run.method.validated()?;
    let masked = original
        .par_iter()
        .map(|r| {
            let mut rng = record_rng(run.seed, &r.id);
            run.method
                .mask_point(r.location, area, run.clip_to_area, &mut rng)
                .map(|location| Record {
                    id: r.id.clone(),
                    location,
                    attributes: r.attributes.clone(),
                })
                .map_err(|e| Error::for_record(&r.id, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkedDatasets::new(original.to_vec(), masked).with_method(run.descriptor()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::distance;

    fn area() -> StudyArea {
        StudyArea::new(Rect::new(-1000.0, -1000.0, 1000.0, 1000.0)).unwrap()
    }

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn forward_area_examples() {
        let a = area();
        assert_eq!(
            MaskMethod::uniform(100.0)
                .unwrap()
                .forward_area(p(0.0, 0.0), &a, false)
                .unwrap(),
            Region::disk(p(0.0, 0.0), 100.0)
        );
        assert_eq!(
            MaskMethod::donut(50.0, 200.0)
                .unwrap()
                .forward_area(p(10.0, 10.0), &a, false)
                .unwrap(),
            Region::annulus(p(10.0, 10.0), 50.0, 200.0)
        );
        assert_eq!(
            MaskMethod::grid_snap(100.0, p(0.0, 0.0))
                .unwrap()
                .forward_area(p(130.0, 20.0), &a, false)
                .unwrap(),
            Region::cell(Rect::point(p(150.0, 50.0)))
        );
        assert!(MaskMethod::uniform(1.0)
            .unwrap()
            .forward_area(p(5000.0, 0.0), &a, false)
            .is_err());
    }

    #[test]
    fn backward_area_examples() {
        let a = area();
        assert_eq!(
            MaskMethod::uniform(100.0)
                .unwrap()
                .backward_area(p(0.0, 0.0), &a, false),
            Region::disk(p(0.0, 0.0), 100.0)
        );
        assert_eq!(
            MaskMethod::donut(50.0, 200.0)
                .unwrap()
                .backward_area(p(0.0, 0.0), &a, false),
            Region::annulus(p(0.0, 0.0), 50.0, 200.0)
        );
        assert_eq!(
            MaskMethod::grid_snap(100.0, p(0.0, 0.0))
                .unwrap()
                .backward_area(p(150.0, 50.0), &a, false),
            Region::cell(Rect::new(100.0, 0.0, 200.0, 100.0))
        );
        let clipped = MaskMethod::uniform(100.0)
            .unwrap()
            .backward_area(p(0.0, 0.0), &a, true);
        assert_eq!(clipped, Region::disk(p(0.0, 0.0), 100.0).clipped(&a));
    }

    #[test]
    fn grid_snap_is_deterministic() {
        let m = MaskMethod::grid_snap(100.0, p(0.0, 0.0)).unwrap();
        let mut rng = record_rng(1, "x");
        assert_eq!(
            m.mask_point(p(130.0, 20.0), &area(), false, &mut rng)
                .unwrap(),
            p(150.0, 50.0)
        );
        let shifted = MaskMethod::grid_snap(100.0, p(10.0, -10.0)).unwrap();
        assert_eq!(
            shifted
                .mask_point(p(130.0, 20.0), &area(), false, &mut rng)
                .unwrap(),
            p(160.0, 40.0)
        );
    }

    #[test]
    fn parameter_bounds() {
        assert!(MaskMethod::uniform(0.0).is_err());
        assert!(MaskMethod::donut(0.0, 10.0).is_err());
        assert!(MaskMethod::donut(10.0, 10.0).is_err());
        assert!(MaskMethod::grid_snap(-1.0, p(0.0, 0.0)).is_err());
        assert!(MaskMethod::uniform(f64::NAN).is_err());
    }

    #[test]
    fn descriptor_grammar() {
        for s in [
            "uniform:100",
            "donut:50,200",
            "gridsnap:100",
            "gridsnap:25.5,1,-2",
        ] {
            let m: MaskMethod = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!(
            "donut:50,200".parse::<MaskMethod>().unwrap(),
            MaskMethod::Donut {
                r_min: 50.0,
                r_max: 200.0
            }
        );
        for bad in [
            "",
            "uniform",
            "uniform:",
            "donut:5",
            "circle:3",
            "donut:200,50",
            "gridsnap:1,2",
        ] {
            let e = bad.parse::<MaskMethod>().unwrap_err();
            assert!(e.is_config(), "{bad}");
        }
        let json = serde_json::to_string(&MaskMethod::donut(50.0, 200.0).unwrap()).unwrap();
        assert_eq!(json, "\"donut:50,200\"");
    }

    #[test]
    fn masked_points_lie_in_both_areas() {
        let a = area();
        let methods = [
            MaskMethod::uniform(100.0).unwrap(),
            MaskMethod::donut(50.0, 200.0).unwrap(),
            MaskMethod::grid_snap(70.0, p(3.0, 4.0)).unwrap(),
        ];
        let mut rng = record_rng(9, "containment");
        for m in methods {
            for clip in [false, true] {
                for i in 0..2000 {
                    let x = p(
                        -990.0 + (i as f64 * 0.987) % 1980.0,
                        990.0 - (i as f64 * 1.31) % 1980.0,
                    );
                    let xp = match m.mask_point(x, &a, clip, &mut rng) {
                        Ok(xp) => xp,
                        // a snapped centre outside the area has no clipped alternative
                        Err(Error::Sampling(_)) if clip && m.is_deterministic() => {
                            assert!(!a.contains(m.mask_point(x, &a, false, &mut rng).unwrap()));
                            continue;
                        }
                        Err(e) => panic!("{e}"),
                    };
                    assert!(m.forward_area(x, &a, clip).unwrap().contains(xp));
                    assert!(m.backward_area(xp, &a, clip).contains(x));
                    if clip {
                        assert!(a.contains(xp));
                    }
                }
            }
        }
    }

    #[test]
    fn donut_displacement_stays_in_ring() {
        let m = MaskMethod::donut(50.0, 200.0).unwrap();
        let mut rng = record_rng(3, "ring");
        for _ in 0..5000 {
            let d = distance(
                p(0.0, 0.0),
                m.mask_point(p(0.0, 0.0), &area(), false, &mut rng).unwrap(),
            );
            assert!((50.0 - 1e-9..=200.0 + 1e-9).contains(&d));
        }
    }

    // Mean radius of an area-uniform annulus by midpoint quadrature of
    // r * 2r / (r_max^2 - r_min^2).
    fn annulus_mean_radius_quadrature(r_min: f64, r_max: f64) -> f64 {
        let steps = 100_000;
        let h = (r_max - r_min) / steps as f64;
        (0..steps)
            .map(|i| {
                let r = r_min + (i as f64 + 0.5) * h;
                r * 2.0 * r / (r_max * r_max - r_min * r_min) * h
            })
            .sum()
    }

    #[test]
    fn donut_is_uniform_by_area() {
        let expected = annulus_mean_radius_quadrature(50.0, 200.0);
        assert!((expected - 140.0).abs() < 1e-6, "{expected}");
        let m = MaskMethod::donut(50.0, 200.0).unwrap();
        let mut rng = record_rng(2024, "donut-mean");
        let n = 10_000;
        let mean = (0..n)
            .map(|_| {
                distance(
                    p(0.0, 0.0),
                    m.mask_point(p(0.0, 0.0), &area(), false, &mut rng).unwrap(),
                )
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - expected).abs() < 2.0, "mean radius {mean}");
    }

    #[test]
    fn uniform_disk_radius_cdf_passes_ks() {
        let radius = 100.0;
        let m = MaskMethod::uniform(radius).unwrap();
        let mut rng = record_rng(7, "ks");
        let n = 10_000;
        let mut d: Vec<f64> = (0..n)
            .map(|_| {
                distance(
                    p(0.0, 0.0),
                    m.mask_point(p(0.0, 0.0), &area(), false, &mut rng).unwrap(),
                )
            })
            .collect();
        d.sort_by(f64::total_cmp);
        let ks = d
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let f = (r / radius).powi(2);
                (f - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // alpha = 0.01 asymptotic critical value
        assert!(ks < 1.628 / (n as f64).sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn rejection_gives_up_on_tiny_area() {
        let tiny = StudyArea::new(Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap();
        let m = MaskMethod::donut(500.0, 600.0).unwrap();
        let mut rng = record_rng(1, "tiny");
        assert!(matches!(
            m.mask_point(p(0.5, 0.5), &tiny, true, &mut rng),
            Err(Error::Sampling(_))
        ));
        assert!(m.mask_point(p(0.5, 0.5), &tiny, false, &mut rng).is_ok());
    }

    #[test]
    fn mask_dataset_contract() {
        let a = area();
        let run = MaskRun::new(MaskMethod::uniform(100.0).unwrap(), 42);
        let empty = mask_dataset(&[], &run, &a).unwrap();
        assert!(empty.original.is_empty() && empty.masked.is_empty());

        let recs: Vec<Record> = (0..100)
            .map(|i| {
                Record::new(format!("p{i}"), p(i as f64 * 5.0 - 250.0, 0.0))
                    .with_attr("age", i as f64)
            })
            .collect();
        let first = mask_dataset(&recs[..5], &run, &a).unwrap();
        let second = mask_dataset(&recs[..5], &run, &a).unwrap();
        assert_eq!(first, second);
        for (o, m) in first.original.iter().zip(&first.masked) {
            assert_eq!(o.id, m.id);
            assert_eq!(o.attributes, m.attributes);
        }

        let all = mask_dataset(&recs, &run, &a).unwrap();
        assert!(all
            .pairs()
            .iter()
            .all(|(o, m)| distance(o.location, m.location) <= 100.0));
        assert_eq!(all.method, Some(run.descriptor()));

        // per-record streams do not depend on record order
        let mut reversed = recs.clone();
        reversed.reverse();
        let rev = mask_dataset(&reversed, &run, &a).unwrap();
        for m in &rev.masked {
            let fwd = all.masked.iter().find(|r| r.id == m.id).unwrap();
            assert_eq!(fwd.location, m.location);
        }
    }

    #[test]
    fn mask_dataset_reports_offending_id() {
        let a = area();
        let run = MaskRun::new(MaskMethod::uniform(10.0).unwrap(), 1);
        let recs = vec![
            Record::new("ok", p(0.0, 0.0)),
            Record::new("outside", p(5000.0, 0.0)),
        ];
        match mask_dataset(&recs, &run, &a) {
            Err(Error::Record { id, .. }) => assert_eq!(id, "outside"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
