//! Planar points, Euclidean distance, and closed regions.
//!
//! Coordinates are meters in a projected CRS. Every region is closed and
//! membership tests accept an absolute slack of [`EPSILON`] so that radii
//! reconstructed from stored coordinates never lose their defining point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute boundary tolerance in meters: `d <= r + EPSILON` is a member.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Checked constructor rejecting NaN and infinities.
    pub fn try_new(x: f64, y: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() {
            Ok(Point { x, y })
        } else {
            Err(Error::Domain(format!("non-finite coordinate ({x}, {y})")))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Bitwise key for exact coordinate identity (`-0.0` folded into `0.0`).
    pub fn key(&self) -> (u64, u64) {
        ((self.x + 0.0).to_bits(), (self.y + 0.0).to_bits())
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Euclidean distance.
pub fn distance(p: Point, q: Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// Degenerate rectangle holding a single point.
    pub const fn point(p: Point) -> Self {
        Rect::new(p.x, p.y, p.x, p.y)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x - EPSILON
            && p.x <= self.max_x + EPSILON
            && p.y >= self.min_y - EPSILON
            && p.y <= self.max_y + EPSILON
    }

    /// Returns `None` when the rectangles do not overlap.
    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect::new(
            self.min_x.max(other.min_x),
            self.min_y.max(other.min_y),
            self.max_x.min(other.max_x),
            self.max_y.min(other.max_y),
        );
        (r.min_x <= r.max_x && r.min_y <= r.max_y).then_some(r)
    }

    /// Smallest rectangle covering all points, `None` for an empty input.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Rect> {
        points.into_iter().fold(None, |acc, p| {
            Some(match acc {
                None => Rect::point(*p),
                Some(r) => Rect::new(
                    r.min_x.min(p.x),
                    r.min_y.min(p.y),
                    r.max_x.max(p.x),
                    r.max_y.max(p.y),
                ),
            })
        })
    }

    pub fn expanded(&self, by: f64) -> Rect {
        Rect::new(
            self.min_x - by,
            self.min_y - by,
            self.max_x + by,
            self.max_y + by,
        )
    }
}

/// The study area `U`: a bounding rectangle, optionally refined by a
/// polygon ring lying inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyArea {
    pub bounds: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<Point>>,
}

impl StudyArea {
    pub fn new(bounds: Rect) -> Result<Self> {
        if !(bounds.min_x.is_finite()
            && bounds.min_y.is_finite()
            && bounds.max_x.is_finite()
            && bounds.max_y.is_finite())
        {
            return Err(Error::Domain("study area has non-finite bounds".into()));
        }
        if bounds.width() <= 0.0 || bounds.height() <= 0.0 {
            return Err(Error::Domain(format!(
                "degenerate study area {}x{}",
                bounds.width(),
                bounds.height()
            )));
        }
        Ok(StudyArea {
            bounds,
            polygon: None,
        })
    }

    /// Study area bounded by a simple polygon ring (closing vertex optional).
    pub fn with_polygon(ring: Vec<Point>) -> Result<Self> {
        if ring.len() < 3 {
            return Err(Error::Domain(
                "polygon ring needs at least 3 vertices".into(),
            ));
        }
        if ring.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("polygon ring has non-finite vertex".into()));
        }
        let bounds = Rect::bounding(&ring).expect("ring is non-empty");
        let mut area = StudyArea::new(bounds)?;
        area.polygon = Some(ring);
        Ok(area)
    }

    /// Bounding rectangle of the points, grown by `margin` on every side.
    /// Grows to at least one meter if the points are collinear or coincident.
    pub fn enclosing(points: &[Point], margin: f64) -> Result<Self> {
        let r = Rect::bounding(points)
            .ok_or_else(|| Error::Domain("cannot derive a study area from no points".into()))?;
        let mut r = r.expanded(margin.max(0.0));
        if r.width() <= 0.0 {
            r.min_x -= 0.5;
            r.max_x += 0.5;
        }
        if r.height() <= 0.0 {
            r.min_y -= 0.5;
            r.max_y += 0.5;
        }
        StudyArea::new(r)
    }

    pub fn contains(&self, p: Point) -> bool {
        if !self.bounds.contains(p) {
            return false;
        }
        match &self.polygon {
            None => true,
            Some(ring) => point_in_ring(ring, p) || distance_to_ring(ring, p) <= EPSILON,
        }
    }
}

fn ring_edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
}

// Even-odd ray casting.
fn point_in_ring(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    for (a, b) in ring_edges(ring) {
        if (a.y > p.y) != (b.y > p.y) {
            let t = (p.y - a.y) / (b.y - a.y);
            if p.x < a.x + t * (b.x - a.x) {
                inside = !inside;
            }
        }
    }
    inside
}

fn distance_to_ring(ring: &[Point], p: Point) -> f64 {
    ring_edges(ring)
        .map(|(a, b)| {
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
            };
            distance(p, Point::new(a.x + t * dx, a.y + t * dy))
        })
        .fold(f64::INFINITY, f64::min)
}

/// A closed, membership-testable area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    ClosedDisk {
        center: Point,
        radius: f64,
    },
    Annulus {
        center: Point,
        r_min: f64,
        r_max: f64,
    },
    Cell {
        rect: Rect,
    },
    IntersectionWithStudyArea {
        inner: Box<Region>,
        area: StudyArea,
    },
}

impl Region {
    pub fn disk(center: Point, radius: f64) -> Self {
        debug_assert!(radius >= 0.0);
        Region::ClosedDisk { center, radius }
    }

    pub fn annulus(center: Point, r_min: f64, r_max: f64) -> Self {
        debug_assert!(0.0 <= r_min && r_min <= r_max);
        Region::Annulus {
            center,
            r_min,
            r_max,
        }
    }

    pub fn cell(rect: Rect) -> Self {
        Region::Cell { rect }
    }

    pub fn clipped(self, area: &StudyArea) -> Self {
        Region::IntersectionWithStudyArea {
            inner: Box::new(self),
            area: area.clone(),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Region::ClosedDisk { center, radius } => distance(*center, p) <= radius + EPSILON,
            Region::Annulus {
                center,
                r_min,
                r_max,
            } => {
                let d = distance(*center, p);
                d >= r_min - EPSILON && d <= r_max + EPSILON
            }
            Region::Cell { rect } => rect.contains(p),
            Region::IntersectionWithStudyArea { inner, area } => {
                inner.contains(p) && area.contains(p)
            }
        }
    }

    /// Rectangle covering every member, tolerance included.
    pub fn bounding_rect(&self) -> Option<Rect> {
        match self {
            Region::ClosedDisk { center, radius } => {
                Some(Rect::point(*center).expanded(radius + EPSILON))
            }
            Region::Annulus { center, r_max, .. } => {
                Some(Rect::point(*center).expanded(r_max + EPSILON))
            }
            Region::Cell { rect } => Some(rect.expanded(EPSILON)),
            Region::IntersectionWithStudyArea { inner, area } => inner
                .bounding_rect()?
                .intersection(&area.bounds.expanded(EPSILON)),
        }
    }
}

/// Membership test, free-function form.
pub fn region_contains(region: &Region, p: Point) -> bool {
    region.contains(p)
}

/// Number of points inside the region, counted with multiplicity. This linear
/// scan is the reference every accelerated path must reproduce.
pub fn restricted_count(points: &[Point], region: &Region) -> usize {
    points.iter().filter(|p| region.contains(**p)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(p(0.0, 0.0), p(3.0, 4.0)), 5.0);
        assert_eq!(distance(p(7.0, -2.0), p(7.0, -2.0)), 0.0);
        assert!((distance(p(1.0, 1.0), p(-2.0, 0.0)) - 10f64.sqrt()).abs() < 1e-12);
        assert!((distance(p(1.0, 1.0), p(-2.0, 0.0)) - 3.16227766).abs() < 1e-8);
    }

    #[test]
    fn region_examples() {
        assert!(Region::disk(p(0.0, 0.0), 3.0).contains(p(3.0, 0.0)));
        let ring = Region::annulus(p(0.0, 0.0), 50.0, 200.0);
        assert!(!ring.contains(p(0.0, 30.0)));
        assert!(ring.contains(p(0.0, 100.0)));
        assert!(ring.contains(p(0.0, 50.0)));
        assert!(ring.contains(p(200.0, 0.0)));
        assert!(!ring.contains(p(200.1, 0.0)));
    }

    #[test]
    fn cell_and_intersection_are_closed() {
        let cell = Region::cell(Rect::new(100.0, 0.0, 200.0, 100.0));
        assert!(cell.contains(p(200.0, 100.0)));
        assert!(cell.contains(p(100.0, 0.0)));
        assert!(!cell.contains(p(99.0, 50.0)));

        let area = StudyArea::new(Rect::new(0.0, 0.0, 10.0, 10.0)).unwrap();
        let r = Region::disk(p(0.0, 0.0), 5.0).clipped(&area);
        assert!(r.contains(p(0.0, 5.0)));
        assert!(!r.contains(p(-1.0, 0.0)));
        assert!(r.contains(p(0.0, 0.0)));
    }

    #[test]
    fn restricted_count_examples() {
        let pts = [
            p(3.0, 0.0),
            p(1.0, 1.0),
            p(-2.0, 0.0),
            p(5.0, 5.0),
            p(0.0, 4.0),
        ];
        assert_eq!(restricted_count(&pts, &Region::disk(p(0.0, 0.0), 3.0)), 3);
        assert_eq!(restricted_count(&[], &Region::disk(p(0.0, 0.0), 3.0)), 0);
        let dup = [p(0.0, 0.0), p(0.0, 0.0)];
        assert_eq!(restricted_count(&dup, &Region::disk(p(0.0, 0.0), 0.0)), 2);
    }

    #[test]
    fn study_area_validation() {
        assert!(StudyArea::new(Rect::new(0.0, 0.0, 0.0, 5.0)).is_err());
        assert!(StudyArea::new(Rect::new(0.0, 0.0, f64::NAN, 5.0)).is_err());
        assert!(Point::try_new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn polygon_area_membership() {
        // L-shaped ring
        let ring = vec![
            p(0.0, 0.0),
            p(10.0, 0.0),
            p(10.0, 5.0),
            p(5.0, 5.0),
            p(5.0, 10.0),
            p(0.0, 10.0),
        ];
        let area = StudyArea::with_polygon(ring).unwrap();
        assert!(area.contains(p(2.0, 8.0)));
        assert!(area.contains(p(8.0, 2.0)));
        assert!(!area.contains(p(8.0, 8.0)));
        assert!(area.contains(p(5.0, 7.0)));
        assert!(area.contains(p(10.0, 5.0)));
    }

    fn coord() -> impl Strategy<Value = f64> {
        -1.0e4..1.0e4
    }

    fn point() -> impl Strategy<Value = Point> {
        (coord(), coord()).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in point(), b in point(), c in point()) {
            prop_assert!(distance(a, b) >= 0.0);
            prop_assert_eq!(distance(a, b), distance(b, a));
            prop_assert_eq!(distance(a, a), 0.0);
            prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9);
            if a != b {
                prop_assert!(distance(a, b) > 0.0);
            }
        }

        #[test]
        fn boundary_points_are_members(c in point(), r in 0.0f64..500.0, theta in 0.0f64..std::f64::consts::TAU) {
            let on = Point::new(c.x + r * theta.cos(), c.y + r * theta.sin());
            let d = distance(c, on);
            prop_assert!(Region::disk(c, d).contains(on));
            prop_assert!(Region::annulus(c, d, d).contains(on));
            let rect = Rect::new(c.x.min(on.x), c.y.min(on.y), c.x.max(on.x), c.y.max(on.y));
            prop_assert!(Region::cell(rect).contains(on));
            prop_assert!(Region::cell(rect).contains(c));
        }

        #[test]
        fn restricted_count_is_filter_count(pts in prop::collection::vec(point(), 0..60), c in point(), r in 0.0f64..5000.0) {
            for region in [Region::disk(c, r), Region::annulus(c, r * 0.5, r)] {
                let n = pts.iter().filter(|q| region_contains(&region, **q)).count();
                prop_assert_eq!(restricted_count(&pts, &region), n);
            }
        }
    }
}
