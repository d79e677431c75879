//! Uniform bucket grid for nearest-neighbour and region-count queries.
//!
//! Results are identical to a linear scan: membership is decided by the same
//! [`Region::contains`] predicate, and the grid only prunes buckets that
//! cannot hold a member.

use crate::error::{Error, Result};
use crate::geometry::{distance, Point, Rect, Region, EPSILON};

#[derive(Debug, Clone)]
pub struct PointIndex<Id = usize> {
    ids: Vec<Id>,
    points: Vec<Point>,
    bounds: Rect,
    side: f64,
    nx: usize,
    ny: usize,
    // CSR layout: bucket b holds order[start[b]..start[b + 1]]
    start: Vec<usize>,
    order: Vec<usize>,
}

/// All points at minimal distance from a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Nearest<Id> {
    pub distance: f64,
    /// Input positions of the tie set, ascending.
    pub positions: Vec<usize>,
    pub ids: Vec<Id>,
}

const MAX_BUCKETS_PER_POINT: usize = 4;

impl PointIndex<usize> {
    /// Index over bare points; ids are input positions.
    pub fn from_points(points: &[Point]) -> Self {
        PointIndex::build(points.iter().copied().enumerate().collect())
    }
}

impl<Id: Clone> PointIndex<Id> {
    /// Builds with the default bucket side `diagonal / sqrt(n)`.
    pub fn build(entries: Vec<(Id, Point)>) -> Self {
        Self::build_with_side(entries, None)
    }

    /// Builds with an explicit bucket side. Results never depend on it.
    pub fn build_with_side(entries: Vec<(Id, Point)>, side: Option<f64>) -> Self {
        let (ids, points): (Vec<Id>, Vec<Point>) = entries.into_iter().unzip();
        let n = points.len();
        let bounds = Rect::bounding(&points).unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0));
        let mut side = side
            .filter(|s| s.is_finite() && *s > 0.0)
            .unwrap_or_else(|| bounds.diagonal() / (n.max(1) as f64).sqrt());
        if !(side.is_finite() && side > 0.0) {
            side = 1.0;
        }
        // keep the bucket count proportional to n
        let cap = (MAX_BUCKETS_PER_POINT * n.max(1)) as f64;
        loop {
            let cells = (bounds.width() / side).floor() + 1.0;
            let rows = (bounds.height() / side).floor() + 1.0;
            if cells * rows <= cap {
                break;
            }
            side *= 2.0;
        }
        let nx = (bounds.width() / side).floor() as usize + 1;
        let ny = (bounds.height() / side).floor() as usize + 1;

        let mut index = PointIndex {
            ids,
            points,
            bounds,
            side,
            nx,
            ny,
            start: Vec::new(),
            order: Vec::new(),
        };
        let buckets: Vec<usize> = index
            .points
            .iter()
            .map(|p| {
                let (i, j) = index.bucket_of(*p);
                j * nx + i
            })
            .collect();
        let mut start = vec![0usize; nx * ny + 1];
        for b in &buckets {
            start[b + 1] += 1;
        }
        for b in 0..nx * ny {
            start[b + 1] += start[b];
        }
        let mut fill = start.clone();
        let mut order = vec![0usize; n];
        for (pos, b) in buckets.iter().enumerate() {
            order[fill[*b]] = pos;
            fill[*b] += 1;
        }
        index.start = start;
        index.order = order;
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn ids(&self) -> &[Id] {
        &self.ids
    }

    pub fn bucket_side(&self) -> f64 {
        self.side
    }

    fn column(&self, x: f64) -> usize {
        let c = ((x - self.bounds.min_x) / self.side).floor();
        if c.is_nan() || c < 0.0 {
            0
        } else {
            (c as usize).min(self.nx - 1)
        }
    }

    fn row(&self, y: f64) -> usize {
        let c = ((y - self.bounds.min_y) / self.side).floor();
        if c.is_nan() || c < 0.0 {
            0
        } else {
            (c as usize).min(self.ny - 1)
        }
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        (self.column(p.x), self.row(p.y))
    }

    fn bucket(&self, i: usize, j: usize) -> &[usize] {
        let b = j * self.nx + i;
        &self.order[self.start[b]..self.start[b + 1]]
    }

    /// Input positions of the points inside `region`, ascending.
    pub fn positions_in_region(&self, region: &Region) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_region(region, |pos| out.push(pos));
        out.sort_unstable();
        out
    }

    fn visit_region(&self, region: &Region, mut f: impl FnMut(usize)) {
        if self.points.is_empty() {
            return;
        }
        let Some(rect) = region.bounding_rect() else {
            return;
        };
        if rect.intersection(&self.bounds).is_none() {
            return;
        }
        let (i0, i1) = (self.column(rect.min_x), self.column(rect.max_x));
        let (j0, j1) = (self.row(rect.min_y), self.row(rect.max_y));
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &pos in self.bucket(i, j) {
                    if region.contains(self.points[pos]) {
                        f(pos);
                    }
                }
            }
        }
    }

    /// Number of points inside `region`, with multiplicity.
    pub fn count_in_region(&self, region: &Region) -> usize {
        let mut n = 0;
        self.visit_region(region, |_| n += 1);
        n
    }

    /// Ids of the points inside `region`, in input order.
    pub fn ids_in_region(&self, region: &Region) -> Vec<Id> {
        self.positions_in_region(region)
            .into_iter()
            .map(|p| self.ids[p].clone())
            .collect()
    }

    /// Nearest point(s) to `q`. Points within [`EPSILON`] of the minimal
    /// distance form the tie set.
    pub fn nearest(&self, q: Point) -> Result<Nearest<Id>> {
        if self.points.is_empty() {
            return Err(Error::Domain(
                "nearest-neighbour query on an empty index".into(),
            ));
        }
        let (ci, cj) = self.bucket_of(q);
        let mut best = f64::INFINITY;
        let mut ring = 0usize;
        // distances of every point seen so far, to collect ties afterwards
        let mut seen: Vec<(f64, usize)> = Vec::new();
        loop {
            let i0 = ci.saturating_sub(ring);
            let j0 = cj.saturating_sub(ring);
            let i1 = (ci + ring).min(self.nx - 1);
            let j1 = (cj + ring).min(self.ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    // buckets at Chebyshev distance < ring were visited already
                    if i.abs_diff(ci).max(j.abs_diff(cj)) != ring {
                        continue;
                    }
                    for &pos in self.bucket(i, j) {
                        let d = distance(q, self.points[pos]);
                        best = best.min(d);
                        seen.push((d, pos));
                    }
                }
            }
            let covers_all = i0 == 0 && j0 == 0 && i1 == self.nx - 1 && j1 == self.ny - 1;
            if covers_all {
                break;
            }
            // every unvisited point lies outside the visited block
            let bx0 = self.bounds.min_x + i0 as f64 * self.side;
            let by0 = self.bounds.min_y + j0 as f64 * self.side;
            let bx1 = self.bounds.min_x + (i1 + 1) as f64 * self.side;
            let by1 = self.bounds.min_y + (j1 + 1) as f64 * self.side;
            let mut gap = f64::INFINITY;
            if i0 > 0 {
                gap = gap.min(q.x - bx0);
            }
            if j0 > 0 {
                gap = gap.min(q.y - by0);
            }
            if i1 < self.nx - 1 {
                gap = gap.min(bx1 - q.x);
            }
            if j1 < self.ny - 1 {
                gap = gap.min(by1 - q.y);
            }
            let slack = EPSILON + 1e-9 * self.side;
            if gap - slack > best + EPSILON {
                break;
            }
            ring += 1;
        }
        let mut positions: Vec<usize> = seen
            .into_iter()
            .filter(|(d, _)| *d <= best + EPSILON)
            .map(|(_, p)| p)
            .collect();
        positions.sort_unstable();
        let ids = positions.iter().map(|p| self.ids[*p].clone()).collect();
        Ok(Nearest {
            distance: best,
            positions,
            ids,
        })
    }
}

/// Linear-scan nearest neighbour with the same tie rule as the index.
pub fn brute_force_nearest(points: &[Point], q: Point) -> Option<(f64, Vec<usize>)> {
    let best = points
        .iter()
        .map(|p| distance(q, *p))
        .fold(f64::INFINITY, f64::min);
    if points.is_empty() {
        return None;
    }
    let ties = points
        .iter()
        .enumerate()
        .filter(|(_, p)| distance(q, **p) <= best + EPSILON)
        .map(|(i, _)| i)
        .collect();
    Some((best, ties))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{restricted_count, StudyArea};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<Point> {
        (0..n)
            .map(|_| Point::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent)))
            .collect()
    }

    #[test]
    fn build_and_count_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 500, 1000.0);
        let idx = PointIndex::from_points(&pts);
        let all = Region::cell(Rect::new(-1.0, -1.0, 1001.0, 1001.0));
        assert_eq!(idx.count_in_region(&all), 500);

        let empty = PointIndex::from_points(&[]);
        assert!(empty.is_empty());
        assert_eq!(empty.count_in_region(&all), 0);
        assert!(empty.nearest(Point::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn nearest_examples() {
        let idx = PointIndex::build(vec![("only", Point::new(3.0, 4.0))]);
        let nn = idx.nearest(Point::new(0.0, 0.0)).unwrap();
        assert_eq!(nn.ids, vec!["only"]);
        assert_eq!(nn.distance, 5.0);

        let pts = vec![
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(1.0, 1.0),
        ];
        let idx = PointIndex::from_points(&pts);
        let nn = idx.nearest(Point::new(1.0, 1.0)).unwrap();
        assert_eq!(nn.distance, 0.0);
        assert_eq!(nn.positions, vec![0, 2]);
    }

    #[test]
    fn count_examples() {
        let pts = vec![
            Point::new(5.0, 5.0),
            Point::new(5.0, 5.0),
            Point::new(9.0, 9.0),
        ];
        let idx = PointIndex::from_points(&pts);
        assert_eq!(
            idx.count_in_region(&Region::disk(Point::new(5.0, 5.0), 0.0)),
            2
        );
        assert_eq!(
            idx.count_in_region(&Region::disk(Point::new(500.0, 5.0), 3.0)),
            0
        );
        assert_eq!(
            idx.ids_in_region(&Region::disk(Point::new(5.0, 5.0), 0.0)),
            vec![0, 1]
        );
    }

    #[test]
    fn ten_thousand_points_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = random_points(&mut rng, 10_000, 10_000.0);
        let idx = PointIndex::from_points(&pts);
        for _ in 0..300 {
            let c = Point::new(
                rng.random_range(-500.0..10_500.0),
                rng.random_range(-500.0..10_500.0),
            );
            let r = rng.random_range(0.0..800.0);
            let region = Region::disk(c, r);
            assert_eq!(
                idx.count_in_region(&region),
                restricted_count(&pts, &region)
            );
        }
    }

    #[test]
    fn annuli_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 5_000, 5_000.0);
        let idx = PointIndex::from_points(&pts);
        let area = StudyArea::new(Rect::new(0.0, 0.0, 4000.0, 4500.0)).unwrap();
        for k in 0..500 {
            let c = pts[k * 7];
            let r_min = rng.random_range(0.0..300.0);
            let r_max = r_min + rng.random_range(0.0..300.0);
            let region = Region::annulus(c, r_min, r_max);
            assert_eq!(
                idx.count_in_region(&region),
                restricted_count(&pts, &region)
            );
            let clipped = region.clipped(&area);
            assert_eq!(
                idx.count_in_region(&clipped),
                restricted_count(&pts, &clipped)
            );
        }
    }

    #[test]
    fn nearest_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // integer lattice coordinates produce many exact ties
        let pts: Vec<Point> = (0..2000)
            .map(|_| {
                Point::new(
                    rng.random_range(0..60) as f64 * 10.0,
                    rng.random_range(0..60) as f64 * 10.0,
                )
            })
            .collect();
        let idx = PointIndex::from_points(&pts);
        for _ in 0..1000 {
            let q = Point::new(
                rng.random_range(-50..700) as f64,
                rng.random_range(-50..700) as f64,
            );
            let got = idx.nearest(q).unwrap();
            let (d, ties) = brute_force_nearest(&pts, q).unwrap();
            assert_eq!(got.distance, d);
            assert_eq!(got.positions, ties);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts = random_points(&mut rng, 300, 100.0);
        let a = PointIndex::from_points(&pts);
        let b = PointIndex::from_points(&pts);
        assert_eq!(a.order, b.order);
        assert_eq!(a.start, b.start);
    }

    fn arb_points() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec(
            prop_oneof![
                (0.0f64..200.0, 0.0f64..200.0).prop_map(|(x, y)| Point::new(x, y)),
                (0i32..20, 0i32..20)
                    .prop_map(|(x, y)| Point::new(x as f64 * 10.0, y as f64 * 10.0)),
            ],
            1..120,
        )
    }

    fn arb_region() -> impl Strategy<Value = Region> {
        let c = (-20.0f64..220.0, -20.0f64..220.0).prop_map(|(x, y)| Point::new(x, y));
        prop_oneof![
            (c.clone(), 0.0f64..100.0).prop_map(|(c, r)| Region::disk(c, r)),
            (c.clone(), 0.0f64..60.0, 0.0f64..60.0).prop_map(|(c, a, b)| Region::annulus(
                c,
                a,
                a + b
            )),
            (c.clone(), 0.0f64..80.0, 0.0f64..80.0).prop_map(|(c, w, h)| Region::cell(Rect::new(
                c.x,
                c.y,
                c.x + w,
                c.y + h
            ))),
            (c, 0.0f64..100.0).prop_map(|(c, r)| {
                let area = StudyArea::new(Rect::new(30.0, 10.0, 150.0, 170.0)).unwrap();
                Region::disk(c, r).clipped(&area)
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn region_count_equals_scan(pts in arb_points(), region in arb_region(), side in prop::option::of(0.5f64..300.0)) {
            let idx = PointIndex::build_with_side(pts.iter().copied().enumerate().collect(), side);
            prop_assert_eq!(idx.count_in_region(&region), restricted_count(&pts, &region));
            let expected: Vec<usize> = (0..pts.len()).filter(|i| region.contains(pts[*i])).collect();
            prop_assert_eq!(idx.positions_in_region(&region), expected);
        }

        #[test]
        fn nearest_equals_scan(pts in arb_points(), qx in -100.0f64..300.0, qy in -100.0f64..300.0, side in prop::option::of(0.5f64..300.0)) {
            let idx = PointIndex::build_with_side(pts.iter().copied().enumerate().collect(), side);
            let q = Point::new(qx, qy);
            let got = idx.nearest(q).unwrap();
            let (d, ties) = brute_force_nearest(&pts, q).unwrap();
            prop_assert_eq!(got.distance, d);
            prop_assert_eq!(got.positions, ties);
        }
    }
}
