use super::{Point, PointCloud};

const LEAF_SIZE: usize = 8;

/// Static k-d tree over a point cloud.
///
/// Radius queries return exactly the points with `|p - c|^2 <= r^2`;
/// nearest-neighbour ties resolve to the smallest point index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    // permutation of point indices; node of range [lo, hi) splits at (lo + hi) / 2
    order: Vec<usize>,
    split_axis: Vec<u8>,
}

impl SpatialIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &[Point]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let n = points.len();
        let mut index = Self {
            points,
            order: (0..n).collect(),
            split_axis: vec![0; n],
        };
        index.build(0, n);
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            for a in 0..3 {
                min[a] = min[a].min(self.points[i][a]);
                max[a] = max[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap_or(0);
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        self.split_axis[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    #[inline]
    fn dist_sq(&self, i: usize, q: &[f64; 3]) -> f64 {
        let p = &self.points[i];
        let dx = p[0] - q[0];
        let dy = p[1] - q[1];
        let dz = p[2] - q[2];
        dx * dx + dy * dy + dz * dz
    }

    /// Indices of all points within distance `r` (inclusive) of `center`.
    pub fn radius_query(&self, center: &Point, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(center, r, |i| out.push(i));
        out
    }

    pub fn count_within(&self, center: &Point, r: f64) -> usize {
        let mut n = 0;
        self.for_each_within(center, r, |_| n += 1);
        n
    }

    fn for_each_within(&self, center: &Point, r: f64, mut f: impl FnMut(usize)) {
        if r < 0.0 || self.points.is_empty() {
            return;
        }
        let q = [center.x, center.y, center.z];
        self.within_rec(0, self.points.len(), &q, r, r * r, &mut f);
    }

    fn within_rec(&self, lo: usize, hi: usize, q: &[f64; 3], r: f64, r2: f64, f: &mut impl FnMut(usize)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                if self.dist_sq(i, q) <= r2 {
                    f(i);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.split_axis[mid] as usize;
        let i = self.order[mid];
        if self.dist_sq(i, q) <= r2 {
            f(i);
        }
        let split = self.points[i][axis];
        if q[axis] - r <= split {
            self.within_rec(lo, mid, q, r, r2, f);
        }
        if q[axis] + r >= split {
            self.within_rec(mid + 1, hi, q, r, r2, f);
        }
    }

    /// Nearest point as `(index, squared distance)`; `None` on an empty index.
    pub fn nearest(&self, query: &Point) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let q = [query.x, query.y, query.z];
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, self.points.len(), &q, &mut best);
        Some(best)
    }

    fn consider(&self, i: usize, q: &[f64; 3], best: &mut (usize, f64)) {
        let d = self.dist_sq(i, q);
        if d < best.1 || (d == best.1 && i < best.0) {
            *best = (i, d);
        }
    }

    fn nearest_rec(&self, lo: usize, hi: usize, q: &[f64; 3], best: &mut (usize, f64)) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.consider(i, q, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.split_axis[mid] as usize;
        let i = self.order[mid];
        self.consider(i, q, best);
        let diff = q[axis] - self.points[i][axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(near.0, near.1, q, best);
        if diff * diff <= best.1 {
            self.nearest_rec(far.0, far.1, q, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap()
    }

    fn brute_radius(c: &PointCloud, q: &Point, r: f64) -> Vec<usize> {
        (0..c.len()).filter(|&i| (c.get(i) - q).norm() <= r).collect()
    }

    fn brute_nearest(c: &PointCloud, q: &Point) -> usize {
        let mut best = (0, f64::INFINITY);
        for i in 0..c.len() {
            let d = (c.get(i) - q).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    #[test]
    fn radius_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cloud = uniform_cloud(&mut rng, 1000);
        let index = SpatialIndex::new(&cloud);
        for _ in 0..100 {
            let q = Point::new(rng.random(), rng.random(), rng.random());
            let r = rng.random_range(0.01..0.3);
            let mut got = index.radius_query(&q, r);
            got.sort_unstable();
            assert_eq!(got, brute_radius(&cloud, &q, r));
            assert_eq!(index.count_within(&q, r), got.len());
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..100 {
            let n = 1 + trial * 19;
            let cloud = uniform_cloud(&mut rng, n);
            let index = SpatialIndex::new(&cloud);
            for _ in 0..10 {
                let q = Point::new(rng.random(), rng.random(), rng.random());
                assert_eq!(index.nearest(&q).unwrap().0, brute_nearest(&cloud, &q));
            }
        }
    }

    #[test]
    fn nearest_tie_prefers_smallest_index() {
        let pts: Vec<Point> = (0..40).map(|i| Point::new((i % 2) as f64, 0.0, 0.0)).collect();
        let index = SpatialIndex::from_points(&pts);
        assert_eq!(index.nearest(&Point::new(0.2, 0.0, 0.0)).unwrap().0, 0);
        assert_eq!(index.nearest(&Point::new(0.9, 0.0, 0.0)).unwrap().0, 1);
    }

    #[test]
    fn radius_edge_cases() {
        let cloud = PointCloud::from_arrays(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let index = SpatialIndex::new(&cloud);
        assert!(index.radius_query(&Point::new(0.5, 0.5, 0.5), 0.1).is_empty());
        assert!(index.radius_query(&cloud.get(1), 1e-9).contains(&1));
        // boundary is inclusive
        assert_eq!(index.radius_query(&cloud.get(0), 1.0).len(), 3);
        assert!(SpatialIndex::new(&PointCloud::default()).nearest(&Point::zeros()).is_none());
    }
}
