use std::collections::HashMap;

use super::{Point, PointCloud};

/// Voxel-grid filter: one centroid per occupied cubic cell of edge `cell`.
///
/// Cells are indexed by `floor(coord / cell)` per axis. Output points follow
/// the order in which their cells are first encountered in the input.
pub fn voxel_downsample(cloud: &PointCloud, cell: f64) -> PointCloud {
    assert!(cell > 0.0, "voxel cell size must be positive");
    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut acc: Vec<(Point, usize)> = Vec::new();
    for p in cloud.points() {
        let key = cell_key(p, cell);
        let slot = *slots.entry(key).or_insert_with(|| {
            acc.push((Point::zeros(), 0));
            acc.len() - 1
        });
        acc[slot].0 += p;
        acc[slot].1 += 1;
    }
    let points = acc.into_iter().map(|(sum, n)| sum / n as f64).collect();
    PointCloud::new(points).expect("centroids of finite points are finite")
}

pub(crate) fn cell_key(p: &Point, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn single_cell_collapses_to_centroid() {
        let c = PointCloud::from_arrays(&[[0.1, 0.1, 0.1], [0.3, 0.1, 0.1], [0.2, 0.4, 0.1]]).unwrap();
        let d = voxel_downsample(&c, 1.0);
        assert_eq!(d.len(), 1);
        assert!((d.get(0) - Point::new(0.2, 0.2, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn sparse_lattice_is_untouched() {
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                pts.push([i as f64 * 0.05 + 0.01, j as f64 * 0.05 + 0.01, 0.01]);
            }
        }
        let c = PointCloud::from_arrays(&pts).unwrap();
        let d = voxel_downsample(&c, 0.02);
        assert_eq!(d.len(), c.len());
    }

    #[test]
    fn matches_grouping_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 3]> = (0..3000)
            .map(|_| [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3), rng.random_range(0.0..0.1)])
            .collect();
        let c = PointCloud::from_arrays(&pts).unwrap();
        let d = voxel_downsample(&c, 0.02);

        let mut groups: BTreeMap<(i64, i64, i64), Vec<[f64; 3]>> = BTreeMap::new();
        for p in &pts {
            let k = ((p[0] / 0.02).floor() as i64, (p[1] / 0.02).floor() as i64, (p[2] / 0.02).floor() as i64);
            groups.entry(k).or_default().push(*p);
        }
        assert_eq!(d.len(), groups.len());
        let mut expected: Vec<[f64; 3]> = groups
            .values()
            .map(|g| {
                let n = g.len() as f64;
                let mut s = [0.0; 3];
                for p in g {
                    for a in 0..3 {
                        s[a] += p[a];
                    }
                }
                [s[0] / n, s[1] / n, s[2] / n]
            })
            .collect();
        let mut got: Vec<[f64; 3]> = d.points().iter().map(|p| [p.x, p.y, p.z]).collect();
        let key = |p: &[f64; 3]| ((p[0] / 0.02).floor() as i64, (p[1] / 0.02).floor() as i64, (p[2] / 0.02).floor() as i64);
        expected.sort_by_key(key);
        got.sort_by_key(key);
        for (a, b) in expected.iter().zip(&got) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts: Vec<[f64; 3]> = (0..2000)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let once = voxel_downsample(&PointCloud::from_arrays(&pts).unwrap(), 0.1);
        let twice = voxel_downsample(&once, 0.1);
        assert_eq!(once, twice);
    }
}
