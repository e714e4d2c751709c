use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::geometry::{NeighborIndex, Vec3};

/// Result of flat-kernel mean shift.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeanShift {
    /// Modes ordered by the number of points whose seeds converged onto them.
    pub modes: Vec<Vec3>,
    /// Nearest mode of every input point; `None` when farther than the bandwidth.
    pub assignment: Vec<Option<usize>>,
    /// Number of points assigned to each mode.
    pub support: Vec<usize>,
}

/// Flat-kernel mean shift with binned seeding.
///
/// Points are binned on a grid of cell size `bandwidth / 2` and one seed
/// starts at the mean of each occupied cell. Each seed repeatedly moves to
/// the mean of the points within `bandwidth` until it shifts by less than
/// `tol` or `max_iters` is reached. Converged seeds closer than
/// `bandwidth / 2` are merged, keeping the position backed by the most points
/// (ties: lower cell). Every point is then assigned to its nearest mode.
pub fn mean_shift(points: &[Vec3], bandwidth: f64, max_iters: usize, tol: f64) -> MeanShift {
    if points.is_empty() {
        return MeanShift::default();
    }
    let cell = bandwidth / 2.0;
    let mut bins: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in points {
        let key = [0, 1, 2].map(|k| (p[k] / cell).floor() as i64);
        let entry = bins.entry(key).or_insert((Vec3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    let seeds: Vec<(Vec3, usize)> = bins.into_values().map(|(sum, n)| (sum / n as f64, n)).collect();

    let index = NeighborIndex::new(points);
    let converged: Vec<Vec3> = seeds
        .par_iter()
        .map(|&(start, _)| {
            let mut x = start;
            for _ in 0..max_iters {
                let window = index.within_radius_unsorted(&x, bandwidth);
                if window.is_empty() {
                    break;
                }
                let next = window.iter().map(|&i| points[i]).sum::<Vec3>() / window.len() as f64;
                let shift = (next - x).norm();
                x = next;
                if shift < tol {
                    break;
                }
            }
            x
        })
        .collect();

    let merge_radius = bandwidth / 2.0;
    let conv_index = NeighborIndex::new(&converged);
    let reach: Vec<usize> = converged
        .iter()
        .map(|c| {
            conv_index
                .within_radius_unsorted(c, merge_radius)
                .into_iter()
                .filter(|&j| (converged[j] - c).norm() < merge_radius)
                .map(|j| seeds[j].1)
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..converged.len()).collect();
    order.sort_by(|&a, &b| reach[b].cmp(&reach[a]).then(a.cmp(&b)));

    let mut modes: Vec<Vec3> = Vec::new();
    for &i in &order {
        let c = converged[i];
        if modes.iter().all(|m| (m - c).norm() >= merge_radius) {
            modes.push(c);
        }
    }

    let mode_index = NeighborIndex::new(&modes);
    let assignment: Vec<Option<usize>> = points
        .iter()
        .map(|p| {
            let (m, d) = mode_index.nearest(p).expect("at least one mode");
            (d <= bandwidth).then_some(m)
        })
        .collect();
    let mut support = vec![0; modes.len()];
    for m in assignment.iter().flatten() {
        support[*m] += 1;
    }
    MeanShift {
        modes,
        assignment,
        support,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::centroid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn two_blobs_two_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 0.05).unwrap();
        let centers = [Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0)];
        let mut pts = Vec::new();
        for c in centers {
            for _ in 0..60 {
                pts.push(c + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)));
            }
        }
        let bw = 0.8;
        let ms = mean_shift(&pts, bw, 100, 1e-6);
        assert_eq!(ms.modes.len(), 2);
        for (k, blob) in pts.chunks(60).enumerate() {
            let truth = centroid(blob).unwrap();
            let mode = ms.modes[ms.assignment[k * 60].unwrap()];
            assert!((mode - truth).norm() < 0.1 * bw);
            assert!(ms.assignment[k * 60..(k + 1) * 60].iter().all(|&a| a == ms.assignment[k * 60]));
        }
    }

    #[test]
    fn identical_points_one_mode() {
        let p = Vec3::new(0.5, -1.0, 2.0);
        let ms = mean_shift(&vec![p; 10], 0.1, 10, 1e-9);
        assert_eq!(ms.modes, vec![p]);
        assert_eq!(ms.support, vec![10]);
    }

    #[test]
    fn single_point() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let ms = mean_shift(&[p], 1.0, 10, 1e-9);
        assert_eq!(ms.modes, vec![p]);
        assert_eq!(ms.assignment, vec![Some(0)]);
    }

    #[test]
    fn empty() {
        assert_eq!(mean_shift(&[], 1.0, 10, 1e-3), MeanShift::default());
    }

    #[test]
    fn modes_bounded_and_assignments_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for n in [3, 17, 80] {
            let pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
                .collect();
            let ms = mean_shift(&pts, 0.7, 50, 1e-6);
            assert!(ms.modes.len() <= n);
            assert!(ms.assignment.iter().flatten().all(|&a| a < ms.modes.len()));
            assert_eq!(ms.support.iter().sum::<usize>(), ms.assignment.iter().flatten().count());
        }
    }
}
