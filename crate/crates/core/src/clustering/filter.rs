use super::dbscan;
use crate::geometry::{centroid, Vec3};
use crate::{Error, Result};

/// Mean distance of the points to their centroid; lower is denser.
pub fn density(cluster: &[Vec3]) -> Result<f64> {
    let c = centroid(cluster).ok_or(Error::EmptyCloud)?;
    Ok(cluster.iter().map(|p| (p - c).norm()).sum::<f64>() / cluster.len() as f64)
}

/// Keeps the densest DBSCAN cluster of a set of keypoint predictions.
///
/// Noise points are discarded; among the remaining clusters the one with the
/// smallest [`density`] wins, ties going to the larger cluster and then the
/// lower cluster id. Returns the member indices of the winning cluster in
/// ascending order.
pub fn filter_keypoints(predictions: &[Vec3], eps: f64, min_pts: usize) -> Result<Vec<usize>> {
    if predictions.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let labeling = dbscan(predictions, eps, min_pts);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for members in labeling.clusters() {
        let pts: Vec<Vec3> = members.iter().map(|&i| predictions[i]).collect();
        let d = density(&pts)?;
        let better = match &best {
            None => true,
            Some((bd, bm)) => d < *bd || (d == *bd && members.len() > bm.len()),
        };
        if better {
            best = Some((d, members));
        }
    }
    best.map(|(_, m)| m).ok_or(Error::NoKeypointCluster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blob(rng: &mut ChaCha8Rng, center: Vec3, sigma: f64, n: usize) -> Vec<Vec3> {
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| center + Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)))
            .collect()
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&[Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]).unwrap(), 1.0);
        assert_eq!(density(&[Vec3::new(4.0, 5.0, 6.0)]).unwrap(), 0.0);
        let d = density(&[Vec3::zeros(), Vec3::x(), Vec3::new(2.0, 0.0, 0.0)]).unwrap();
        // centroid (1,0,0): distances 1, 0, 1
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        assert!(density(&[]).is_err());
    }

    #[test]
    fn density_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = blob(&mut rng, Vec3::zeros(), 1.0, 50);
        let pose = crate::RigidPose::new(crate::geometry::random_rotation(&mut rng), Vec3::new(3.0, -2.0, 7.0));
        let moved = pose.transform_points(&pts);
        assert!((density(&pts).unwrap() - density(&moved).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tight_cluster_beats_loose_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, Vec3::zeros(), 0.008, 40);
        let loose = blob(&mut rng, Vec3::new(5.0, 0.0, 0.0), 0.4, 40);
        pts.extend(&loose);
        let kept = filter_keypoints(&pts, 1.0, 4).unwrap();
        // brute-force both candidate scores
        let d_tight = density(&pts[..40]).unwrap();
        let d_loose = density(&loose).unwrap();
        assert!(d_tight < d_loose);
        assert_eq!(kept, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn single_cluster_returned_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = blob(&mut rng, Vec3::new(1.0, 1.0, 1.0), 0.01, 30);
        assert_eq!(filter_keypoints(&pts, 0.1, 3).unwrap().len(), 30);
    }

    #[test]
    fn scattered_outliers_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = blob(&mut rng, Vec3::zeros(), 0.01, 30);
        pts.extend([Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, -3.0, 1.0), Vec3::new(1.0, 1.0, 4.0)]);
        let labeling = dbscan(&pts, 0.1, 4);
        assert_eq!(labeling.noise(), vec![30, 31, 32]);
        assert_eq!(filter_keypoints(&pts, 0.1, 4).unwrap(), (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn all_noise_is_rejected() {
        let pts = vec![Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0), Vec3::new(0.0, 5.0, 0.0)];
        assert!(matches!(filter_keypoints(&pts, 0.1, 2), Err(Error::NoKeypointCluster)));
    }

    fn well_separated_blobs(seed: u64, sizes: &[usize]) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for (k, &n) in sizes.iter().enumerate() {
            let sigma = rng.random_range(0.005..0.03);
            pts.extend(blob(&mut rng, Vec3::new(3.0 * k as f64, 0.0, 0.0), sigma, n));
        }
        for _ in 0..rng.random_range(0..5) {
            pts.push(Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(5.0..20.0), 0.0));
        }
        pts
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn result_is_one_cluster_subset(seed in 0u64..10_000, sizes in prop::collection::vec(4usize..40, 1..4)) {
            let pts = well_separated_blobs(seed, &sizes);
            let kept = filter_keypoints(&pts, 0.2, 3).unwrap();
            let labeling = dbscan(&pts, 0.2, 3);
            let label = labeling.labels[kept[0]];
            prop_assert!(label.is_some());
            let cluster: Vec<usize> = (0..pts.len()).filter(|&i| labeling.labels[i] == label).collect();
            prop_assert_eq!(kept, cluster);
        }

        #[test]
        fn permutation_invariant(seed in 0u64..10_000, sizes in prop::collection::vec(4usize..40, 1..4), shuffle_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let pts = well_separated_blobs(seed, &sizes);
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
            let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
            let mut a: Vec<[u64; 3]> = filter_keypoints(&pts, 0.2, 3).unwrap().iter().map(|&i| pts[i].map(f64::to_bits).into()).collect();
            let mut b: Vec<[u64; 3]> = filter_keypoints(&shuffled, 0.2, 3).unwrap().iter().map(|&i| shuffled[i].map(f64::to_bits).into()).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
