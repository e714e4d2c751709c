use std::collections::VecDeque;

use crate::geometry::{NeighborIndex, Vec3};

/// Per-point cluster ids; `None` marks noise. Ids are contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterLabeling {
    pub labels: Vec<Option<usize>>,
    pub count: usize,
}

impl ClusterLabeling {
    /// Member indices of every cluster, ordered by cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn noise(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.is_none().then_some(i))
            .collect()
    }
}

/// DBSCAN. A point is core when at least `min_pts` points (itself included)
/// lie within `eps`. Clusters are seeded from unvisited core points in index
/// order and expanded breadth-first, so a border point reachable from several
/// clusters joins the one discovered first.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> ClusterLabeling {
    let n = points.len();
    if n == 0 {
        return ClusterLabeling::default();
    }
    let index = NeighborIndex::new(points);
    let neighborhoods: Vec<Vec<usize>> = points.iter().map(|p| index.within_radius_unsorted(p, eps)).collect();
    let is_core: Vec<bool> = neighborhoods.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if labels[seed].is_some() || !is_core[seed] {
            continue;
        }
        let id = count;
        count += 1;
        labels[seed] = Some(id);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            if !is_core[p] {
                continue;
            }
            for &q in &neighborhoods[p] {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    queue.push_back(q);
                }
            }
        }
    }
    ClusterLabeling { labels, count }
}
