//! Static k-d tree with exact nearest, k-nearest and radius queries.
//!
//! Ties are resolved toward the lowest point index so results match a
//! brute-force scan exactly.

use std::cmp::Ordering;

use super::Vec3;
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// k-d tree over points in `D` dimensions.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        self.cmp_key(other) == Ordering::Less
    }

    fn cmp_key(&self, other: &Candidate) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build(0, tree.points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in &self.order[start..end] {
            for k in 0..D {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let dim = (0..D)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[dim] - lo[dim] <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim])
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64; D] {
        &self.points[index]
    }

    /// Index and Euclidean distance of the closest point.
    pub fn nearest(&self, q: &[f64; D]) -> Result<(usize, f64)> {
        let found = self.k_nearest(q, 1)?;
        Ok(found[0])
    }

    /// The `k` closest points as `(index, distance)`, closest first.
    pub fn k_nearest(&self, q: &[f64; D], k: usize) -> Result<Vec<(usize, f64)>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let k = k.clamp(1, self.len());
        let mut best: Vec<Candidate> = Vec::with_capacity(k + 1);
        self.search_knn(0, q, k, &mut best);
        Ok(best.into_iter().map(|c| (c.index, c.dist2.sqrt())).collect())
    }

    fn search_knn(&self, node: usize, q: &[f64; D], k: usize, best: &mut Vec<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        dist2: dist2(&self.points[i], q),
                        index: i,
                    };
                    if best.len() < k || c.better_than(best.last().expect("nonempty")) {
                        let pos = best.partition_point(|b| b.better_than(&c));
                        best.insert(pos, c);
                        best.truncate(k);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_knn(near, q, k, best);
                // `<=` keeps equal-distance candidates on the far side reachable for tie-breaks.
                if best.len() < k || diff * diff <= best.last().expect("nonempty").dist2 {
                    self.search_knn(far, q, k, best);
                }
            }
        }
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within_radius(&self, q: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = self.within_radius_unsorted(q, radius);
        out.sort_unstable();
        out
    }

    /// Same set as [`within_radius`](Self::within_radius) in tree order.
    pub fn within_radius_unsorted(&self, q: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.search_radius(0, q, radius * radius, &mut out);
        }
        out
    }

    fn search_radius(&self, node: usize, q: &[f64; D], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| dist2(&self.points[i], q) <= r2),
                );
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.search_radius(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.search_radius(right, q, r2, out);
                }
            }
        }
    }
}

/// Nearest-neighbor index over 3D points.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    tree: KdTree<3>,
}

impl NeighborIndex {
    pub fn new(points: &[Vec3]) -> Self {
        Self {
            tree: KdTree::new(points.iter().map(|p| [p.x, p.y, p.z]).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn point(&self, index: usize) -> Vec3 {
        let p = self.tree.point(index);
        Vec3::new(p[0], p[1], p[2])
    }

    /// Closest indexed point as `(index, distance)`; ties go to the lowest index.
    pub fn nearest(&self, q: &Vec3) -> Result<(usize, f64)> {
        self.tree.nearest(&[q.x, q.y, q.z])
    }

    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
        self.tree.k_nearest(&[q.x, q.y, q.z], k)
    }

    /// Indices within `radius` of `q` (inclusive), ascending.
    pub fn within_radius(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        self.tree.within_radius(&[q.x, q.y, q.z], radius)
    }

    pub fn within_radius_unsorted(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        self.tree.within_radius_unsorted(&[q.x, q.y, q.z], radius)
    }
}
