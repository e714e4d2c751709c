//! Exact minimum enclosing sphere (Welzl, iterative move-to-front form).

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    fn point(p: Vec3) -> Self {
        Sphere {
            center: p,
            radius: 0.0,
        }
    }

    fn diametral(a: Vec3, b: Vec3) -> Self {
        Sphere {
            center: (a + b) * 0.5,
            radius: (a - b).norm() * 0.5,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm() <= self.radius * (1.0 + 1e-12) + 1e-14
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Smallest sphere with `a`, `b`, `c` on its boundary (center in their plane).
/// `None` when the points are (nearly) collinear.
pub(crate) fn circumsphere3(a: Vec3, b: Vec3, c: Vec3) -> Option<Sphere> {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(&ac);
    let denom = 2.0 * n.norm_squared();
    let scale = ab.norm_squared().max(ac.norm_squared());
    if denom <= 1e-24 * scale * scale || denom == 0.0 {
        return None;
    }
    let offset = (n.cross(&ab) * ac.norm_squared() + ac.cross(&n) * ab.norm_squared()) / denom;
    Some(Sphere {
        center: a + offset,
        radius: offset.norm(),
    })
}

/// Sphere through four points. `None` when they are (nearly) coplanar.
pub(crate) fn circumsphere4(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> Option<Sphere> {
    let (ab, ac, ad) = (b - a, c - a, d - a);
    let m = Matrix3::from_rows(&[ab.transpose(), ac.transpose(), ad.transpose()]);
    let scale = ab.norm().max(ac.norm()).max(ad.norm());
    if m.determinant().abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let rhs = Vec3::new(ab.norm_squared(), ac.norm_squared(), ad.norm_squared()) * 0.5;
    let offset = m.lu().solve(&rhs)?;
    Some(Sphere {
        center: a + offset,
        radius: offset.norm(),
    })
}

/// Fallback for degenerate supports: the smallest candidate sphere over point
/// subsets of `support` that contains every support point.
fn smallest_enclosing_support(support: &[Vec3]) -> Sphere {
    let mut best: Option<Sphere> = None;
    let mut consider = |s: Sphere| {
        if support.iter().all(|p| s.contains(p)) && best.is_none_or(|b| s.radius < b.radius) {
            best = Some(s);
        }
    };
    for i in 0..support.len() {
        for j in i + 1..support.len() {
            consider(Sphere::diametral(support[i], support[j]));
            for k in j + 1..support.len() {
                if let Some(s) = circumsphere3(support[i], support[j], support[k]) {
                    consider(s);
                }
            }
        }
    }
    best.unwrap_or_else(|| Sphere::point(support[0]))
}

fn ball_with_three(points: &[Vec3], q1: Vec3, q2: Vec3, q3: Vec3) -> Sphere {
    let mut ball = circumsphere3(q1, q2, q3).unwrap_or_else(|| smallest_enclosing_support(&[q1, q2, q3]));
    for p in points {
        if !ball.contains(p) {
            ball = circumsphere4(q1, q2, q3, *p)
                .unwrap_or_else(|| smallest_enclosing_support(&[q1, q2, q3, *p]));
        }
    }
    ball
}

fn ball_with_two(points: &[Vec3], q1: Vec3, q2: Vec3) -> Sphere {
    let mut ball = Sphere::diametral(q1, q2);
    for k in 0..points.len() {
        if !ball.contains(&points[k]) {
            ball = ball_with_three(&points[..k], q1, q2, points[k]);
        }
    }
    ball
}

fn ball_with_one(points: &[Vec3], q: Vec3) -> Sphere {
    let mut ball = Sphere::point(q);
    for j in 0..points.len() {
        if !ball.contains(&points[j]) {
            ball = ball_with_two(&points[..j], q, points[j]);
        }
    }
    ball
}

/// Exact minimum enclosing sphere. Input order does not matter; points are
/// visited in a fixed pseudo-random order so results are reproducible.
pub fn min_bounding_sphere(points: &[Vec3]) -> Result<Sphere> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut pts = points.to_vec();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5EED_5A1E));
    let mut ball = Sphere::point(pts[0]);
    for i in 1..pts.len() {
        if !ball.contains(&pts[i]) {
            ball = ball_with_one(&pts[..i], pts[i]);
        }
    }
    Ok(ball)
}

pub fn min_bounding_sphere_diameter(points: &[Vec3]) -> Result<f64> {
    min_bounding_sphere(points).map(|s| s.diameter())
}
