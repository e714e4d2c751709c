use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::{Error, Result};

/// Ordered point set with optional per-point instance ids and visibility.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub instance_ids: Option<Vec<u32>>,
    pub visibility: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            instance_ids: None,
            visibility: None,
        }
    }

    pub fn with_instance_ids(mut self, ids: Vec<u32>) -> Result<Self> {
        check_len("instance_ids", ids.len(), self.points.len())?;
        self.instance_ids = Some(ids);
        Ok(self)
    }

    pub fn with_visibility(mut self, visibility: Vec<f64>) -> Result<Self> {
        check_len("visibility", visibility.len(), self.points.len())?;
        self.visibility = Some(visibility);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        super::centroid(&self.points)
    }

    /// Sub-cloud over `indices`, carrying attributes.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            instance_ids: self
                .instance_ids
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i]).collect()),
            visibility: self
                .visibility
                .as_ref()
                .map(|v| indices.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Checks attribute lengths and finiteness.
    pub fn validate(&self) -> Result<()> {
        if let Some(ids) = &self.instance_ids {
            check_len("instance_ids", ids.len(), self.points.len())?;
        }
        if let Some(v) = &self.visibility {
            check_len("visibility", v.len(), self.points.len())?;
        }
        if let Some(i) = self.points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidParameter(format!("point {i} has a non-finite coordinate")));
        }
        Ok(())
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::LengthMismatch {
            what,
            got,
            expected,
        });
    }
    Ok(())
}

/// Axis-aligned box, `min ≤ max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedBox {
    #[serde(with = "vec3_array")]
    pub min: Vec3,
    #[serde(with = "vec3_array")]
    pub max: Vec3,
}

impl AxisAlignedBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|k| !(min[k] <= max[k])) {
            return Err(Error::InvalidParameter(format!(
                "box min {:?} exceeds max {:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    /// Componentwise min/max of the points.
    pub fn from_points(points: &[Vec3]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyCloud)?;
        let (min, max) = points
            .iter()
            .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Ok(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - tol && p[k] <= self.max[k] + tol)
    }

    /// Distance from `p` to the nearest face, zero when `p` lies on the boundary.
    pub fn boundary_distance(&self, p: &Vec3) -> f64 {
        let outside = (self.min - p).sup(&(p - self.max)).sup(&Vec3::zeros());
        if outside.norm() > 0.0 {
            return outside.norm();
        }
        (0..3)
            .map(|k| (p[k] - self.min[k]).min(self.max[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// First boundary crossing of the ray `origin + s·dir` (s ≥ 0) for an interior origin.
    /// Returns `None` when no face is crossed in front of the origin.
    pub fn ray_exit(&self, origin: &Vec3, dir: &Vec3) -> Option<Vec3> {
        let mut s_exit = f64::INFINITY;
        for k in 0..3 {
            let d = dir[k];
            if d > 0.0 {
                s_exit = s_exit.min((self.max[k] - origin[k]) / d);
            } else if d < 0.0 {
                s_exit = s_exit.min((self.min[k] - origin[k]) / d);
            }
        }
        (s_exit.is_finite() && s_exit > 0.0).then(|| origin + dir * s_exit)
    }
}

pub(crate) mod vec3_array {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_box() {
        let b = AxisAlignedBox::from_points(&[Vec3::zeros()]).unwrap();
        assert_eq!(b.min, b.max);
    }

    #[test]
    fn two_point_box_and_order_invariance() {
        let pts = vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 3.0)];
        let b = AxisAlignedBox::from_points(&pts).unwrap();
        assert_eq!(b.min, Vec3::new(-1.0, 0.0, 0.0));
        assert_eq!(b.max, Vec3::new(1.0, 2.0, 3.0));
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        assert_eq!(AxisAlignedBox::from_points(&rev).unwrap(), b);
    }

    #[test]
    fn empty_box_is_error() {
        assert!(matches!(AxisAlignedBox::from_points(&[]), Err(Error::EmptyCloud)));
    }

    #[test]
    fn ray_exit_hits_face() {
        let b = AxisAlignedBox::new(Vec3::repeat(-0.5), Vec3::repeat(0.5)).unwrap();
        let hit = b.ray_exit(&Vec3::zeros(), &Vec3::new(1.0, 1.0, 0.0).normalize()).unwrap();
        assert!((hit - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
        assert!(b.boundary_distance(&hit) < 1e-12);
    }

    #[test]
    fn attribute_length_checked() {
        let c = PointCloud::new(vec![Vec3::zeros(); 3]);
        assert!(c.clone().with_instance_ids(vec![0; 2]).is_err());
        assert!(c.with_visibility(vec![1.0; 3]).is_ok());
    }
}
