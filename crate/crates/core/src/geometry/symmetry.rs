use std::f64::consts::{PI, TAU};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{axis_rotation, rotation_from_rows, RotationMatrix, Vec3};
use crate::{Error, Result};

/// Steps used to discretize the continuous part of a revolution group (5° each).
pub const REVOLUTION_STEPS: usize = 72;

const GROUP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    NoProper,
    Revolution,
    Mirror,
    Finite,
}

/// Declared symmetry of an object model.
///
/// `group` holds the finite proper rotations that leave the object unchanged,
/// identity first. For [`SymmetryClass::Revolution`] it holds only the identity
/// and any finite flips; the continuous rotation about `rotation_axis` is
/// implied by the class.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySpec {
    pub class: SymmetryClass,
    pub rotation_axis: Option<Vec3>,
    pub mirror_plane_axes: Option<[Vec3; 2]>,
    group: Vec<RotationMatrix>,
}

fn is_identity(r: &RotationMatrix) -> bool {
    (r.matrix() - Matrix3::identity()).abs().max() <= GROUP_TOL
}

fn approx_eq(a: &RotationMatrix, b: &RotationMatrix, tol: f64) -> bool {
    (a.matrix() - b.matrix()).abs().max() <= tol
}

impl SymmetrySpec {
    /// Validates identity membership, closure and (for `Finite`) that every
    /// element maps the rotation axis onto ±itself.
    pub fn new(
        class: SymmetryClass,
        rotation_axis: Option<Vec3>,
        mirror_plane_axes: Option<[Vec3; 2]>,
        group: Vec<RotationMatrix>,
    ) -> Result<Self> {
        let rotation_axis = rotation_axis.map(|a| a.normalize());
        let mirror_plane_axes = mirror_plane_axes.map(|[a, b]| [a.normalize(), b.normalize()]);
        let mut group = group;
        let id_pos = group
            .iter()
            .position(is_identity)
            .ok_or_else(|| Error::InvalidGroup("identity missing".into()))?;
        group.swap(0, id_pos);
        group[0] = RotationMatrix::identity();

        for (i, a) in group.iter().enumerate() {
            for (j, b) in group.iter().enumerate() {
                let ab = a * b;
                if !group.iter().any(|g| approx_eq(g, &ab, GROUP_TOL)) {
                    return Err(Error::InvalidGroup(format!(
                        "not closed: product of elements {i} and {j} is not in the group"
                    )));
                }
            }
        }
        if class == SymmetryClass::Finite {
            if let Some(axis) = rotation_axis {
                for (i, g) in group.iter().enumerate() {
                    let image = g * axis;
                    if (image - axis).norm() > GROUP_TOL && (image + axis).norm() > GROUP_TOL {
                        return Err(Error::InvalidGroup(format!(
                            "element {i} does not map the rotation axis onto itself"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            class,
            rotation_axis,
            mirror_plane_axes,
            group,
        })
    }

    pub fn no_proper() -> Self {
        Self {
            class: SymmetryClass::NoProper,
            rotation_axis: None,
            mirror_plane_axes: None,
            group: vec![RotationMatrix::identity()],
        }
    }

    pub fn mirror(in_plane: [Vec3; 2]) -> Self {
        Self {
            class: SymmetryClass::Mirror,
            rotation_axis: None,
            mirror_plane_axes: Some(in_plane.map(|a| a.normalize())),
            group: vec![RotationMatrix::identity()],
        }
    }

    /// Revolution about `axis`, optionally with a half-turn flip about `flip_axis`
    /// (perpendicular to `axis`).
    pub fn revolution(axis: Vec3, flip_axis: Option<Vec3>) -> Result<Self> {
        let mut group = vec![RotationMatrix::identity()];
        if let Some(f) = flip_axis {
            group.push(axis_rotation(&f, PI));
        }
        Self::new(SymmetryClass::Revolution, Some(axis), None, group)
    }

    /// Cyclic group of order `n` about `axis`.
    pub fn cyclic(axis: Vec3, n: usize) -> Result<Self> {
        let group = (0..n).map(|k| axis_rotation(&axis, TAU * k as f64 / n as f64)).collect();
        Self::new(SymmetryClass::Finite, Some(axis), None, group)
    }

    /// Dihedral group of order `2n`: `n` turns about `axis` plus half-turns about
    /// `n` perpendicular axes starting at `perp`.
    pub fn dihedral(axis: Vec3, perp: Vec3, n: usize) -> Result<Self> {
        let axis_n = axis.normalize();
        let mut group: Vec<RotationMatrix> =
            (0..n).map(|k| axis_rotation(&axis_n, TAU * k as f64 / n as f64)).collect();
        for k in 0..n {
            let f = axis_rotation(&axis_n, PI * k as f64 / n as f64) * perp;
            group.push(axis_rotation(&f, PI));
        }
        Self::new(SymmetryClass::Finite, Some(axis), None, group)
    }

    /// The declared finite part of the group, identity first.
    pub fn group(&self) -> &[RotationMatrix] {
        &self.group
    }

    /// All group elements used in set and distance computations: the finite
    /// group, or for revolution objects every 5° axis step composed with each
    /// finite flip. Identity is always first.
    pub fn elements(&self) -> Vec<RotationMatrix> {
        match (self.class, self.rotation_axis) {
            (SymmetryClass::Revolution, Some(axis)) => (0..REVOLUTION_STEPS)
                .flat_map(|k| {
                    let turn = axis_rotation(&axis, TAU * k as f64 / REVOLUTION_STEPS as f64);
                    self.group.iter().map(move |f| turn * f)
                })
                .collect(),
            _ => self.group.clone(),
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.class == SymmetryClass::Revolution
    }

    /// Expresses the symmetry in a frame rotated by `q`: elements become `q·g·qᵀ`.
    pub fn conjugated(&self, q: &RotationMatrix) -> SymmetrySpec {
        let qt = q.inverse();
        SymmetrySpec {
            class: self.class,
            rotation_axis: self.rotation_axis.map(|a| q * a),
            mirror_plane_axes: self.mirror_plane_axes.map(|axes| axes.map(|a| q * a)),
            group: self.group.iter().map(|g| q * g * qt).collect(),
        }
    }

    /// Fails with "symmetry spec incomplete" when the class requires axes that are absent.
    pub fn require_axes(&self) -> Result<()> {
        match self.class {
            SymmetryClass::Revolution | SymmetryClass::Finite if self.rotation_axis.is_none() => Err(
                Error::IncompleteSymmetry(format!("{:?} class requires rotation_axis", self.class)),
            ),
            SymmetryClass::Mirror if self.mirror_plane_axes.is_none() => Err(Error::IncompleteSymmetry(
                "mirror class requires mirror_plane_axes".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// On-disk form inside object spec files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SymmetryRepr {
    class: SymmetryClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation_axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mirror_plane_axes: Option<[[f64; 3]; 2]>,
    #[serde(default)]
    group: Vec<[f64; 9]>,
}

impl Serialize for SymmetrySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SymmetryRepr {
            class: self.class,
            rotation_axis: self.rotation_axis.map(Into::into),
            mirror_plane_axes: self.mirror_plane_axes.map(|a| a.map(Into::into)),
            group: self
                .group
                .iter()
                .map(|g| crate::geometry::RigidPose::from_rotation(*g).rotation_row_major())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymmetrySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SymmetryRepr::deserialize(d)?;
        let mut group = repr
            .group
            .iter()
            .map(rotation_from_rows)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        if group.is_empty() {
            group.push(RotationMatrix::identity());
        }
        let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
        SymmetrySpec::new(
            repr.class,
            repr.rotation_axis.map(v),
            repr.mirror_plane_axes.map(|a| a.map(v)),
            group,
        )
        .map_err(serde::de::Error::custom)
    }
}
