//! Built-in objects, one per symmetry class, sampled on regular surface grids.

use std::f64::consts::{PI, TAU};

use crate::geometry::{SymmetrySpec, Vec3};
use crate::keypoints::{canonicalize_model, ObjectModel};
use crate::{Error, Result};

/// Surface sample spacing as a fraction of the bounding-box diagonal.
pub const SPACING_FRAC: f64 = 0.012;

/// Names accepted by [`zoo_object`].
pub const ZOO_NAMES: [&str; 5] = ["cylinder", "hex_prism", "brick", "l_bracket", "tetrahedron"];

const EVAL_SEED: u64 = 17;
/// Axis seed for which the prism's second keypoint axis is x (a hexagon vertex).
const PRISM_AXIS_SEED: u64 = 2;

/// Canonical zoo object by name.
pub fn zoo_object(name: &str) -> Result<ObjectModel> {
    let model = match name {
        "cylinder" => cylinder(0.3, 1.0)?,
        "hex_prism" => hex_prism(0.4, 0.6)?,
        "brick" => brick(1.0, 0.6, 0.4)?,
        "l_bracket" => l_bracket()?,
        "tetrahedron" => tetrahedron()?,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown zoo object `{other}` (expected one of {})",
                ZOO_NAMES.join(", ")
            )))
        }
    };
    Ok(canonicalize_model(&model)?.0)
}

fn spacing(extent: Vec3) -> f64 {
    SPACING_FRAC * extent.norm()
}

fn cylinder(radius: f64, height: f64) -> Result<ObjectModel> {
    let h = spacing(Vec3::new(2.0 * radius, 2.0 * radius, height));
    let mut pts = Vec::new();
    let rows = (height / h).ceil() as usize;
    let around = (TAU * radius / h).ceil() as usize;
    for r in 0..=rows {
        let z = -height / 2.0 + height * r as f64 / rows as f64;
        for k in 0..around {
            let a = TAU * k as f64 / around as f64;
            pts.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let rings = (radius / h).ceil() as usize;
    for z in [-height / 2.0, height / 2.0] {
        pts.push(Vec3::new(0.0, 0.0, z));
        for ring in 1..rings {
            let rr = radius * ring as f64 / rings as f64;
            let n = (TAU * rr / h).ceil() as usize;
            for k in 0..n {
                let a = TAU * k as f64 / n as f64;
                pts.push(Vec3::new(rr * a.cos(), rr * a.sin(), z));
            }
        }
    }
    let sym = SymmetrySpec::revolution(Vec3::z(), Some(Vec3::x()))?;
    ObjectModel::new("cylinder", pts, sym, 0, EVAL_SEED)
}

fn hex_prism(circumradius: f64, height: f64) -> Result<ObjectModel> {
    let hex: Vec<[f64; 2]> = (0..6)
        .map(|k| {
            let a = PI / 3.0 * k as f64;
            [circumradius * a.cos(), circumradius * a.sin()]
        })
        .collect();
    let extent = Vec3::new(2.0 * circumradius, 3f64.sqrt() * circumradius, height);
    let pts = extruded_polygon(&hex, height, spacing(extent), |u, v, w| Vec3::new(u, v, w));
    let sym = SymmetrySpec::cyclic(Vec3::z(), 6)?;
    ObjectModel::new("hex_prism", pts, sym, PRISM_AXIS_SEED, EVAL_SEED)
}

fn brick(lx: f64, ly: f64, lz: f64) -> Result<ObjectModel> {
    let rect = [[-lx / 2.0, -ly / 2.0], [lx / 2.0, -ly / 2.0], [lx / 2.0, ly / 2.0], [-lx / 2.0, ly / 2.0]];
    let pts = extruded_polygon(&rect, lz, spacing(Vec3::new(lx, ly, lz)), |u, v, w| Vec3::new(u, v, w));
    let sym = SymmetrySpec::dihedral(Vec3::z(), Vec3::x(), 2)?;
    ObjectModel::new("brick", pts, sym, 0, EVAL_SEED)
}

/// L profile in the xz plane extruded symmetrically along y; mirror plane y = 0.
fn l_bracket() -> Result<ObjectModel> {
    let (len, tall, thick, width) = (1.0, 0.7, 0.12, 0.4);
    let profile = [[0.0, 0.0], [len, 0.0], [len, thick], [thick, thick], [thick, tall], [0.0, tall]];
    let pts = extruded_polygon(&profile, width, spacing(Vec3::new(len, width, tall)), |u, v, w| {
        Vec3::new(u, w, v)
    });
    let sym = SymmetrySpec::mirror([Vec3::x(), Vec3::z()]);
    ObjectModel::new("l_bracket", pts, sym, 0, EVAL_SEED)
}

fn tetrahedron() -> Result<ObjectModel> {
    let v = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.2, 0.7, 0.0),
        Vec3::new(0.3, 0.25, 0.6),
    ];
    let h = spacing(Vec3::new(1.0, 0.7, 0.6));
    let mut pts = Vec::new();
    for [a, b, c] in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
        sample_triangle(v[a], v[b], v[c], h, &mut pts);
    }
    ObjectModel::new("tetrahedron", pts, SymmetrySpec::no_proper(), 0, EVAL_SEED)
}

fn sample_triangle(a: Vec3, b: Vec3, c: Vec3, h: f64, out: &mut Vec<Vec3>) {
    let e1 = (b - a).normalize();
    let n = (b - a).cross(&(c - a)).normalize();
    let e2 = n.cross(&e1);
    let to2 = |p: Vec3| [(p - a).dot(&e1), (p - a).dot(&e2)];
    let tri = [to2(a), to2(b), to2(c)];
    for [u, v] in lattice_in_polygon(&tri, h) {
        out.push(a + e1 * u + e2 * v);
    }
    for (p, q) in [(a, b), (b, c), (c, a)] {
        let steps = ((q - p).norm() / h).ceil() as usize;
        for s in 0..steps {
            out.push(p + (q - p) * (s as f64 / steps as f64));
        }
    }
}

/// Surface of a prism: polygon caps at `w = ±depth/2` plus side walls.
/// `embed(u, v, w)` maps profile coordinates and depth into model space.
fn extruded_polygon(poly: &[[f64; 2]], depth: f64, h: f64, embed: impl Fn(f64, f64, f64) -> Vec3) -> Vec<Vec3> {
    let mut pts = Vec::new();
    let cap = lattice_in_polygon(poly, h);
    for w in [-depth / 2.0, depth / 2.0] {
        pts.extend(cap.iter().map(|&[u, v]| embed(u, v, w)));
    }
    let layers = (depth / h).ceil() as usize;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let edge = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        let steps = (edge / h).ceil() as usize;
        for s in 0..steps {
            let t = s as f64 / steps as f64;
            let (u, v) = (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]));
            for l in 0..=layers {
                pts.push(embed(u, v, -depth / 2.0 + depth * l as f64 / layers as f64));
            }
        }
    }
    pts
}

/// Square lattice points strictly inside a simple polygon (even-odd rule).
fn lattice_in_polygon(poly: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let nu = ((hi[0] - lo[0]) / h).floor() as i64;
    let nv = ((hi[1] - lo[1]) / h).floor() as i64;
    let (ou, ov) = (lo[0] + ((hi[0] - lo[0]) - nu as f64 * h) / 2.0, lo[1] + ((hi[1] - lo[1]) - nv as f64 * h) / 2.0);
    let mut out = Vec::new();
    for i in 0..=nu {
        for j in 0..=nv {
            let q = [ou + i as f64 * h, ov + j as f64 * h];
            if inside(poly, q) && boundary_gap(poly, q) > 0.25 * h {
                out.push(q);
            }
        }
    }
    out
}

fn inside(poly: &[[f64; 2]], q: [f64; 2]) -> bool {
    let mut c = false;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if (a[1] > q[1]) != (b[1] > q[1]) {
            let x = a[0] + (q[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if q[0] < x {
                c = !c;
            }
        }
    }
    c
}

fn boundary_gap(poly: &[[f64; 2]], q: [f64; 2]) -> f64 {
    (0..poly.len())
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let t = (((q[0] - a[0]) * dx + (q[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            ((q[0] - a[0] - t * dx).powi(2) + (q[1] - a[1] - t * dy).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}
