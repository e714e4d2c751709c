//! File formats: PLY/XYZ clouds, object specs and JSON sidecars.
//!
//! Every structured output is wrapped in [`Stamped`], which records the
//! hash of the producing configuration and the run seed next to the body.

mod ply;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use ply::{parse_ply, ply_bytes, PlyFormat};

use crate::adaptation::PseudoLabelSet;
use crate::config::ZOO_PREFIX;
use crate::geometry::{AxisAlignedBox, PointCloud, RigidPose, SymmetrySpec, Vec3};
use crate::keypoints::{KeypointSet, ObjectModel};
use crate::pose::{InstanceDetection, PoseEstimate};
use crate::simulation::{zoo_object, Scene};
use crate::{Error, Result};

/// A JSON document body tagged with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

/// Provenance carried by every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn stamp<T>(&self, body: T) -> Stamped<T> {
        Stamped {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            body,
        }
    }

    /// Header comment lines for PLY outputs.
    pub fn comments(&self) -> Vec<String> {
        vec![format!("config_hash {}", self.config_hash), format!("seed {}", self.seed)]
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Whitespace-separated `x y z [instance]` rows. Blank lines and `#`
/// comments are skipped; all rows must have the same column count.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut ids = Vec::new();
    let mut columns = None;
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: m,
        };
        let words: Vec<&str> = line.split_whitespace().collect();
        if !(words.len() == 3 || words.len() == 4) {
            return Err(err(format!("expected 3 or 4 columns, found {}", words.len())));
        }
        if *columns.get_or_insert(words.len()) != words.len() {
            return Err(err(format!(
                "expected {} columns like earlier rows, found {}",
                columns.unwrap(),
                words.len()
            )));
        }
        let mut c = [0.0; 3];
        for (slot, w) in c.iter_mut().zip(&words) {
            *slot = w.parse().map_err(|e| err(format!("bad coordinate `{w}`: {e}")))?;
        }
        points.push(Vec3::from(c));
        if let Some(w) = words.get(3) {
            ids.push(w.parse::<u32>().map_err(|e| err(format!("bad instance id `{w}`: {e}")))?);
        }
    }
    let cloud = PointCloud::new(points);
    if columns == Some(4) {
        cloud.with_instance_ids(ids)
    } else {
        Ok(cloud)
    }
}

/// Loads a `.ply` file, or whitespace-separated XYZ text for any other
/// extension.
pub fn load_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = read_bytes(path)?;
    let is_ply = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let cloud = if is_ply {
        parse_ply(&bytes, path)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "file is not UTF-8 text".into(),
        })?;
        parse_xyz(&text, path)?
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat, comments: &[String]) -> Result<()> {
    write_bytes(path, &ply_bytes(cloud, format, comments))
}

/// Model surface points, inline or as a cloud file relative to the object spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelPoints {
    Inline(Vec<[f64; 3]>),
    File(PathBuf),
}

/// Object spec file: either `{"zoo": name}` or explicit points plus a
/// symmetry declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpecFile {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub zoo: Option<String>,
    #[serde(default)]
    pub points: Option<ModelPoints>,
    #[serde(default)]
    pub symmetry: Option<SymmetrySpec>,
    #[serde(default)]
    pub axis_seed: u64,
    #[serde(default)]
    pub eval_seed: u64,
}

impl ObjectSpecFile {
    pub fn build(&self, base_dir: &Path, origin: &Path) -> Result<ObjectModel> {
        let invalid = |m: &str| Error::InvalidParameter(format!("{}: {m}", origin.display()));
        match (&self.zoo, &self.points) {
            (Some(name), None) => {
                if self.symmetry.is_some() {
                    return Err(invalid("`symmetry` cannot be combined with `zoo`"));
                }
                zoo_object(name)
            }
            (None, Some(points)) => {
                let symmetry = self
                    .symmetry
                    .clone()
                    .ok_or_else(|| invalid("`symmetry` is required with `points`"))?;
                let points = match points {
                    ModelPoints::Inline(p) => p.iter().map(|&c| Vec3::from(c)).collect(),
                    ModelPoints::File(f) => load_point_cloud(&base_dir.join(f))?.points,
                };
                let id = self.id.clone().unwrap_or_else(|| {
                    origin
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                });
                ObjectModel::new(id, points, symmetry, self.axis_seed, self.eval_seed)
            }
            _ => Err(invalid("exactly one of `zoo` and `points` must be given")),
        }
    }
}

/// Resolves `zoo:<name>` or an object spec path (relative to `base_dir`).
pub fn load_object(spec: &str, base_dir: &Path) -> Result<ObjectModel> {
    if let Some(name) = spec.strip_prefix(ZOO_PREFIX) {
        return zoo_object(name);
    }
    let path = base_dir.join(spec);
    let file: ObjectSpecFile = read_json(&path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    file.build(dir, &path)
}

/// Ground truth stored next to a scene cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar {
    pub object: String,
    pub poses: Vec<RigidPose>,
    pub visibility: Vec<f64>,
    pub bin: AxisAlignedBox,
}

/// Sidecar path for a scene cloud: `scene.ply` → `scene.json`.
pub fn sidecar_path(cloud: &Path) -> PathBuf {
    cloud.with_extension("json")
}

/// Writes `<dir>/<name>.ply` (binary, with instance ids) and its sidecar.
pub fn write_scene(dir: &Path, name: &str, scene: &Scene, object: &str, prov: &Provenance) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.ply"));
    let cloud = PointCloud::new(scene.cloud.points.clone()).with_instance_ids(scene.instance_ids().to_vec())?;
    write_ply(&path, &cloud, PlyFormat::BinaryLittleEndian, &prov.comments())?;
    let sidecar = SceneSidecar {
        object: object.to_string(),
        poses: scene.poses.clone(),
        visibility: scene.visibility.clone(),
        bin: scene.bin,
    };
    write_json(&sidecar_path(&path), &prov.stamp(sidecar))?;
    Ok(path)
}

/// Reads a scene cloud and its sidecar. The stored visibilities must match
/// those implied by the instance ids.
pub fn read_scene(path: &Path) -> Result<Scene> {
    let cloud = load_point_cloud(path)?;
    let side_path = sidecar_path(path);
    let side: Stamped<SceneSidecar> = read_json(&side_path)?;
    let ids = cloud.instance_ids.ok_or_else(|| Error::UnsupportedProperty {
        path: path.to_path_buf(),
        property: "instance".into(),
        reason: "scene clouds need per-point instance ids".into(),
    })?;
    let scene = Scene::from_labeled(cloud.points, ids, side.body.poses, side.body.bin, side.seed)?;
    let consistent = scene.visibility.len() == side.body.visibility.len()
        && scene
            .visibility
            .iter()
            .zip(&side.body.visibility)
            .all(|(a, b)| (a - b).abs() <= 1e-12);
    if !consistent {
        return Err(Error::InvalidParameter(format!(
            "{}: visibility does not match the cloud's instance counts",
            side_path.display()
        )));
    }
    Ok(scene)
}

/// Scene clouds (`*.ply` with a sidecar) in `dir`, sorted by file name.
pub fn list_scenes(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "ply") && sidecar_path(&path).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// File stem of a scene cloud, used to name derived outputs.
pub fn scene_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// One estimated pose with its member points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    #[serde(flatten)]
    pub pose: RigidPose,
    pub confidence: f64,
    #[serde(default)]
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub scene: String,
    pub poses: Vec<PoseRecord>,
}

impl PosesFile {
    pub fn from_estimates(scene: &str, estimates: &[PoseEstimate]) -> Self {
        Self {
            scene: scene.to_string(),
            poses: estimates
                .iter()
                .map(|e| PoseRecord {
                    pose: e.pose,
                    confidence: e.confidence,
                    members: e.instance.members.clone(),
                })
                .collect(),
        }
    }

    /// Estimates without voted keypoints, enough for scoring and labels.
    pub fn estimates(&self) -> Vec<PoseEstimate> {
        self.poses
            .iter()
            .map(|r| PoseEstimate {
                pose: r.pose,
                confidence: r.confidence,
                instance: InstanceDetection {
                    members: r.members.clone(),
                    voted: Vec::new(),
                    confidence: r.confidence,
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFile {
    pub object: String,
    pub diameter: f64,
    pub keypoints: KeypointSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelFile {
    pub scene: String,
    pub labels: PseudoLabelSet,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SymmetryClass;
    use crate::simulation::{synth_scene, SceneConfig};

    #[test]
    fn xyz_text() {
        let c = parse_xyz("0 0 0\n1 2 3", Path::new("a.xyz")).unwrap();
        assert_eq!(c.points, vec![Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0)]);
        let c = parse_xyz("# header\n\n1 2 3 4\n5 6 7 0 # tail\n", Path::new("a.xyz")).unwrap();
        assert_eq!(c.instance_ids, Some(vec![4, 0]));
        let e = parse_xyz("1 2 3\n1 2\n", Path::new("a.xyz")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_xyz("1 2 3\n1 2 3 4\n", Path::new("a.xyz")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_xyz("1 2 x\n", Path::new("a.xyz")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn load_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let xyz = dir.path().join("c.txt");
        std::fs::write(&xyz, "0 0 0\n1 2 3\n").unwrap();
        assert_eq!(load_point_cloud(&xyz).unwrap().len(), 2);
        let ply = dir.path().join("c.PLY");
        let cloud = PointCloud::new(vec![Vec3::new(0.1, 0.2, 0.3)]);
        write_ply(&ply, &cloud, PlyFormat::Ascii, &[]).unwrap();
        assert_eq!(load_point_cloud(&ply).unwrap(), cloud);
        assert!(matches!(load_point_cloud(&dir.path().join("none.ply")), Err(Error::Io { .. })));
    }

    #[test]
    fn object_specs() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("cube.json");
        let corners: Vec<[f64; 3]> = (0..8)
            .map(|k| [(k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64])
            .collect();
        let file = ObjectSpecFile {
            id: None,
            zoo: None,
            points: Some(ModelPoints::Inline(corners)),
            symmetry: Some(SymmetrySpec::no_proper()),
            axis_seed: 0,
            eval_seed: 0,
        };
        write_json(&spec, &file).unwrap();
        let m = load_object("cube.json", dir.path()).unwrap();
        assert_eq!(m.id(), "cube");
        assert_eq!(m.symmetry().class, SymmetryClass::NoProper);
        assert_eq!(KeypointSet::for_model(&m).unwrap().len(), 4);

        let pts = dir.path().join("pts.xyz");
        std::fs::write(&pts, "0 0 0\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
        std::fs::write(
            dir.path().join("tet.json"),
            r#"{"id": "t", "points": "pts.xyz", "symmetry": {"class": "no_proper"}}"#,
        )
        .unwrap();
        assert_eq!(load_object("tet.json", dir.path()).unwrap().points().len(), 4);

        std::fs::write(dir.path().join("z.json"), r#"{"zoo": "brick"}"#).unwrap();
        assert_eq!(load_object("z.json", dir.path()).unwrap().id(), "brick");
        assert_eq!(load_object("zoo:brick", dir.path()).unwrap().id(), "brick");
        assert!(load_object("zoo:sphere", dir.path()).is_err());

        std::fs::write(dir.path().join("both.json"), r#"{"zoo": "brick", "points": []}"#).unwrap();
        assert!(load_object("both.json", dir.path()).is_err());
        std::fs::write(dir.path().join("nosym.json"), r#"{"points": [[0,0,0]]}"#).unwrap();
        assert!(load_object("nosym.json", dir.path()).is_err());
    }

    #[test]
    fn scene_round_trip() {
        let m = zoo_object("brick").unwrap();
        let scene = synth_scene(&m, &SceneConfig::default(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance {
            config_hash: "ab12".into(),
            seed: 4,
        };
        let path = write_scene(dir.path(), "scene_0000", &scene, "zoo:brick", &prov).unwrap();
        let back = read_scene(&path).unwrap();
        assert_eq!(back.cloud, scene.cloud);
        assert_eq!(back.poses, scene.poses);
        assert_eq!(back.bin, scene.bin);
        assert_eq!(back.seed, scene.seed);
        assert_eq!(back, scene);
        assert_eq!(list_scenes(dir.path()).unwrap(), vec![path.clone()]);
        let side: Stamped<SceneSidecar> = read_json(&sidecar_path(&path)).unwrap();
        assert_eq!(side.config_hash, "ab12");
        let text = String::from_utf8_lossy(&std::fs::read(&path).unwrap()).into_owned();
        assert!(text.contains("comment config_hash ab12") && text.contains("comment seed 4"));
    }

    #[test]
    fn poses_file_round_trip() {
        let est = PoseEstimate {
            pose: RigidPose::from_translation(Vec3::new(1.0, 2.0, 3.0)),
            confidence: 0.75,
            instance: InstanceDetection {
                members: vec![3, 5],
                voted: Vec::new(),
                confidence: 0.75,
            },
        };
        let f = Provenance {
            config_hash: "h".into(),
            seed: 1,
        }
        .stamp(PosesFile::from_estimates("s", std::slice::from_ref(&est)));
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"R\"") && text.contains("\"confidence\":0.75"));
        let back: Stamped<PosesFile> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.body.estimates(), vec![est]);
    }
}
