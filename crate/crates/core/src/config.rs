//! Pipeline configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptation::{DescriptorParams, SelfTrainConfig};
use crate::pose::EstimateConfig;
use crate::simulation::{NoiseModel, SceneConfig, ShiftParams};
use crate::{Error, Result};

/// Prefix selecting a built-in object instead of a spec file.
pub const ZOO_PREFIX: &str = "zoo:";

/// Ablation switches, one per removable pipeline component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Equivalent keypoint sets collapsed to their canonical member.
    pub no_eks: bool,
    /// Densest-cluster keypoint filtering replaced by plain averaging.
    pub no_kf: bool,
    /// Two-sided chamfer instead of the semi-chamfer for pose quality.
    pub no_scd: bool,
    /// Self-training disabled; the teacher is reported as is.
    pub no_da: bool,
}

impl FromStr for Ablation {
    type Err = Error;

    /// Parses a comma-separated list such as `no-eks,no-kf`.
    fn from_str(s: &str) -> Result<Self> {
        let mut out = Ablation::default();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match item {
                "no-eks" => out.no_eks = true,
                "no-kf" => out.no_kf = true,
                "no-scd" => out.no_scd = true,
                "no-da" => out.no_da = true,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown ablation `{other}` (expected no-eks, no-kf, no-scd, no-da)"
                    )))
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Object spec path, or `zoo:<name>`.
    pub object: Option<String>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub scene: SceneConfig,
    pub noise: NoiseModel,
    pub shift: ShiftParams,
    pub estimate: EstimateConfig,
    pub descriptor: DescriptorParams,
    pub kappa: f64,
    pub rounds: usize,
    /// Pose correctness threshold as a fraction of the diameter.
    pub threshold_frac: f64,
    /// Ground-truth instances less visible than this are not counted.
    pub min_visibility: f64,
    pub ablation: Ablation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            object: None,
            seed: 0,
            output_dir: None,
            scene: SceneConfig::default(),
            noise: NoiseModel::default(),
            shift: ShiftParams::default(),
            estimate: EstimateConfig::default(),
            descriptor: DescriptorParams::default(),
            kappa: 0.0,
            rounds: 2,
            threshold_frac: 0.1,
            min_visibility: 0.5,
            ablation: Ablation::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Applies the fields present in `overrides` (a JSON object) on top of
    /// `self`. Nested objects merge recursively.
    pub fn overlay(&self, overrides: &serde_json::Value, origin: &Path) -> Result<Self> {
        let mut base = serde_json::to_value(self).map_err(|e| Error::json(origin, e))?;
        merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| Error::json(origin, e))
    }

    /// Checks numeric ranges and that a referenced object file exists.
    /// Relative object paths resolve against `base_dir`.
    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        self.scene.validate()?;
        self.noise.validate()?;
        self.shift.validate()?;
        self.estimate.validate()?;
        self.descriptor.validate()?;
        if !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be finite, got {}", self.kappa)));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be ≥ 1".into()));
        }
        if !(self.threshold_frac > 0.0 && self.threshold_frac.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "threshold_frac must be > 0, got {}",
                self.threshold_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.min_visibility) {
            return Err(Error::InvalidParameter(format!(
                "min_visibility must lie in [0, 1], got {}",
                self.min_visibility
            )));
        }
        if let Some(obj) = &self.object {
            if !obj.starts_with(ZOO_PREFIX) {
                let p = base_dir.join(obj);
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "object spec not found"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON used for provenance hashing. The output directory is
    /// excluded so relocated runs hash identically.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    /// Estimation settings with ablations applied.
    pub fn estimate_config(&self) -> EstimateConfig {
        EstimateConfig {
            filtering: self.estimate.filtering && !self.ablation.no_kf,
            ..self.estimate.clone()
        }
    }

    pub fn self_train_config(&self) -> SelfTrainConfig {
        SelfTrainConfig {
            rounds: self.rounds,
            kappa: self.kappa,
            estimate: self.estimate_config(),
            bidirectional: self.ablation.no_scd,
        }
    }
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}
