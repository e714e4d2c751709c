use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use binpose::adaptation::{
    dynamic_threshold, ground_truth_labels, make_pseudo_labels, score_scene, self_train, KnnTrainer, Predictor,
    TrainingScene,
};
use binpose::config::PipelineConfig;
use binpose::evaluation::{match_scene, pr_curve, MatchOutcome, PoseMetric, SceneMatch};
use binpose::io::{
    list_scenes, load_object, read_json, read_scene, scene_stem, write_bytes, write_json, write_scene, KeypointFile,
    PoseRecord, PosesFile, Provenance, PseudoLabelFile, Stamped,
};
use binpose::keypoints::{KeypointSet, ObjectModel};
use binpose::pose::{estimate_scene, EstimateConfig, PredictionField};
use binpose::simulation::{domain_shift, synth_scene, OraclePredictor, Scene};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Cli, Command, EstimateArgs, EvalArgs, PseudoLabelArgs, SelfTrainArgs, SynthArgs};

/// Seed stream reserved for the domain shift of synthesized scenes.
const SHIFT_STREAM: u64 = 1 << 32;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(binpose::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<binpose::Error> for CliError {
    fn from(e: binpose::Error) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Independent seed for stream `k` of a run seeded with `base`.
pub fn derive_seed(base: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(k);
    rng.next_u64()
}

struct Context {
    config: PipelineConfig,
    prov: Provenance,
    out: PathBuf,
    model: ObjectModel,
    keypoints: KeypointSet,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let g = &cli.global;
        let mut config = PipelineConfig::default();
        config.object = g.object.clone();
        if let Some(s) = g.seed {
            config.seed = s;
        }
        if let Some(a) = g.ablation {
            config.ablation = a;
        }
        apply_command_flags(&mut config, &cli.command);
        let mut object_base = PathBuf::new();
        if let Some(path) = &g.config {
            let overrides: serde_json::Value = read_json(path)?;
            if overrides.get("object").is_some() {
                object_base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            }
            config = config.overlay(&overrides, path)?;
        }
        config.validate(&object_base)?;
        let object = config
            .object
            .clone()
            .ok_or_else(|| CliError::Usage("an object is required: pass --object <spec.json | zoo:name>".into()))?;
        let model = load_object(&object, &object_base)?;
        let mut keypoints = KeypointSet::for_model(&model)?;
        if config.ablation.no_eks {
            keypoints = keypoints.without_equivalents();
        }
        let hash = hex::encode(Sha256::digest(config.canonical_json().as_bytes()));
        let out = config.output_dir.clone().unwrap_or_else(|| g.out.clone());
        Ok(Self {
            prov: Provenance {
                config_hash: hash,
                seed: config.seed,
            },
            config,
            out,
            model,
            keypoints,
        })
    }

    fn estimate_config(&self) -> EstimateConfig {
        self.config.estimate_config()
    }

    fn knn_trainer(&self) -> KnnTrainer {
        let mut t = KnnTrainer::new(self.keypoints.len(), self.model.diameter());
        t.params = self.config.descriptor.clone();
        t
    }

    fn labeled(&self, scenes: &[Scene]) -> Vec<TrainingScene> {
        scenes
            .iter()
            .map(|s| TrainingScene {
                points: s.cloud.points.clone(),
                labels: ground_truth_labels(s, &self.keypoints),
            })
            .collect()
    }
}

fn apply_command_flags(config: &mut PipelineConfig, command: &Command) {
    match command {
        Command::Synth(a) => {
            if let Some(n) = a.instances {
                config.scene.n_instances = n;
            }
        }
        Command::Estimate(a) => {
            if let Some(v) = a.p_amb {
                config.noise.p_amb = v;
            }
            if let Some(v) = a.p_out {
                config.noise.p_out = v;
            }
            if let Some(v) = a.sigma {
                config.noise.sigma = v;
            }
        }
        Command::PseudoLabel(a) => {
            if let Some(k) = a.kappa {
                config.kappa = k;
            }
        }
        Command::SelfTrain(a) => {
            if let Some(r) = a.rounds {
                config.rounds = r;
            }
            if let Some(k) = a.kappa {
                config.kappa = k;
            }
        }
        Command::Eval(a) => {
            if let Some(t) = a.threshold_frac {
                config.threshold_frac = t;
            }
        }
        Command::Keypoints => {}
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.global.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Keypoints => keypoints(&ctx),
        Command::Synth(a) => synth(&ctx, a),
        Command::Estimate(a) => estimate(&ctx, a),
        Command::PseudoLabel(a) => pseudo_label(&ctx, a),
        Command::SelfTrain(a) => self_train_cmd(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
    }
}

fn keypoints(ctx: &Context) -> Result<()> {
    let body = KeypointFile {
        object: ctx.model.id().to_string(),
        diameter: ctx.model.diameter(),
        keypoints: ctx.keypoints.clone(),
    };
    let path = ctx.out.join("keypoints.json");
    write_json(&path, &ctx.prov.stamp(body))?;
    log::info!("wrote {} keypoints to {}", ctx.keypoints.len(), path.display());
    Ok(())
}

fn synth(ctx: &Context, args: &SynthArgs) -> Result<()> {
    let d = ctx.model.diameter();
    let object = ctx.config.object.as_deref().unwrap_or_default();
    (0..args.n)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(ctx.config.seed, k as u64);
            let mut scene = synth_scene(&ctx.model, &ctx.config.scene, seed)?;
            if args.shift {
                scene = domain_shift(&scene, &ctx.config.shift, d, derive_seed(seed, SHIFT_STREAM))?;
            }
            write_scene(&ctx.out, &format!("scene_{k:04}"), &scene, object, &ctx.prov)?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    log::info!("wrote {} scenes to {}", args.n, ctx.out.display());
    Ok(())
}

fn load_scenes(dir: &Path) -> Result<Vec<(String, Scene)>> {
    let paths = list_scenes(dir)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no scenes (*.ply with sidecar) in {}", dir.display())));
    }
    paths
        .par_iter()
        .map(|p| Ok((scene_stem(p), read_scene(p)?)))
        .collect()
}

fn read_predictions(dir: &Path, stem: &str, n_points: usize) -> Result<PredictionField> {
    let path = dir.join(format!("{stem}.pred.json"));
    let mut value: serde_json::Value = read_json(&path)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("config_hash");
        obj.remove("seed");
    }
    let field: PredictionField =
        serde_json::from_value(value).map_err(|e| binpose::Error::Json { path: path.clone(), source: e })?;
    field.validate()?;
    if field.len() != n_points {
        return Err(binpose::Error::LengthMismatch {
            what: "prediction field",
            got: field.len(),
            expected: n_points,
        }
        .into());
    }
    Ok(field)
}

fn estimate(ctx: &Context, args: &EstimateArgs) -> Result<()> {
    let scenes = load_scenes(&args.scenes)?;
    let predictor: Option<Arc<dyn Predictor>> = if args.oracle {
        Some(Arc::new(OraclePredictor {
            keypoints: ctx.keypoints.clone(),
            noise: ctx.config.noise,
            diameter: ctx.model.diameter(),
            seed: ctx.config.seed,
        }))
    } else if let Some(dir) = &args.train {
        let train: Vec<Scene> = load_scenes(dir)?.into_iter().map(|(_, s)| s).collect();
        Some(Arc::new(ctx.knn_trainer().fit(&ctx.labeled(&train))?))
    } else if args.predictions.is_some() {
        None
    } else {
        return Err(CliError::Usage(
            "choose a predictor: --oracle, --train <dir> or --predictions <dir>".into(),
        ));
    };
    let config = ctx.estimate_config();
    scenes
        .par_iter()
        .map(|(stem, scene)| {
            let field = match (&predictor, &args.predictions) {
                (Some(p), _) => p.predict(scene)?,
                (None, Some(dir)) => read_predictions(dir, stem, scene.cloud.len())?,
                (None, None) => unreachable!("predictor source checked above"),
            };
            let estimates = estimate_scene(&scene.cloud, &field, &ctx.model, &ctx.keypoints, &config)?;
            let body = PosesFile::from_estimates(stem, &estimates);
            write_json(&ctx.out.join(format!("{stem}.poses.json")), &ctx.prov.stamp(body))?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

fn read_poses(dir: &Path, stem: &str) -> Result<PosesFile> {
    let file: Stamped<PosesFile> = read_json(&dir.join(format!("{stem}.poses.json")))?;
    Ok(file.body)
}

fn pseudo_label(ctx: &Context, args: &PseudoLabelArgs) -> Result<()> {
    let scenes = load_scenes(&args.scenes)?;
    let bidirectional = ctx.config.ablation.no_scd;
    let scored = scenes
        .par_iter()
        .map(|(stem, scene)| {
            let estimates = read_poses(&args.poses, stem)?.estimates();
            let scores = score_scene(&scene.cloud, &estimates, &ctx.model, bidirectional)?;
            Ok((estimates, scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = scored.iter().flat_map(|(_, s)| s.iter().map(|q| q.d)).collect();
    let d_g = dynamic_threshold(&all, ctx.config.kappa)?;
    let mut accepted = 0;
    for ((stem, scene), (estimates, scores)) in scenes.iter().zip(&scored) {
        let labels = make_pseudo_labels(scene.cloud.len(), estimates, scores, d_g, &ctx.keypoints);
        accepted += labels.accepted();
        let body = PseudoLabelFile {
            scene: stem.clone(),
            labels,
        };
        write_json(&ctx.out.join(format!("{stem}.labels.json")), &ctx.prov.stamp(body))?;
    }
    log::info!("d_g {d_g:.6}: accepted {accepted} of {} instances", all.len());
    Ok(())
}

fn scene_matches(ctx: &Context, scenes: &[Scene], estimates: &[Vec<(binpose::RigidPose, f64)>]) -> Vec<SceneMatch> {
    let metric = PoseMetric::new(&ctx.model);
    let threshold = ctx.config.threshold_frac * ctx.model.diameter();
    scenes
        .par_iter()
        .zip(estimates)
        .map(|(s, e)| match_scene(e, &s.poses, &s.visibility, &metric, threshold, ctx.config.min_visibility))
        .collect()
}

fn predictor_ap(ctx: &Context, predictor: &dyn Predictor, scenes: &[Scene]) -> binpose::Result<f64> {
    let config = ctx.estimate_config();
    let estimates = scenes
        .par_iter()
        .map(|s| {
            let field = predictor.predict(s)?;
            let est = estimate_scene(&s.cloud, &field, &ctx.model, &ctx.keypoints, &config)?;
            Ok(est.iter().map(|e| (e.pose, e.confidence)).collect())
        })
        .collect::<binpose::Result<Vec<_>>>()?;
    Ok(pr_curve(&scene_matches(ctx, scenes, &estimates)).ap)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn self_train_cmd(ctx: &Context, args: &SelfTrainArgs) -> Result<()> {
    let strip = |v: Vec<(String, Scene)>| v.into_iter().map(|(_, s)| s).collect::<Vec<_>>();
    let source = ctx.labeled(&strip(load_scenes(&args.source)?));
    let target = strip(load_scenes(&args.target)?);
    let held = strip(load_scenes(&args.validate)?);
    let trainer = ctx.knn_trainer();
    let teacher: Arc<dyn Predictor> = Arc::new(trainer.fit(&source)?);
    let validate = |p: &dyn Predictor| predictor_ap(ctx, p, &held);

    let mut csv = format!(
        "# config_hash={}\n# seed={}\nround,detected,accepted,mean_d,threshold,ap\n",
        ctx.prov.config_hash, ctx.prov.seed
    );
    if ctx.config.ablation.no_da {
        csv.push_str(&format!("0,,,,,{:.6}\n", validate(teacher.as_ref())?));
    } else {
        let student_trainer = trainer.with_retained(source);
        let outcome = self_train(
            teacher,
            &target,
            &student_trainer,
            &ctx.model,
            &ctx.keypoints,
            &ctx.config.self_train_config(),
            Some(&validate),
        )?;
        csv.push_str(&format!("0,,,,,{}\n", fmt_opt(outcome.initial_ap)));
        for r in &outcome.reports {
            csv.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                r.round,
                r.detected,
                r.accepted,
                r.mean_d,
                r.threshold,
                fmt_opt(r.ap)
            ));
        }
        if outcome.halted {
            log::warn!("self-training halted early: a round accepted no instance");
        }
    }
    write_bytes(&ctx.out.join("self_train.csv"), csv.as_bytes())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SceneMetrics {
    scene: String,
    positives: usize,
    true_positives: usize,
    false_positives: usize,
    ignored: usize,
}

#[derive(Debug, Serialize)]
struct Metrics {
    object: String,
    threshold_frac: f64,
    threshold: f64,
    min_visibility: f64,
    ap: f64,
    positives: usize,
    true_positives: usize,
    false_positives: usize,
    ignored: usize,
    /// (recall, precision) after each ranked estimate.
    curve: Vec<(f64, f64)>,
    scenes: Vec<SceneMetrics>,
}

fn count(m: &SceneMatch, outcome: MatchOutcome) -> usize {
    m.matches.iter().filter(|x| x.outcome == outcome).count()
}

fn eval(ctx: &Context, args: &EvalArgs) -> Result<()> {
    let scenes = load_scenes(&args.scenes)?;
    let estimates = scenes
        .iter()
        .map(|(stem, _)| {
            let poses = read_poses(&args.poses, stem)?;
            Ok(poses.poses.iter().map(|r: &PoseRecord| (r.pose, r.confidence)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let bare: Vec<Scene> = scenes.iter().map(|(_, s)| s.clone()).collect();
    let matches = scene_matches(ctx, &bare, &estimates);
    let curve = pr_curve(&matches);
    let per_scene: Vec<SceneMetrics> = scenes
        .iter()
        .zip(&matches)
        .map(|((stem, _), m)| SceneMetrics {
            scene: stem.clone(),
            positives: m.positives,
            true_positives: count(m, MatchOutcome::TruePositive),
            false_positives: count(m, MatchOutcome::FalsePositive),
            ignored: count(m, MatchOutcome::Ignored),
        })
        .collect();
    let body = Metrics {
        object: ctx.model.id().to_string(),
        threshold_frac: ctx.config.threshold_frac,
        threshold: ctx.config.threshold_frac * ctx.model.diameter(),
        min_visibility: ctx.config.min_visibility,
        ap: curve.ap,
        positives: per_scene.iter().map(|s| s.positives).sum(),
        true_positives: per_scene.iter().map(|s| s.true_positives).sum(),
        false_positives: per_scene.iter().map(|s| s.false_positives).sum(),
        ignored: per_scene.iter().map(|s| s.ignored).sum(),
        curve: curve.points,
        scenes: per_scene,
    };
    log::info!("AP {:.4}", body.ap);
    write_json(&ctx.out.join("metrics.json"), &ctx.prov.stamp(body))?;
    Ok(())
}
