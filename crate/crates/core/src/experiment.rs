//! Salience-weighted versus unweighted training on synthetic scenes.
//!
//! Both models share scenes, initialization seed and every hyperparameter
//! except the salience weight. Each is swept over the test scenes and the
//! results are written as metrics CSVs and three SVG charts: salient recall,
//! overall recall and the recall difference, each against overall precision.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dataset::{Annotation, Dataset, Frame};
use crate::detector::{generate_scenes, mean_loss, predict, train, Scene, ToyModel};
use crate::error::{Error, Result};
use crate::eval::{
    mean_recall_difference, pr_sweep, write_metrics_csv, FrameTruth, MetricsRow, PRPoint,
};
use crate::geometry::FramePredictions;
use crate::plot::{plot_svg, PlotSpec, Series};

/// Thresholds at and above this value enter the summary statistic.
pub const SUMMARY_MIN_THRESHOLD: f64 = 0.7;

/// Side length, in pixels, used when writing unit-square scenes as frames.
pub const SCENE_PIXELS: u32 = 1000;

pub struct SceneSplits {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
}

/// Train/val/test scenes derived from `cfg.experiment.seed`.
pub fn generate_splits(cfg: &RunConfig) -> Result<SceneSplits> {
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.experiment.seed);
    let (a, b, c): (u64, u64, u64) = (seeds.random(), seeds.random(), seeds.random());
    let e = &cfg.experiment;
    Ok(SceneSplits {
        train: generate_scenes(&cfg.scene, e.train_scenes, a)?,
        val: generate_scenes(&cfg.scene, e.val_scenes, b)?,
        test: generate_scenes(&cfg.scene, e.test_scenes, c)?,
    })
}

#[derive(Clone, Debug)]
pub struct ModelRun {
    pub omega: f64,
    pub model: ToyModel,
    pub history: Vec<f64>,
    /// Objective on the validation scenes; `None` without validation scenes.
    pub val_loss: Option<f64>,
    pub points: Vec<PRPoint>,
}

impl ModelRun {
    pub fn mean_recall_difference(&self) -> f64 {
        mean_recall_difference(&self.points, SUMMARY_MIN_THRESHOLD).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub salience: ModelRun,
    pub baseline: ModelRun,
}

pub fn frame_id(index: usize) -> String {
    format!("scene-{index:05}")
}

/// Scene ground truth as a dataset frame in pixel coordinates.
pub fn scene_frame(scene: &Scene, index: usize) -> Frame {
    let px = SCENE_PIXELS as f64;
    Frame {
        frame_id: frame_id(index),
        image_width: SCENE_PIXELS,
        image_height: SCENE_PIXELS,
        annotations: scene
            .ground_truths
            .iter()
            .map(|g| Annotation::unlit(g.bbox.scale(px, px), g.salient))
            .collect(),
    }
}

pub fn scenes_dataset(scenes: &[Scene]) -> Dataset {
    Dataset::new(
        scenes
            .iter()
            .enumerate()
            .map(|(i, s)| scene_frame(s, i))
            .collect(),
    )
}

/// Model detections for each scene in pixel coordinates.
pub fn scene_predictions(model: &ToyModel, scenes: &[Scene]) -> Result<Vec<FramePredictions>> {
    let px = SCENE_PIXELS as f64;
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(FramePredictions {
                frame_id: frame_id(i),
                detections: predict(model, s)?
                    .into_iter()
                    .map(|mut d| {
                        d.bbox = d.bbox.scale(px, px);
                        d
                    })
                    .collect(),
            })
        })
        .collect()
}

pub fn sweep_scenes(model: &ToyModel, scenes: &[Scene], cfg: &RunConfig) -> Result<Vec<PRPoint>> {
    let preds = scene_predictions(model, scenes)?;
    let truths: Vec<FrameTruth> = scenes_dataset(scenes)
        .frames
        .iter()
        .map(FrameTruth::from)
        .collect();
    pr_sweep(&preds, &truths, &cfg.eval)
}

fn run_model(cfg: &RunConfig, splits: &SceneSplits, omega: f64) -> Result<ModelRun> {
    let mut tc = cfg.train_config();
    tc.loss.omega = omega;
    let out = train(&splits.train, &tc)?;
    let val_loss = if splits.val.is_empty() {
        None
    } else {
        Some(mean_loss(&out.model, &splits.val, &tc)?)
    };
    let points = sweep_scenes(&out.model, &splits.test, cfg)?;
    Ok(ModelRun {
        omega,
        model: out.model,
        history: out.history,
        val_loss,
        points,
    })
}

/// Trains the salience-weighted model (`cfg.loss.omega`) and the baseline
/// (`cfg.experiment.baseline_omega`) and sweeps both on the test scenes.
///
/// The two runs execute on separate threads; each is independent and
/// deterministic, so the outcome equals a sequential run.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.check()?;
    let splits = generate_splits(cfg)?;
    let (salience, baseline) = std::thread::scope(|s| {
        let h = s.spawn(|| run_model(cfg, &splits, cfg.experiment.baseline_omega));
        let salience = run_model(cfg, &splits, cfg.loss.omega);
        (
            salience,
            h.join().expect("baseline training thread panicked"),
        )
    });
    Ok(ExperimentOutcome {
        salience: salience?,
        baseline: baseline?,
    })
}

/// Figure file names, in the order returned by [`curve_figures`].
pub const FIGURE_NAMES: [&str; 3] = [
    "recall_salient.svg",
    "recall_all.svg",
    "recall_difference.svg",
];

/// The three figure documents for labelled metric curves: salient recall,
/// overall recall and recall difference, each against overall precision.
pub fn curve_figures(curves: &[(String, Vec<MetricsRow>)]) -> Result<[(String, String); 3]> {
    let series = |f: fn(&MetricsRow) -> f64| -> Vec<Series> {
        curves
            .iter()
            .map(|(label, rows)| {
                Series::new(
                    label.clone(),
                    rows.iter().map(|r| (r.precision_all, f(r))).collect(),
                )
            })
            .collect()
    };
    let unit = Some((0.0, 1.0));
    let spec = |title: &str, y: &str, y_range| PlotSpec {
        title: title.into(),
        x_label: "precision (all lights)".into(),
        y_label: y.into(),
        x_range: unit,
        y_range,
    };
    let [f3, f4, f5] = FIGURE_NAMES;
    Ok([
        (
            f3.into(),
            plot_svg(
                &spec(
                    "Salient recall vs precision",
                    "recall (salient lights)",
                    unit,
                ),
                &series(|r| r.recall_salient),
            )?,
        ),
        (
            f4.into(),
            plot_svg(
                &spec("Overall recall vs precision", "recall (all lights)", unit),
                &series(|r| r.recall_all),
            )?,
        ),
        (
            f5.into(),
            plot_svg(
                &spec("Salient minus overall recall", "recall difference", None),
                &series(|r| r.recall_difference),
            )?,
        ),
    ])
}

pub fn experiment_figures(outcome: &ExperimentOutcome) -> Result<[(String, String); 3]> {
    let curves: Vec<(String, Vec<MetricsRow>)> = [&outcome.salience, &outcome.baseline]
        .iter()
        .map(|r| {
            (
                format!("omega = {}", r.omega),
                r.points.iter().map(MetricsRow::from).collect(),
            )
        })
        .collect();
    curve_figures(&curves)
}

pub fn summary_line(outcome: &ExperimentOutcome) -> String {
    format!(
        "mean recall_difference at thresholds >= {SUMMARY_MIN_THRESHOLD}: salience (omega = {}) {:+.6}, baseline (omega = {}) {:+.6}",
        outcome.salience.omega,
        outcome.salience.mean_recall_difference(),
        outcome.baseline.omega,
        outcome.baseline.mean_recall_difference(),
    )
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes metrics CSVs, figures and `summary.txt` into `dir` (created if
/// missing). Returns the summary line.
pub fn write_experiment(outcome: &ExperimentOutcome, dir: &Path) -> Result<String> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(
        dir,
        "metrics_salience.csv",
        write_metrics_csv(&outcome.salience.points),
    )?;
    write(
        dir,
        "metrics_baseline.csv",
        write_metrics_csv(&outcome.baseline.points),
    )?;
    for (name, svg) in experiment_figures(outcome)? {
        write(dir, &name, svg)?;
    }
    let summary = summary_line(outcome);
    write(dir, "summary.txt", format!("{summary}\n"))?;
    Ok(summary)
}
