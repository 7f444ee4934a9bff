use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{refine_box, Cache, ToyModel, OUTPUT_DIM};
use super::scene::Scene;
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::geometry::{iou, nearest_gt};
use crate::loss::{box_l1_loss, focal_grad_logit, ClassLabel, ClassTarget, LossParams};

/// Optimizer and objective settings for [`train`].
///
/// `loss` lives in its own config section and is not serialized here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    #[serde(skip)]
    pub loss: LossParams,
    /// When false, every candidate is weighted 1 regardless of salience.
    pub use_salience_loss: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Scenes per SGD step.
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    /// Learning rate multiplier applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub hidden: usize,
    /// Reference-box IOU at or above which a candidate is an object.
    pub assign_iou_threshold: f64,
    /// Weight of the box regression term.
    pub box_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossParams::default(),
            use_salience_loss: true,
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 8,
            grad_clip_norm: 5.0,
            lr_decay: 0.5,
            lr_decay_every: 10,
            hidden: 32,
            assign_iou_threshold: 0.5,
            box_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        self.loss.check()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 || self.lr_decay_every == 0
        {
            return bad("epochs, batch_size, hidden and lr_decay_every must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.grad_clip_norm.is_nan() || self.grad_clip_norm <= 0.0 {
            return bad(format!(
                "grad_clip_norm must be positive, got {}",
                self.grad_clip_norm
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if !(self.assign_iou_threshold > 0.0 && self.assign_iou_threshold <= 1.0) {
            return bad(format!(
                "assign_iou_threshold must be in (0, 1], got {}",
                self.assign_iou_threshold
            ));
        }
        if !(self.box_weight >= 0.0 && self.box_weight.is_finite()) {
            return bad(format!("box_weight must be >= 0, got {}", self.box_weight));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: ToyModel,
    /// Mean batch loss per epoch, measured before each update.
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct CandidateTarget {
    class: ClassTarget,
    /// Regression target for object candidates.
    gt_box: Option<BBox>,
}

fn scene_targets(scene: &Scene, cfg: &TrainConfig) -> Vec<CandidateTarget> {
    let gt_boxes: Vec<BBox> = scene.ground_truths.iter().map(|g| g.bbox).collect();
    scene
        .candidate_boxes
        .iter()
        .map(|r| {
            let assigned = gt_boxes
                .iter()
                .enumerate()
                .map(|(i, g)| (i, iou(r, g)))
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                })
                .filter(|&(_, v)| v >= cfg.assign_iou_threshold);
            let salient = cfg.use_salience_loss
                && nearest_gt(r, &gt_boxes).is_some_and(|i| scene.ground_truths[i].salient);
            match assigned {
                Some((i, v)) => {
                    assert!(
                        v >= cfg.assign_iou_threshold,
                        "object candidate without ground truth"
                    );
                    CandidateTarget {
                        class: ClassTarget::new(ClassLabel::Object, salient),
                        gt_box: Some(gt_boxes[i]),
                    }
                }
                None => CandidateTarget {
                    class: ClassTarget::new(ClassLabel::Background, salient),
                    gt_box: None,
                },
            }
        })
        .collect()
}

/// Loss of one batch; accumulates the parameter gradient when `grads` is
/// given.
///
/// The classification term sums the salience-sensitive focal loss over all
/// candidates and divides by the number of ground-truth objects in the batch.
/// The box term is the mean L1 loss over object candidates.
fn batch_loss(
    model: &ToyModel,
    batch: &[(&Scene, &[CandidateTarget])],
    cfg: &TrainConfig,
    mut grads: Option<&mut ToyModel>,
) -> Result<f64> {
    let n_gt: usize = batch.iter().map(|(s, _)| s.ground_truths.len()).sum();
    let n_pos: usize = batch
        .iter()
        .map(|(_, t)| t.iter().filter(|c| c.gt_box.is_some()).count())
        .sum();
    let cls_norm = n_gt.max(1) as f64;
    let box_norm = n_pos.max(1) as f64;
    let mut cls_loss = 0.0;
    let mut box_loss = 0.0;
    let mut cache = Cache::default();
    for (scene, targets) in batch {
        for ((x, reference), target) in scene
            .candidate_features
            .iter()
            .zip(&scene.candidate_boxes)
            .zip(targets.iter())
        {
            let out = model.forward_cached(x, &mut cache);
            let (l, dl) = focal_grad_logit(out[0], target.class, &cfg.loss)?;
            cls_loss += l;
            let mut dout = [0.0; OUTPUT_DIM];
            dout[0] = dl / cls_norm;
            if let Some(gt) = target.gt_box {
                let (refined, mask) = refine_box(reference, &out[1..]);
                let (bl, bg) = box_l1_loss(&refined, &gt);
                box_loss += bl;
                let scale = [
                    reference.width(),
                    reference.height(),
                    reference.width(),
                    reference.height(),
                ];
                for i in 0..4 {
                    if mask[i] {
                        dout[1 + i] = cfg.box_weight * bg[i] * scale[i] / box_norm;
                    }
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                model.backward(&cache, &dout, g);
            }
        }
    }
    Ok(cls_loss / cls_norm + cfg.box_weight * box_loss / box_norm)
}

/// Trains a fresh model on `scenes` with mini-batch SGD.
///
/// Deterministic for a fixed `cfg.seed`: the seed drives weight
/// initialization and the per-epoch scene order.
pub fn train(scenes: &[Scene], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.check()?;
    let first = scenes
        .first()
        .ok_or_else(|| Error::InvalidParameter("no training scenes".into()))?;
    let input_dim = first.candidate_features.first().map_or(0, |f| f.len());
    let mut model = ToyModel::new(input_dim, cfg.hidden, cfg.seed);
    for s in scenes {
        if let Some(f) = s.candidate_features.iter().find(|f| f.len() != input_dim) {
            return Err(Error::ShapeMismatch {
                expected: input_dim,
                actual: f.len(),
            });
        }
    }
    let targets: Vec<Vec<CandidateTarget>> = scenes.iter().map(|s| scene_targets(s, cfg)).collect();
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f5c_e0e5);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut grads = model.zeros_like();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&Scene, &[CandidateTarget])> = chunk
                .iter()
                .map(|&i| (&scenes[i], targets[i].as_slice()))
                .collect();
            grads.params_mut().for_each(|g| *g = 0.0);
            let loss = match batch_loss(&model, &batch, cfg, Some(&mut grads)) {
                Err(Error::NonFinite(_)) => f64::NAN,
                other => other?,
            };
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            let norm = grads.params().map(|g| g * g).sum::<f64>().sqrt();
            let clip = if norm > cfg.grad_clip_norm {
                cfg.grad_clip_norm / norm
            } else {
                1.0
            };
            for (w, g) in model.params_mut().zip(grads.params()) {
                *w -= lr * clip * g;
            }
            if !model.params().all(|w| w.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                });
            }
            total += loss;
            batches += 1;
        }
        history.push(total / batches as f64);
    }
    Ok(TrainOutput { model, history })
}

/// Training objective of `model` over `scenes` taken as a single batch.
pub fn mean_loss(model: &ToyModel, scenes: &[Scene], cfg: &TrainConfig) -> Result<f64> {
    model.check()?;
    let targets: Vec<Vec<CandidateTarget>> = scenes.iter().map(|s| scene_targets(s, cfg)).collect();
    let batch: Vec<(&Scene, &[CandidateTarget])> = scenes
        .iter()
        .zip(&targets)
        .map(|(s, t)| (s, t.as_slice()))
        .collect();
    batch_loss(model, &batch, cfg, None)
}
