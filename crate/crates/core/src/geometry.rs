//! IOU, greedy evaluation matching and the nearest-ground-truth lookup used
//! to pick the salience weight during training.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// A predicted box with its confidence score in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64) -> Self {
        Self { bbox, confidence }
    }
}

/// A ground-truth box and its salience flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub salient: bool,
}

impl GroundTruth {
    pub fn new(bbox: BBox, salient: bool) -> Self {
        Self { bbox, salient }
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    /// `(prediction index, ground-truth index, iou)` in matching order.
    pub matches: Vec<(usize, usize, f64)>,
    /// Ascending.
    pub unmatched_predictions: Vec<usize>,
    /// Ascending.
    pub unmatched_ground_truths: Vec<usize>,
}

/// Prediction indices sorted by descending confidence, ties by lower index.
pub fn confidence_order(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .total_cmp(&preds[a].confidence)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy one-to-one matching.
///
/// Predictions are visited in [`confidence_order`]; each takes the still
/// unmatched ground truth with the highest IOU (lowest index on ties) if that
/// IOU reaches `iou_threshold`.
pub fn greedy_match(preds: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> MatchResult {
    let mut gt_taken = vec![false; gts.len()];
    let mut pred_matched = vec![false; preds.len()];
    let mut matches = Vec::new();
    for p in confidence_order(preds) {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(g, _)| !gt_taken[*g])
            .map(|(g, gt)| (g, iou(&preds[p].bbox, &gt.bbox)))
            .fold(None, |best: Option<(usize, f64)>, (g, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((g, v)),
            });
        if let Some((g, v)) = best {
            if v >= iou_threshold {
                gt_taken[g] = true;
                pred_matched[p] = true;
                matches.push((p, g, v));
            }
        }
    }
    MatchResult {
        matches,
        unmatched_predictions: (0..preds.len()).filter(|&p| !pred_matched[p]).collect(),
        unmatched_ground_truths: (0..gts.len()).filter(|&g| !gt_taken[g]).collect(),
    }
}

fn center_distance_sq(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).powi(2) + (ay - by).powi(2)
}

/// Index of the ground truth nearest to `bbox`.
///
/// Nearest means highest IOU; when nothing overlaps, the smallest center
/// distance. Ties go to the lowest index. `None` only for an empty slice.
pub fn nearest_gt(bbox: &BBox, gts: &[BBox]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, gt) in gts.iter().enumerate() {
        let v = iou(bbox, gt);
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    match best {
        Some((i, v)) if v > 0.0 => Some(i),
        Some(_) => gts
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| {
                center_distance_sq(bbox, a)
                    .total_cmp(&center_distance_sq(bbox, b))
                    .then(i.cmp(j))
            })
            .map(|(i, _)| i),
        None => None,
    }
}

/// Salience multiplier for a candidate: `omega` when its nearest ground truth
/// is salient, 1 otherwise (including frames without ground truth).
pub fn salience_weight(bbox: &BBox, gts: &[GroundTruth], omega: f64) -> f64 {
    let boxes: Vec<BBox> = gts.iter().map(|g| g.bbox).collect();
    match nearest_gt(bbox, &boxes) {
        Some(i) if gts[i].salient => omega,
        _ => 1.0,
    }
}

/// All detections for one frame, as stored in a predictions file.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePredictions {
    pub frame_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFramePredictions {
    frame_id: String,
    detections: Vec<RawDetection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    confidence: f64,
}

/// Parses a predictions file: one JSON record per line with `frame_id` and
/// `detections`. Boxes must be valid and confidences within `[0, 1]`.
pub fn parse_predictions(text: &str) -> Result<Vec<FramePredictions>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, text_line) in text.lines().enumerate() {
        let line = i + 1;
        if text_line.trim().is_empty() {
            continue;
        }
        let raw: RawFramePredictions =
            serde_json::from_str(text_line).map_err(|e| Error::Malformed {
                line,
                message: e.to_string(),
            })?;
        if !seen.insert(raw.frame_id.clone()) {
            return Err(Error::DuplicateFrame {
                line,
                frame_id: raw.frame_id,
            });
        }
        let detections = raw
            .detections
            .into_iter()
            .enumerate()
            .map(|(k, d)| {
                let bbox = BBox::new(d.x_min, d.y_min, d.x_max, d.y_max);
                bbox.check().map_err(|message| Error::InvalidBox {
                    line,
                    message: format!("detection {k}: {message}"),
                })?;
                if !(0.0..=1.0).contains(&d.confidence) {
                    return Err(Error::Invariant {
                        line,
                        rule: "confidence_range",
                        message: format!(
                            "detection {k}: confidence {} outside [0, 1]",
                            d.confidence
                        ),
                    });
                }
                Ok(Detection::new(bbox, d.confidence))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(FramePredictions {
            frame_id: raw.frame_id,
            detections,
        });
    }
    Ok(out)
}

pub fn serialize_predictions(frames: &[FramePredictions]) -> String {
    let mut out = String::new();
    for f in frames {
        let raw = RawFramePredictions {
            frame_id: f.frame_id.clone(),
            detections: f
                .detections
                .iter()
                .map(|d| RawDetection {
                    x_min: d.bbox.x_min,
                    y_min: d.bbox.y_min,
                    x_max: d.bbox.x_max,
                    y_max: d.bbox.y_max,
                    confidence: d.confidence,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&raw).expect("prediction record encodes"));
        out.push('\n');
    }
    out
}
