//! Confidence-sweep evaluation.
//!
//! At each confidence threshold, detections below it are dropped, the rest
//! are greedily matched to ground truth per frame, and the counts give
//! precision over all objects, recall over all objects, recall over salient
//! objects only, and the salient-minus-all recall difference. Empty
//! denominators (`0/0`) count as 1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::geometry::{greedy_match, Detection, FramePredictions, GroundTruth};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Ascending confidence thresholds within `[0, 1]`.
    pub thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            thresholds: default_thresholds(),
        }
    }
}

/// `0.0, 0.1, ..., 1.0`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl EvalConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "iou_threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.thresholds.is_empty() {
            return Err(Error::InvalidParameter("no sweep thresholds".into()));
        }
        if !self.thresholds.iter().all(|t| (0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParameter(
                "sweep thresholds must lie in [0, 1]".into(),
            ));
        }
        if !self.thresholds.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "sweep thresholds must be ascending".into(),
            ));
        }
        Ok(())
    }
}

/// Ground truth of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTruth {
    pub frame_id: String,
    pub objects: Vec<GroundTruth>,
}

impl From<&Frame> for FrameTruth {
    fn from(f: &Frame) -> Self {
        Self {
            frame_id: f.frame_id.clone(),
            objects: f
                .annotations
                .iter()
                .map(|a| GroundTruth::new(a.bbox, a.salient))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PRPoint {
    pub confidence_threshold: f64,
    pub tp_all: usize,
    pub fp_all: usize,
    pub fn_all: usize,
    pub tp_salient: usize,
    pub fn_salient: usize,
    pub precision_all: f64,
    pub recall_all: f64,
    pub recall_salient: f64,
    /// `recall_salient - recall_all`.
    pub recall_difference: f64,
}

impl PRPoint {
    /// True when at least one detection survived the threshold.
    pub fn has_predictions(&self) -> bool {
        self.tp_all + self.fp_all > 0
    }
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Pairs each ground-truth frame with its predictions by `frame_id`.
fn align<'a>(
    preds: &'a [FramePredictions],
    gts: &'a [FrameTruth],
) -> Result<Vec<(&'a [Detection], &'a [GroundTruth])>> {
    let by_id: HashMap<&str, &FramePredictions> =
        preds.iter().map(|p| (p.frame_id.as_str(), p)).collect();
    if by_id.len() != preds.len() {
        return Err(Error::FrameMismatch(
            "duplicate frame_id in predictions".into(),
        ));
    }
    if preds.len() != gts.len() {
        return Err(Error::FrameMismatch(format!(
            "{} prediction frames vs {} ground-truth frames",
            preds.len(),
            gts.len()
        )));
    }
    gts.iter()
        .map(|g| {
            let p = by_id.get(g.frame_id.as_str()).ok_or_else(|| {
                Error::FrameMismatch(format!("no predictions for frame {:?}", g.frame_id))
            })?;
            Ok((p.detections.as_slice(), g.objects.as_slice()))
        })
        .collect()
}

fn point_for(
    frames: &[(&[Detection], &[GroundTruth])],
    conf_t: f64,
    iou_threshold: f64,
) -> PRPoint {
    let (mut tp, mut fp, mut fneg, mut tp_s, mut fn_s) = (0, 0, 0, 0, 0);
    for (dets, gts) in frames {
        let kept: Vec<Detection> = dets
            .iter()
            .filter(|d| d.confidence >= conf_t)
            .copied()
            .collect();
        let m = greedy_match(&kept, gts, iou_threshold);
        tp += m.matches.len();
        fp += m.unmatched_predictions.len();
        fneg += m.unmatched_ground_truths.len();
        tp_s += m.matches.iter().filter(|(_, g, _)| gts[*g].salient).count();
        fn_s += m
            .unmatched_ground_truths
            .iter()
            .filter(|&&g| gts[g].salient)
            .count();
    }
    let recall_all = ratio_or_one(tp, tp + fneg);
    let recall_salient = ratio_or_one(tp_s, tp_s + fn_s);
    PRPoint {
        confidence_threshold: conf_t,
        tp_all: tp,
        fp_all: fp,
        fn_all: fneg,
        tp_salient: tp_s,
        fn_salient: fn_s,
        precision_all: ratio_or_one(tp, tp + fp),
        recall_all,
        recall_salient,
        recall_difference: recall_salient - recall_all,
    }
}

/// Counts at a single confidence threshold `conf_t` (detections with
/// `confidence < conf_t` are discarded).
pub fn confusion_at_threshold(
    preds: &[FramePredictions],
    gts: &[FrameTruth],
    conf_t: f64,
    cfg: &EvalConfig,
) -> Result<PRPoint> {
    cfg.check()?;
    let frames = align(preds, gts)?;
    Ok(point_for(&frames, conf_t, cfg.iou_threshold))
}

/// One [`PRPoint`] per configured threshold, in ascending order.
pub fn pr_sweep(
    preds: &[FramePredictions],
    gts: &[FrameTruth],
    cfg: &EvalConfig,
) -> Result<Vec<PRPoint>> {
    cfg.check()?;
    let frames = align(preds, gts)?;
    Ok(cfg
        .thresholds
        .iter()
        .map(|&t| point_for(&frames, t, cfg.iou_threshold))
        .collect())
}

/// `(precision_all, recall_difference)` per point, in input order.
pub fn recall_difference_curve(points: &[PRPoint]) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|p| (p.precision_all, p.recall_difference))
        .collect()
}

/// Mean recall difference over points whose threshold is at least
/// `min_threshold`.
pub fn mean_recall_difference(points: &[PRPoint], min_threshold: f64) -> Option<f64> {
    // Thresholds are produced as i/10; allow for representation error.
    let sel: Vec<f64> = points
        .iter()
        .filter(|p| p.confidence_threshold >= min_threshold - 1e-9)
        .map(|p| p.recall_difference)
        .collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}

/// Best salient recall reachable at overall precision `>= level`, counting
/// only points that kept at least one detection.
pub fn salient_recall_at_precision(points: &[PRPoint], level: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.has_predictions() && p.precision_all >= level)
        .map(|p| p.recall_salient)
        .fold(None, |acc: Option<f64>, r| {
            Some(acc.map_or(r, |a| a.max(r)))
        })
}

/// Salient recall of two sweeps at one shared precision level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelComparison {
    pub level: f64,
    pub recall_a: f64,
    pub recall_b: f64,
}

/// Compares salient recall of sweeps `a` and `b` at every precision level
/// both can reach.
///
/// Levels are the precision values of either sweep's points (with
/// predictions) that are at least `min_level` and at most the smaller of the
/// two maximum precisions. Recall at a level is
/// [`salient_recall_at_precision`]. Ascending, without duplicates.
pub fn compare_salient_recall(
    a: &[PRPoint],
    b: &[PRPoint],
    min_level: f64,
) -> Vec<LevelComparison> {
    let reached = |pts: &[PRPoint]| {
        pts.iter()
            .filter(|p| p.has_predictions())
            .map(|p| p.precision_all)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |m| m.max(v)))
            })
    };
    let (Some(ma), Some(mb)) = (reached(a), reached(b)) else {
        return Vec::new();
    };
    let cap = ma.min(mb);
    let mut levels: Vec<f64> = a
        .iter()
        .chain(b)
        .filter(|p| p.has_predictions() && p.precision_all >= min_level && p.precision_all <= cap)
        .map(|p| p.precision_all)
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
        .into_iter()
        .map(|level| LevelComparison {
            level,
            recall_a: salient_recall_at_precision(a, level).expect("level reachable by a"),
            recall_b: salient_recall_at_precision(b, level).expect("level reachable by b"),
        })
        .collect()
}

/// CSV header of the metrics file.
pub const METRICS_HEADER: [&str; 8] = [
    "threshold",
    "tp_all",
    "fp_all",
    "fn_all",
    "precision_all",
    "recall_all",
    "recall_salient",
    "recall_difference",
];

/// One parsed row of a metrics CSV.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct MetricsRow {
    pub threshold: f64,
    pub tp_all: usize,
    pub fp_all: usize,
    pub fn_all: usize,
    pub precision_all: f64,
    pub recall_all: f64,
    pub recall_salient: f64,
    pub recall_difference: f64,
}

impl From<&PRPoint> for MetricsRow {
    fn from(p: &PRPoint) -> Self {
        Self {
            threshold: p.confidence_threshold,
            tp_all: p.tp_all,
            fp_all: p.fp_all,
            fn_all: p.fn_all,
            precision_all: p.precision_all,
            recall_all: p.recall_all,
            recall_salient: p.recall_salient,
            recall_difference: p.recall_difference,
        }
    }
}

/// Metrics CSV, reals with 6 decimals.
pub fn write_metrics_csv(points: &[PRPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for p in points {
        w.write_record([
            format!("{:.6}", p.confidence_threshold),
            p.tp_all.to_string(),
            p.fp_all.to_string(),
            p.fn_all.to_string(),
            format!("{:.6}", p.precision_all),
            format!("{:.6}", p.recall_all),
            format!("{:.6}", p.recall_salient),
            format!("{:.6}", p.recall_difference),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Csv(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()
        .map_err(|e| Error::Csv(e.to_string()))?;
    if let Some(row) = rows.iter().find(|row| {
        [
            row.threshold,
            row.precision_all,
            row.recall_all,
            row.recall_salient,
            row.recall_difference,
        ]
        .iter()
        .any(|v| !v.is_finite())
    }) {
        return Err(Error::Csv(format!(
            "non-finite value in row at threshold {}",
            row.threshold
        )));
    }
    Ok(rows)
}
