use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::geometry::{iou, GroundTruth};

/// Length of every candidate feature vector.
pub const FEATURE_DIM: usize = 16;

/// Synthetic scene generator settings. Sizes are in grid-cell units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Candidates per side; a scene has `grid_size^2` candidates.
    pub grid_size: usize,
    pub objects_min: usize,
    /// Inclusive.
    pub objects_max: usize,
    pub salient_fraction: f64,
    /// Area factor applied to salient objects (side length scales by its
    /// square root).
    pub salient_size_scale: f64,
    pub feature_noise_sigma: f64,
    /// Side length range of non-salient objects.
    pub object_size_min: f64,
    pub object_size_max: f64,
    /// Maximum center offset from the host cell center.
    pub center_jitter: f64,
    /// Lower bound of the per-object evidence strength (upper bound 1).
    pub contrast_min: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            grid_size: 8,
            objects_min: 2,
            objects_max: 5,
            salient_fraction: 0.3,
            salient_size_scale: 0.5,
            feature_noise_sigma: 0.1,
            object_size_min: 1.05,
            object_size_max: 1.2,
            center_jitter: 0.05,
            contrast_min: 0.6,
        }
    }
}

impl SceneConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.grid_size == 0 {
            return bad("grid_size must be positive".into());
        }
        if self.objects_min > self.objects_max || self.objects_max > self.grid_size * self.grid_size
        {
            return bad(format!(
                "object count range {}..={} must be ordered and fit {} cells",
                self.objects_min,
                self.objects_max,
                self.grid_size * self.grid_size
            ));
        }
        if !(0.0..=1.0).contains(&self.salient_fraction) {
            return bad(format!(
                "salient_fraction {} outside [0, 1]",
                self.salient_fraction
            ));
        }
        if !(self.salient_size_scale > 0.0 && self.salient_size_scale <= 1.0) {
            return bad(format!(
                "salient_size_scale {} outside (0, 1]",
                self.salient_size_scale
            ));
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return bad(format!(
                "feature_noise_sigma {} must be >= 0",
                self.feature_noise_sigma
            ));
        }
        if !(self.object_size_min > 0.0
            && self.object_size_min <= self.object_size_max
            && self.object_size_max <= 2.0)
        {
            return bad(format!(
                "object size range {}..{} must satisfy 0 < min <= max <= 2",
                self.object_size_min, self.object_size_max
            ));
        }
        if !(0.0..=0.5).contains(&self.center_jitter) {
            return bad(format!(
                "center_jitter {} outside [0, 0.5]",
                self.center_jitter
            ));
        }
        if !(self.contrast_min > 0.0 && self.contrast_min <= 1.0) {
            return bad(format!("contrast_min {} outside (0, 1]", self.contrast_min));
        }
        Ok(())
    }

    pub fn candidate_count(&self) -> usize {
        self.grid_size * self.grid_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub ground_truths: Vec<GroundTruth>,
    pub candidate_boxes: Vec<BBox>,
    pub candidate_features: Vec<Vec<f64>>,
}

impl Scene {
    pub fn candidate_count(&self) -> usize {
        self.candidate_boxes.len()
    }
}

fn grid_boxes(grid: usize) -> Vec<BBox> {
    let cell = 1.0 / grid as f64;
    (0..grid)
        .flat_map(|row| {
            (0..grid).map(move |col| {
                BBox::new(
                    col as f64 * cell,
                    row as f64 * cell,
                    (col + 1) as f64 * cell,
                    (row + 1) as f64 * cell,
                )
            })
        })
        .collect()
}

fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

/// Builds one scene; a pure function of `(cfg, seed)`.
///
/// Objects sit in distinct grid cells. The features of a candidate describe
/// the object it overlaps most (by IOU): visible coverage and IOU, both
/// scaled by the object's contrast, followed by the four coordinate
/// residuals in cell units. The remaining dimensions carry no signal. Every
/// dimension receives Gaussian noise.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = cfg.grid_size;
    let cell = 1.0 / grid as f64;
    let candidate_boxes = grid_boxes(grid);

    let count = rng.random_range(cfg.objects_min..=cfg.objects_max);
    let mut cells: Vec<usize> = (0..grid * grid).collect();
    let (chosen, _) = cells.partial_shuffle(&mut rng, count);
    let chosen = chosen.to_vec();

    let mut ground_truths = Vec::with_capacity(count);
    let mut contrast = Vec::with_capacity(count);
    for c in chosen {
        let salient = rng.random_bool(cfg.salient_fraction);
        let mut side = rng.random_range(cfg.object_size_min..=cfg.object_size_max);
        if salient {
            side *= cfg.salient_size_scale.sqrt();
        }
        let (cx, cy) = candidate_boxes[c].center();
        let jx = rng.random_range(-cfg.center_jitter..=cfg.center_jitter);
        let jy = rng.random_range(-cfg.center_jitter..=cfg.center_jitter);
        let b = BBox::from_center(cx + jx * cell, cy + jy * cell, side * cell, side * cell);
        let b = BBox::new(
            b.x_min.max(0.0),
            b.y_min.max(0.0),
            b.x_max.min(1.0),
            b.y_max.min(1.0),
        );
        ground_truths.push(GroundTruth::new(b, salient));
        contrast.push(rng.random_range(cfg.contrast_min..=1.0));
    }

    let noise = Normal::new(0.0, cfg.feature_noise_sigma).expect("sigma checked");
    let candidate_features = candidate_boxes
        .iter()
        .map(|r| {
            let mut f = vec![0.0; FEATURE_DIM];
            let best = ground_truths
                .iter()
                .enumerate()
                .map(|(i, g)| (i, iou(r, &g.bbox)))
                .filter(|&(_, v)| v > 0.0)
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                });
            if let Some((i, v)) = best {
                let g = &ground_truths[i].bbox;
                f[0] = contrast[i] * intersection_area(r, g) / r.area();
                f[1] = contrast[i] * v;
                for (k, (gc, rc)) in g.coords().iter().zip(r.coords()).enumerate() {
                    f[2 + k] = (gc - rc) / cell;
                }
            }
            for x in f.iter_mut() {
                *x += noise.sample(&mut rng);
            }
            f
        })
        .collect();

    Ok(Scene {
        ground_truths,
        candidate_boxes,
        candidate_features,
    })
}

/// `count` scenes whose seeds are drawn from a generator seeded by `seed`.
pub fn generate_scenes(cfg: &SceneConfig, count: usize, seed: u64) -> Result<Vec<Scene>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| generate_scene(cfg, seeds.random()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SceneConfig::default();
        assert_eq!(
            generate_scene(&cfg, 9).unwrap(),
            generate_scene(&cfg, 9).unwrap()
        );
        assert_ne!(
            generate_scene(&cfg, 9).unwrap(),
            generate_scene(&cfg, 10).unwrap()
        );
    }

    #[test]
    fn no_salience_when_fraction_zero() {
        let cfg = SceneConfig {
            salient_fraction: 0.0,
            ..SceneConfig::default()
        };
        for s in 0..50 {
            assert!(generate_scene(&cfg, s)
                .unwrap()
                .ground_truths
                .iter()
                .all(|g| !g.salient));
        }
    }

    #[test]
    fn salient_objects_are_smaller_on_average() {
        let cfg = SceneConfig::default();
        let (mut sal, mut non) = (Vec::new(), Vec::new());
        for s in 0..1000 {
            for g in generate_scene(&cfg, s).unwrap().ground_truths {
                if g.salient {
                    sal.push(g.bbox.area())
                } else {
                    non.push(g.bbox.area())
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&sal) < mean(&non));
        // Fraction tracks the configured value (about 3500 objects).
        let frac = sal.len() as f64 / (sal.len() + non.len()) as f64;
        assert!((frac - 0.3).abs() < 0.03, "salient fraction {frac}");
    }

    #[test]
    fn shapes_and_ranges() {
        let cfg = SceneConfig::default();
        for s in 0..100 {
            let sc = generate_scene(&cfg, s).unwrap();
            assert_eq!(sc.candidate_boxes.len(), 64);
            assert_eq!(sc.candidate_features.len(), 64);
            assert!((cfg.objects_min..=cfg.objects_max).contains(&sc.ground_truths.len()));
            for g in &sc.ground_truths {
                assert!(g.bbox.is_valid() && g.bbox.within(1.0, 1.0));
            }
            assert!(sc
                .candidate_features
                .iter()
                .flatten()
                .all(|x| x.is_finite()));
        }
    }

    #[test]
    fn objects_are_assignable_to_their_cell() {
        let cfg = SceneConfig {
            feature_noise_sigma: 0.0,
            ..SceneConfig::default()
        };
        for s in 0..300 {
            let sc = generate_scene(&cfg, s).unwrap();
            for g in &sc.ground_truths {
                let best = sc
                    .candidate_boxes
                    .iter()
                    .map(|r| iou(r, &g.bbox))
                    .fold(0.0, f64::max);
                assert!(best >= 0.5, "object {} best candidate iou {best}", g.bbox);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SceneConfig {
            grid_size: 2,
            objects_max: 5,
            ..SceneConfig::default()
        };
        assert!(generate_scene(&cfg, 0).is_err());
        cfg = SceneConfig {
            salient_size_scale: 0.0,
            ..SceneConfig::default()
        };
        assert!(cfg.check().is_err());
    }
}
