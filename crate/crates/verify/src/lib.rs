//! Fixtures and independent oracles for the acceptance checks.
//!
//! Nothing here calls into the code under test beyond building its data
//! types, so the checks compare two separate implementations.

use rand::seq::IndexedRandom;
use rand::Rng;
use salience_core::dataset::{Annotation, Color, Dataset, Frame, Occlusion, Status};
use salience_core::geometry::{Detection, GroundTruth};
use salience_core::BBox;

/// Valid dataset with random geometry and attributes.
pub fn random_dataset(rng: &mut impl Rng, frames: usize) -> Dataset {
    let frames = (0..frames)
        .map(|i| {
            let (w, h) = (
                rng.random_range(16..=4096u32),
                rng.random_range(16..=4096u32),
            );
            let annotations = (0..rng.random_range(0..6))
                .map(|_| {
                    let x0 = rng.random_range(0.0..w as f64 - 2.0);
                    let y0 = rng.random_range(0.0..h as f64 - 2.0);
                    let x1 = rng.random_range(x0 + 1e-3..=w as f64);
                    let y1 = rng.random_range(y0 + 1e-3..=h as f64);
                    let status = *Status::ALL.choose(rng).unwrap();
                    let color = match status {
                        Status::On => *[Color::Red, Color::Yellow, Color::Green]
                            .choose(rng)
                            .unwrap(),
                        _ => Color::Undefined,
                    };
                    Annotation {
                        bbox: BBox::new(x0, y0, x1, y1),
                        status,
                        color,
                        directional: rng.random(),
                        occlusion: *Occlusion::ALL.choose(rng).unwrap(),
                        salient: rng.random(),
                    }
                })
                .collect();
            Frame {
                frame_id: format!("drive-{}/frame-{i:06}", rng.random_range(0..100)),
                image_width: w,
                image_height: h,
                annotations,
            }
        })
        .collect();
    Dataset::new(frames)
}

/// Dataset with 30,566 lights of which 9,051 are salient, spread three per
/// frame over 1280x960 images.
pub fn full_size_fixture() -> Dataset {
    const TOTAL: usize = 30_566;
    const SALIENT: usize = 9_051;
    let lights: Vec<Annotation> = (0..TOTAL)
        .map(|i| {
            let x = (i % 3) as f64 * 100.0;
            let mut a = Annotation::unlit(BBox::new(x + 10.0, 20.0, x + 30.0, 70.0), i < SALIENT);
            if i % 2 == 0 {
                a.status = Status::On;
                a.color = [Color::Red, Color::Yellow, Color::Green][i % 3];
            }
            a
        })
        .collect();
    let frames = lights
        .chunks(3)
        .enumerate()
        .map(|(i, chunk)| Frame {
            frame_id: format!("frame-{i:05}"),
            image_width: 1280,
            image_height: 960,
            annotations: chunk.to_vec(),
        })
        .collect();
    Dataset::new(frames)
}

/// Random box with integer corners on an `n x n` grid.
pub fn integer_box(rng: &mut impl Rng, n: u32) -> BBox {
    let x0 = rng.random_range(0..n);
    let y0 = rng.random_range(0..n);
    let x1 = rng.random_range(x0 + 1..=n);
    let y1 = rng.random_range(y0 + 1..=n);
    BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64)
}

fn pixels(b: &BBox) -> impl Iterator<Item = (u32, u32)> {
    let (x0, x1) = (b.x_min as u32, b.x_max as u32);
    let (y0, y1) = (b.y_min as u32, b.y_max as u32);
    (x0..x1).flat_map(move |x| (y0..y1).map(move |y| (x, y)))
}

/// IOU by counting unit pixels covered by integer-cornered boxes.
pub fn raster_iou(a: &BBox, b: &BBox) -> f64 {
    let in_b = |(x, y): (u32, u32)| {
        (x as f64) >= b.x_min
            && (x as f64) < b.x_max
            && (y as f64) >= b.y_min
            && (y as f64) < b.y_max
    };
    let inter = pixels(a).filter(|&p| in_b(p)).count();
    let union = pixels(a).count() + pixels(b).count() - inter;
    inter as f64 / union as f64
}

/// Greedy matching written as a plain scan: repeatedly pick the unvisited
/// prediction with the highest confidence (lowest index on ties), then the
/// free ground truth with the highest raster IOU (lowest index on ties).
/// Returns (tp, fp, fn, tp_salient, fn_salient).
pub fn greedy_counts(dets: &[Detection], gts: &[GroundTruth], conf_t: f64, thr: f64) -> [usize; 5] {
    let mut visited = vec![false; dets.len()];
    let mut taken = vec![false; gts.len()];
    let mut tp = 0;
    loop {
        let mut next: Option<usize> = None;
        for (i, d) in dets.iter().enumerate() {
            if visited[i] || d.confidence < conf_t {
                continue;
            }
            if next.is_none_or(|n| d.confidence > dets[n].confidence) {
                next = Some(i);
            }
        }
        let Some(p) = next else { break };
        visited[p] = true;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = raster_iou(&dets[p].bbox, &gt.bbox);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= thr {
                taken[g] = true;
                tp += 1;
            }
        }
    }
    let kept = dets.iter().filter(|d| d.confidence >= conf_t).count();
    let salient_tp = gts
        .iter()
        .zip(&taken)
        .filter(|(g, t)| g.salient && **t)
        .count();
    let salient = gts.iter().filter(|g| g.salient).count();
    [
        tp,
        kept - tp,
        gts.len() - tp,
        salient_tp,
        salient - salient_tp,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use salience_core::dataset::{stats, validate};

    #[test]
    fn raster_iou_hand_values() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(raster_iou(&a, &BBox::new(1.0, 1.0, 3.0, 3.0)), 1.0 / 7.0);
        assert_eq!(raster_iou(&a, &a), 1.0);
        assert_eq!(raster_iou(&a, &BBox::new(2.0, 0.0, 3.0, 2.0)), 0.0);
        assert_eq!(raster_iou(&a, &BBox::new(0.0, 0.0, 1.0, 2.0)), 0.5);
    }

    #[test]
    fn greedy_counts_hand_frame() {
        let gts = [
            GroundTruth::new(BBox::new(0.0, 0.0, 4.0, 4.0), true),
            GroundTruth::new(BBox::new(4.0, 0.0, 8.0, 4.0), false),
        ];
        // Both predictions prefer the first box; the stronger one wins it.
        let dets = [
            Detection::new(BBox::new(0.0, 0.0, 4.0, 3.0), 0.6),
            Detection::new(BBox::new(0.0, 0.0, 4.0, 4.0), 0.9),
        ];
        assert_eq!(greedy_counts(&dets, &gts, 0.0, 0.5), [1, 1, 1, 1, 0]);
        assert_eq!(greedy_counts(&dets, &gts, 0.95, 0.5), [0, 0, 2, 0, 1]);
    }

    #[test]
    fn fixtures_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert!(validate(&random_dataset(&mut rng, 10)).is_empty());
        }
        let fixture = full_size_fixture();
        assert!(validate(&fixture).is_empty());
        assert_eq!(stats(&fixture).total_annotations, 30_566);
    }
}
