//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salience_core::config::RunConfig;
use salience_core::dataset::{parse_dataset, serialize_dataset, split, stats, SplitRatios};
use salience_core::eval::{compare_salient_recall, pr_sweep, EvalConfig, FrameTruth};
use salience_core::experiment::{run_experiment, write_experiment};
use salience_core::geometry::{iou, Detection, FramePredictions, GroundTruth};
use salience_core::loss::{
    focal_grad_logit, focal_loss, salience_focal_loss, sigmoid, ClassLabel, ClassTarget, LossParams,
};
use salience_core::BBox;
use salience_verify::{full_size_fixture, greedy_counts, integer_box, random_dataset, raster_iou};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_sign_negative() != b.is_sign_negative() {
        return u64::MAX;
    }
    a.to_bits().abs_diff(b.to_bits())
}

fn params(rng: &mut ChaCha8Rng) -> LossParams {
    LossParams {
        alpha: rng.random_range(0.01..=1.0),
        gamma: rng.random_range(0.0..=5.0),
        omega: rng.random_range(1.0..=10.0),
        ..LossParams::default()
    }
}

/// Weighted loss identities and the cross-entropy special case.
fn loss_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_ce = 0.0f64;
    for i in 0..10_000 {
        // Log-uniform over (1e-9, 1] to cover confident and hopeless cases.
        let p_t = 10f64.powf(rng.random_range(-9.0..=0.0));
        let lp = params(&mut rng);
        let fl = focal_loss(p_t, &lp).map_err(|e| e.to_string())?;
        let salient = salience_focal_loss(p_t, true, &lp).map_err(|e| e.to_string())?;
        let plain = salience_focal_loss(p_t, false, &lp).map_err(|e| e.to_string())?;
        ensure(ulps(salient, lp.omega * fl) <= 1, || {
            format!(
                "sample {i}: salient {salient:e} vs omega*fl {:e}",
                lp.omega * fl
            )
        })?;
        ensure(plain == fl, || {
            format!("sample {i}: non-salient {plain:e} vs fl {fl:e}")
        })?;

        let ce_params = LossParams {
            gamma: 0.0,
            omega: 1.0,
            ..lp
        };
        let ce = -lp.alpha * p_t.ln();
        let got = salience_focal_loss(p_t, rng.random(), &ce_params).map_err(|e| e.to_string())?;
        let err = (got - ce).abs();
        worst_ce = worst_ce.max(err);
        ensure(err <= 1e-12, || {
            format!("sample {i}: gamma=0 loss {got:e} vs CE {ce:e}")
        })?;
    }
    within_time(start, Duration::from_secs(1))?;
    Ok(format!(
        "10000 samples, worst CE error {worst_ce:.1e}, {:.0?}",
        start.elapsed()
    ))
}

/// Salience focal loss as a function of the logit, built from the public
/// probability-space loss.
fn loss_of_logit(z: f64, target: ClassTarget, lp: &LossParams) -> f64 {
    let p = sigmoid(z);
    let p_t = match target.label {
        ClassLabel::Object => p,
        ClassLabel::Background => 1.0 - p,
    };
    salience_focal_loss(p_t, target.salient, lp).expect("valid sample")
}

/// Analytic logit gradient against central differences.
fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..1_000 {
        let lp = params(&mut rng);
        let z = rng.random_range(-8.0..=8.0);
        let label = if rng.random() {
            ClassLabel::Object
        } else {
            ClassLabel::Background
        };
        let target = ClassTarget::new(label, rng.random());
        let (_, g) = focal_grad_logit(z, target, &lp).map_err(|e| e.to_string())?;
        let fd =
            (loss_of_logit(z + h, target, &lp) - loss_of_logit(z - h, target, &lp)) / (2.0 * h);
        let abs = (g - fd).abs();
        let rel = abs / g.abs().max(fd.abs());
        ensure(rel <= 1e-6 || abs <= 1e-9, || {
            format!("sample {i}: z={z} {label:?} analytic {g:e} vs numeric {fd:e}")
        })?;
        if abs > 1e-9 {
            worst = worst.max(rel);
        }
    }
    within_time(start, Duration::from_secs(1))?;
    Ok(format!(
        "1000 samples, worst relative error {worst:.1e}, {:.0?}",
        start.elapsed()
    ))
}

fn continuous_box(rng: &mut ChaCha8Rng) -> BBox {
    let x0 = rng.random_range(-100.0..100.0);
    let y0 = rng.random_range(-100.0..100.0);
    BBox::new(
        x0,
        y0,
        x0 + rng.random_range(1e-3..50.0),
        y0 + rng.random_range(1e-3..50.0),
    )
}

/// Analytic IOU against pixel counting, plus basic properties.
fn iou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let boxes: Vec<BBox> = (0..100).map(|_| integer_box(&mut rng, 64)).collect();
    let mut overlapping = 0;
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i..] {
            let (got, want) = (iou(a, b), raster_iou(a, b));
            ensure(got == want, || {
                format!("{a} vs {b}: {got} != raster {want}")
            })?;
            overlapping += usize::from(want > 0.0);
        }
    }
    for _ in 0..10_000 {
        let (a, b) = (continuous_box(&mut rng), continuous_box(&mut rng));
        let v = iou(&a, &b);
        ensure(v == iou(&b, &a), || format!("asymmetric on {a} {b}"))?;
        ensure((0.0..=1.0).contains(&v), || format!("iou {v} out of range"))?;
        ensure(iou(&a, &a) == 1.0, || format!("iou({a}, {a}) != 1"))?;
        let far = b.translate(a.x_max - b.x_min + rng.random_range(0.0..10.0), 0.0);
        ensure(iou(&a, &far) == 0.0, || {
            format!("disjoint {a} {far} overlap")
        })?;
    }
    Ok(format!(
        "5050 raster pairs ({overlapping} overlapping), 10000 continuous pairs"
    ))
}

/// Sweep counts against the scan oracle, monotone recall, conservation.
fn matching_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = EvalConfig::default();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for f in 0..500 {
        let id = format!("f{f}");
        let dets: Vec<Detection> = (0..rng.random_range(0..=4))
            .map(|_| {
                Detection::new(
                    integer_box(&mut rng, 8),
                    rng.random_range(0..=10) as f64 / 10.0,
                )
            })
            .collect();
        let gts: Vec<GroundTruth> = (0..rng.random_range(0..=4))
            .map(|_| GroundTruth::new(integer_box(&mut rng, 8), rng.random()))
            .collect();
        preds.push(FramePredictions {
            frame_id: id.clone(),
            detections: dets,
        });
        truths.push(FrameTruth {
            frame_id: id,
            objects: gts,
        });
    }
    let points = pr_sweep(&preds, &truths, &cfg).map_err(|e| e.to_string())?;
    ensure(points.len() == 11, || {
        format!("{} sweep points", points.len())
    })?;
    let n_gt: usize = truths.iter().map(|t| t.objects.len()).sum();
    let n_sal: usize = truths
        .iter()
        .flat_map(|t| &t.objects)
        .filter(|g| g.salient)
        .count();
    for p in &points {
        let t = p.confidence_threshold;
        let mut want = [0usize; 5];
        for (d, g) in preds.iter().zip(&truths) {
            let c = greedy_counts(&d.detections, &g.objects, t, cfg.iou_threshold);
            want.iter_mut().zip(c).for_each(|(w, c)| *w += c);
        }
        let got = [p.tp_all, p.fp_all, p.fn_all, p.tp_salient, p.fn_salient];
        ensure(got == want, || {
            format!("threshold {t}: counts {got:?} vs oracle {want:?}")
        })?;
        let kept = preds
            .iter()
            .flat_map(|f| &f.detections)
            .filter(|d| d.confidence >= t)
            .count();
        ensure(p.tp_all + p.fp_all == kept, || {
            format!("threshold {t}: tp+fp != kept")
        })?;
        ensure(p.tp_all + p.fn_all == n_gt, || {
            format!("threshold {t}: tp+fn != gts")
        })?;
        ensure(p.tp_salient + p.fn_salient == n_sal, || {
            format!("threshold {t}: salient split")
        })?;
        ensure(p.tp_salient <= p.tp_all, || {
            format!("threshold {t}: salient tp exceeds tp")
        })?;
    }
    for w in points.windows(2) {
        ensure(
            w[1].recall_all <= w[0].recall_all && w[1].recall_salient <= w[0].recall_salient,
            || {
                format!(
                    "recall rises between {} and {}",
                    w[0].confidence_threshold, w[1].confidence_threshold
                )
            },
        )?;
    }
    Ok(format!("500 frames, {n_gt} ground truths, 11 thresholds"))
}

/// Seed passes (a) when, at every common precision level >= 0.5, the
/// weighted model's salient recall is strictly higher, except levels where
/// both already find every salient object; at least one level must not be
/// such a tie.
fn seed_passes_a(cmp: &[salience_core::eval::LevelComparison]) -> bool {
    let ceiling =
        |c: &&salience_core::eval::LevelComparison| c.recall_a == 1.0 && c.recall_b == 1.0;
    let informative: Vec<_> = cmp.iter().filter(|c| !ceiling(c)).collect();
    !informative.is_empty() && informative.iter().all(|c| c.recall_a > c.recall_b)
}

/// Directional comparison of the weighted and unweighted models.
fn directional() -> Outcome {
    let start = Instant::now();
    let mut wins_a = 0;
    let mut wins_b = 0;
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let mut cfg = RunConfig::default();
        cfg.set_seed(seed);
        let out = run_experiment(&cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let cmp = compare_salient_recall(&out.salience.points, &out.baseline.points, 0.5);
        let a = seed_passes_a(&cmp);
        let (ds, db) = (
            out.salience.mean_recall_difference(),
            out.baseline.mean_recall_difference(),
        );
        let b = ds > db;
        wins_a += usize::from(a);
        wins_b += usize::from(b);
        let losing: Vec<String> = cmp
            .iter()
            .filter(|c| c.recall_a <= c.recall_b)
            .map(|c| format!("P{:.3}: {:.3}<={:.3}", c.level, c.recall_a, c.recall_b))
            .collect();
        lines.push(format!(
            "    seed {seed:2}: (a) {} over {} levels, not higher at {losing:?}; (b) {} {ds:+.4} vs {db:+.4}",
            if a { "pass" } else { "fail" },
            cmp.len(),
            if b { "pass" } else { "fail" },
        ));
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "(a) {wins_a}/10 seeds (need 8), (b) {wins_b}/10 seeds (need 9), {elapsed:.1?}\n{}",
        lines.join("\n")
    );
    if wins_a >= 8 && wins_b >= 9 && elapsed < Duration::from_secs(300) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Dataset round trips, the reference-sized fixture, and the 10-frame split.
fn dataset_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let frames = rng.random_range(0..20);
        let d = random_dataset(&mut rng, frames);
        let back =
            parse_dataset(&serialize_dataset(&d)).map_err(|e| format!("dataset {i}: {e}"))?;
        ensure(back == d, || format!("dataset {i} changed in round trip"))?;
    }

    let fixture = full_size_fixture();
    let s = stats(&parse_dataset(&serialize_dataset(&fixture)).map_err(|e| e.to_string())?);
    let counts = (s.salient_count, s.non_salient_count, s.total_annotations);
    ensure(counts == (9_051, 21_515, 30_566), || {
        format!("fixture counts {counts:?}")
    })?;

    let ten = random_dataset(&mut rng, 10);
    for seed in 0..20 {
        let (a, b, c) = split(&ten, SplitRatios::default(), seed).map_err(|e| e.to_string())?;
        let sizes = (a.len(), b.len(), c.len());
        ensure(sizes == (8, 1, 1), || {
            format!("seed {seed}: split sizes {sizes:?}")
        })?;
        let again = split(&ten, SplitRatios::default(), seed).map_err(|e| e.to_string())?;
        ensure(again == (a.clone(), b.clone(), c.clone()), || {
            format!("seed {seed}: split not deterministic")
        })?;
        let mut ids: Vec<&str> = [&a, &b, &c]
            .iter()
            .flat_map(|d| d.frames.iter().map(|f| f.frame_id.as_str()))
            .collect();
        ids.sort_unstable();
        let mut all: Vec<&str> = ten.frames.iter().map(|f| f.frame_id.as_str()).collect();
        all.sort_unstable();
        ensure(ids == all, || {
            format!("seed {seed}: split is not a partition")
        })?;
    }
    Ok("100 round trips; 9051 / 21515 / 30566; 8/1/1 over 20 seeds".into())
}

/// Two experiment runs write identical files.
fn determinism() -> Outcome {
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let mut cfg = RunConfig::default();
    cfg.set_seed(7);
    for d in &dirs {
        let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
        write_experiment(&out, d.path()).map_err(|e| e.to_string())?;
    }
    let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
        .map_err(|e| e.to_string())?
        .map(|e| {
            e.expect("dir entry")
                .file_name()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    names.sort();
    let csv_svg = names
        .iter()
        .filter(|n| n.ends_with(".csv") || n.ends_with(".svg"))
        .count();
    ensure(csv_svg == 5, || {
        format!("expected 2 CSVs and 3 SVGs, found {names:?}")
    })?;
    for n in &names {
        let read = |i: usize| std::fs::read(dirs[i].path().join(n)).map_err(|e| e.to_string());
        ensure(read(0)? == read(1)?, || format!("{n} differs between runs"))?;
    }
    Ok(format!("{} files identical", names.len()))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("loss identities", loss_identities),
        ("gradient check", gradient_check),
        ("IOU oracle", iou_oracle),
        ("matching and evaluation oracle", matching_oracle),
        ("directional reproduction", directional),
        ("dataset round trip and stats", dataset_checks),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
