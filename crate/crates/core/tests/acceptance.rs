//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod support {
    pub mod fixture;
    pub mod stats_refs;
}

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use image::{GrayImage, Luma, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sketchlab_core::features::{aggregate_labeling_features, compute_stroke_features};
use sketchlab_core::pipeline::{manifest_hash, ExperimentConfig, MetricsConfig, Run, Stage};
use sketchlab_core::prompt::{
    build_prompt, detected_components, PromptStrategy, Role, RUBRIC_SENTENCES,
};
use sketchlab_core::render::LabeledImage;
use sketchlab_core::stats::{
    chi_square_sf, distance_correlation, dunn_test, kruskal_wallis, normal_cdf, shapiro_wilk,
    Adjustment,
};
use sketchlab_core::synth::{
    normalize_points, optimal_n, random_intervals, recenter, remove_random, stochastic_resample,
    synthesize_labeling, uniform_resample,
};
use sketchlab_core::{path_length, BBox, Contour, Labeling, Point2D, ResampleConfig, Stroke};
use support::fixture::{add_image, write_dataset, write_single_object_dataset};
use support::stats_refs::*;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)*));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

fn within(limit: Duration, start: Instant, what: &str) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "{what} took {took:?}, limit {limit:?}");
    Ok(())
}

/// Star-shaped closed polygon, last point equal to the first.
fn random_loop(rng: &mut ChaCha8Rng) -> Vec<Point2D> {
    let k = rng.random_range(5..40);
    let (cx, cy) = (
        rng.random_range(-200.0..200.0),
        rng.random_range(-200.0..200.0),
    );
    let base = rng.random_range(5.0..120.0);
    let mut pts: Vec<Point2D> = (0..k)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / k as f64;
            let r = base * rng.random_range(0.4..1.0);
            Point2D::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    pts.push(pts[0]);
    pts
}

fn gpsr_invariants() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let path = random_loop(&mut rng);
        let seed: u64 = rng.random();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let total = path_length(&path).unwrap();
        let n = optimal_n(&path).unwrap();
        let iv = random_intervals(n - 1, total, 0.25, &mut r).unwrap();
        let sum: f64 = iv.iter().sum();
        ensure!(
            close(sum, total, 1e-9),
            "case {case}: intervals sum {sum} vs {total}"
        );
        ensure!(
            iv.iter().all(|&v| v > 0.0),
            "case {case}: non-positive interval"
        );

        let resampled = stochastic_resample(&path, n, 0.25, &mut r).unwrap();
        let src = BBox::of(&path).unwrap();
        let centered =
            recenter(&normalize_points(&resampled, &src).unwrap(), src.center()).unwrap();
        let c = BBox::of(&centered).unwrap().center();
        let off = c.distance(src.center());
        ensure!(off <= 1e-6, "case {case}: recentred bbox off by {off}");

        let remove = rng.random_range(0..n - 3);
        let kept = remove_random(&centered, remove, &mut r).unwrap();
        ensure!(
            kept.len() == n - remove,
            "case {case}: {} points, expected {}",
            kept.len(),
            n - remove
        );

        let contour = Contour {
            points: path[..path.len() - 1].to_vec(),
            closed: true,
        };
        let cfg = ResampleConfig {
            remove_cnt: remove.min(n - 7),
            seed,
            ..Default::default()
        };
        let lab = synthesize_labeling("a", 0, &[contour], &cfg).unwrap();
        ensure!(
            lab.point_count() == n - cfg.remove_cnt,
            "case {case}: labeling has {} points, expected {}",
            lab.point_count(),
            n - cfg.remove_cnt
        );
    }
    within(Duration::from_secs(5), start, "200 contours")
}

fn zero_variance_is_uniform() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..50 {
        let path = random_loop(&mut rng);
        let n = rng.random_range(2..300);
        let a = stochastic_resample(&path, n, 0.0, &mut rng).unwrap();
        let b = uniform_resample(&path, n).unwrap();
        for (p, q) in a.iter().zip(&b) {
            ensure!(p.distance(*q) <= 1e-9, "case {case}: {p:?} vs {q:?}");
        }
    }
    Ok(())
}

/// Per-stroke features from angle arithmetic rather than ratios.
fn stroke_oracle(p: &[Point2D]) -> [f64; 16] {
    let m = p.len();
    let heading = |a: Point2D, b: Point2D| (b.y - a.y).atan2(b.x - a.x);
    let to = if m > 2 { p[2] } else { p[1] };
    let (r1, r2) = if to == p[0] {
        (0.0, 0.0)
    } else {
        let a = heading(p[0], to);
        (a.cos(), a.sin())
    };
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (p[0].x, p[0].x, p[0].y, p[0].y);
    for q in p {
        lo_x = lo_x.min(q.x);
        hi_x = hi_x.max(q.x);
        lo_y = lo_y.min(q.y);
        hi_y = hi_y.max(q.y);
    }
    let (w, h) = (hi_x - lo_x, hi_y - lo_y);
    let r3 = w.hypot(h);
    let r4 = if w > 0.0 {
        (h / w).atan()
    } else if h > 0.0 {
        PI / 2.0
    } else {
        0.0
    };
    let last = p[m - 1];
    let r5 = (last.x - p[0].x).hypot(last.y - p[0].y);
    let (r6, r7) = if r5 == 0.0 {
        (0.0, 0.0)
    } else {
        let a = heading(p[0], last);
        (a.cos(), a.sin())
    };
    let r8: f64 = p
        .windows(2)
        .map(|s| (s[1].x - s[0].x).hypot(s[1].y - s[0].y))
        .sum();
    let (mut r9, mut r10, mut r11) = (0.0, 0.0, 0.0);
    for i in 1..m - 1 {
        // positive turning is counted clockwise in x-right, y-up axes
        let mut t = heading(p[i - 1], p[i]) - heading(p[i], p[i + 1]);
        while t > PI {
            t -= 2.0 * PI;
        }
        while t <= -PI {
            t += 2.0 * PI;
        }
        r9 += t;
        r10 += t.abs();
        r11 += t * t;
    }
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    [
        r1,
        r2,
        r3,
        r4,
        r5,
        r6,
        r7,
        r8,
        r9,
        r10,
        r11,
        div(r9, r8),
        div(r8, r5),
        div(r8, r3),
        div(r5, r3),
        div(r9, r10),
    ]
}

fn labeling_oracle(lab: &Labeling) -> [f64; 17] {
    let mut out = [0.0; 17];
    for s in &lab.strokes {
        for (o, v) in out.iter_mut().zip(stroke_oracle(&s.points)) {
            *o += v / lab.strokes.len() as f64;
        }
    }
    let gaps: Vec<f64> = lab
        .strokes
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].points[w[0].points.len() - 1], w[1].points[0]);
            (b.x - a.x).hypot(b.y - a.y)
        })
        .collect();
    out[16] = if gaps.is_empty() {
        0.0
    } else {
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    out
}

fn random_labeling(rng: &mut ChaCha8Rng) -> Labeling {
    let strokes = (0..rng.random_range(1..5))
        .map(|_| Stroke {
            points: (0..rng.random_range(2..40))
                .map(|_| Point2D::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
                .collect(),
            source_contour: 0,
        })
        .collect();
    Labeling {
        image_id: "x".into(),
        object_id: 0,
        strokes,
        config: ResampleConfig::default(),
    }
}

fn map_points(lab: &Labeling, f: impl Fn(Point2D) -> Point2D) -> Labeling {
    let mut out = lab.clone();
    for s in &mut out.strokes {
        s.points.iter_mut().for_each(|p| *p = f(*p));
    }
    out
}

fn features_match_oracle() -> Check {
    // r3, r5, r8 and the gap carry length; l14 carries inverse length
    const LENGTH: [usize; 4] = [2, 4, 7, 16];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let lab = random_labeling(&mut rng);
        let got = aggregate_labeling_features(&lab).unwrap().values();
        let want = labeling_oracle(&lab);
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            ensure!(
                (g - w).abs() <= 1e-10,
                "case {case} feature {i}: {g} vs {w}"
            );
        }

        let (dx, dy) = (
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
        );
        let moved =
            aggregate_labeling_features(&map_points(&lab, |p| Point2D::new(p.x + dx, p.y + dy)))
                .unwrap()
                .values();
        for (i, (a, b)) in got.iter().zip(moved).enumerate() {
            ensure!(
                close(*a, b, 1e-9),
                "case {case} translation, feature {i}: {a} vs {b}"
            );
        }

        let s = rng.random_range(0.1..10.0);
        let scaled =
            aggregate_labeling_features(&map_points(&lab, |p| Point2D::new(p.x * s, p.y * s)))
                .unwrap()
                .values();
        for (i, (a, b)) in got.iter().zip(scaled).enumerate() {
            let expect = if LENGTH.contains(&i) {
                a * s
            } else if i == 11 {
                a / s
            } else {
                *a
            };
            ensure!(
                close(expect, b, 1e-9),
                "case {case} scale {s}, feature {i}: {expect} vs {b}"
            );
        }
    }
    Ok(())
}

/// Dunn z from ranks counted pair by pair.
fn dunn_z_oracle(groups: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let rank = |x: f64| {
        let below = all.iter().filter(|&&v| v < x).count() as f64;
        let equal = all.iter().filter(|&&v| v == x).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let mean_rank = |g: &[f64]| g.iter().map(|&x| rank(x)).sum::<f64>() / g.len() as f64;
    let mut ties = 0.0;
    let mut seen: Vec<f64> = Vec::new();
    for &x in &all {
        if !seen.contains(&x) {
            seen.push(x);
            let t = all.iter().filter(|&&v| v == x).count() as f64;
            ties += t * t * t - t;
        }
    }
    let var = n * (n + 1.0) / 12.0 - ties / (12.0 * (n - 1.0));
    let (a, b) = (&groups[i], &groups[j]);
    let se = (var * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    (mean_rank(a) - mean_rank(b)) / se
}

fn random_groups(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rng.random_range(2..6))
        .map(|_| {
            (0..rng.random_range(2..15))
                .map(|_| rng.random_range(0..25) as f64)
                .collect()
        })
        .collect()
}

fn stats_match_references() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let n = rng.random_range(2..=64);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v * v * rng.random_range(0.0..1.0) + rng.random_range(-1.0..1.0))
            .collect();
        let got = distance_correlation(&x, &y).unwrap();
        let want = dcor_oracle(&x, &y);
        ensure!(
            (got - want).abs() <= 1e-10,
            "dcor case {case}: {got} vs {want}"
        );
    }

    let h = kruskal_wallis(&[
        vec![1.0, 2.0, 3.0],
        vec![4.0, 5.0, 6.0],
        vec![7.0, 8.0, 9.0],
    ])
    .unwrap();
    ensure!((h.statistic - 7.2).abs() <= 1e-12, "H = {}", h.statistic);
    let h = kruskal_wallis(&dunn_fixture()).unwrap();
    ensure!(
        close(h.statistic, DUNN_KW.0, 1e-9),
        "fixture H = {}",
        h.statistic
    );

    for case in 0..50 {
        let g = random_groups(&mut rng);
        let bent: Vec<Vec<f64>> = g
            .iter()
            .map(|v| v.iter().map(|x| (x / 5.0).exp() + 3.0 * x).collect())
            .collect();
        let (a, b) = (kruskal_wallis(&g).unwrap(), kruskal_wallis(&bent).unwrap());
        ensure!(
            (a.statistic - b.statistic).abs() <= 1e-12,
            "KW case {case}: transform moved H"
        );
        let (da, db) = (
            dunn_test(&g, Adjustment::Holm).unwrap(),
            dunn_test(&bent, Adjustment::Holm).unwrap(),
        );
        for i in 0..g.len() {
            for j in 0..g.len() {
                if i == j {
                    continue;
                }
                let (za, zb) = (da.get(i, j).unwrap().z, db.get(i, j).unwrap().z);
                ensure!(
                    (za - zb).abs() <= 1e-12,
                    "Dunn case {case}: transform moved z"
                );
                let o = dunn_z_oracle(&g, i, j);
                ensure!(
                    (za - o).abs() <= 1e-6,
                    "Dunn case {case} ({i},{j}): {za} vs oracle {o}"
                );
            }
        }
    }
    let g = dunn_fixture();
    let d = dunn_test(&g, Adjustment::Bonferroni).unwrap();
    for (i, j, z, _) in DUNN_TABLE {
        let got = d.get(i, j).unwrap().z;
        let o = dunn_z_oracle(&g, i, j);
        ensure!(
            (got - z).abs() <= 1e-6 && (o - z).abs() <= 1e-6,
            "Dunn ({i},{j}): {got}, oracle {o}, reference {z}"
        );
    }

    for (x, w, p) in SHAPIRO_TABLE {
        let r = shapiro_wilk(x).unwrap();
        ensure!(
            (r.statistic - w).abs() <= 1e-4 && (r.p_value - p).abs() <= 1e-4,
            "Shapiro n = {}: ({}, {}) vs ({w}, {p})",
            x.len(),
            r.statistic,
            r.p_value
        );
    }
    for (z, p) in NORMAL_CDF_TABLE {
        let got = normal_cdf(z);
        ensure!((got - p).abs() <= 1e-9, "Phi({z}) = {got}, expected {p}");
    }
    for (x, df, p) in CHI2_SF_TABLE {
        let got = chi_square_sf(x, df).unwrap();
        ensure!(
            (got - p).abs() <= 1e-9,
            "chi2 sf({x}, {df}) = {got}, expected {p}"
        );
    }
    Ok(())
}

fn prompt_components() -> Check {
    let img = |id: &str| LabeledImage {
        pixels: RgbImage::new(8, 8),
        image_id: id.into(),
        object_id: 0,
        stroke_width: 3,
        clipped_points: 0,
    };
    let (target, example) = (img("t"), img("e"));
    for s in PromptStrategy::ALL {
        let bundle = build_prompt(s, &target, s.is_few_shot().then_some(&example))
            .map_err(|e| e.to_string())?;
        let found = detected_components(&bundle);
        ensure!(
            found == s.components(),
            "{s}: components {found:?}, expected {:?}",
            s.components()
        );
        let system = bundle.text_of(Role::System).unwrap_or_default();
        let rubric = RUBRIC_SENTENCES
            .iter()
            .filter(|r| system.contains(*r))
            .count();
        let expect = if s.has_rubric() {
            RUBRIC_SENTENCES.len()
        } else {
            0
        };
        ensure!(rubric == expect, "{s}: {rubric} rubric sentences");
        let images = if s.is_few_shot() { 2 } else { 1 };
        ensure!(
            bundle.image_count() == images,
            "{s}: {} images",
            bundle.image_count()
        );
    }
    Ok(())
}

/// Per-stage output digests of the three-image fixture at seed 7.
const GOLDEN_DIGESTS: [(&str, &str); 5] = [
    (
        "synth",
        "a42db1a53dde08e7c15a1c04555221cbda3d0904aa64e86898b57679072b1c32",
    ),
    (
        "features",
        "848d078b1e61f8ff4d11f32d813d1a050f9db72ff00a6c187aa4e623e6e64128",
    ),
    (
        "feedback",
        "974e3cd4124f0fd21f19f8a25d7e2061d77c061930a5f362335908cc0bbcdd63",
    ),
    (
        "evaluate",
        "308cb525f85321ceade3885b226efbffa7e7bd00c3cdcb7684966a89fdfcd83c",
    ),
    (
        "analyze",
        "04a9a09b8c9b9a0110efa5be31b28c12125c77d5bf2805e43128bedf28931785",
    ),
];

fn end_to_end_reproducible() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_dataset(tmp.path(), 3);
    let mut hashes = Vec::new();
    let mut digests = Vec::new();
    for runs in ["runs_a", "runs_b"] {
        let cfg = ExperimentConfig {
            runs_dir: tmp.path().join(runs),
            ..cfg.clone()
        };
        let mut run = Run::open(cfg, Some("golden")).map_err(|e| e.to_string())?;
        run.run_all().map_err(|e| e.to_string())?;
        hashes.push(manifest_hash(&run.dir).map_err(|e| e.to_string())?);
        digests = Stage::ALL
            .iter()
            .map(|s| (s.as_str(), run.manifest().stages[s.as_str()].digest.clone()))
            .collect::<Vec<_>>();
    }
    ensure!(hashes[0] == hashes[1], "manifest hashes differ: {hashes:?}");
    let wrong: Vec<String> = digests
        .iter()
        .zip(GOLDEN_DIGESTS)
        .filter(|((_, got), (_, want))| got != want)
        .map(|((stage, got), _)| format!("{stage} digest {got}"))
        .collect();
    ensure!(
        wrong.is_empty(),
        "differs from golden: {}",
        wrong.join("; ")
    );
    within(Duration::from_secs(30), start, "two fixture runs")
}

fn scale_run() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_single_object_dataset(tmp.path(), 110);
    let mut run = Run::open(cfg, Some("scale")).map_err(|e| e.to_string())?;
    run.run_all().map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(run.dir.join("metrics.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = text.lines().skip(1).collect();
    ensure!(rows.len() == 440, "{} metric records", rows.len());
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        for v in &cells[3..6] {
            let v: f64 = v.parse().map_err(|_| format!("bad metric in {row}"))?;
            ensure!((0.0..=1.0).contains(&v), "metric out of range in {row}");
        }
    }
    within(Duration::from_secs(60), start, "110-image run")
}

fn degenerate_inputs() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_dataset(tmp.path(), 2);
    add_image(&cfg.dataset_dir, "empty", &GrayImage::new(32, 32));
    let mut dot = GrayImage::new(32, 32);
    dot.put_pixel(10, 10, Luma([255]));
    add_image(&cfg.dataset_dir, "dot", &dot);

    let mut rows = vec![
        "image_id,object_id,strategy,context_precision,faithfulness,answer_relevancy,source"
            .to_string(),
    ];
    for i in 0..2 {
        for o in 0..support::fixture::objects_in(i) {
            for s in PromptStrategy::ALL {
                rows.push(format!("img{i:03},{o},{s},0.5,0.5,0.5,ingested"));
            }
        }
    }
    let path = tmp.path().join("flat.csv");
    std::fs::write(&path, rows.join("\n")).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        metrics: MetricsConfig::Ingest { path },
        ..cfg
    };
    let mut run = Run::open(cfg, Some("degenerate")).map_err(|e| e.to_string())?;
    run.run_all().map_err(|e| e.to_string())?;
    let m = run.manifest();
    ensure!(
        m.is_complete(Stage::Analyze.as_str()),
        "analysis did not complete"
    );
    ensure!(
        m.stages["synth"].summary["images_without_objects"] == serde_json::json!(["dot", "empty"]),
        "synth summary {}",
        m.stages["synth"].summary
    );
    let kw: serde_json::Value = serde_json::from_slice(
        &std::fs::read(run.dir.join("analysis/kruskal_dunn.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let per_metric = kw.as_array().ok_or("kruskal_dunn.json is not a list")?;
    ensure!(
        per_metric.len() == 3,
        "{} metric comparisons",
        per_metric.len()
    );
    for c in per_metric {
        let r = &c["kruskal_wallis"]["result"];
        ensure!(
            r["statistic"] == 0.0 && r["p_value"] == 1.0,
            "flat metrics gave {c}"
        );
    }

    let square = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (0.0, 0.0)]
        .map(|(x, y)| Point2D::new(x, y));
    let f = compute_stroke_features(&square).map_err(|e| e.to_string())?;
    ensure!(
        f.r5 == 0.0 && f.l15 == 0.0 && f.l17 == 0.0,
        "closed loop features {f:?}"
    );
    ensure!(
        f.as_array().iter().all(|v| v.is_finite()),
        "closed loop gave non-finite features"
    );
    Ok(())
}

fn main() {
    let checks: [Criterion; 8] = [
        (
            "resampling invariants on 200 random contours",
            gpsr_invariants,
        ),
        (
            "zero variance reduces to uniform resampling",
            zero_variance_is_uniform,
        ),
        (
            "stroke features against an angle-based oracle",
            features_match_oracle,
        ),
        (
            "statistics against independent references",
            stats_match_references,
        ),
        ("prompt component matrix", prompt_components),
        (
            "end-to-end mock run is reproducible",
            end_to_end_reproducible,
        ),
        ("110-image mock run", scale_run),
        ("degenerate inputs complete", degenerate_inputs),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(())) => println!("PASS {}. {name}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {}. {name}: panicked", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
