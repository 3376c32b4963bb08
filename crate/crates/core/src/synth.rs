//! Gesture path stochastic resampling: turn object contours into synthetic
//! free-hand labeling strokes.
//!
//! The composition is flatten → choose n → resample at random arc-length
//! intervals → rescale to the source diagonal → recentre on the source bbox
//! → drop random points → split into strokes → sort strokes. Every random
//! draw comes from one ChaCha stream seeded by [`ResampleConfig::seed`].

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::contour::Contour;
use crate::error::{Error, Result};
use crate::geometry::{cumulative_lengths, path_length, BBox, Point2D};

/// Default interval variance.
pub const DEFAULT_VARIANCE: f64 = 0.25;
/// Default number of strokes cut from each contour.
pub const DEFAULT_STROKES_PER_CONTOUR: usize = 3;

const INTERVAL_FLOOR: f64 = 1e-6;
const OPTIMAL_N_DIVISOR: f64 = 32.0;
const OPTIMAL_N_MIN: usize = 16;
const OPTIMAL_N_MAX: usize = 512;

/// Resampling constants. `resample_cnt` is only read when `use_optimal_n`
/// is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    pub use_optimal_n: bool,
    pub resample_cnt: Option<usize>,
    pub remove_cnt: usize,
    pub variance: f64,
    pub strokes_per_contour: usize,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            use_optimal_n: true,
            resample_cnt: None,
            remove_cnt: 0,
            variance: DEFAULT_VARIANCE,
            strokes_per_contour: DEFAULT_STROKES_PER_CONTOUR,
            seed: 0,
        }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::Config(format!(
                "variance must be a finite non-negative number, got {}",
                self.variance
            )));
        }
        if !self.use_optimal_n {
            match self.resample_cnt {
                Some(n) if n >= 2 => {}
                Some(n) => {
                    return Err(Error::Config(format!(
                        "resample_cnt must be at least 2, got {n}"
                    )))
                }
                None => {
                    return Err(Error::Config(
                        "resample_cnt is required when use_optimal_n is false".into(),
                    ))
                }
            }
        }
        if self.strokes_per_contour == 0 {
            return Err(Error::Config("strokes_per_contour must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<Point2D>,
    pub source_contour: usize,
}

impl Stroke {
    pub fn bbox(&self) -> BBox {
        BBox::of(&self.points).expect("stroke has points")
    }
}

/// Synthetic annotation for one object in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub image_id: String,
    pub object_id: u32,
    pub strokes: Vec<Stroke>,
    pub config: ResampleConfig,
}

#[derive(Serialize, Deserialize)]
struct LabelingWire {
    image_id: String,
    object_id: u32,
    config: ResampleConfig,
    strokes: Vec<Vec<Point2D>>,
    stroke_sources: Vec<usize>,
}

impl Serialize for Labeling {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LabelingWire {
            image_id: self.image_id.clone(),
            object_id: self.object_id,
            config: self.config.clone(),
            strokes: self.strokes.iter().map(|st| st.points.clone()).collect(),
            stroke_sources: self.strokes.iter().map(|st| st.source_contour).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Labeling {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = LabelingWire::deserialize(d)?;
        if w.stroke_sources.len() != w.strokes.len() && !w.stroke_sources.is_empty() {
            return Err(serde::de::Error::custom(
                "stroke_sources length does not match strokes",
            ));
        }
        let strokes = w
            .strokes
            .into_iter()
            .enumerate()
            .map(|(i, points)| Stroke {
                points,
                source_contour: w.stroke_sources.get(i).copied().unwrap_or(0),
            })
            .collect();
        Ok(Labeling {
            image_id: w.image_id,
            object_id: w.object_id,
            strokes,
            config: w.config,
        })
    }
}

impl Labeling {
    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(|s| s.points.len()).sum()
    }
}

/// Draw `n` positive intervals whose sum is `total_length`.
///
/// Raw draws are `max(1e-6, 1 + g)` with `g ~ Normal(0, sqrt(variance))`.
pub fn random_intervals<R: Rng + ?Sized>(
    n: usize,
    total_length: f64,
    variance: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("interval count must be >= 1".into()));
    }
    if !(total_length > 0.0 && total_length.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "total length must be positive, got {total_length}"
        )));
    }
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "variance must be non-negative, got {variance}"
        )));
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::InvalidInput(format!("bad variance: {e}")))?;
    let mut raw: Vec<f64> = (0..n)
        .map(|_| (1.0 + normal.sample(rng)).max(INTERVAL_FLOOR))
        .collect();
    let scale = total_length / raw.iter().sum::<f64>();
    raw.iter_mut().for_each(|v| *v *= scale);
    Ok(raw)
}

/// Point at arc length `s` along a polyline with precomputed cumulative lengths.
fn point_at(points: &[Point2D], cum: &[f64], s: f64) -> Point2D {
    let total = *cum.last().unwrap();
    if s <= 0.0 {
        return points[0];
    }
    if s >= total {
        return *points.last().unwrap();
    }
    // first vertex with cumulative length > s
    let hi = cum.partition_point(|&c| c <= s);
    let lo = hi - 1;
    let seg = cum[hi] - cum[lo];
    if seg <= 0.0 {
        return points[lo];
    }
    points[lo].lerp(points[hi], (s - cum[lo]) / seg)
}

/// Resample a polyline at cumulative arc lengths given by `intervals`
/// (one fewer than the output count).
fn resample_at_intervals(points: &[Point2D], intervals: &[f64]) -> Vec<Point2D> {
    let cum = cumulative_lengths(points);
    let mut out = Vec::with_capacity(intervals.len() + 1);
    out.push(points[0]);
    let mut s = 0.0;
    for (i, d) in intervals.iter().enumerate() {
        s += d;
        if i + 1 == intervals.len() {
            out.push(*points.last().unwrap());
        } else {
            out.push(point_at(points, &cum, s));
        }
    }
    out
}

/// Place `n` points along the polyline at random arc-length spacing. The
/// first and last output points coincide with the path endpoints.
pub fn stochastic_resample<R: Rng + ?Sized>(
    points: &[Point2D],
    n: usize,
    variance: f64,
    rng: &mut R,
) -> Result<Vec<Point2D>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "resample count must be >= 2, got {n}"
        )));
    }
    let total = path_length(points)?;
    if total <= 0.0 {
        return Err(Error::Degenerate("path has zero length".into()));
    }
    let intervals = random_intervals(n - 1, total, variance, rng)?;
    Ok(resample_at_intervals(points, &intervals))
}

/// Uniform arc-length resampling; the zero-variance limit of
/// [`stochastic_resample`].
pub fn uniform_resample(points: &[Point2D], n: usize) -> Result<Vec<Point2D>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "resample count must be >= 2, got {n}"
        )));
    }
    let total = path_length(points)?;
    if total <= 0.0 {
        return Err(Error::Degenerate("path has zero length".into()));
    }
    let cum = cumulative_lengths(points);
    Ok((0..n)
        .map(|i| point_at(points, &cum, total * i as f64 / (n - 1) as f64))
        .collect())
}

fn centroid(points: &[Point2D]) -> Point2D {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2D::new(sx / n, sy / n)
}

/// Scale uniformly about the centroid so the bounding-box diagonal matches
/// `original_bbox`.
pub fn normalize_points(resampled: &[Point2D], original_bbox: &BBox) -> Result<Vec<Point2D>> {
    let target = original_bbox.diagonal();
    if !(target > 0.0) {
        return Err(Error::Degenerate(
            "original bounding box has zero diagonal".into(),
        ));
    }
    let current = BBox::of(resampled)
        .ok_or_else(|| Error::InvalidInput("no points to normalize".into()))?
        .diagonal();
    if !(current > 0.0) {
        return Err(Error::Degenerate(
            "resampled points have zero diagonal".into(),
        ));
    }
    let k = target / current;
    let c = centroid(resampled);
    Ok(resampled
        .iter()
        .map(|p| Point2D::new(c.x + (p.x - c.x) * k, c.y + (p.y - c.y) * k))
        .collect())
}

/// Translate so the bounding-box centre lands on `original_center`.
pub fn recenter(points: &[Point2D], original_center: Point2D) -> Result<Vec<Point2D>> {
    let bb = BBox::of(points).ok_or_else(|| Error::InvalidInput("no points to recenter".into()))?;
    let c = bb.center();
    let (dx, dy) = (original_center.x - c.x, original_center.y - c.y);
    Ok(points
        .iter()
        .map(|p| Point2D::new(p.x + dx, p.y + dy))
        .collect())
}

/// `clamp(round(length / (diagonal / 32)), 16, 512)`.
pub fn optimal_n(points: &[Point2D]) -> Result<usize> {
    let length = path_length(points)?;
    let diag = BBox::of(points).unwrap().diagonal();
    if !(length > 0.0) || !(diag > 0.0) {
        return Err(Error::Degenerate(
            "cannot size a path with zero length or extent".into(),
        ));
    }
    let n = (length / (diag / OPTIMAL_N_DIVISOR)).round();
    Ok((n as usize).clamp(OPTIMAL_N_MIN, OPTIMAL_N_MAX))
}

/// Indices kept after removing `remove_cnt` random interior points.
fn kept_indices<R: Rng + ?Sized>(len: usize, remove_cnt: usize, rng: &mut R) -> Result<Vec<usize>> {
    if remove_cnt == 0 {
        return Ok((0..len).collect());
    }
    if len < 2 || remove_cnt >= len - 2 {
        return Err(Error::InvalidInput(format!(
            "cannot remove {remove_cnt} of {len} points (first and last are kept, at least one interior point must remain)"
        )));
    }
    let mut drop: Vec<usize> = sample(rng, len - 2, remove_cnt)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    drop.sort_unstable();
    let mut drop = drop.into_iter().peekable();
    Ok((0..len)
        .filter(|i| {
            if drop.peek() == Some(i) {
                drop.next();
                false
            } else {
                true
            }
        })
        .collect())
}

/// Remove `remove_cnt` randomly chosen points, never the first or last.
pub fn remove_random<R: Rng + ?Sized>(
    points: &[Point2D],
    remove_cnt: usize,
    rng: &mut R,
) -> Result<Vec<Point2D>> {
    Ok(kept_indices(points.len(), remove_cnt, rng)?
        .into_iter()
        .map(|i| points[i])
        .collect())
}

/// Cut each contour's run of points into `strokes_per_contour` contiguous
/// pieces whose sizes differ by at most one. `contour_boundaries` holds the
/// start index of every run (the first must be 0).
pub fn split_into_strokes(
    points: &[Point2D],
    contour_boundaries: &[usize],
    strokes_per_contour: usize,
) -> Result<Vec<Stroke>> {
    if strokes_per_contour == 0 {
        return Err(Error::InvalidInput(
            "strokes_per_contour must be >= 1".into(),
        ));
    }
    if contour_boundaries.first() != Some(&0) {
        return Err(Error::InvalidInput("first boundary must be 0".into()));
    }
    if contour_boundaries.windows(2).any(|w| w[0] > w[1])
        || contour_boundaries.last().is_some_and(|&b| b > points.len())
    {
        return Err(Error::InvalidInput(
            "boundaries must be sorted and within range".into(),
        ));
    }
    let mut strokes = Vec::new();
    for (ci, &start) in contour_boundaries.iter().enumerate() {
        let end = contour_boundaries
            .get(ci + 1)
            .copied()
            .unwrap_or(points.len());
        let len = end - start;
        let (base, extra) = (len / strokes_per_contour, len % strokes_per_contour);
        if base < 2 {
            return Err(Error::InvalidInput(format!(
                "contour {ci} has {len} points, too few for {strokes_per_contour} strokes of >= 2 points"
            )));
        }
        let mut at = start;
        for k in 0..strokes_per_contour {
            let size = base + usize::from(k < extra);
            strokes.push(Stroke {
                points: points[at..at + size].to_vec(),
                source_contour: ci,
            });
            at += size;
        }
    }
    Ok(strokes)
}

/// Order strokes left to right, then top to bottom, by bounding-box minimum.
pub fn sort_strokes(mut strokes: Vec<Stroke>) -> Vec<Stroke> {
    strokes.sort_by(|a, b| {
        let (ba, bb) = (a.bbox(), b.bbox());
        ba.min_x
            .total_cmp(&bb.min_x)
            .then(ba.min_y.total_cmp(&bb.min_y))
    });
    strokes
}

/// Flatten closed contours into one path and record each contour's start
/// arc length.
fn flatten(contours: &[Contour]) -> (Vec<Point2D>, Vec<f64>) {
    let mut flat = Vec::new();
    let mut starts = Vec::with_capacity(contours.len());
    let mut acc = 0.0;
    for c in contours {
        let loop_pts = c.closed_points();
        if let Some(&last) = flat.last() {
            acc += Point2D::distance(last, loop_pts[0]);
        }
        starts.push(acc);
        acc += loop_pts
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .sum::<f64>();
        flat.extend(loop_pts);
    }
    (flat, starts)
}

/// Synthesize one labeling from an object's contours.
pub fn synthesize_labeling(
    image_id: &str,
    object_id: u32,
    contours: &[Contour],
    config: &ResampleConfig,
) -> Result<Labeling> {
    if contours.is_empty() {
        return Err(Error::InvalidInput("no contours to label".into()));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (flat, starts) = flatten(contours);
    let n = if config.use_optimal_n {
        optimal_n(&flat)?
    } else {
        config.resample_cnt.expect("validated")
    };

    let total = path_length(&flat)?;
    if total <= 0.0 {
        return Err(Error::Degenerate("contours have zero length".into()));
    }
    let intervals = random_intervals(n - 1, total, config.variance, &mut rng)?;
    let resampled = resample_at_intervals(&flat, &intervals);

    // contour each resampled point belongs to, by arc length
    let mut owner = Vec::with_capacity(n);
    let mut s = 0.0;
    for i in 0..n {
        if i > 0 {
            s += intervals[i - 1];
        }
        owner.push(starts.partition_point(|&st| st <= s).saturating_sub(1));
    }

    let original = BBox::of(&flat).unwrap();
    let normalized = normalize_points(&resampled, &original)?;
    let centered = recenter(&normalized, original.center())?;

    let kept = kept_indices(centered.len(), config.remove_cnt, &mut rng)?;
    let points: Vec<Point2D> = kept.iter().map(|&i| centered[i]).collect();
    let owners: Vec<usize> = kept.iter().map(|&i| owner[i]).collect();

    let mut boundaries = vec![0];
    for i in 1..owners.len() {
        if owners[i] != owners[i - 1] {
            boundaries.push(i);
        }
    }
    let mut strokes = split_into_strokes(&points, &boundaries, config.strokes_per_contour)?;
    // runs map back to contour ids
    let run_owner: Vec<usize> = boundaries.iter().map(|&b| owners[b]).collect();
    for st in &mut strokes {
        st.source_contour = run_owner[st.source_contour];
    }

    Ok(Labeling {
        image_id: image_id.to_string(),
        object_id,
        strokes: sort_strokes(strokes),
        config: config.clone(),
    })
}
