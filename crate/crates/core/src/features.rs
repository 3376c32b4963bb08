//! Rubine and Long sketch-recognition features.
//!
//! Any ratio whose denominator is zero evaluates to 0, which keeps closed
//! loops (first point == last point) and dot-like strokes finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Point2D};
use crate::synth::{Labeling, Stroke};

/// Column names in output order.
pub const FEATURE_NAMES: [&str; 17] = [
    "r1",
    "r2",
    "r3",
    "r4",
    "r5",
    "r6",
    "r7",
    "r8",
    "r9",
    "r10",
    "r11",
    "l14",
    "l15",
    "l16",
    "l17",
    "l20",
    "inter_stroke_gap",
];

/// Per-stroke features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrokeFeatures {
    /// Cosine of the initial angle.
    pub r1: f64,
    /// Sine of the initial angle.
    pub r2: f64,
    /// Bounding-box diagonal length.
    pub r3: f64,
    /// Bounding-box diagonal angle.
    pub r4: f64,
    /// Distance between first and last point.
    pub r5: f64,
    /// Cosine of the first-to-last angle.
    pub r6: f64,
    /// Sine of the first-to-last angle.
    pub r7: f64,
    /// Total stroke length.
    pub r8: f64,
    /// Total signed turning angle.
    pub r9: f64,
    /// Total absolute turning angle.
    pub r10: f64,
    /// Sum of squared turning angles.
    pub r11: f64,
    /// Average rotation, r9 / r8.
    pub l14: f64,
    /// Density, r8 / r5.
    pub l15: f64,
    /// Second density, r8 / r3.
    pub l16: f64,
    /// Openness, r5 / r3.
    pub l17: f64,
    /// Rotational consistency, r9 / r10.
    pub l20: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl StrokeFeatures {
    pub fn as_array(&self) -> [f64; 16] {
        [
            self.r1, self.r2, self.r3, self.r4, self.r5, self.r6, self.r7, self.r8, self.r9,
            self.r10, self.r11, self.l14, self.l15, self.l16, self.l17, self.l20,
        ]
    }

    fn from_array(v: [f64; 16]) -> Self {
        let [r1, r2, r3, r4, r5, r6, r7, r8, r9, r10, r11, l14, l15, l16, l17, l20] = v;
        Self {
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
            l14,
            l15,
            l16,
            l17,
            l20,
        }
    }
}

/// Compute the sixteen per-stroke features of a point sequence.
///
/// Strokes with exactly two points take the initial angle from `p1`.
pub fn compute_stroke_features(points: &[Point2D]) -> Result<StrokeFeatures> {
    let m = points.len();
    if m < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            available: m,
        });
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite point at index {i}"
        )));
    }
    let p0 = points[0];
    let pa = points[if m >= 3 { 2 } else { 1 }];
    let d0a = p0.distance(pa);
    let r1 = ratio(pa.x - p0.x, d0a);
    let r2 = ratio(pa.y - p0.y, d0a);

    let bb = BBox::of(points).unwrap();
    let r3 = bb.diagonal();
    let r4 = bb.height().atan2(bb.width());

    let last = points[m - 1];
    let r5 = p0.distance(last);
    let r6 = ratio(last.x - p0.x, r5);
    let r7 = ratio(last.y - p0.y, r5);

    let deltas: Vec<(f64, f64)> = points
        .windows(2)
        .map(|w| (w[1].x - w[0].x, w[1].y - w[0].y))
        .collect();
    let r8: f64 = deltas.iter().map(|(dx, dy)| dx.hypot(*dy)).sum();

    let (mut r9, mut r10, mut r11) = (0.0, 0.0, 0.0);
    for w in deltas.windows(2) {
        let ((px, py), (cx, cy)) = (w[0], w[1]);
        let theta = (cx * py - px * cy).atan2(cx * px + cy * py);
        r9 += theta;
        r10 += theta.abs();
        r11 += theta * theta;
    }

    Ok(StrokeFeatures {
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
        l14: ratio(r9, r8),
        l15: ratio(r8, r5),
        l16: ratio(r8, r3),
        l17: ratio(r5, r3),
        l20: ratio(r9, r10),
    })
}

/// Mean end-to-start gap between consecutive strokes; 0 for one stroke.
pub fn inter_stroke_distance(labeling: &Labeling) -> f64 {
    gap_statistic(&labeling.strokes, GapReduction::Mean)
}

/// How consecutive stroke gaps are reduced to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapReduction {
    #[default]
    Mean,
    Sum,
    Min,
}

pub fn gap_statistic(strokes: &[Stroke], reduction: GapReduction) -> f64 {
    let gaps: Vec<f64> = strokes
        .windows(2)
        .filter_map(|w| Some(w[0].points.last()?.distance(*w[1].points.first()?)))
        .collect();
    if gaps.is_empty() {
        return 0.0;
    }
    match reduction {
        GapReduction::Mean => gaps.iter().sum::<f64>() / gaps.len() as f64,
        GapReduction::Sum => gaps.iter().sum(),
        GapReduction::Min => gaps.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Per-labeling aggregate: stroke features averaged, plus the gap statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub object_id: u32,
    pub mean: StrokeFeatures,
    pub inter_stroke_gap: f64,
    pub per_stroke: Vec<StrokeFeatures>,
}

impl FeatureVector {
    /// The 17 values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; 17] {
        let mut out = [0.0; 17];
        out[..16].copy_from_slice(&self.mean.as_array());
        out[16] = self.inter_stroke_gap;
        out
    }
}

pub fn aggregate_labeling_features(labeling: &Labeling) -> Result<FeatureVector> {
    aggregate_with(labeling, GapReduction::Mean)
}

pub fn aggregate_with(labeling: &Labeling, reduction: GapReduction) -> Result<FeatureVector> {
    if labeling.strokes.is_empty() {
        return Err(Error::InvalidInput(format!(
            "labeling {}/{} has no strokes",
            labeling.image_id, labeling.object_id
        )));
    }
    let per_stroke = labeling
        .strokes
        .iter()
        .map(|s| compute_stroke_features(&s.points))
        .collect::<Result<Vec<_>>>()?;
    let k = per_stroke.len() as f64;
    let mut acc = [0.0; 16];
    for f in &per_stroke {
        for (a, v) in acc.iter_mut().zip(f.as_array()) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(FeatureVector {
        image_id: labeling.image_id.clone(),
        object_id: labeling.object_id,
        mean: StrokeFeatures::from_array(acc),
        inter_stroke_gap: gap_statistic(&labeling.strokes, reduction),
        per_stroke,
    })
}

/// Write the feature table: ids followed by the 17 named columns.
pub fn write_feature_csv<W: std::io::Write>(out: W, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["image_id", "object_id"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.image_id.clone(), row.object_id.to_string()];
        rec.extend(row.values().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

/// Read a feature table written by [`write_feature_csv`]. Per-stroke
/// values are not part of the table and come back empty.
pub fn read_feature_csv<R: std::io::Read>(input: R) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 19 {
            return Err(Error::Serde(format!(
                "feature row has {} columns, expected 19",
                rec.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|e| Error::Serde(format!("column {}: {e}", i + 1)))
        };
        let mut vals = [0.0; 16];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = parse(i + 2)?;
        }
        out.push(FeatureVector {
            image_id: rec[0].to_string(),
            object_id: rec[1]
                .parse()
                .map_err(|e| Error::Serde(format!("object_id: {e}")))?,
            mean: StrokeFeatures::from_array(vals),
            inter_stroke_gap: parse(18)?,
            per_stroke: Vec::new(),
        });
    }
    Ok(out)
}
