//! Red stroke overlays on source images.

use std::collections::BTreeSet;
use std::path::Path;

use image::{ImageEncoder, Rgb, RgbImage};
use log::warn;

use crate::contour::Contour;
use crate::error::{Error, Result};
use crate::geometry::Point2D;
use crate::synth::Labeling;

pub const DEFAULT_STROKE_WIDTH: u32 = 3;
pub const STROKE_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: RgbImage,
    pub image_id: String,
    pub object_id: u32,
    pub stroke_width: u32,
    /// Stroke vertices that fell outside the image and were clipped.
    pub clipped_points: usize,
}

impl LabeledImage {
    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        encode_png(&self.pixels)
    }
}

/// Integer pixels on the segment between two grid points (Bresenham).
fn line_pixels(a: (i64, i64), b: (i64, i64), out: &mut Vec<(i64, i64)>) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn grid(p: Point2D) -> (i64, i64) {
    (p.x.round() as i64, p.y.round() as i64)
}

/// Every pixel covered by an open polyline drawn with a square brush of
/// side `width`, before clipping to any image.
pub fn rasterize_polyline(points: &[Point2D], width: u32) -> BTreeSet<(i64, i64)> {
    let width = width.max(1) as i64;
    let lo = -(width - 1) / 2;
    let hi = lo + width - 1;
    let mut centers = Vec::new();
    match points {
        [] => {}
        [p] => centers.push(grid(*p)),
        _ => {
            for w in points.windows(2) {
                line_pixels(grid(w[0]), grid(w[1]), &mut centers);
            }
        }
    }
    let mut set = BTreeSet::new();
    for (cx, cy) in centers {
        for oy in lo..=hi {
            for ox in lo..=hi {
                set.insert((cx + ox, cy + oy));
            }
        }
    }
    set
}

fn paint(img: &mut RgbImage, pixels: &BTreeSet<(i64, i64)>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for &(x, y) in pixels {
        if x >= 0 && y >= 0 && x < w && y < h {
            img.put_pixel(x as u32, y as u32, STROKE_COLOR);
        }
    }
}

fn count_outside(img: &RgbImage, points: &[Point2D]) -> usize {
    let (w, h) = (img.width() as i64, img.height() as i64);
    points
        .iter()
        .map(|&p| grid(p))
        .filter(|&(x, y)| x < 0 || y < 0 || x >= w || y >= h)
        .count()
}

/// Draw each stroke as an open red polyline over a copy of `image`.
pub fn draw_labeling(
    image: &RgbImage,
    labeling: &Labeling,
    stroke_width: u32,
) -> Result<LabeledImage> {
    if labeling.strokes.is_empty() {
        return Err(Error::InvalidInput(format!(
            "labeling {}/{} has no strokes to draw",
            labeling.image_id, labeling.object_id
        )));
    }
    let mut pixels = image.clone();
    let mut clipped = 0;
    for stroke in &labeling.strokes {
        clipped += count_outside(image, &stroke.points);
        paint(
            &mut pixels,
            &rasterize_polyline(&stroke.points, stroke_width),
        );
    }
    if clipped > 0 {
        warn!(
            "{}/{}: {clipped} stroke points outside the image were clipped",
            labeling.image_id, labeling.object_id
        );
    }
    Ok(LabeledImage {
        pixels,
        image_id: labeling.image_id.clone(),
        object_id: labeling.object_id,
        stroke_width,
        clipped_points: clipped,
    })
}

/// Reference labeling drawn straight from the traced contours.
pub fn perfect_example(
    image: &RgbImage,
    image_id: &str,
    object_id: u32,
    contours: &[Contour],
    stroke_width: u32,
) -> Result<LabeledImage> {
    if contours.is_empty() {
        return Err(Error::InvalidInput(
            "no contours for the example image".into(),
        ));
    }
    let mut pixels = image.clone();
    for c in contours {
        paint(
            &mut pixels,
            &rasterize_polyline(&c.closed_points(), stroke_width),
        );
    }
    Ok(LabeledImage {
        pixels,
        image_id: image_id.to_string(),
        object_id,
        stroke_width,
        clipped_points: 0,
    })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Serde(format!("png encoding failed: {e}")))?;
    Ok(buf)
}

pub fn save_png(image: &LabeledImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, image.png_bytes()?).map_err(|e| Error::io(path, e))
}

/// Load any supported raster as 8-bit RGB.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}
