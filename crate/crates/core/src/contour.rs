//! Binary object masks and outer-border extraction.
//!
//! Borders are traced with Moore-neighbour following over pixel centres,
//! one loop per 8-connected foreground component. Holes are not traced.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2D;

/// Default minimum closed border length in pixels.
pub const DEFAULT_MIN_PERIMETER: f64 = 8.0;

/// Grayscale values strictly above this are foreground.
const THRESHOLD: u8 = 127;

/// Row-major boolean mask (`true` = object).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "mask must have positive dimensions, got {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Build a mask from 8-bit grayscale samples using the `> 127` rule.
    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Result<Self> {
        Self::new(width, height, gray.iter().map(|&g| g > THRESHOLD).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    fn at(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Load a PNG or PGM mask from disk.
pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            message: "zero-dimension image".into(),
        });
    }
    MaskImage::from_gray(w as usize, h as usize, gray.as_raw())
}

/// A closed outer border, oriented with positive signed area in pixel
/// coordinates. The first point is not repeated at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Point2D>,
    pub closed: bool,
}

impl Contour {
    /// Length of the closed loop, including the closing segment.
    pub fn perimeter(&self) -> f64 {
        self.closed_points()
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .sum()
    }

    /// The loop with its first point appended to close it.
    pub fn closed_points(&self) -> Vec<Point2D> {
        let mut pts = self.points.clone();
        if self.closed {
            if let Some(&first) = self.points.first() {
                pts.push(first);
            }
        }
        pts
    }

    /// Twice the signed area (shoelace sum) of the loop.
    pub fn signed_area2(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let a = self.points[i];
                let b = self.points[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum()
    }
}

// Clockwise on screen (y down), starting north.
const DIRS: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];
const WEST: usize = 6;

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is an 8-neighbour")
}

/// One Moore step: scan clockwise from the backtrack direction and return
/// the next border pixel with the backtrack direction relative to it.
fn moore_step(mask: &MaskImage, c: (i64, i64), back: usize) -> Option<((i64, i64), usize)> {
    for i in 1..=8 {
        let d = (back + i) % 8;
        let q = (c.0 + DIRS[d].0, c.1 + DIRS[d].1);
        if mask.at(q.0, q.1) {
            let prev = DIRS[(d + 7) % 8];
            let rel = (c.0 + prev.0 - q.0, c.1 + prev.1 - q.1);
            return Some((q, dir_index(rel.0, rel.1)));
        }
    }
    None
}

fn trace_outer(mask: &MaskImage, start: (i64, i64)) -> Vec<(i64, i64)> {
    let Some((first, first_back)) = moore_step(mask, start, WEST) else {
        return vec![start];
    };
    let cap = 4 * mask.width * mask.height + 8;
    let mut out = vec![start];
    let (mut c, mut back) = (first, first_back);
    while out.len() <= cap {
        let (next, nb) = moore_step(mask, c, back).expect("traced pixel has a neighbour");
        if c == start && next == first {
            break;
        }
        out.push(c);
        c = next;
        back = nb;
    }
    out
}

fn flood_mark(mask: &MaskImage, seen: &mut [bool], start: (usize, usize)) {
    let mut stack = vec![start];
    seen[start.1 * mask.width + start.0] = true;
    while let Some((x, y)) = stack.pop() {
        for (dx, dy) in DIRS {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if mask.at(nx, ny) {
                let idx = ny as usize * mask.width + nx as usize;
                if !seen[idx] {
                    seen[idx] = true;
                    stack.push((nx as usize, ny as usize));
                }
            }
        }
    }
}

/// Trace the outer border of every 8-connected foreground component.
///
/// Components are visited in raster order of their top-left pixel, which is
/// also where each loop starts. Loops shorter than `min_perimeter` or with
/// fewer than four points are dropped.
pub fn extract_contours(mask: &MaskImage, min_perimeter: f64) -> Vec<Contour> {
    let mut seen = vec![false; mask.width * mask.height];
    let mut out = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            let idx = y * mask.width + x;
            if !mask.bits[idx] || seen[idx] {
                continue;
            }
            let raw = trace_outer(mask, (x as i64, y as i64));
            flood_mark(mask, &mut seen, (x, y));
            let mut contour = Contour {
                points: raw
                    .into_iter()
                    .map(|(px, py)| Point2D::new(px as f64, py as f64))
                    .collect(),
                closed: true,
            };
            if contour.points.len() < 4 || contour.perimeter() < min_perimeter {
                continue;
            }
            if contour.signed_area2() < 0.0 {
                contour.points[1..].reverse();
            }
            out.push(contour);
        }
    }
    out
}
