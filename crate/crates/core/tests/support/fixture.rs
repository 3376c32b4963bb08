//! Synthetic dataset generator: images, masks and ground truth on disk.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde_json::json;

use sketchlab_core::pipeline::ExperimentConfig;

pub const SIZE: u32 = 96;

/// Blob shapes drawn into masks; one or two per image.
fn blobs(index: usize, second: bool) -> Vec<(f64, f64, f64, f64)> {
    let i = index as f64;
    let cx = 30.0 + (i * 7.0) % 20.0;
    let cy = 32.0 + (i * 11.0) % 18.0;
    let rx = 12.0 + (i * 3.0) % 9.0;
    let ry = 10.0 + (i * 5.0) % 11.0;
    let mut out = vec![(cx, cy, rx, ry)];
    if second && index.is_multiple_of(3) {
        out.push((74.0, 74.0, 8.0 + (i % 4.0), 9.0));
    }
    out
}

fn mask_for(index: usize, second: bool) -> GrayImage {
    let shapes = blobs(index, second);
    GrayImage::from_fn(SIZE, SIZE, |x, y| {
        let inside = shapes.iter().any(|&(cx, cy, rx, ry)| {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            dx * dx + dy * dy <= 1.0
        });
        Luma([if inside { 255 } else { 0 }])
    })
}

fn image_for(index: usize) -> RgbImage {
    RgbImage::from_fn(SIZE, SIZE, |x, y| {
        let v = ((x + y + index as u32 * 13) % 200) as u8 + 30;
        Rgb([v / 2, v, 255 - v / 3])
    })
}

fn ground_truth(image_id: &str, objects: usize, index: usize) -> serde_json::Value {
    let verdict = |k: usize| {
        if (index + k).is_multiple_of(3) {
            "fail"
        } else {
            "pass"
        }
    };
    let records: Vec<_> = (0..objects)
        .map(|o| {
            json!({
                "image_id": image_id,
                "object_id": o,
                "openness": {"verdict": verdict(0), "note": "the outline closes around the person"},
                "boundary": {"verdict": verdict(1), "note": "strokes follow the body edge"},
                "alignment": {"verdict": verdict(2), "note": "the drawing sits on the figure"},
                "overlay": {"verdict": "pass", "note": "lines do not cross the person"},
                "reference_answer": "The labeling encloses the person with a closed outline. \
                    The strokes follow the boundary of the body closely. \
                    Small gaps between strokes remain near the shoulders.",
            })
        })
        .collect();
    json!(records)
}

/// Write `n` images under `root/dataset` and return a mock config for it.
/// Every third image carries a second object.
pub fn write_dataset(root: &Path, n: usize) -> ExperimentConfig {
    write_images(root, n, true)
}

/// Like [`write_dataset`] with exactly one object per image.
pub fn write_single_object_dataset(root: &Path, n: usize) -> ExperimentConfig {
    write_images(root, n, false)
}

fn write_images(root: &Path, n: usize, second: bool) -> ExperimentConfig {
    let dataset = root.join("dataset");
    for sub in ["images", "masks", "ground_truth"] {
        std::fs::create_dir_all(dataset.join(sub)).unwrap();
    }
    for i in 0..n {
        let id = format!("img{i:03}");
        image_for(i)
            .save(dataset.join(format!("images/{id}.png")))
            .unwrap();
        mask_for(i, second)
            .save(dataset.join(format!("masks/{id}.png")))
            .unwrap();
        let gt = ground_truth(&id, blobs(i, second).len(), i);
        std::fs::write(
            dataset.join(format!("ground_truth/{id}.json")),
            serde_json::to_string_pretty(&gt).unwrap(),
        )
        .unwrap();
    }
    ExperimentConfig {
        dataset_dir: dataset,
        runs_dir: root.join("runs"),
        seed: 7,
        mock: true,
        ..Default::default()
    }
}

/// Add an image whose mask is given explicitly.
pub fn add_image(dataset: &Path, id: &str, mask: &GrayImage) -> PathBuf {
    let img = RgbImage::from_pixel(mask.width(), mask.height(), Rgb([200, 200, 200]));
    img.save(dataset.join(format!("images/{id}.png"))).unwrap();
    let p = dataset.join(format!("masks/{id}.png"));
    mask.save(&p).unwrap();
    p
}

/// Number of objects `write_dataset` puts in image `index`.
pub fn objects_in(index: usize) -> usize {
    blobs(index, true).len()
}
