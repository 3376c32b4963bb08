use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, MetricsConfig};
use super::manifest::{sha256_file, FileRef, InputEntry};
use crate::contour::{extract_contours, load_mask, Contour};
use crate::error::{Error, Result};
use crate::eval::{
    judge_record, load_ground_truth, read_metrics, write_metrics, GroundTruth, JudgeInput,
    MetricName, MetricRecord,
};
use crate::features::{
    aggregate_with, read_feature_csv, write_feature_csv, FeatureVector, FEATURE_NAMES,
};
use crate::llm::{
    ChatProvider, Embedder, FeedbackKey, FeedbackRecord, Gateway, HttpEmbedder, HttpProvider,
    MockEmbedder, MockProvider,
};
use crate::prompt::{build_prompt, PromptStrategy, Role, TEMPLATE_VERSION};
use crate::render::{draw_labeling, load_rgb, perfect_example, save_png, LabeledImage};
use crate::stats::{
    distance_correlation, dunn_test, group_medians, histogram, kruskal_wallis, shapiro_wilk,
};
use crate::synth::{synthesize_labeling, Labeling};

pub const ANALYSIS_FILES: [&str; 7] = [
    "analysis/correlation.json",
    "analysis/correlation.csv",
    "analysis/normality.json",
    "analysis/kruskal_dunn.json",
    "analysis/medians.json",
    "analysis/medians.csv",
    "analysis/histograms.json",
];

const MASK_EXTENSIONS: [&str; 2] = ["png", "pgm"];

pub(super) struct Ctx<'a> {
    pub dir: &'a Path,
    pub config: &'a ExperimentConfig,
    pub inputs: &'a [InputEntry],
}

/// Seed for one object, independent of how many objects precede it.
pub fn object_seed(run_seed: u64, image_id: &str, object_id: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(image_id.as_bytes());
    h.update([0]);
    h.update(object_id.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn stem(image_id: &str, object_id: u32) -> String {
    format!("{image_id}_{object_id}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn rel_string(base: &Path, path: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn json_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Pair every mask under `masks/` with `images/<id>.png` and, when present,
/// `ground_truth/<id>.json`.
pub(super) fn inventory(dataset: &Path) -> Result<Vec<InputEntry>> {
    let masks_dir = dataset.join("masks");
    if !masks_dir.is_dir() {
        return Err(Error::Config(format!(
            "{} has no masks/ directory",
            dataset.display()
        )));
    }
    let mut masks: BTreeMap<String, std::path::PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(&masks_dir).map_err(|e| Error::io(&masks_dir, e))? {
        let p = entry.map_err(|e| Error::io(&masks_dir, e))?.path();
        let ext = p
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !p.is_file() || !ext.is_some_and(|e| MASK_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let id = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("bad mask file name {}", p.display())))?
            .to_string();
        if let Some(prev) = masks.insert(id.clone(), p.clone()) {
            return Err(Error::Config(format!(
                "two masks for image {id}: {} and {}",
                prev.display(),
                p.display()
            )));
        }
    }
    masks
        .into_iter()
        .map(|(image_id, mask)| {
            let image = dataset.join("images").join(format!("{image_id}.png"));
            if !image.is_file() {
                return Err(Error::Config(format!(
                    "mask {} has no matching image {}",
                    mask.display(),
                    image.display()
                )));
            }
            let gt = dataset
                .join("ground_truth")
                .join(format!("{image_id}.json"));
            let file_ref = |p: &Path| -> Result<FileRef> {
                Ok(FileRef {
                    path: rel_string(dataset, p),
                    sha256: sha256_file(p)?,
                })
            };
            Ok(InputEntry {
                image: file_ref(&image)?,
                mask: file_ref(&mask)?,
                ground_truth: if gt.is_file() {
                    Some(file_ref(&gt)?)
                } else {
                    None
                },
                image_id,
            })
        })
        .collect()
}

struct ImageSynth {
    image_id: String,
    objects: usize,
    clipped: usize,
}

fn image_contours(ctx: &Ctx<'_>, input: &InputEntry) -> Result<(image::RgbImage, Vec<Contour>)> {
    let dataset = &ctx.config.dataset_dir;
    let mask = load_mask(dataset.join(&input.mask.path))?;
    let image = load_rgb(dataset.join(&input.image.path))?;
    if (image.width() as usize, image.height() as usize) != (mask.width(), mask.height()) {
        return Err(Error::InvalidInput(format!(
            "image {} is {}x{} but its mask is {}x{}",
            input.image_id,
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    Ok((image, extract_contours(&mask, ctx.config.min_perimeter)))
}

fn synth_image(ctx: &Ctx<'_>, input: &InputEntry) -> Result<ImageSynth> {
    let (image, contours) = image_contours(ctx, input)?;
    let width = ctx.config.render.stroke_width;
    let mut clipped = 0;
    for (i, contour) in contours.iter().enumerate() {
        let object_id = i as u32;
        let mut rc = ctx.config.resample.clone();
        rc.seed = object_seed(ctx.config.seed, &input.image_id, object_id);
        let labeling = synthesize_labeling(
            &input.image_id,
            object_id,
            std::slice::from_ref(contour),
            &rc,
        )?;
        let name = stem(&input.image_id, object_id);
        write_json(
            &ctx.dir.join("strokes").join(format!("{name}.json")),
            &labeling,
        )?;
        let drawn = draw_labeling(&image, &labeling, width)?;
        clipped += drawn.clipped_points;
        save_png(&drawn, ctx.dir.join("labeled").join(format!("{name}.png")))?;
    }
    Ok(ImageSynth {
        image_id: input.image_id.clone(),
        objects: contours.len(),
        clipped,
    })
}

pub(super) fn synth(ctx: &Ctx<'_>) -> Result<Value> {
    let done = ctx
        .inputs
        .par_iter()
        .map(|input| synth_image(ctx, input))
        .collect::<Result<Vec<_>>>()?;

    let empty: Vec<&str> = done
        .iter()
        .filter(|d| d.objects == 0)
        .map(|d| d.image_id.as_str())
        .collect();
    for id in &empty {
        warn!("image {id}: no contour passed the perimeter filter; nothing to label");
    }

    let mut example = None;
    if let Some(first) = done.iter().position(|d| d.objects > 0) {
        let input = &ctx.inputs[first];
        let (image, contours) = image_contours(ctx, input)?;
        let ex = perfect_example(
            &image,
            &input.image_id,
            0,
            &contours[..1],
            ctx.config.render.stroke_width,
        )?;
        let rel = format!("labeled/example_{}.png", stem(&input.image_id, 0));
        save_png(&ex, ctx.dir.join(&rel))?;
        example = Some(rel);
    }

    Ok(json!({
        "images": done.len(),
        "objects": done.iter().map(|d| d.objects).sum::<usize>(),
        "images_without_objects": empty,
        "clipped_points": done.iter().map(|d| d.clipped).sum::<usize>(),
        "example": example,
    }))
}

/// Labelings of the run, ordered by image then object.
fn load_labelings(dir: &Path) -> Result<Vec<Labeling>> {
    let mut out = json_files(&dir.join("strokes"))?
        .iter()
        .map(|p| read_json::<Labeling>(p))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| (&a.image_id, a.object_id).cmp(&(&b.image_id, b.object_id)));
    Ok(out)
}

pub(super) fn features(ctx: &Ctx<'_>) -> Result<Value> {
    let labelings = load_labelings(ctx.dir)?;
    let reduction = ctx.config.analysis.gap_reduction;
    let rows = labelings
        .par_iter()
        .map(|l| aggregate_with(l, reduction))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = Vec::new();
    write_feature_csv(&mut csv, &rows)?;
    write_file(&ctx.dir.join("analysis/features.csv"), &csv)?;
    write_json(&ctx.dir.join("analysis/stroke_features.json"), &rows)?;
    Ok(json!({ "labelings": rows.len(), "gap_reduction": reduction }))
}

struct Providers {
    chat: Arc<dyn ChatProvider>,
    embedder: Box<dyn Embedder>,
    secret: Option<String>,
}

fn providers(config: &ExperimentConfig) -> Result<Providers> {
    if config.mock {
        return Ok(Providers {
            chat: Arc::new(MockProvider::new(config.seed)),
            embedder: Box::new(MockEmbedder::default()),
            secret: None,
        });
    }
    let http = HttpProvider::new(config.provider.clone())?;
    let secret = http.secret().to_string();
    Ok(Providers {
        chat: Arc::new(http),
        embedder: Box::new(HttpEmbedder::new(config.provider.clone())?),
        secret: Some(secret),
    })
}

fn gateway(config: &ExperimentConfig, p: &Providers) -> Gateway {
    let mut g = Gateway::new(p.chat.clone(), config.provider.clone());
    if let Some(s) = &p.secret {
        g = g.with_secret(s.clone());
    }
    g
}

fn load_labeled(
    path: &Path,
    image_id: &str,
    object_id: u32,
    stroke_width: u32,
) -> Result<LabeledImage> {
    Ok(LabeledImage {
        pixels: load_rgb(path)?,
        image_id: image_id.to_string(),
        object_id,
        stroke_width,
        clipped_points: 0,
    })
}

/// Prompt record written to `prompts/`: texts verbatim, images by reference.
fn prompt_record(bundle: &crate::prompt::PromptBundle, image_refs: &[(String, String)]) -> Value {
    let messages: Vec<Value> = bundle
        .messages
        .iter()
        .map(|m| {
            let images: Vec<Value> = if m.role == Role::User {
                image_refs
                    .iter()
                    .map(|(path, sha)| json!({"path": path, "sha256": sha}))
                    .collect()
            } else {
                Vec::new()
            };
            json!({"role": m.role, "text": m.text, "images": images})
        })
        .collect();
    json!({
        "strategy": bundle.strategy,
        "template_version": TEMPLATE_VERSION,
        "content_hash": bundle.content_hash(),
        "messages": messages,
    })
}

pub(super) fn feedback(ctx: &Ctx<'_>, example: Option<String>) -> Result<Value> {
    let labelings = load_labelings(ctx.dir)?;
    let width = ctx.config.render.stroke_width;
    let strategies = &ctx.config.strategies;
    if labelings.is_empty() {
        return Ok(json!({ "records": 0, "provider": Value::Null }));
    }
    let needs_example = strategies.iter().any(|s| s.is_few_shot());
    let example_image = match (&example, needs_example) {
        (Some(rel), true) => Some((
            rel.clone(),
            sha256_file(&ctx.dir.join(rel))?,
            load_labeled(&ctx.dir.join(rel), "example", 0, width)?,
        )),
        (None, true) => {
            return Err(Error::InvalidInput(
                "few-shot strategies need an example image but synth produced none".into(),
            ))
        }
        _ => None,
    };

    let p = providers(ctx.config)?;
    let gw = gateway(ctx.config, &p).with_log_dir(ctx.dir.join("feedback/exchanges"));

    let tasks: Vec<(&Labeling, PromptStrategy)> = labelings
        .iter()
        .flat_map(|l| strategies.iter().map(move |&s| (l, s)))
        .collect();
    let records = tasks
        .par_iter()
        .map(|&(l, strategy)| -> Result<FeedbackRecord> {
            let name = stem(&l.image_id, l.object_id);
            let rel = format!("labeled/{name}.png");
            let path = ctx.dir.join(&rel);
            let labeled = load_labeled(&path, &l.image_id, l.object_id, width)?;
            let mut refs = vec![(rel, sha256_file(&path)?)];
            let ex = if strategy.is_few_shot() {
                let (ex_rel, ex_sha, ex_img) = example_image.as_ref().expect("checked above");
                refs.push((ex_rel.clone(), ex_sha.clone()));
                Some(ex_img)
            } else {
                None
            };
            let bundle = build_prompt(strategy, &labeled, ex)?;
            let key = FeedbackKey {
                image_id: l.image_id.clone(),
                object_id: l.object_id,
                strategy,
            };
            write_json(
                &ctx.dir.join("prompts").join(format!("{}.json", key.stem())),
                &prompt_record(&bundle, &refs),
            )?;
            let record = gw.send_chat(&key, &bundle)?;
            write_json(
                &ctx.dir
                    .join("feedback")
                    .join(format!("{}.json", key.stem())),
                &record,
            )?;
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "records": records.len(),
        "provider": gw.provider_name(),
        "model": if ctx.config.mock { "mock".to_string() } else { ctx.config.provider.model_name.clone() },
        "strategies": strategies,
    }))
}

fn load_feedback(dir: &Path) -> Result<Vec<FeedbackRecord>> {
    let mut out = json_files(&dir.join("feedback"))?
        .iter()
        .map(|p| read_json::<FeedbackRecord>(p))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(FeedbackRecord::key);
    Ok(out)
}

fn ground_truth_index(ctx: &Ctx<'_>) -> Result<BTreeMap<(String, u32), GroundTruth>> {
    let mut index = BTreeMap::new();
    for input in ctx.inputs {
        let Some(gt) = &input.ground_truth else {
            continue;
        };
        for g in load_ground_truth(ctx.config.dataset_dir.join(&gt.path))? {
            if g.image_id != input.image_id {
                return Err(Error::InvalidInput(format!(
                    "{} holds ground truth for image {}, expected {}",
                    gt.path, g.image_id, input.image_id
                )));
            }
            index.insert((g.image_id.clone(), g.object_id), g);
        }
    }
    Ok(index)
}

pub(super) fn evaluate(ctx: &Ctx<'_>) -> Result<Value> {
    let records = match &ctx.config.metrics {
        MetricsConfig::Ingest { path } => {
            let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let mut r = read_metrics(f)?;
            r.sort_by(|a, b| {
                (&a.image_id, a.object_id, a.strategy.as_str()).cmp(&(
                    &b.image_id,
                    b.object_id,
                    b.strategy.as_str(),
                ))
            });
            r
        }
        MetricsConfig::Judge { k } => {
            let feedback = load_feedback(ctx.dir)?;
            let gts = ground_truth_index(ctx)?;
            let p = providers(ctx.config)?;
            let gw = gateway(ctx.config, &p);
            feedback
                .par_iter()
                .map(|f| {
                    let gt = gts.get(&(f.image_id.clone(), f.object_id)).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "no ground truth for image {} object {}",
                            f.image_id, f.object_id
                        ))
                    })?;
                    judge_record(
                        &JudgeInput {
                            image_id: &f.image_id,
                            object_id: f.object_id,
                            strategy: f.strategy,
                            feedback: &f.feedback_text,
                            ground_truth: gt,
                        },
                        &gw,
                        p.embedder.as_ref(),
                        *k,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut csv = Vec::new();
    write_metrics(&mut csv, &records)?;
    write_file(&ctx.dir.join("metrics.csv"), &csv)?;
    Ok(json!({
        "records": records.len(),
        "source": match ctx.config.metrics {
            MetricsConfig::Judge { .. } => crate::eval::JUDGE_LABEL,
            MetricsConfig::Ingest { .. } => "ingested",
        },
    }))
}

/// A result or the reason it could not be computed.
#[derive(Serialize)]
struct Outcome<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<String>,
}

impl<T> Outcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome {
                result: Some(v),
                skipped: None,
            },
            Err(e) => {
                warn!("analysis step skipped: {e}");
                Outcome {
                    result: None,
                    skipped: Some(e.to_string()),
                }
            }
        }
    }
}

pub(super) fn analyze(ctx: &Ctx<'_>) -> Result<Value> {
    let features_path = ctx.dir.join("analysis/features.csv");
    let f = std::fs::File::open(&features_path).map_err(|e| Error::io(&features_path, e))?;
    let features: BTreeMap<(String, u32), FeatureVector> = read_feature_csv(f)?
        .into_iter()
        .map(|fv| ((fv.image_id.clone(), fv.object_id), fv))
        .collect();
    let metrics_path = ctx.dir.join("metrics.csv");
    let f = std::fs::File::open(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let metrics = read_metrics(f)?;
    let analysis = &ctx.config.analysis;

    // strategies in canonical order, restricted to those with records
    let strategies: Vec<PromptStrategy> = PromptStrategy::ALL
        .into_iter()
        .filter(|s| metrics.iter().any(|m| m.strategy == *s))
        .collect();
    let by_strategy: BTreeMap<&str, Vec<&MetricRecord>> = strategies
        .iter()
        .map(|s| {
            (
                s.as_str(),
                metrics.iter().filter(|m| m.strategy == *s).collect(),
            )
        })
        .collect();
    let column = |s: PromptStrategy, name: MetricName| -> Vec<f64> {
        by_strategy[s.as_str()]
            .iter()
            .map(|m| m.metric(name))
            .collect()
    };

    // feature-metric distance correlations per strategy
    let mut corr_entries = Vec::new();
    let mut corr_csv = csv::Writer::from_writer(Vec::new());
    corr_csv.write_record(["strategy", "feature", "metric", "dcor"])?;
    for &s in &strategies {
        let joined: Vec<(&FeatureVector, &MetricRecord)> = by_strategy[s.as_str()]
            .iter()
            .filter_map(|m| Some((features.get(&(m.image_id.clone(), m.object_id))?, *m)))
            .collect();
        let unmatched = by_strategy[s.as_str()].len() - joined.len();
        if unmatched > 0 {
            warn!("{s}: {unmatched} metric records have no feature row");
        }
        let matrix: Result<Vec<Vec<f64>>> = (0..FEATURE_NAMES.len())
            .map(|fi| {
                let x: Vec<f64> = joined.iter().map(|(fv, _)| fv.values()[fi]).collect();
                MetricName::ALL
                    .iter()
                    .map(|&mn| {
                        let y: Vec<f64> = joined.iter().map(|(_, m)| m.metric(mn)).collect();
                        distance_correlation(&x, &y)
                    })
                    .collect()
            })
            .collect();
        if let Ok(m) = &matrix {
            for (fi, row) in m.iter().enumerate() {
                for (mi, v) in row.iter().enumerate() {
                    corr_csv.write_record([
                        s.as_str(),
                        FEATURE_NAMES[fi],
                        MetricName::ALL[mi].as_str(),
                        &v.to_string(),
                    ])?;
                }
            }
        }
        let mut entry = serde_json::to_value(Outcome::from(matrix))?;
        entry["strategy"] = json!(s);
        entry["n"] = json!(joined.len());
        corr_entries.push(entry);
    }
    write_json(
        &ctx.dir.join("analysis/correlation.json"),
        &json!({
            "method": "distance correlation (uncorrected V-statistic)",
            "features": FEATURE_NAMES,
            "metrics": MetricName::ALL,
            "strategies": corr_entries,
        }),
    )?;
    write_file(
        &ctx.dir.join("analysis/correlation.csv"),
        &corr_csv
            .into_inner()
            .map_err(|e| Error::Serde(e.to_string()))?,
    )?;

    // normality, medians and histograms per (metric, strategy)
    let mut normality = Vec::new();
    let mut medians = Vec::new();
    let mut histograms = Vec::new();
    let mut medians_csv = csv::Writer::from_writer(Vec::new());
    medians_csv.write_record(["metric", "strategy", "n", "median"])?;
    for mn in MetricName::ALL {
        let groups: Vec<Vec<f64>> = strategies.iter().map(|&s| column(s, mn)).collect();
        let meds = group_medians(&groups)?;
        for ((&s, g), med) in strategies.iter().zip(&groups).zip(&meds) {
            let mut n = serde_json::to_value(Outcome::from(shapiro_wilk(g)))?;
            n["metric"] = json!(mn);
            n["strategy"] = json!(s);
            n["n"] = json!(g.len());
            normality.push(n);
            medians.push(json!({"metric": mn, "strategy": s, "n": g.len(), "median": med}));
            medians_csv.write_record([
                mn.as_str(),
                s.as_str(),
                &g.len().to_string(),
                &med.to_string(),
            ])?;
            histograms.push(json!({
                "metric": mn,
                "strategy": s,
                "bins": histogram(g, analysis.histogram_bins)?,
            }));
        }
    }
    write_json(&ctx.dir.join("analysis/normality.json"), &normality)?;
    write_json(&ctx.dir.join("analysis/medians.json"), &medians)?;
    write_file(
        &ctx.dir.join("analysis/medians.csv"),
        &medians_csv
            .into_inner()
            .map_err(|e| Error::Serde(e.to_string()))?,
    )?;
    write_json(&ctx.dir.join("analysis/histograms.json"), &histograms)?;

    // strategy comparison per metric
    let mut comparisons = Vec::new();
    for mn in MetricName::ALL {
        let groups: Vec<Vec<f64>> = strategies.iter().map(|&s| column(s, mn)).collect();
        comparisons.push(json!({
            "metric": mn,
            "groups": strategies,
            "kruskal_wallis": Outcome::from(kruskal_wallis(&groups)),
            "dunn": Outcome::from(dunn_test(&groups, analysis.dunn_adjustment)),
        }));
    }
    write_json(&ctx.dir.join("analysis/kruskal_dunn.json"), &comparisons)?;

    let skipped = normality
        .iter()
        .chain(&corr_entries)
        .filter(|v| v.get("skipped").is_some())
        .count()
        + comparisons
            .iter()
            .flat_map(|c| [&c["kruskal_wallis"], &c["dunn"]])
            .filter(|v| v.get("skipped").is_some())
            .count();
    Ok(json!({
        "strategies": strategies,
        "records": metrics.len(),
        "skipped": skipped,
        "dunn_adjustment": analysis.dunn_adjustment,
    }))
}
