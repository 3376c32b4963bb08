//! Experiment runner: run directories, the manifest and the five stages.

mod config;
mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde_json::json;

pub use config::{
    AnalysisConfig, ExperimentConfig, MetricsConfig, RenderConfig, DEFAULT_HISTOGRAM_BINS,
    DEFAULT_JUDGE_K,
};
pub use manifest::{
    hash_outputs, outputs_digest, sha256_file, sha256_hex, verify_outputs, FileRef, InputEntry,
    Manifest, StageRecord, StageStatus, MANIFEST_FILE,
};
pub use stages::{object_seed, ANALYSIS_FILES};

use crate::error::{Error, Result};

/// Top-level entries of a run directory besides the manifest.
pub const RUN_DIRS: [&str; 5] = ["strokes", "labeled", "prompts", "feedback", "analysis"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Features,
    Feedback,
    Evaluate,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Synth,
        Stage::Features,
        Stage::Feedback,
        Stage::Evaluate,
        Stage::Analyze,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Features => "features",
            Stage::Feedback => "feedback",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn dependencies(self, config: &ExperimentConfig) -> Vec<Stage> {
        match self {
            Stage::Synth => vec![],
            Stage::Features | Stage::Feedback => vec![Stage::Synth],
            Stage::Evaluate => match config.metrics {
                MetricsConfig::Judge { .. } => vec![Stage::Feedback],
                MetricsConfig::Ingest { .. } => vec![],
            },
            Stage::Analyze => vec![Stage::Features, Stage::Evaluate],
        }
    }

    /// Run-relative files and directories written by this stage only.
    pub fn owned_paths(self) -> Vec<&'static str> {
        match self {
            Stage::Synth => vec!["strokes", "labeled"],
            Stage::Features => vec!["analysis/features.csv", "analysis/stroke_features.json"],
            Stage::Feedback => vec!["prompts", "feedback"],
            Stage::Evaluate => vec!["metrics.csv"],
            Stage::Analyze => ANALYSIS_FILES.to_vec(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown stage {s:?}")))
    }
}

/// What happened when a stage was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    UpToDate,
}

/// An open run directory.
pub struct Run {
    pub config: ExperimentConfig,
    pub run_id: String,
    pub dir: PathBuf,
    manifest: Manifest,
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl Run {
    /// Validate the configuration, inventory the dataset and open (or
    /// create) `runs_dir/<run_id>`. Without an explicit id, one is derived
    /// from the configuration and input hashes.
    pub fn open(config: ExperimentConfig, run_id: Option<&str>) -> Result<Self> {
        config.validate()?;
        let inputs = stages::inventory(&config.dataset_dir)?;
        let snapshot = config.snapshot();
        let run_id = match run_id {
            Some(id) => {
                if !valid_run_id(id) {
                    return Err(Error::Config(format!("invalid run id {id:?}")));
                }
                id.to_string()
            }
            None => {
                let basis = serde_json::to_vec(&json!({"config": snapshot, "inputs": inputs}))
                    .expect("json");
                format!("run-{}", &sha256_hex(&basis)[..12])
            }
        };
        let dir = config.runs_dir.join(&run_id);
        for sub in RUN_DIRS {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let stages_so_far = match Manifest::load(&dir)? {
            Some(m) => {
                info!("resuming run {run_id}");
                m.stages
            }
            None => BTreeMap::new(),
        };
        let manifest = Manifest {
            run_id: run_id.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: snapshot,
            decisions: decisions(&config),
            inputs,
            stages: stages_so_far,
        };
        manifest.save(&dir)?;
        Ok(Self {
            config,
            run_id,
            dir,
            manifest,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }

    fn ctx(&self) -> stages::Ctx<'_> {
        stages::Ctx {
            dir: &self.dir,
            config: &self.config,
            inputs: &self.manifest.inputs,
        }
    }

    fn digest_of(&self, stage: Stage) -> Option<&str> {
        self.manifest
            .stages
            .get(stage.as_str())
            .filter(|r| r.status == StageStatus::Complete)
            .map(|r| r.digest.as_str())
    }

    /// Hash of everything the stage consumes. `None` while an upstream
    /// stage has not completed.
    fn fingerprint(&self, stage: Stage) -> Result<Option<String>> {
        let cfg = &self.config;
        let mut upstream = BTreeMap::new();
        for dep in stage.dependencies(cfg) {
            match self.digest_of(dep) {
                Some(d) => upstream.insert(dep.as_str(), d.to_string()),
                None => return Ok(None),
            };
        }
        let part = match stage {
            Stage::Synth => json!({
                "seed": cfg.seed,
                "resample": cfg.resample,
                "min_perimeter": cfg.min_perimeter,
                "render": cfg.render,
                "inputs": self.manifest.inputs.iter()
                    .map(|i| (&i.image_id, &i.image.sha256, &i.mask.sha256))
                    .collect::<Vec<_>>(),
            }),
            Stage::Features => json!({"gap_reduction": cfg.analysis.gap_reduction}),
            Stage::Feedback => json!({
                "seed": cfg.seed,
                "strategies": cfg.strategies,
                "provider": cfg.provider,
                "mock": cfg.mock,
            }),
            Stage::Evaluate => match &cfg.metrics {
                MetricsConfig::Judge { k } => json!({
                    "k": k,
                    "seed": cfg.seed,
                    "provider": cfg.provider,
                    "mock": cfg.mock,
                    "ground_truth": self.manifest.inputs.iter()
                        .map(|i| i.ground_truth.as_ref().map(|g| &g.sha256))
                        .collect::<Vec<_>>(),
                }),
                MetricsConfig::Ingest { path } => json!({
                    "ingest": sha256_file(path).ok(),
                }),
            },
            Stage::Analyze => json!({"analysis": cfg.analysis}),
        };
        let basis = json!({"stage": stage.as_str(), "config": part, "upstream": upstream});
        Ok(Some(sha256_hex(&serde_json::to_vec(&basis).expect("json"))))
    }

    fn check_dependencies(&self, stage: Stage) -> Result<()> {
        for dep in stage.dependencies(&self.config) {
            let Some(rec) = self.manifest.stages.get(dep.as_str()) else {
                return Err(Error::StageOrder(format!(
                    "{stage} needs {dep}, which has not been run"
                )));
            };
            match rec.status {
                StageStatus::Complete => {}
                StageStatus::Running => {
                    return Err(Error::StageOrder(format!(
                        "{stage} needs {dep}, which did not finish; rerun {dep}"
                    )))
                }
                StageStatus::Stale => {
                    return Err(Error::StageOrder(format!(
                        "{stage} needs {dep}, whose inputs changed; rerun {dep}"
                    )))
                }
            }
            if self.fingerprint(dep)?.as_deref() != Some(rec.fingerprint.as_str()) {
                return Err(Error::StageOrder(format!(
                    "{stage} needs {dep}, which is out of date for this configuration; rerun {dep}"
                )));
            }
        }
        Ok(())
    }

    fn clean(&self, stage: Stage) -> Result<()> {
        for rel in stage.owned_paths() {
            let p = self.dir.join(rel);
            if p.is_dir() {
                std::fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
                std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            } else if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(())
    }

    /// Run one stage unconditionally.
    pub fn execute(&mut self, stage: Stage) -> Result<()> {
        self.check_dependencies(stage)?;
        let fingerprint = self.fingerprint(stage)?.expect("dependencies complete");
        let previous = self.manifest.stages.get(stage.as_str()).cloned();
        if previous
            .as_ref()
            .is_some_and(|r| r.status == StageStatus::Running)
        {
            warn!("{stage}: partial output from an interrupted run found; cleaning and rerunning");
        }
        self.clean(stage)?;
        self.manifest.stages.insert(
            stage.as_str().to_string(),
            StageRecord {
                status: StageStatus::Running,
                fingerprint: fingerprint.clone(),
                digest: String::new(),
                outputs: BTreeMap::new(),
                summary: serde_json::Value::Null,
            },
        );
        self.manifest.save(&self.dir)?;

        info!("{stage}: running");
        let ctx = self.ctx();
        let summary = match stage {
            Stage::Synth => stages::synth(&ctx)?,
            Stage::Features => stages::features(&ctx)?,
            Stage::Feedback => stages::feedback(&ctx, self.synth_example())?,
            Stage::Evaluate => stages::evaluate(&ctx)?,
            Stage::Analyze => stages::analyze(&ctx)?,
        };
        let outputs = hash_outputs(&self.dir, &stage.owned_paths())?;
        let digest = outputs_digest(&outputs);
        let changed = previous.is_none_or(|p| p.digest != digest);
        self.manifest.stages.insert(
            stage.as_str().to_string(),
            StageRecord {
                status: StageStatus::Complete,
                fingerprint,
                digest,
                outputs,
                summary,
            },
        );
        if changed {
            self.invalidate_downstream(stage)?;
        }
        self.manifest.save(&self.dir)?;
        info!("{stage}: complete");
        Ok(())
    }

    /// Mark completed stages that consumed a now-different output as stale.
    fn invalidate_downstream(&mut self, changed: Stage) -> Result<()> {
        let mut dirty = vec![changed];
        for stage in Stage::ALL {
            if !stage
                .dependencies(&self.config)
                .iter()
                .any(|d| dirty.contains(d))
            {
                continue;
            }
            let current = self.fingerprint(stage)?;
            if let Some(rec) = self.manifest.stages.get_mut(stage.as_str()) {
                if rec.status == StageStatus::Complete
                    && current.as_deref() != Some(rec.fingerprint.as_str())
                {
                    info!("{stage}: upstream {changed} changed; marking stale");
                    rec.status = StageStatus::Stale;
                    dirty.push(stage);
                }
            }
        }
        Ok(())
    }

    /// Whether a stage can be skipped: complete, same inputs, files intact.
    pub fn is_up_to_date(&self, stage: Stage) -> Result<bool> {
        let Some(rec) = self.manifest.stages.get(stage.as_str()) else {
            return Ok(false);
        };
        Ok(rec.status == StageStatus::Complete
            && self.fingerprint(stage)?.as_deref() == Some(rec.fingerprint.as_str())
            && verify_outputs(&self.dir, rec))
    }

    /// Run a stage unless its recorded outputs are current.
    pub fn ensure(&mut self, stage: Stage) -> Result<StageOutcome> {
        if self.is_up_to_date(stage)? {
            info!("{stage}: up to date");
            return Ok(StageOutcome::UpToDate);
        }
        self.execute(stage)?;
        Ok(StageOutcome::Ran)
    }

    /// Every stage in order, resuming past completed ones.
    pub fn run_all(&mut self) -> Result<Vec<(Stage, StageOutcome)>> {
        Stage::ALL
            .into_iter()
            .map(|s| Ok((s, self.ensure(s)?)))
            .collect()
    }

    fn synth_example(&self) -> Option<String> {
        self.manifest
            .stages
            .get(Stage::Synth.as_str())?
            .summary
            .get("example")?
            .as_str()
            .map(str::to_string)
    }
}

/// Choices the pipeline makes where the method leaves room, recorded with
/// every run.
fn decisions(config: &ExperimentConfig) -> BTreeMap<String, String> {
    let mut d = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        d.insert(k.to_string(), v);
    };
    put(
        "objects",
        "each outer contour of a mask is one labeled object".into(),
    );
    put(
        "rendering",
        "one labeled PNG per object, reused by every strategy".into(),
    );
    put(
        "few_shot_example",
        "contour-traced labeling of the first object of the first image with one".into(),
    );
    put(
        "per_object_seed",
        "sha256(run seed, image_id, object_id)".into(),
    );
    put(
        "metrics_source",
        match &config.metrics {
            MetricsConfig::Judge { k } => {
                format!("{} judges, k = {k}", crate::eval::JUDGE_LABEL)
            }
            MetricsConfig::Ingest { .. } => "ingested".into(),
        },
    );
    put(
        "judge_context",
        "strategy task description followed by the ground-truth reference answer".into(),
    );
    put("dcor", "uncorrected V-statistic".into());
    put(
        "dunn_adjustment",
        serde_json::to_value(config.analysis.dunn_adjustment)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
    );
    put(
        "provider",
        if config.mock {
            "mock".into()
        } else {
            config.provider.model_name.clone()
        },
    );
    d
}

/// Read the manifest hash of an existing run directory.
pub fn manifest_hash(run_dir: &Path) -> Result<String> {
    sha256_file(&run_dir.join(MANIFEST_FILE))
}
