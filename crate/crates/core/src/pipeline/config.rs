use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contour::DEFAULT_MIN_PERIMETER;
use crate::error::{Error, Result};
use crate::features::GapReduction;
use crate::llm::ProviderConfig;
use crate::prompt::PromptStrategy;
use crate::render::DEFAULT_STROKE_WIDTH;
use crate::stats::Adjustment;
use crate::synth::ResampleConfig;

pub const DEFAULT_HISTOGRAM_BINS: usize = 20;
pub const DEFAULT_JUDGE_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub stroke_width: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            stroke_width: DEFAULT_STROKE_WIDTH,
        }
    }
}

/// Where the metrics table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum MetricsConfig {
    /// Built-in simplified judges; `k` questions for answer relevancy.
    Judge {
        #[serde(default = "default_k")]
        k: usize,
    },
    /// Externally computed metrics CSV.
    Ingest { path: PathBuf },
}

fn default_k() -> usize {
    DEFAULT_JUDGE_K
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig::Judge { k: DEFAULT_JUDGE_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub dunn_adjustment: Adjustment,
    pub histogram_bins: usize,
    pub gap_reduction: GapReduction,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            dunn_adjustment: Adjustment::Bonferroni,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            gap_reduction: GapReduction::Mean,
        }
    }
}

/// Everything a run needs. Relative paths in a config file resolve against
/// the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Holds `images/`, `masks/` and `ground_truth/`.
    pub dataset_dir: PathBuf,
    pub runs_dir: PathBuf,
    pub seed: u64,
    /// `seed` in here is ignored; per-object seeds derive from the run seed.
    pub resample: ResampleConfig,
    pub min_perimeter: f64,
    pub render: RenderConfig,
    pub strategies: Vec<PromptStrategy>,
    pub provider: ProviderConfig,
    /// Use the offline mock provider and embedder.
    pub mock: bool,
    pub metrics: MetricsConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("dataset"),
            runs_dir: PathBuf::from("runs"),
            seed: 0,
            resample: ResampleConfig::default(),
            min_perimeter: DEFAULT_MIN_PERIMETER,
            render: RenderConfig::default(),
            strategies: PromptStrategy::ALL.to_vec(),
            provider: ProviderConfig::default(),
            mock: false,
            metrics: MetricsConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset_dir);
        fix(&mut self.runs_dir);
        if let MetricsConfig::Ingest { path } = &mut self.metrics {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resample.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })?;
        if !(self.min_perimeter >= 0.0 && self.min_perimeter.is_finite()) {
            return Err(Error::Config(format!(
                "min_perimeter must be finite and >= 0, got {}",
                self.min_perimeter
            )));
        }
        if self.render.stroke_width == 0 {
            return Err(Error::Config("render.stroke_width must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        let mut seen = self.strategies.clone();
        seen.sort_by_key(|s| s.as_str());
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return Err(Error::Config("strategies contain duplicates".into()));
        }
        self.provider
            .validate()
            .map_err(|m| Error::Config(format!("provider: {m}")))?;
        if let MetricsConfig::Judge { k } = self.metrics {
            if k == 0 {
                return Err(Error::Config("metrics.k must be >= 1".into()));
            }
        }
        if self.analysis.histogram_bins == 0 {
            return Err(Error::Config("analysis.histogram_bins must be >= 1".into()));
        }
        if !self.dataset_dir.is_dir() {
            return Err(Error::Config(format!(
                "dataset directory {} does not exist",
                self.dataset_dir.display()
            )));
        }
        Ok(())
    }

    /// Canonical JSON recorded in the manifest. `runs_dir` is left out so a
    /// run can be moved or reproduced elsewhere with the same manifest.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("runs_dir");
        }
        v
    }
}
