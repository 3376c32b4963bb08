use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use sketchlab_core::pipeline::{ExperimentConfig, Run, Stage, StageOutcome};
use sketchlab_core::Error;

#[derive(Parser)]
#[command(
    name = "sketchlab",
    version,
    about = "Synthetic sketch labelings and LLM feedback evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace masks, synthesize strokes and render labeled images.
    Synth(Common),
    /// Compute sketch-recognition features for every labeling.
    Features(Common),
    /// Build prompts and collect feedback for every strategy.
    Feedback(Common),
    /// Produce metrics.csv by judging feedback or ingesting a table.
    Evaluate(Common),
    /// Correlations, normality, Kruskal-Wallis, Dunn, medians, histograms.
    Analyze(Common),
    /// Every stage in order, skipping those already up to date.
    RunAll(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run directory name under runs_dir; derived from the config if absent.
    #[arg(long)]
    run: Option<String>,
    /// Offline deterministic provider and embedder.
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_perimeter: Option<f64>,
    #[arg(long)]
    variance: Option<f64>,
    #[arg(long)]
    strokes_per_contour: Option<usize>,
    #[arg(long)]
    remove_cnt: Option<usize>,
    /// Fixed resample count; turns off the path-length rule.
    #[arg(long, conflicts_with = "optimal_n")]
    resample_cnt: Option<usize>,
    /// Choose the resample count from path length.
    #[arg(long)]
    optimal_n: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    max_parallel: Option<usize>,
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.mock {
            cfg.mock = true;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.min_perimeter {
            cfg.min_perimeter = v;
        }
        if let Some(v) = self.variance {
            cfg.resample.variance = v;
        }
        if let Some(v) = self.strokes_per_contour {
            cfg.resample.strokes_per_contour = v;
        }
        if let Some(v) = self.remove_cnt {
            cfg.resample.remove_cnt = v;
        }
        if let Some(v) = self.resample_cnt {
            cfg.resample.use_optimal_n = false;
            cfg.resample.resample_cnt = Some(v);
        }
        if self.optimal_n {
            cfg.resample.use_optimal_n = true;
        }
        if let Some(m) = &self.model {
            cfg.provider.model_name = m.clone();
        }
        if let Some(e) = &self.endpoint {
            cfg.provider.endpoint_url = e.clone();
        }
        if let Some(p) = self.max_parallel {
            cfg.provider.max_parallel = p;
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (common, stage) = match &cli.command {
        Command::Synth(c) => (c, Some(Stage::Synth)),
        Command::Features(c) => (c, Some(Stage::Features)),
        Command::Feedback(c) => (c, Some(Stage::Feedback)),
        Command::Evaluate(c) => (c, Some(Stage::Evaluate)),
        Command::Analyze(c) => (c, Some(Stage::Analyze)),
        Command::RunAll(c) => (c, None),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    common.apply(&mut cfg);
    let mut run = Run::open(cfg, common.run.as_deref())?;
    match stage {
        Some(s) => {
            run.execute(s)?;
            println!("{s}: done");
        }
        None => {
            for (s, outcome) in run.run_all()? {
                let what = match outcome {
                    StageOutcome::Ran => "done",
                    StageOutcome::UpToDate => "up to date",
                };
                println!("{s}: {what}");
            }
        }
    }
    println!("run {} at {}", run.run_id, run.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
