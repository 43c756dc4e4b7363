//! Run configuration: defaults, overridden by a JSON file, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bandgauge::classifier::{load_params, BaselineConfig};
use bandgauge::datagen::DatasetConfig;
use bandgauge::pipeline::{Classifier, DEFAULT_SCORE_PATCH};
use bandgauge::subjective::OutlierConfig;
use bandgauge::{FreqConfig, PoolMode, ScoreConfig, TrainConfig};
use clap::Args;
use serde::{Deserialize, Serialize};

pub const THREADS_ENV: &str = "BANDGAUGE_THREADS";
pub const DEFAULT_TRAIN_PATCH: usize = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierChoice {
    #[default]
    Baseline,
    Model(PathBuf),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Unset means 235 for scoring and 64 for training and generation.
    pub patch_size: Option<usize>,
    pub p_percent: f64,
    pub gamma: f64,
    pub pool: PoolMode,
    pub classifier: ClassifierChoice,
    pub baseline: BaselineConfig,
    pub freq: FreqConfig,
    pub seed: u64,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    pub outlier: OutlierConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let score = ScoreConfig::default();
        Self {
            patch_size: None,
            p_percent: score.p_percent,
            gamma: score.gamma,
            pool: score.pool,
            classifier: ClassifierChoice::Baseline,
            baseline: BaselineConfig::default(),
            freq: score.freq,
            seed: 0,
            threads: None,
            output: None,
            train: TrainConfig::default(),
            dataset: DatasetConfig::default(),
            outlier: OutlierConfig::default(),
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON configuration file; flags take precedence over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [env: BANDGAUGE_THREADS]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file or directory, depending on the subcommand
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Patch size N
    #[arg(long, global = true)]
    pub patch_size: Option<usize>,
    /// Percentage of worst pixels pooled per patch
    #[arg(long, global = true)]
    pub p_percent: Option<f64>,
    /// Exponent of the spatial-frequency mask
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Pooling mode: per_patch or global
    #[arg(long, global = true, value_parser = parse_pool)]
    pub pool: Option<PoolMode>,
    /// Trained model container; the rule-based classifier is used otherwise
    #[arg(long, global = true, conflicts_with = "baseline")]
    pub model: Option<PathBuf>,
    /// Force the rule-based classifier
    #[arg(long, global = true)]
    pub baseline: bool,
    /// Log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

fn parse_pool(s: &str) -> Result<PoolMode, String> {
    match s {
        "per_patch" | "per-patch" => Ok(PoolMode::PerPatch),
        "global" => Ok(PoolMode::Global),
        _ => Err(format!("unknown pooling mode `{s}` (per_patch, global)")),
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.patch_size {
            cfg.patch_size = Some(v);
        }
        if let Some(v) = args.p_percent {
            cfg.p_percent = v;
        }
        if let Some(v) = args.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = args.pool {
            cfg.pool = v;
        }
        if let Some(v) = &args.output {
            cfg.output = Some(v.clone());
        }
        if let Some(v) = &args.model {
            cfg.classifier = ClassifierChoice::Model(v.clone());
        }
        if args.baseline {
            cfg.classifier = ClassifierChoice::Baseline;
        }
        let env_threads = std::env::var(THREADS_ENV).ok().filter(|s| !s.is_empty());
        if let Some(v) = args.threads {
            cfg.threads = Some(v);
        } else if let Some(s) = env_threads {
            cfg.threads = Some(s.parse().with_context(|| format!("{THREADS_ENV}={s} is not a thread count"))?);
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            patch_size: self.patch_size.unwrap_or(DEFAULT_SCORE_PATCH),
            p_percent: self.p_percent,
            gamma: self.gamma,
            pool: self.pool,
            freq: self.freq,
        }
    }

    /// Loads the model if one is configured. A model fixes the scoring patch
    /// size unless one was given explicitly.
    pub fn classifier(&self) -> Result<(Classifier, ScoreConfig)> {
        let mut score = self.score_config();
        let classifier = match &self.classifier {
            ClassifierChoice::Baseline => Classifier::Baseline(self.baseline),
            ClassifierChoice::Model(path) => {
                let params = load_params(path).with_context(|| format!("loading model {}", path.display()))?;
                if self.patch_size.is_none() {
                    score.patch_size = params.meta.patch_size;
                }
                Classifier::Model(Box::new(params))
            }
        };
        Ok((classifier, score))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            seed: self.seed,
            patch_size: self.patch_size.unwrap_or(DEFAULT_TRAIN_PATCH),
            pws: self.freq.pws,
            ..self.dataset.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_method() {
        let c = RunConfig::default();
        assert_eq!((c.p_percent, c.gamma), (80.0, 1.5));
        assert_eq!(c.score_config().patch_size, 235);
        assert_eq!(c.dataset_config().patch_size, 64);
        let t = c.train_config();
        assert_eq!((t.learning_rate, t.batch_size, t.epochs), (1e-4, 32, 25));
        assert_eq!(t.split, [0.8, 0.1, 0.1]);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"p_percent": 50, "gamma": 2.0, "classifier": {"model": "m.bgdn"}}"#).unwrap();
        let args = CommonArgs {
            config: Some(path),
            gamma: Some(3.0),
            ..Default::default()
        };
        let c = RunConfig::resolve(&args).unwrap();
        assert_eq!((c.p_percent, c.gamma), (50.0, 3.0));
        assert_eq!(c.classifier, ClassifierChoice::Model("m.bgdn".into()));
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"p_precent": 50}"#).unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }
}
