//! Run configuration: one TOML file, overridden by command-line flags.
//!
//! Relative paths in a file are taken relative to that file's directory;
//! relative paths given as flags are taken relative to the working
//! directory. Every run writes the fully resolved configuration, with
//! absolute paths, as `config.resolved.toml` next to its outputs.
//!
//! ```toml
//! seed = 0
//! output = "runs/a"
//!
//! [reasoner]
//! kind = "scripted"            # scripted | remote
//! script = ["Moving object: a red ball.", "Correct. ..."]
//! # script_file = "replies.json"   (JSON array of strings)
//! # endpoint = "http://127.0.0.1:8080/reason"
//! timeout_secs = 60
//!
//! [segmenter]
//! kind = "oracle"              # oracle | tiny
//! ground_truth = "gt.png"      # oracle, `segment` only
//! # checkpoint = "ckpt"         tiny only
//!
//! [loop]
//! max_iterations = 5
//! overlay_color = [0, 0, 255]
//! overlay_alpha = 0.5
//!
//! [segment]
//! image = "frame.jpg"
//!
//! [data]
//! root = "DAVIS"
//! layout = "davis"             # davis | fbms | segtrack | ytobj | flat
//! include = "train.txt"
//! categories = { bear = "animal" }
//!
//! [evaluation]
//! predictor = "loop"           # loop | oracle | eroded_oracle
//! f_variant = "boundary"       # boundary | region
//! csv = true
//!
//! [training]
//! source = "dataset"           # dataset | synthetic
//! epochs = 100
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use imos::backend::tiny::TinyConfig;
use imos::dataset::Layout;
use imos::evaluation::FVariant;
use imos::thinking::LoopConfig;
use imos::training::optim::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SNAPSHOT_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds model initialisation.
    pub seed: u64,
    pub output: PathBuf,
    pub reasoner: ReasonerConfig,
    pub segmenter: SegmenterConfig,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
    pub segment: SegmentConfig,
    pub data: DataConfig,
    pub evaluation: EvaluationConfig,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: PathBuf::from("imos-out"),
            reasoner: ReasonerConfig::default(),
            segmenter: SegmenterConfig::default(),
            loop_config: LoopConfig::default(),
            segment: SegmentConfig::default(),
            data: DataConfig::default(),
            evaluation: EvaluationConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerKind {
    #[default]
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReasonerConfig {
    pub kind: ReasonerKind,
    /// Replies returned in order.
    pub script: Vec<String>,
    /// JSON array of replies; used instead of `script`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            kind: ReasonerKind::Scripted,
            script: Vec::new(),
            script_file: None,
            endpoint: None,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterKind {
    Oracle,
    #[default]
    Tiny,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterConfig {
    pub kind: SegmenterKind,
    /// Annotation the oracle reproduces for `segment`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Trained weights for the tiny stack; its manifest fixes the tiny shape and seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub tiny: TinyConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub layout: Layout,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include: Option<PathBuf>,
    /// Sequence to category; enables per-category means.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<String, String>,
    /// JSON object with the same meaning as `categories`, merged into it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories_file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: None,
            layout: Layout::Davis,
            include: None,
            categories: BTreeMap::new(),
            categories_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PredictorKind {
    /// The full reasoning loop with the configured reasoner and segmenter.
    #[default]
    Loop,
    /// The annotation itself.
    Oracle,
    /// The annotation after one 3×3 erosion.
    ErodedOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub predictor: PredictorKind,
    pub f_variant: FVariant,
    /// Boundary match radius; per-frame default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance_px: Option<usize>,
    pub csv: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            predictor: PredictorKind::Loop,
            f_variant: FVariant::Boundary,
            tolerance_px: None,
            csv: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TrainSource {
    #[default]
    Dataset,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            count: 4,
            height: 32,
            width: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub source: TrainSource,
    pub epochs: usize,
    pub shuffle: bool,
    pub shuffle_seed: u64,
    /// JSON object from image id to text prompt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_file: Option<PathBuf>,
    /// Prompt for images absent from `prompts_file`.
    pub default_prompt: String,
    pub optimizer: OptimizerConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            source: TrainSource::Dataset,
            epochs: 100,
            shuffle: true,
            shuffle_seed: 0,
            prompts_file: None,
            default_prompt: "the moving object".into(),
            optimizer: OptimizerConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses a config file and anchors its relative paths at the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let dir = std::path::absolute(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        config.anchor(&dir);
        Ok(config)
    }

    /// Makes every relative path absolute against `base`.
    pub fn anchor(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| *p = absolute(base, p);
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                *p = absolute(base, p);
            }
        };
        fix(&mut self.output);
        fix_opt(&mut self.reasoner.script_file);
        fix_opt(&mut self.segmenter.ground_truth);
        fix_opt(&mut self.segmenter.checkpoint);
        fix_opt(&mut self.segment.image);
        fix_opt(&mut self.data.root);
        fix_opt(&mut self.data.include);
        fix_opt(&mut self.data.categories_file);
        fix_opt(&mut self.training.prompts_file);
    }

    /// Checks the settings every command relies on.
    pub fn validate(&self) -> Result<(), CliError> {
        self.loop_config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.training.optimizer.validate().map_err(CliError::Config)?;
        Ok(())
    }

    /// Checks the reasoner settings; only commands that call the reasoner need them.
    pub fn validate_reasoner(&self) -> Result<(), CliError> {
        let r = &self.reasoner;
        match r.kind {
            ReasonerKind::Scripted if r.script.is_empty() == r.script_file.is_none() => Err(CliError::Config(
                "scripted reasoner needs exactly one of `script` or `script_file`".into(),
            )),
            ReasonerKind::Remote if r.endpoint.is_none() => {
                Err(CliError::Config("remote reasoner needs `endpoint`".into()))
            }
            ReasonerKind::Remote if r.timeout_secs == 0 => {
                Err(CliError::Config("`timeout_secs` must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }
}
