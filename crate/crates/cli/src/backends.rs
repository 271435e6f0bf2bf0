use std::fs;
use std::time::Duration;

use imos::backend::oracle::{oracle_segmentation_stack, GroundTruthLookup};
use imos::backend::remote::RemoteReasoner;
use imos::backend::scripted::ScriptedReasoner;
use imos::backend::tiny::tiny_segmentation_stack;
use imos::backend::MultimodalReasoner;
use imos::segmentation::SegmentationModel;
use imos::training::checkpoint::{apply_checkpoint, load_checkpoint};

use crate::config::{ReasonerKind, RunConfig, SegmenterKind};
use crate::error::{io_error, CliError};

/// Builds a fresh reasoner for each loop run.
pub(crate) struct ReasonerFactory {
    kind: ReasonerKind,
    script: Vec<String>,
    endpoint: String,
    timeout: Duration,
}

impl ReasonerFactory {
    pub(crate) fn new(config: &RunConfig) -> Result<Self, CliError> {
        config.validate_reasoner()?;
        let r = &config.reasoner;
        let script = match &r.script_file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_error(path))?;
                serde_json::from_str::<Vec<String>>(&text)
                    .map_err(|e| CliError::Config(format!("{}: expected a JSON array of strings: {e}", path.display())))?
            }
            None => r.script.clone(),
        };
        if r.kind == ReasonerKind::Scripted && script.is_empty() {
            return Err(CliError::Config("reasoner script is empty".into()));
        }
        Ok(ReasonerFactory {
            kind: r.kind,
            script,
            endpoint: r.endpoint.clone().unwrap_or_default(),
            timeout: Duration::from_secs(r.timeout_secs),
        })
    }

    pub(crate) fn make(&self) -> Result<Box<dyn MultimodalReasoner>, CliError> {
        Ok(match self.kind {
            ReasonerKind::Scripted => Box::new(ScriptedReasoner::new(self.script.clone())?),
            ReasonerKind::Remote => Box::new(RemoteReasoner::new(self.endpoint.clone(), self.timeout)?),
        })
    }
}

/// The configured segmentation stack. `lookup` feeds the oracle.
pub(crate) fn segmenter(config: &RunConfig, lookup: impl FnOnce() -> Result<GroundTruthLookup, CliError>) -> Result<SegmentationModel, CliError> {
    match config.segmenter.kind {
        SegmenterKind::Oracle => Ok(oracle_segmentation_stack(lookup()?)),
        SegmenterKind::Tiny => match &config.segmenter.checkpoint {
            Some(dir) => {
                let ckpt = load_checkpoint(dir)?;
                let mut model = tiny_segmentation_stack(&ckpt.manifest.tiny, ckpt.manifest.seed);
                apply_checkpoint(&mut model, &ckpt)?;
                Ok(model)
            }
            None => Ok(tiny_segmentation_stack(&config.segmenter.tiny, config.seed)),
        },
    }
}
