use std::collections::BTreeMap;
use std::fs;

use imos::backend::tiny::tiny_segmentation_stack;
use imos::dataset::{read_image, read_mask};
use imos::frame::Frame;
use imos::training::checkpoint::{save_checkpoint, CheckpointMeta};
use imos::training::fit::{fit, synthetic_samples, FitConfig, TrainSample};
use imos::training::policy::build_policy;

use crate::config::{RunConfig, SegmenterKind, TrainSource};
use crate::error::{exit, io_error, CliError};
use crate::evaluate::load_samples;
use crate::output::Outputs;

pub(crate) const CHECKPOINT_DIR: &str = "checkpoint";
pub(crate) const LOSS_CSV: &str = "loss.csv";

fn training_samples(config: &RunConfig) -> Result<Vec<TrainSample>, CliError> {
    let t = &config.training;
    if t.source == TrainSource::Synthetic {
        let s = &t.synthetic;
        if s.count == 0 || s.height < 4 || s.width < 4 {
            return Err(CliError::Config("synthetic set needs count ≥ 1 and images of at least 4×4".into()));
        }
        return Ok(synthetic_samples(s.count, s.height, s.width, s.seed));
    }
    let prompts: BTreeMap<String, String> = match &t.prompts_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_error(path))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: expected a JSON object of strings: {e}", path.display())))?
        }
        None => BTreeMap::new(),
    };
    load_samples(config)?
        .into_iter()
        .map(|s| {
            let mask = s.mask_path.as_deref().map(read_mask).transpose()?;
            Ok(TrainSample {
                prompt: prompts.get(&s.image_id).cloned().unwrap_or_else(|| t.default_prompt.clone()),
                frame: Frame::new(s.image_id, read_image(&s.image_path)?),
                mask,
            })
        })
        .collect()
}

pub(crate) fn run(config: &RunConfig) -> Result<u8, CliError> {
    if config.segmenter.kind != SegmenterKind::Tiny {
        return Err(CliError::Config("only the tiny segmenter can be trained".into()));
    }
    let samples = training_samples(config)?;
    let mut model = tiny_segmentation_stack(&config.segmenter.tiny, config.seed);
    let policy = build_policy(model.registry().iter().map(|g| g.group.as_str()))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let t = &config.training;
    let fit_config = FitConfig {
        epochs: t.epochs,
        seed: t.shuffle_seed,
        shuffle: t.shuffle,
        optimizer: t.optimizer.clone(),
    };
    let report = fit(&mut model, &policy, &samples, &fit_config)?;

    let meta = CheckpointMeta {
        seed: config.seed,
        epochs: t.epochs,
        steps: report.steps.len(),
        tiny: config.segmenter.tiny.clone(),
        optimizer: t.optimizer.clone(),
    };
    let mut out = Outputs::default();
    out.add(LOSS_CSV, report.to_csv());
    fs::create_dir_all(&config.output).map_err(io_error(&config.output))?;
    save_checkpoint(&config.output.join(CHECKPOINT_DIR), &model, &policy, &meta)?;
    out.commit(config)?;

    let means = report.epoch_means();
    match (means.first(), means.last()) {
        (Some(first), Some(last)) => println!(
            "{} steps over {} epochs; mean loss {first:.4} -> {last:.4}",
            report.steps.len(),
            means.len()
        ),
        _ => println!("0 steps; checkpoint holds the initial weights"),
    }
    Ok(exit::OK)
}
