use image::{Rgb, RgbImage};
use ndarray::Ix2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{total_loss_with_grad, LossValue};
use super::optim::{Adam, OptimizerConfig};
use super::policy::TrainabilityPolicy;
use crate::autodiff::Tape;
use crate::frame::Frame;
use crate::segmentation::{BinaryMask, SegmentError, SegmentationModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub frame: Frame,
    pub prompt: String,
    pub mask: Option<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub epochs: usize,
    /// Seeds the per-epoch sample order.
    pub seed: u64,
    pub shuffle: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs: 100,
            seed: 0,
            shuffle: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample `{0}` has no ground-truth mask")]
    MissingMask(String),
    #[error("sample `{id}`: mask is {mask:?}, image is {image:?}")]
    MaskDimension {
        id: String,
        mask: (usize, usize),
        image: (usize, usize),
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub sample: String,
    #[serde(flatten)]
    pub loss: LossValue,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitReport {
    pub steps: Vec<StepRecord>,
}

impl FitReport {
    pub fn totals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss.total).collect()
    }

    /// Mean total loss of each epoch, in order.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for s in &self.steps {
            if sums.len() <= s.epoch {
                sums.resize(s.epoch + 1, (0.0, 0));
            }
            sums[s.epoch].0 += s.loss.total;
            sums[s.epoch].1 += 1;
        }
        sums.into_iter().map(|(sum, n)| sum / n as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,epoch,sample,dice,bce,total\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                s.step, s.epoch, s.sample, s.loss.dice, s.loss.bce, s.loss.total
            ));
        }
        out
    }
}

fn validate(samples: &[TrainSample], config: &FitConfig) -> Result<(), TrainError> {
    config.optimizer.validate().map_err(TrainError::InvalidConfig)?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for s in samples {
        let mask = s.mask.as_ref().ok_or_else(|| TrainError::MissingMask(s.frame.id.clone()))?;
        let image = (s.frame.height(), s.frame.width());
        if mask.dim() != image {
            return Err(TrainError::MaskDimension {
                id: s.frame.id.clone(),
                mask: mask.dim(),
                image,
            });
        }
    }
    Ok(())
}

/// One forward/backward pass on one sample and an update of every
/// trainable group. Returns the loss before the update.
pub fn train_step(
    model: &mut SegmentationModel,
    policy: &TrainabilityPolicy,
    optimizer: &mut Adam,
    sample: &TrainSample,
) -> Result<LossValue, TrainError> {
    let mask = sample
        .mask
        .as_ref()
        .ok_or_else(|| TrainError::MissingMask(sample.frame.id.clone()))?;
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &sample.frame, &sample.prompt)?;
    let logits = tape.value(out).view().into_dimensionality::<Ix2>().expect("logit grid").to_owned();
    let (loss, grad) = total_loss_with_grad(&logits, mask).map_err(|e| TrainError::MaskDimension {
        id: sample.frame.id.clone(),
        mask: e.target,
        image: e.prediction,
    })?;
    let scalar = tape.external_scalar(out, loss.total, grad.into_dyn());
    let grads = tape.backward(scalar).params(&tape);
    let trainable: Vec<_> = grads.iter().filter(|(k, _)| policy.is_trainable(k.group)).collect();
    let norm = trainable.iter().map(|(_, g)| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    let scale = match optimizer.config().max_grad_norm {
        Some(max) if norm > max => max / norm,
        _ => 1.0,
    };
    optimizer.begin_step();
    for (key, g) in trainable {
        let g = if scale == 1.0 { g.clone() } else { g * scale };
        let param = model
            .group_params_mut(key.group)
            .and_then(|set| set.get_mut(&key.name))
            .expect("tape parameters come from the model");
        optimizer.update(key, param, &g);
    }
    Ok(loss)
}

/// Runs `epochs × |samples|` single-sample steps and records each step's loss.
pub fn fit(
    model: &mut SegmentationModel,
    policy: &TrainabilityPolicy,
    samples: &[TrainSample],
    config: &FitConfig,
) -> Result<FitReport, TrainError> {
    validate(samples, config)?;
    let mut optimizer = Adam::new(config.optimizer.clone());
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = FitReport::default();
    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut order_rng);
        }
        for &i in &order {
            let loss = train_step(model, policy, &mut optimizer, &samples[i])?;
            report.steps.push(StepRecord {
                step: report.steps.len(),
                epoch,
                sample: samples[i].frame.id.clone(),
                loss,
            });
        }
    }
    Ok(report)
}

const COLORS: [(&str, [u8; 3]); 4] = [
    ("red", [220, 40, 40]),
    ("green", [40, 200, 60]),
    ("yellow", [230, 220, 40]),
    ("white", [245, 245, 245]),
];

/// Coloured rectangles on a dark noisy background, each with a prompt naming
/// its colour and rough position.
pub fn synthetic_samples(count: usize, height: usize, width: usize, seed: u64) -> Vec<TrainSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let rh = rng.random_range(height / 4..=height / 2);
            let rw = rng.random_range(width / 4..=width / 2);
            let top = rng.random_range(0..=height - rh);
            let left = rng.random_range(0..=width - rw);
            let mask = BinaryMask::rect(height, width, top, left, top + rh, left + rw);
            let (name, color) = COLORS[i % COLORS.len()];
            let mut rgb = RgbImage::new(width as u32, height as u32);
            for (x, y, px) in rgb.enumerate_pixels_mut() {
                *px = if mask.get(y as usize, x as usize) {
                    Rgb(color)
                } else {
                    let n: u8 = rng.random_range(0..40);
                    Rgb([20 + n, 30 + n / 2, 50 + n])
                };
            }
            let vertical = if top + rh / 2 < height / 2 { "upper" } else { "lower" };
            let horizontal = if left + rw / 2 < width / 2 { "left" } else { "right" };
            TrainSample {
                frame: Frame::new(format!("synthetic/{i:05}"), rgb),
                prompt: format!("A {name} box is moving in the {vertical} {horizontal} of the frame."),
                mask: Some(mask),
            }
        })
        .collect()
}
