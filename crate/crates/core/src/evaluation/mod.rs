//! Region similarity J, the F-measure in region and boundary variants, and a
//! benchmark harness aggregating them per sequence and per category.

mod metrics;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::{read_mask, MaskIoError, Sample};
use crate::segmentation::BinaryMask;

pub use metrics::{boundary, default_tolerance, erode, f_measure, jaccard, DimensionMismatch, FVariant, FrameScore};
pub use report::{CategorySummary, EvalReport, FrameResult, Means, SequenceSummary};

pub type PredictError = Box<dyn std::error::Error + Send + Sync>;

/// Produces a mask for a dataset sample. Called concurrently from several
/// threads.
pub trait Predictor: Sync {
    fn predict(&self, sample: &Sample) -> Result<BinaryMask, PredictError>;
}

impl<F> Predictor for F
where
    F: Fn(&Sample) -> Result<BinaryMask, PredictError> + Sync,
{
    fn predict(&self, sample: &Sample) -> Result<BinaryMask, PredictError> {
        self(sample)
    }
}

fn ground_truth(sample: &Sample) -> Result<BinaryMask, PredictError> {
    let path = sample
        .mask_path
        .as_ref()
        .ok_or_else(|| format!("`{}` has no annotation", sample.image_id))?;
    Ok(read_mask(path)?)
}

/// Returns the annotation itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, sample: &Sample) -> Result<BinaryMask, PredictError> {
        ground_truth(sample)
    }
}

/// Returns the annotation shrunk by one 3×3 erosion.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErodedOraclePredictor;

impl Predictor for ErodedOraclePredictor {
    fn predict(&self, sample: &Sample) -> Result<BinaryMask, PredictError> {
        Ok(erode(&ground_truth(sample)?))
    }
}

/// Sequence name to category name.
pub type CategoryMap = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Variant behind the headline `f` and `jf`.
    pub f_variant: FVariant,
    /// Boundary tolerance; `None` uses [`default_tolerance`] per frame.
    pub tolerance_px: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            f_variant: FVariant::Boundary,
            tolerance_px: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyDataset,
    #[error("`{0}` has no ground-truth mask")]
    MissingGroundTruth(String),
    #[error("sequence `{0}` has no category in the grouping")]
    UnmappedSequence(String),
    #[error(transparent)]
    Mask(#[from] MaskIoError),
    #[error("`{id}`: {source}")]
    Dimension {
        id: String,
        #[source]
        source: DimensionMismatch,
    },
    #[error("predictor failed on `{id}`: {source}")]
    Predictor {
        id: String,
        #[source]
        source: PredictError,
    },
}

/// Scores one prediction against its annotation.
pub fn score_frame(
    sample: &Sample,
    category: Option<String>,
    gt: &BinaryMask,
    pred: &BinaryMask,
    options: EvalOptions,
) -> Result<FrameResult, DimensionMismatch> {
    let tolerance = options.tolerance_px.unwrap_or_else(|| default_tolerance(gt.height(), gt.width()));
    Ok(FrameResult::new(
        sample.image_id.clone(),
        sample.sequence.clone(),
        category,
        tolerance,
        jaccard(gt, pred)?,
        f_measure(gt, pred, FVariant::Region, tolerance)?,
        f_measure(gt, pred, FVariant::Boundary, tolerance)?,
        options.f_variant,
    ))
}

/// Scores every sample in parallel and aggregates the results.
///
/// Categories come from `grouping` when given (every sequence must be
/// mapped), else from the samples themselves. Frames appear in sample order.
pub fn evaluate_dataset(
    samples: &[Sample],
    predictor: &dyn Predictor,
    grouping: Option<&CategoryMap>,
    options: EvalOptions,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut categories = Vec::with_capacity(samples.len());
    for s in samples {
        if s.mask_path.is_none() {
            return Err(EvalError::MissingGroundTruth(s.image_id.clone()));
        }
        categories.push(match grouping {
            Some(map) => Some(
                map.get(&s.sequence)
                    .cloned()
                    .ok_or_else(|| EvalError::UnmappedSequence(s.sequence.clone()))?,
            ),
            None => s.category.clone(),
        });
    }
    if categories.iter().any(Option::is_some) {
        if let Some(i) = categories.iter().position(Option::is_none) {
            return Err(EvalError::UnmappedSequence(samples[i].sequence.clone()));
        }
    }

    let results: Vec<Result<FrameResult, EvalError>> = samples
        .par_iter()
        .zip(categories)
        .map(|(s, category)| {
            let gt = read_mask(s.mask_path.as_ref().expect("checked above"))?;
            let pred = predictor.predict(s).map_err(|source| EvalError::Predictor {
                id: s.image_id.clone(),
                source,
            })?;
            score_frame(s, category, &gt, &pred, options).map_err(|source| EvalError::Dimension {
                id: s.image_id.clone(),
                source,
            })
        })
        .collect();
    let frames = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_frames(frames, options.f_variant))
}
