//! Text-prompted segmentation: `(text, image) -> mask`.
//!
//! The pipeline runs, in order: image encoder, global feature aggregation,
//! broadcast concatenation, vision-language fusion with the text prompt,
//! prompt encoding, mask decoding, bilinear upsampling of the logits to the
//! image resolution, and thresholding at logit 0.

use ndarray::{Array2, Ix2};
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationError, FeatureAggregator, GLOBAL_FEATURE_DIM};
use crate::autodiff::{sigmoid, Tape, Var};
use crate::backend::{
    check_shape, BackendError, ImageEncoderBackend, MaskDecoderBackend, PromptEncoderBackend,
    VisionLanguageEncoderBackend,
};
use crate::frame::Frame;
use crate::params::{ParamGroup, ParamSet};

/// Foreground/background grid, `true` = moving object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BinaryMask(Array2<bool>);

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask(Array2::from_elem((height, width), false))
    }

    pub fn from_array(values: Array2<bool>) -> Self {
        BinaryMask(values)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        BinaryMask(Array2::from_shape_fn((height, width), |(y, x)| f(y, x)))
    }

    /// Axis-aligned rectangle covering rows `top..bottom` and columns `left..right`.
    pub fn rect(height: usize, width: usize, top: usize, left: usize, bottom: usize, right: usize) -> Self {
        Self::from_fn(height, width, |y, x| y >= top && y < bottom && x >= left && x < right)
    }

    pub fn height(&self) -> usize {
        self.0.nrows()
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.0[[y, x]]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.0[[y, x]] = value;
    }

    pub fn as_array(&self) -> &Array2<bool> {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&v| v)
    }
}

/// Real-valued logits at image resolution; probabilities are their logistic transform.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLogits(Array2<f64>);

impl MaskLogits {
    pub fn new(values: Array2<f64>) -> Result<Self, SegmentError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SegmentError::Backend(BackendError::NonFinite("mask logits")));
        }
        Ok(MaskLogits(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// Foreground iff logit > 0; a logit of exactly 0 is background.
pub fn binarize(logits: &MaskLogits) -> BinaryMask {
    BinaryMask(logits.0.mapv(|z| z > 0.0))
}

pub fn probabilities(logits: &MaskLogits) -> Array2<f64> {
    logits.0.mapv(sigmoid)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error("incompatible backend bundle: {0}")]
    ShapeMismatch(String),
    #[error("text prompt is empty")]
    EmptyPrompt,
}

/// Logits and their thresholded mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub logits: MaskLogits,
    pub mask: BinaryMask,
}

/// Anything that maps `(image, text prompt)` to a segmentation.
pub trait Segmenter: Send + Sync {
    fn segment(&self, frame: &Frame, prompt: &str) -> Result<Segmentation, SegmentError>;
}

/// Size of each parameter group, as listed for trainability decisions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub group: ParamGroup,
    pub tensors: usize,
    pub numel: usize,
}

/// The unvalidated parts of a [`SegmentationModel`], for swapping stages.
pub struct Stages {
    pub image_encoder: Box<dyn ImageEncoderBackend>,
    pub aggregator: FeatureAggregator,
    pub vision_language: Box<dyn VisionLanguageEncoderBackend>,
    pub prompt_encoder: Box<dyn PromptEncoderBackend>,
    pub mask_decoder: Box<dyn MaskDecoderBackend>,
}

/// The four model stages plus the aggregation network, validated for compatibility.
pub struct SegmentationModel {
    image_encoder: Box<dyn ImageEncoderBackend>,
    aggregator: FeatureAggregator,
    vision_language: Box<dyn VisionLanguageEncoderBackend>,
    prompt_encoder: Box<dyn PromptEncoderBackend>,
    mask_decoder: Box<dyn MaskDecoderBackend>,
}

impl std::fmt::Debug for SegmentationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegmentationModel")
            .field("embedding_channels", &self.image_encoder.embedding_channels())
            .field("feature_dim", &self.vision_language.feature_dim())
            .field("token_dim", &self.prompt_encoder.token_dim())
            .finish_non_exhaustive()
    }
}

impl SegmentationModel {
    /// Checks every declared interface width once; per-call checks only
    /// confirm that backends honour what they declared.
    pub fn assemble(
        image_encoder: Box<dyn ImageEncoderBackend>,
        aggregator: FeatureAggregator,
        vision_language: Box<dyn VisionLanguageEncoderBackend>,
        prompt_encoder: Box<dyn PromptEncoderBackend>,
        mask_decoder: Box<dyn MaskDecoderBackend>,
    ) -> Result<Self, SegmentError> {
        let c = image_encoder.embedding_channels();
        let mismatch = |what: &str, expected: usize, found: usize| {
            Err(SegmentError::ShapeMismatch(format!("{what}: expected {expected}, found {found}")))
        };
        if aggregator.config().in_channels != c {
            return mismatch("aggregator input channels", c, aggregator.config().in_channels);
        }
        if vision_language.input_channels() != c + GLOBAL_FEATURE_DIM {
            return mismatch(
                "vision-language input channels",
                c + GLOBAL_FEATURE_DIM,
                vision_language.input_channels(),
            );
        }
        if prompt_encoder.feature_dim() != vision_language.feature_dim() {
            return mismatch(
                "prompt encoder feature width",
                vision_language.feature_dim(),
                prompt_encoder.feature_dim(),
            );
        }
        if prompt_encoder.dense_channels() != c {
            return mismatch("dense prompt channels", c, prompt_encoder.dense_channels());
        }
        if mask_decoder.embedding_channels() != c {
            return mismatch("decoder embedding channels", c, mask_decoder.embedding_channels());
        }
        if mask_decoder.token_dim() != prompt_encoder.token_dim() {
            return mismatch("decoder token width", prompt_encoder.token_dim(), mask_decoder.token_dim());
        }
        Ok(SegmentationModel {
            image_encoder,
            aggregator,
            vision_language,
            prompt_encoder,
            mask_decoder,
        })
    }

    pub fn from_stages(stages: Stages) -> Result<Self, SegmentError> {
        Self::assemble(
            stages.image_encoder,
            stages.aggregator,
            stages.vision_language,
            stages.prompt_encoder,
            stages.mask_decoder,
        )
    }

    pub fn into_stages(self) -> Stages {
        Stages {
            image_encoder: self.image_encoder,
            aggregator: self.aggregator,
            vision_language: self.vision_language,
            prompt_encoder: self.prompt_encoder,
            mask_decoder: self.mask_decoder,
        }
    }

    pub fn aggregator(&self) -> &FeatureAggregator {
        &self.aggregator
    }

    /// Records the full forward pass on `tape` and returns `[H, W]` logits.
    pub fn forward(&self, tape: &mut Tape, frame: &Frame, prompt: &str) -> Result<Var, SegmentError> {
        if prompt.trim().is_empty() {
            return Err(SegmentError::EmptyPrompt);
        }
        let (h, w) = (frame.height(), frame.width());
        let c = self.image_encoder.embedding_channels();
        let (eh, ew) = self.image_encoder.embedding_size(h, w);

        let embedding = self.image_encoder.encode(tape, frame)?;
        check_shape(tape, embedding, "image encoder", &[c, eh, ew])?;

        let global = self.aggregator.forward(tape, embedding)?;
        let enhanced = tape.concat_broadcast(embedding, global);

        let features = self.vision_language.fuse(tape, enhanced, prompt)?;
        let d = self.vision_language.feature_dim();
        let fshape = tape.shape(features).to_vec();
        if fshape.len() != 2 || fshape[0] == 0 {
            return Err(BackendError::Shape {
                stage: "vision-language encoder",
                expected: format!("[L, {d}]"),
                found: format!("{fshape:?}"),
            }
            .into());
        }
        check_shape(tape, features, "vision-language encoder", &[fshape[0], d])?;

        let prompts = self.prompt_encoder.encode_prompt(tape, features)?;
        let e = self.prompt_encoder.token_dim();
        let tokens = tape.shape(prompts.sparse).first().copied().unwrap_or(0).max(1);
        check_shape(tape, prompts.sparse, "prompt encoder (sparse)", &[tokens, e])?;
        check_shape(tape, prompts.dense, "prompt encoder (dense)", &[c])?;

        let low = self.mask_decoder.decode(tape, embedding, prompts)?;
        let (oh, ow) = self.mask_decoder.output_size(eh, ew);
        check_shape(tape, low, "mask decoder", &[oh, ow])?;

        Ok(tape.resize_bilinear(low, h, w))
    }

    /// Parameters of one group, if that stage has any.
    pub fn group_params(&self, group: ParamGroup) -> Option<&ParamSet> {
        match group {
            ParamGroup::ImageEncoder => self.image_encoder.parameters(),
            ParamGroup::FeatureAggregation => Some(self.aggregator.params()),
            ParamGroup::VisionLanguageEncoder => self.vision_language.parameters(),
            ParamGroup::PromptEncoder => self.prompt_encoder.parameters(),
            ParamGroup::MaskDecoder => self.mask_decoder.parameters(),
        }
    }

    pub fn group_params_mut(&mut self, group: ParamGroup) -> Option<&mut ParamSet> {
        match group {
            ParamGroup::ImageEncoder => self.image_encoder.parameters_mut(),
            ParamGroup::FeatureAggregation => Some(self.aggregator.params_mut()),
            ParamGroup::VisionLanguageEncoder => self.vision_language.parameters_mut(),
            ParamGroup::PromptEncoder => self.prompt_encoder.parameters_mut(),
            ParamGroup::MaskDecoder => self.mask_decoder.parameters_mut(),
        }
    }

    /// Every parameter group of the model, with sizes (zero for stages
    /// without learned tensors).
    pub fn registry(&self) -> Vec<GroupInfo> {
        ParamGroup::ALL
            .into_iter()
            .map(|group| {
                let set = self.group_params(group);
                GroupInfo {
                    group,
                    tensors: set.map_or(0, ParamSet::len),
                    numel: set.map_or(0, ParamSet::numel),
                }
            })
            .collect()
    }
}

impl Segmenter for SegmentationModel {
    fn segment(&self, frame: &Frame, prompt: &str) -> Result<Segmentation, SegmentError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, frame, prompt)?;
        let logits = MaskLogits::new(
            tape.value(out)
                .clone()
                .into_dimensionality::<Ix2>()
                .expect("resize yields a grid"),
        )?;
        let mask = binarize(&logits);
        Ok(Segmentation { logits, mask })
    }
}
