//! Model boundaries of the pipeline.
//!
//! Five interfaces separate the pipeline from the models behind it: the
//! multimodal reasoner that writes and judges text prompts, and the four
//! stages of the segmentation network (image encoder, vision-language
//! encoder, prompt encoder, mask decoder). Segmentation stages compute on a
//! [`Tape`] so the same code path serves inference and training; backends
//! without parameters simply emit constants.
//!
//! Implementations shipped here:
//! - [`scripted`]: a reasoner that replays canned replies.
//! - [`oracle`]: a segmentation stack that reproduces ground-truth masks.
//! - [`tiny`]: small randomly initialised networks for desk-scale training.
//! - [`remote`]: a reasoner client for a model server speaking JSON over HTTP.

pub mod oracle;
pub mod remote;
pub mod scripted;
pub mod tiny;

use image::RgbImage;

use crate::autodiff::{Tape, Var};
use crate::frame::Frame;
use crate::params::ParamSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("reasoner script exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("reasoner script is empty")]
    EmptyScript,
    #[error("no ground truth registered for image `{0}`")]
    UnknownImageId(String),
    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed reply from model server: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("{stage} produced {found}, expected {expected}")]
    Shape {
        stage: &'static str,
        expected: String,
        found: String,
    },
    #[error("{0} produced non-finite values")]
    NonFinite(&'static str),
}

/// Writes text prompts and judges segmentations.
///
/// Scripted implementations keep a cursor and so take `&mut self`; one
/// instance must stay confined to one thinking-loop run.
pub trait MultimodalReasoner {
    fn reason(&mut self, image: &RgbImage, prompt: &str) -> Result<String, BackendError>;
}

impl<R: MultimodalReasoner + ?Sized> MultimodalReasoner for Box<R> {
    fn reason(&mut self, image: &RgbImage, prompt: &str) -> Result<String, BackendError> {
        (**self).reason(image, prompt)
    }
}

/// Access to a stage's learned tensors, for training and checkpoints.
pub trait Parameterized {
    fn parameters(&self) -> Option<&ParamSet> {
        None
    }

    fn parameters_mut(&mut self) -> Option<&mut ParamSet> {
        None
    }
}

/// `image -> [C, H', W']` embedding.
pub trait ImageEncoderBackend: Parameterized + Send + Sync {
    fn embedding_channels(&self) -> usize;

    /// `(H', W')` produced for an input of `image_h × image_w`.
    fn embedding_size(&self, image_h: usize, image_w: usize) -> (usize, usize);

    fn encode(&self, tape: &mut Tape, frame: &Frame) -> Result<Var, BackendError>;
}

/// `([C + 512, H', W'], text) -> [L, D]` multimodal token sequence.
pub trait VisionLanguageEncoderBackend: Parameterized + Send + Sync {
    fn input_channels(&self) -> usize;

    /// Token width `D`.
    fn feature_dim(&self) -> usize;

    fn fuse(&self, tape: &mut Tape, enhanced: Var, prompt: &str) -> Result<Var, BackendError>;
}

/// Prompt embeddings handed to the mask decoder.
#[derive(Debug, Clone, Copy)]
pub struct PromptEmbeddings {
    /// `[K, E]` sparse prompt tokens.
    pub sparse: Var,
    /// `[C]` dense embedding, broadcast over the `H' × W'` grid by the decoder.
    pub dense: Var,
}

/// `[L, D] -> PromptEmbeddings`. Projects the multimodal tokens to the
/// decoder's token width.
pub trait PromptEncoderBackend: Parameterized + Send + Sync {
    fn feature_dim(&self) -> usize;

    fn token_dim(&self) -> usize;

    fn dense_channels(&self) -> usize;

    fn encode_prompt(&self, tape: &mut Tape, features: Var) -> Result<PromptEmbeddings, BackendError>;
}

/// `([C, H', W'], prompts) -> [h, w]` mask logits.
pub trait MaskDecoderBackend: Parameterized + Send + Sync {
    fn embedding_channels(&self) -> usize;

    fn token_dim(&self) -> usize;

    fn output_size(&self, embedding_h: usize, embedding_w: usize) -> (usize, usize);

    fn decode(&self, tape: &mut Tape, embedding: Var, prompts: PromptEmbeddings) -> Result<Var, BackendError>;
}

pub(crate) fn check_shape(tape: &Tape, v: Var, stage: &'static str, expected: &[usize]) -> Result<(), BackendError> {
    let found = tape.shape(v);
    if found != expected {
        return Err(BackendError::Shape {
            stage,
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        });
    }
    if tape.value(v).iter().any(|x| !x.is_finite()) {
        return Err(BackendError::NonFinite(stage));
    }
    Ok(())
}
