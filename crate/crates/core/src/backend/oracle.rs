//! A segmentation stack that reproduces ground-truth masks.
//!
//! The encoder emits a one-channel full-resolution embedding holding `+1` on
//! ground-truth foreground and `-1` elsewhere; the decoder reads that channel
//! back out as logits. The aggregation network and the vision-language path
//! still run, so the full pipeline is exercised, but they contribute nothing
//! to the logits.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    BackendError, ImageEncoderBackend, MaskDecoderBackend, Parameterized, PromptEmbeddings, PromptEncoderBackend,
    VisionLanguageEncoderBackend,
};
use crate::aggregation::{AggregatorConfig, FeatureAggregator, CONV_LAYERS, GLOBAL_FEATURE_DIM};
use crate::autodiff::{Tape, Var};
use crate::frame::Frame;
use crate::segmentation::{BinaryMask, SegmentationModel};

/// Ground truth by image id.
pub type GroundTruthLookup = HashMap<String, BinaryMask>;

const ORACLE_WIDTH: usize = 4;
const ORACLE_SEED: u64 = 0;

struct OracleEncoder {
    lookup: Arc<GroundTruthLookup>,
}

impl Parameterized for OracleEncoder {}

impl ImageEncoderBackend for OracleEncoder {
    fn embedding_channels(&self) -> usize {
        1
    }

    fn embedding_size(&self, image_h: usize, image_w: usize) -> (usize, usize) {
        (image_h, image_w)
    }

    fn encode(&self, tape: &mut Tape, frame: &Frame) -> Result<Var, BackendError> {
        let mask = self
            .lookup
            .get(&frame.id)
            .ok_or_else(|| BackendError::UnknownImageId(frame.id.clone()))?;
        if mask.dim() != (frame.height(), frame.width()) {
            return Err(BackendError::Shape {
                stage: "oracle image encoder",
                expected: format!("{:?}", (frame.height(), frame.width())),
                found: format!("{:?}", mask.dim()),
            });
        }
        let signed: Array2<f64> = mask.as_array().mapv(|v| if v { 1.0 } else { -1.0 });
        let (h, w) = signed.dim();
        let values = signed.into_shape_with_order((1, h, w)).expect("one channel").into_dyn();
        Ok(tape.constant(values))
    }
}

struct NullFusion;

impl Parameterized for NullFusion {}

impl VisionLanguageEncoderBackend for NullFusion {
    fn input_channels(&self) -> usize {
        1 + GLOBAL_FEATURE_DIM
    }

    fn feature_dim(&self) -> usize {
        1
    }

    fn fuse(&self, tape: &mut Tape, _enhanced: Var, _prompt: &str) -> Result<Var, BackendError> {
        Ok(tape.constant(ArrayD::zeros(IxDyn(&[1, 1]))))
    }
}

struct NullPromptEncoder;

impl Parameterized for NullPromptEncoder {}

impl PromptEncoderBackend for NullPromptEncoder {
    fn feature_dim(&self) -> usize {
        1
    }

    fn token_dim(&self) -> usize {
        1
    }

    fn dense_channels(&self) -> usize {
        1
    }

    fn encode_prompt(&self, tape: &mut Tape, _features: Var) -> Result<PromptEmbeddings, BackendError> {
        Ok(PromptEmbeddings {
            sparse: tape.constant(ArrayD::zeros(IxDyn(&[1, 1]))),
            dense: tape.constant(ArrayD::zeros(IxDyn(&[1]))),
        })
    }
}

struct ReadoutDecoder;

impl Parameterized for ReadoutDecoder {}

impl MaskDecoderBackend for ReadoutDecoder {
    fn embedding_channels(&self) -> usize {
        1
    }

    fn token_dim(&self) -> usize {
        1
    }

    fn output_size(&self, embedding_h: usize, embedding_w: usize) -> (usize, usize) {
        (embedding_h, embedding_w)
    }

    fn decode(&self, tape: &mut Tape, embedding: Var, prompts: PromptEmbeddings) -> Result<Var, BackendError> {
        let shifted = tape.add_channel_bias(embedding, prompts.dense);
        let unit = tape.constant(Array1::from_elem(1, 1.0).into_dyn());
        Ok(tape.channel_dot(shifted, unit))
    }
}

/// Pipeline whose mask for image `id` is `lookup[id]`, whatever the prompt.
pub fn oracle_segmentation_stack(lookup: GroundTruthLookup) -> SegmentationModel {
    let lookup = Arc::new(lookup);
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let aggregator = FeatureAggregator::new(
        AggregatorConfig {
            in_channels: 1,
            widths: [ORACLE_WIDTH; CONV_LAYERS],
        },
        &mut rng,
    );
    SegmentationModel::assemble(
        Box::new(OracleEncoder { lookup }),
        aggregator,
        Box::new(NullFusion),
        Box::new(NullPromptEncoder),
        Box::new(ReadoutDecoder),
    )
    .expect("oracle stages agree on shapes")
}
