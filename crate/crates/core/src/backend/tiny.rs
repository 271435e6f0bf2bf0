//! Small randomly initialised stand-ins for the four segmentation stages.
//!
//! Shapes with the default [`TinyConfig`]:
//! - image encoder (frozen): two 3×3 stride-2 convolutions, `[3,H,W] -> [8,H/4,W/4]`;
//! - vision-language encoder: hashed word embeddings plus a pooled image token,
//!   mixed by a linear layer, `-> [8, 16]`;
//! - prompt encoder: linear projection of every token to the decoder width
//!   (sparse) and of their mean to the embedding channels (dense);
//! - mask decoder: a 3×3 convolution over the dense-shifted embedding, dotted
//!   with a query derived from the sparse tokens.

use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    BackendError, ImageEncoderBackend, MaskDecoderBackend, Parameterized, PromptEmbeddings, PromptEncoderBackend,
    VisionLanguageEncoderBackend,
};
use crate::aggregation::{AggregatorConfig, FeatureAggregator, CONV_LAYERS, GLOBAL_FEATURE_DIM};
use crate::autodiff::{ConvGeometry, Tape, Var};
use crate::frame::{fnv1a64, Frame};
use crate::params::{fan_in_normal, zeros, ParamGroup, ParamSet};
use crate::segmentation::SegmentationModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyConfig {
    pub embed_channels: usize,
    pub token_dim: usize,
    pub text_tokens: usize,
    pub vocab: usize,
    pub prompt_dim: usize,
    pub decoder_hidden: usize,
    pub aggregation_widths: [usize; CONV_LAYERS],
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            embed_channels: 8,
            token_dim: 16,
            text_tokens: 8,
            vocab: 64,
            prompt_dim: 16,
            decoder_hidden: 32,
            aggregation_widths: [16; CONV_LAYERS],
        }
    }
}

/// Lower-cased alphanumeric words hashed into `1..vocab`, padded with 0 or
/// truncated to `len` ids.
pub fn tokenize(text: &str, vocab: usize, len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .take(len)
        .map(|w| 1 + (fnv1a64(w.to_lowercase().as_bytes()) % (vocab as u64 - 1)) as usize)
        .collect();
    ids.resize(len, 0);
    ids
}

fn param(tape: &mut Tape, group: ParamGroup, params: &ParamSet, name: &str) -> Var {
    tape.param(group, name, params.expect(name))
}

struct TinyImageEncoder {
    channels: usize,
    params: ParamSet,
}

impl TinyImageEncoder {
    const GROUP: ParamGroup = ParamGroup::ImageEncoder;

    fn new(c: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        params.insert("conv0.weight", fan_in_normal(rng, &[c, 3, 3, 3], 27));
        params.insert("conv0.bias", zeros(&[c]));
        params.insert("conv1.weight", fan_in_normal(rng, &[c, c, 3, 3], c * 9));
        params.insert("conv1.bias", zeros(&[c]));
        TinyImageEncoder { channels: c, params }
    }
}

impl Parameterized for TinyImageEncoder {
    fn parameters(&self) -> Option<&ParamSet> {
        Some(&self.params)
    }

    fn parameters_mut(&mut self) -> Option<&mut ParamSet> {
        Some(&mut self.params)
    }
}

impl ImageEncoderBackend for TinyImageEncoder {
    fn embedding_channels(&self) -> usize {
        self.channels
    }

    fn embedding_size(&self, image_h: usize, image_w: usize) -> (usize, usize) {
        let first = ConvGeometry::new((3, image_h, image_w), 3, 2, 1);
        let second = ConvGeometry::new((self.channels, first.out_h, first.out_w), 3, 2, 1);
        (second.out_h, second.out_w)
    }

    fn encode(&self, tape: &mut Tape, frame: &Frame) -> Result<Var, BackendError> {
        let x = tape.constant(frame.to_tensor().into_dyn());
        let (w0, b0) = (
            param(tape, Self::GROUP, &self.params, "conv0.weight"),
            param(tape, Self::GROUP, &self.params, "conv0.bias"),
        );
        let h = tape.conv2d(x, w0, b0, 2, 1);
        let h = tape.silu(h);
        let (w1, b1) = (
            param(tape, Self::GROUP, &self.params, "conv1.weight"),
            param(tape, Self::GROUP, &self.params, "conv1.bias"),
        );
        Ok(tape.conv2d(h, w1, b1, 2, 1))
    }
}

struct TinyVisionLanguage {
    input_channels: usize,
    token_dim: usize,
    text_tokens: usize,
    vocab: usize,
    params: ParamSet,
}

impl TinyVisionLanguage {
    const GROUP: ParamGroup = ParamGroup::VisionLanguageEncoder;

    fn new(input_channels: usize, cfg: &TinyConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.token_dim;
        let mut params = ParamSet::new();
        params.insert("word_embedding", fan_in_normal(rng, &[cfg.vocab, d], d));
        params.insert("image_proj.weight", fan_in_normal(rng, &[d, input_channels], input_channels));
        params.insert("image_proj.bias", zeros(&[d]));
        params.insert("mix.weight", fan_in_normal(rng, &[d, d], d));
        params.insert("mix.bias", zeros(&[d]));
        TinyVisionLanguage {
            input_channels,
            token_dim: d,
            text_tokens: cfg.text_tokens,
            vocab: cfg.vocab,
            params,
        }
    }
}

impl Parameterized for TinyVisionLanguage {
    fn parameters(&self) -> Option<&ParamSet> {
        Some(&self.params)
    }

    fn parameters_mut(&mut self) -> Option<&mut ParamSet> {
        Some(&mut self.params)
    }
}

impl VisionLanguageEncoderBackend for TinyVisionLanguage {
    fn input_channels(&self) -> usize {
        self.input_channels
    }

    fn feature_dim(&self) -> usize {
        self.token_dim
    }

    fn fuse(&self, tape: &mut Tape, enhanced: Var, prompt: &str) -> Result<Var, BackendError> {
        let g = Self::GROUP;
        let table = param(tape, g, &self.params, "word_embedding");
        let words = tape.gather_rows(table, &tokenize(prompt, self.vocab, self.text_tokens));
        let pooled = tape.global_avg_pool(enhanced);
        let (pw, pb) = (
            param(tape, g, &self.params, "image_proj.weight"),
            param(tape, g, &self.params, "image_proj.bias"),
        );
        let image_token = tape.linear(pooled, pw, pb);
        let joint = tape.add_row_broadcast(words, image_token);
        let (mw, mb) = (
            param(tape, g, &self.params, "mix.weight"),
            param(tape, g, &self.params, "mix.bias"),
        );
        let mixed = tape.linear(joint, mw, mb);
        Ok(tape.silu(mixed))
    }
}

struct TinyPromptEncoder {
    feature_dim: usize,
    token_dim: usize,
    dense_channels: usize,
    params: ParamSet,
}

impl TinyPromptEncoder {
    const GROUP: ParamGroup = ParamGroup::PromptEncoder;

    fn new(feature_dim: usize, token_dim: usize, dense_channels: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        params.insert("proj.weight", fan_in_normal(rng, &[token_dim, feature_dim], feature_dim));
        params.insert("proj.bias", zeros(&[token_dim]));
        params.insert("dense.weight", fan_in_normal(rng, &[dense_channels, feature_dim], feature_dim));
        params.insert("dense.bias", zeros(&[dense_channels]));
        TinyPromptEncoder {
            feature_dim,
            token_dim,
            dense_channels,
            params,
        }
    }
}

impl Parameterized for TinyPromptEncoder {
    fn parameters(&self) -> Option<&ParamSet> {
        Some(&self.params)
    }

    fn parameters_mut(&mut self) -> Option<&mut ParamSet> {
        Some(&mut self.params)
    }
}

impl PromptEncoderBackend for TinyPromptEncoder {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn token_dim(&self) -> usize {
        self.token_dim
    }

    fn dense_channels(&self) -> usize {
        self.dense_channels
    }

    fn encode_prompt(&self, tape: &mut Tape, features: Var) -> Result<PromptEmbeddings, BackendError> {
        let g = Self::GROUP;
        let (pw, pb) = (param(tape, g, &self.params, "proj.weight"), param(tape, g, &self.params, "proj.bias"));
        let sparse = tape.linear(features, pw, pb);
        let mean = tape.mean_rows(features);
        let (dw, db) = (param(tape, g, &self.params, "dense.weight"), param(tape, g, &self.params, "dense.bias"));
        let dense = tape.linear(mean, dw, db);
        Ok(PromptEmbeddings { sparse, dense })
    }
}

struct TinyMaskDecoder {
    embedding_channels: usize,
    token_dim: usize,
    params: ParamSet,
}

impl TinyMaskDecoder {
    const GROUP: ParamGroup = ParamGroup::MaskDecoder;

    fn new(c: usize, hidden: usize, token_dim: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        params.insert("pixel.weight", fan_in_normal(rng, &[hidden, c, 3, 3], c * 9));
        params.insert("pixel.bias", zeros(&[hidden]));
        params.insert("query.weight", fan_in_normal(rng, &[hidden, token_dim], token_dim));
        params.insert("query.bias", zeros(&[hidden]));
        TinyMaskDecoder {
            embedding_channels: c,
            token_dim,
            params,
        }
    }
}

impl Parameterized for TinyMaskDecoder {
    fn parameters(&self) -> Option<&ParamSet> {
        Some(&self.params)
    }

    fn parameters_mut(&mut self) -> Option<&mut ParamSet> {
        Some(&mut self.params)
    }
}

impl MaskDecoderBackend for TinyMaskDecoder {
    fn embedding_channels(&self) -> usize {
        self.embedding_channels
    }

    fn token_dim(&self) -> usize {
        self.token_dim
    }

    fn output_size(&self, embedding_h: usize, embedding_w: usize) -> (usize, usize) {
        (embedding_h, embedding_w)
    }

    fn decode(&self, tape: &mut Tape, embedding: Var, prompts: PromptEmbeddings) -> Result<Var, BackendError> {
        let g = Self::GROUP;
        let shifted = tape.add_channel_bias(embedding, prompts.dense);
        let (cw, cb) = (param(tape, g, &self.params, "pixel.weight"), param(tape, g, &self.params, "pixel.bias"));
        let pix = tape.conv2d(shifted, cw, cb, 1, 1);
        let pix = tape.silu(pix);
        let token = tape.mean_rows(prompts.sparse);
        let (qw, qb) = (param(tape, g, &self.params, "query.weight"), param(tape, g, &self.params, "query.bias"));
        let query = tape.linear(token, qw, qb);
        Ok(tape.channel_dot(pix, query))
    }
}

/// Builds every stage from one seeded generator, drawing in pipeline order
/// (encoder, aggregation, vision-language, prompt, decoder), so a seed fully
/// determines the initial weights.
pub fn tiny_segmentation_stack(config: &TinyConfig, seed: u64) -> SegmentationModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config.embed_channels;
    let encoder = TinyImageEncoder::new(c, &mut rng);
    let aggregator = FeatureAggregator::new(
        AggregatorConfig {
            in_channels: c,
            widths: config.aggregation_widths,
        },
        &mut rng,
    );
    let vl = TinyVisionLanguage::new(c + GLOBAL_FEATURE_DIM, config, &mut rng);
    let prompt = TinyPromptEncoder::new(config.token_dim, config.prompt_dim, c, &mut rng);
    let decoder = TinyMaskDecoder::new(c, config.decoder_hidden, config.prompt_dim, &mut rng);
    SegmentationModel::assemble(
        Box::new(encoder),
        aggregator,
        Box::new(vl),
        Box::new(prompt),
        Box::new(decoder),
    )
    .expect("tiny stages agree on shapes")
}

pub type Snapshot = Vec<(ParamGroup, Vec<(String, ArrayD<f64>)>)>;

/// All parameters of every group, keyed by group; handy for snapshot comparisons.
pub fn snapshot(model: &SegmentationModel) -> Snapshot {
    ParamGroup::ALL
        .into_iter()
        .map(|g| {
            let tensors = model
                .group_params(g)
                .map(|set| set.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
                .unwrap_or_default();
            (g, tensors)
        })
        .collect()
}
