//! Global feature aggregation.
//!
//! Five 3×3 stride-2 convolutions, each followed by SiLU, reduce the image
//! embedding; a spatial mean and a fully connected layer map the result to a
//! 512-dimensional global feature. That vector is then appended to every
//! pixel of the embedding, giving the vision-language encoder an enhanced
//! embedding of `C + 512` channels.

use ndarray::{Array1, Array3, Ix1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat_broadcast_array, Tape, Var};
use crate::params::{fan_in_normal, zeros, ParamGroup, ParamSet};

pub const GLOBAL_FEATURE_DIM: usize = 512;
pub const CONV_LAYERS: usize = 5;
pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
/// Channel width of each convolution at full scale.
pub const FULL_WIDTH: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregationError {
    #[error("embedding has {found} channels, aggregator expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("embedding must have at least one channel and one pixel, got {0:?}")]
    EmptyEmbedding((usize, usize, usize)),
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("global feature must have length {GLOBAL_FEATURE_DIM}, got {0}")]
    FeatureLength(usize),
    #[error("parameter `{0}` missing or misshapen")]
    BadParameter(String),
}

/// `C × H' × W'` spatial features from the image encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEmbedding(Array3<f64>);

impl ImageEmbedding {
    pub fn new(values: Array3<f64>) -> Result<Self, AggregationError> {
        let dim = values.dim();
        if dim.0 == 0 || dim.1 == 0 || dim.2 == 0 {
            return Err(AggregationError::EmptyEmbedding(dim));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AggregationError::NonFinite);
        }
        Ok(ImageEmbedding(values))
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.0
    }

    pub fn channels(&self) -> usize {
        self.0.dim().0
    }
}

/// The 512-dimensional summary of an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature(Array1<f64>);

impl GlobalFeature {
    pub fn new(values: Array1<f64>) -> Result<Self, AggregationError> {
        if values.len() != GLOBAL_FEATURE_DIM {
            return Err(AggregationError::FeatureLength(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AggregationError::NonFinite);
        }
        Ok(GlobalFeature(values))
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }
}

/// `(C + 512) × H' × W'`; channels `C..C+512` hold the global feature at every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedEmbedding(Array3<f64>);

impl EnhancedEmbedding {
    pub fn values(&self) -> &Array3<f64> {
        &self.0
    }
}

pub fn broadcast_concat(embedding: &ImageEmbedding, feature: &GlobalFeature) -> EnhancedEmbedding {
    EnhancedEmbedding(concat_broadcast_array(&embedding.0, &feature.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub in_channels: usize,
    pub widths: [usize; CONV_LAYERS],
}

impl AggregatorConfig {
    pub fn full_scale(in_channels: usize) -> Self {
        AggregatorConfig {
            in_channels,
            widths: [FULL_WIDTH; CONV_LAYERS],
        }
    }

    fn layer_channels(&self, layer: usize) -> (usize, usize) {
        let cin = if layer == 0 { self.in_channels } else { self.widths[layer - 1] };
        (cin, self.widths[layer])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAggregator {
    config: AggregatorConfig,
    params: ParamSet,
}

fn conv_names(layer: usize) -> (String, String) {
    (format!("conv{layer}.weight"), format!("conv{layer}.bias"))
}

impl FeatureAggregator {
    pub const GROUP: ParamGroup = ParamGroup::FeatureAggregation;

    /// Fan-in scaled normal weights, zero biases.
    pub fn new<R: Rng + ?Sized>(config: AggregatorConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        for layer in 0..CONV_LAYERS {
            let (cin, cout) = config.layer_channels(layer);
            let (w, b) = conv_names(layer);
            params.insert(w, fan_in_normal(rng, &[cout, cin, KERNEL, KERNEL], cin * KERNEL * KERNEL));
            params.insert(b, zeros(&[cout]));
        }
        let last = config.widths[CONV_LAYERS - 1];
        params.insert("fc.weight", fan_in_normal(rng, &[GLOBAL_FEATURE_DIM, last], last));
        params.insert("fc.bias", zeros(&[GLOBAL_FEATURE_DIM]));
        FeatureAggregator { config, params }
    }

    pub fn from_params(config: AggregatorConfig, params: ParamSet) -> Result<Self, AggregationError> {
        let mut expected = Vec::new();
        for layer in 0..CONV_LAYERS {
            let (cin, cout) = config.layer_channels(layer);
            let (w, b) = conv_names(layer);
            expected.push((w, vec![cout, cin, KERNEL, KERNEL]));
            expected.push((b, vec![cout]));
        }
        let last = config.widths[CONV_LAYERS - 1];
        expected.push(("fc.weight".into(), vec![GLOBAL_FEATURE_DIM, last]));
        expected.push(("fc.bias".into(), vec![GLOBAL_FEATURE_DIM]));
        for (name, shape) in &expected {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                _ => return Err(AggregationError::BadParameter(name.clone())),
            }
        }
        Ok(FeatureAggregator { config, params })
    }

    pub fn config(&self) -> &AggregatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Records the forward pass on `tape`; `embedding` must be `[C, H', W']`.
    pub fn forward(&self, tape: &mut Tape, embedding: Var) -> Result<Var, AggregationError> {
        let shape = tape.shape(embedding);
        if shape.len() != 3 || shape.contains(&0) {
            return Err(AggregationError::EmptyEmbedding((
                shape.first().copied().unwrap_or(0),
                shape.get(1).copied().unwrap_or(0),
                shape.get(2).copied().unwrap_or(0),
            )));
        }
        if shape[0] != self.config.in_channels {
            return Err(AggregationError::ShapeMismatch {
                expected: self.config.in_channels,
                found: shape[0],
            });
        }
        let mut x = embedding;
        for layer in 0..CONV_LAYERS {
            let (w, b) = conv_names(layer);
            let w = tape.param(Self::GROUP, &w, self.params.expect(&w));
            let b = tape.param(Self::GROUP, &b, self.params.expect(&b));
            let conv = tape.conv2d(x, w, b, STRIDE, KERNEL / 2);
            x = tape.silu(conv);
        }
        let pooled = tape.global_avg_pool(x);
        let w = tape.param(Self::GROUP, "fc.weight", self.params.expect("fc.weight"));
        let b = tape.param(Self::GROUP, "fc.bias", self.params.expect("fc.bias"));
        Ok(tape.linear(pooled, w, b))
    }

    pub fn aggregate(&self, embedding: &ImageEmbedding) -> Result<GlobalFeature, AggregationError> {
        let mut tape = Tape::new();
        let input = tape.constant(embedding.values().clone().into_dyn());
        let out = self.forward(&mut tape, input)?;
        let values = tape
            .value(out)
            .clone()
            .into_dimensionality::<Ix1>()
            .expect("fc output is a vector");
        GlobalFeature::new(values)
    }
}
