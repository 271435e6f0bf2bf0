//! Named parameter tensors grouped by the model component that owns them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// The five trainable-or-frozen components of the segmentation network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    ImageEncoder,
    VisionLanguageEncoder,
    FeatureAggregation,
    PromptEncoder,
    MaskDecoder,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::ImageEncoder,
        ParamGroup::VisionLanguageEncoder,
        ParamGroup::FeatureAggregation,
        ParamGroup::PromptEncoder,
        ParamGroup::MaskDecoder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::ImageEncoder => "image_encoder",
            ParamGroup::VisionLanguageEncoder => "vision_language_encoder",
            ParamGroup::FeatureAggregation => "feature_aggregation",
            ParamGroup::PromptEncoder => "prompt_encoder",
            ParamGroup::MaskDecoder => "mask_decoder",
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown parameter group `{0}`")]
pub struct UnknownGroup(pub String);

impl FromStr for ParamGroup {
    type Err = UnknownGroup;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| UnknownGroup(s.to_string()))
    }
}

/// Identifies one tensor on a [`crate::autodiff::Tape`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub group: ParamGroup,
    pub name: String,
}

impl ParamKey {
    pub fn new(group: ParamGroup, name: impl Into<String>) -> Self {
        ParamKey {
            group,
            name: name.into(),
        }
    }
}

/// Ordered map from tensor name to value for one parameter group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, ArrayD<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<f64>> {
        self.tensors.get_mut(name)
    }

    /// Panics if `name` was never registered; parameter names are fixed by
    /// the owning module's constructor.
    pub fn expect(&self, name: &str) -> &ArrayD<f64> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not registered"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }
}

/// Fan-in scaled normal init (He), used for every weight tensor.
pub fn fan_in_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape matches length")
}

pub fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}
