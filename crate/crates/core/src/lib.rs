//! Single-image moving object segmentation.
//!
//! A multimodal reasoner searches an image for a moving object and describes
//! it in text. A fused vision-language segmentation network turns that text
//! into a mask, and the reasoner then judges the overlaid result, refining the
//! description until it accepts the mask or an iteration budget runs out.
//! The crate also carries the training objective, the evaluation metrics, and
//! dataset loaders for the common benchmark layouts.

pub mod aggregation;
pub mod autodiff;
pub mod backend;
pub mod dataset;
pub mod evaluation;
pub mod frame;
pub mod fsutil;
pub mod params;
pub mod prompt;
pub mod segmentation;
pub mod thinking;
pub mod training;
