//! The deep-thinking loop: search, segment, overlay, judge, refine.
//!
//! One run asks the reasoner for a moving-object description T, segments the
//! image with it, paints the mask onto the image and asks the reasoner whether
//! the painted object is the moving one. An incorrect verdict feeds the old T
//! and the critique back into the search prompt and the loop repeats, up to
//! `max_iterations` segmentations.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, MultimodalReasoner};
use crate::frame::{fnv1a64, Frame};
use crate::prompt::{
    parse_search_response, parse_verdict_response, render_search_prompt, render_thinking_prompt, PromptError,
    RefinementContext, SearchKind, VerdictKind, VerdictOutcome,
};
use crate::segmentation::{BinaryMask, SegmentError, Segmenter};

pub const DEFAULT_MAX_ITERATIONS: usize = 5;
pub const DEFAULT_OVERLAY_COLOR: [u8; 3] = [0, 0, 255];
pub const DEFAULT_OVERLAY_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub max_iterations: usize,
    pub overlay_color: [u8; 3],
    pub overlay_alpha: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            overlay_color: DEFAULT_OVERLAY_COLOR,
            overlay_alpha: DEFAULT_OVERLAY_ALPHA,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.max_iterations == 0 {
            return Err(LoopError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.overlay_alpha > 0.0 && self.overlay_alpha <= 1.0) {
            return Err(LoopError::InvalidConfig(format!(
                "overlay_alpha must lie in (0, 1], got {}",
                self.overlay_alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoopError {
    #[error("invalid loop configuration: {0}")]
    InvalidConfig(String),
    #[error("reasoner failed: {0}")]
    Reasoner(#[from] BackendError),
    #[error("segmentation failed: {0}")]
    Segment(#[from] SegmentError),
    #[error("reasoner reply rejected: {0}")]
    Reply(#[from] PromptError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OverlayError {
    #[error("mask is {mask:?} but image is {image:?} (height, width)")]
    DimensionMismatch { mask: (usize, usize), image: (usize, usize) },
    #[error("overlay alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
}

/// Foreground pixels become `(1 - alpha)·pixel + alpha·color`, rounded half
/// up per channel; background pixels are copied unchanged.
pub fn render_overlay(image: &RgbImage, mask: &BinaryMask, color: [u8; 3], alpha: f64) -> Result<RgbImage, OverlayError> {
    let dims = (image.height() as usize, image.width() as usize);
    if mask.dim() != dims {
        return Err(OverlayError::DimensionMismatch {
            mask: mask.dim(),
            image: dims,
        });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(OverlayError::InvalidAlpha(alpha));
    }
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if mask.get(y as usize, x as usize) {
            let blend = |o: u8, c: u8| ((1.0 - alpha) * o as f64 + alpha * c as f64 + 0.5).floor().clamp(0.0, 255.0) as u8;
            *px = Rgb([blend(px[0], color[0]), blend(px[1], color[1]), blend(px[2], color[2])]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopStatus {
    Correct,
    Exhausted,
    NoMovingObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPurpose {
    Search,
    Verdict,
    Refine,
}

/// One reasoner round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerExchange {
    pub purpose: CallPurpose,
    /// 0-based iteration the call belongs to; absent for the initial search.
    pub iteration: Option<usize>,
    pub image_digest: String,
    pub prompt: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub prompt_t: String,
    /// The mask itself; serialized traces carry [`IterationRecord::mask_ref`] instead.
    #[serde(skip)]
    pub mask: BinaryMask,
    /// File the mask was written to, filled in by whoever persists the trace.
    pub mask_ref: Option<String>,
    pub mask_digest: String,
    pub foreground_pixels: usize,
    pub verdict: VerdictOutcome,
    /// `false` when the verdict reply carried no sentinel and was read as incorrect.
    pub verdict_parsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinkingTrace {
    pub config: LoopConfig,
    pub image_id: String,
    pub search_reply: String,
    pub iterations: Vec<IterationRecord>,
    pub status: LoopStatus,
    pub explanation: Option<String>,
    pub calls: Vec<ReasonerExchange>,
}

impl ThinkingTrace {
    pub fn segment_calls(&self) -> usize {
        self.iterations.len()
    }

    pub fn final_prompt(&self) -> Option<&str> {
        self.iterations.last().map(|it| it.prompt_t.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub mask: BinaryMask,
    pub trace: ThinkingTrace,
}

pub fn mask_digest(mask: &BinaryMask) -> String {
    let (h, w) = mask.dim();
    let mut bytes = Vec::with_capacity(16 + h * w);
    bytes.extend_from_slice(&(h as u64).to_le_bytes());
    bytes.extend_from_slice(&(w as u64).to_le_bytes());
    bytes.extend(mask.as_array().iter().map(|&v| v as u8));
    format!("{:016x}", fnv1a64(&bytes))
}

fn image_digest(image: &RgbImage) -> String {
    format!("{:016x}", fnv1a64(image.as_raw()))
}

struct Session<'a, R: MultimodalReasoner + ?Sized> {
    reasoner: &'a mut R,
    calls: Vec<ReasonerExchange>,
}

impl<R: MultimodalReasoner + ?Sized> Session<'_, R> {
    fn ask(
        &mut self,
        purpose: CallPurpose,
        iteration: Option<usize>,
        image: &RgbImage,
        prompt: String,
    ) -> Result<String, BackendError> {
        let reply = self.reasoner.reason(image, &prompt)?;
        self.calls.push(ReasonerExchange {
            purpose,
            iteration,
            image_digest: image_digest(image),
            prompt,
            reply: reply.clone(),
        });
        Ok(reply)
    }
}

/// Runs the loop to completion. The reasoner sees the original image for
/// search and refinement and the full overlaid image for verdicts.
pub fn run<R: MultimodalReasoner + ?Sized>(
    frame: &Frame,
    reasoner: &mut R,
    segmenter: &dyn Segmenter,
    config: &LoopConfig,
) -> Result<LoopOutcome, LoopError> {
    config.validate()?;
    let mut session = Session {
        reasoner,
        calls: Vec::new(),
    };
    let search_reply = session.ask(CallPurpose::Search, None, &frame.rgb, render_search_prompt(None))?;
    let search = parse_search_response(&search_reply)?;

    let mut iterations = Vec::new();
    let trace = |iterations, status, explanation, calls| ThinkingTrace {
        config: config.clone(),
        image_id: frame.id.clone(),
        search_reply: search_reply.clone(),
        iterations,
        status,
        explanation,
        calls,
    };

    let mut prompt_t = match (search.kind, search.description) {
        (SearchKind::MovingObject, Some(d)) => d,
        _ => {
            return Ok(LoopOutcome {
                mask: BinaryMask::empty(frame.height(), frame.width()),
                trace: trace(iterations, LoopStatus::NoMovingObject, None, session.calls),
            })
        }
    };

    for i in 0..config.max_iterations {
        let mask = segmenter.segment(frame, &prompt_t)?.mask;
        let overlay = render_overlay(&frame.rgb, &mask, config.overlay_color, config.overlay_alpha)?;
        let reply = session.ask(CallPurpose::Verdict, Some(i), &overlay, render_thinking_prompt())?;
        let (verdict, verdict_parsed) = match parse_verdict_response(&reply) {
            Ok(v) => (v, true),
            Err(_) => (VerdictOutcome::incorrect(reply.trim()), false),
        };
        iterations.push(IterationRecord {
            prompt_t: prompt_t.clone(),
            mask_ref: None,
            mask_digest: mask_digest(&mask),
            foreground_pixels: mask.count(),
            mask: mask.clone(),
            verdict: verdict.clone(),
            verdict_parsed,
        });

        if verdict.kind == VerdictKind::Correct {
            return Ok(LoopOutcome {
                mask,
                trace: trace(iterations, LoopStatus::Correct, verdict.explanation, session.calls),
            });
        }
        if i + 1 == config.max_iterations {
            return Ok(LoopOutcome {
                mask,
                trace: trace(iterations, LoopStatus::Exhausted, None, session.calls),
            });
        }
        let context = RefinementContext {
            previous_prompt: prompt_t.clone(),
            critique: verdict.critique.unwrap_or_default(),
        };
        let reply = session.ask(CallPurpose::Refine, Some(i), &frame.rgb, render_search_prompt(Some(&context)))?;
        let refined = parse_search_response(&reply)?;
        if let (SearchKind::MovingObject, Some(d)) = (refined.kind, refined.description) {
            prompt_t = d;
        }
    }
    unreachable!("max_iterations >= 1 always returns inside the loop")
}
