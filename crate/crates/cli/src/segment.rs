use imos::dataset::{encode_mask_png, encode_rgb_png, read_image, read_mask};
use imos::frame::Frame;
use imos::thinking::{self, render_overlay, LoopError, LoopStatus};

use crate::backends::{segmenter, ReasonerFactory};
use crate::config::{RunConfig, SegmenterKind};
use crate::error::{exit, CliError};
use crate::output::Outputs;

pub(crate) const MASK_FILE: &str = "mask.png";
pub(crate) const OVERLAY_FILE: &str = "overlay.png";
pub(crate) const TRACE_FILE: &str = "trace.json";

pub(crate) fn run(config: &RunConfig) -> Result<u8, CliError> {
    let image_path = config
        .segment
        .image
        .as_ref()
        .ok_or_else(|| CliError::Usage("no input image (pass IMAGE or set segment.image)".into()))?;
    if config.segmenter.kind == SegmenterKind::Oracle && config.segmenter.ground_truth.is_none() {
        return Err(CliError::Config("oracle segmenter needs `segmenter.ground_truth`".into()));
    }
    let factory = ReasonerFactory::new(config)?;
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let frame = Frame::new(id, read_image(image_path)?);
    let model = segmenter(config, || {
        let gt = read_mask(config.segmenter.ground_truth.as_ref().expect("checked above"))?;
        Ok([(frame.id.clone(), gt)].into())
    })?;

    let mut reasoner = factory.make()?;
    let mut outcome = thinking::run(&frame, &mut reasoner, &model, &config.loop_config)?;
    let overlay = render_overlay(
        &frame.rgb,
        &outcome.mask,
        config.loop_config.overlay_color,
        config.loop_config.overlay_alpha,
    )
    .map_err(LoopError::from)?;

    let mut out = Outputs::default();
    for (k, it) in outcome.trace.iterations.iter_mut().enumerate() {
        let name = format!("iterations/mask_{k:02}.png");
        out.add(name.clone(), encode_mask_png(&it.mask));
        it.mask_ref = Some(name);
    }
    out.add(MASK_FILE, encode_mask_png(&outcome.mask));
    out.add(OVERLAY_FILE, encode_rgb_png(&overlay));
    let trace = serde_json::to_string_pretty(&outcome.trace).expect("trace serializes") + "\n";
    out.add(TRACE_FILE, trace);
    out.commit(config)?;

    let status = outcome.trace.status;
    println!(
        "{}: {} after {} segmentation(s); {} foreground pixels -> {}",
        frame.id,
        match status {
            LoopStatus::Correct => "accepted",
            LoopStatus::Exhausted => "not accepted",
            LoopStatus::NoMovingObject => "no moving object",
        },
        outcome.trace.segment_calls(),
        outcome.mask.count(),
        config.output.display()
    );
    Ok(match status {
        LoopStatus::Exhausted => exit::EXHAUSTED,
        LoopStatus::Correct | LoopStatus::NoMovingObject => exit::OK,
    })
}
