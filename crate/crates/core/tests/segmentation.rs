use std::sync::{Arc, Mutex};

use image::{Rgb, RgbImage};
use imos::autodiff::{Tape, Var};
use imos::backend::tiny::{tiny_segmentation_stack, TinyConfig};
use imos::backend::{BackendError, Parameterized, VisionLanguageEncoderBackend};
use imos::frame::Frame;
use imos::segmentation::{SegmentError, Segmenter, SegmentationModel};
use ndarray::ArrayD;

fn gradient_image(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8]))
}

#[test]
fn logits_match_image_size_for_non_divisible_sizes() {
    let model = tiny_segmentation_stack(&TinyConfig::default(), 1);
    for (h, w) in [(480, 854), (97, 131)] {
        let seg = model
            .segment(&Frame::new("f", gradient_image(w, h)), "a car driving to the left")
            .unwrap();
        assert_eq!(seg.logits.dim(), (h as usize, w as usize));
        assert_eq!(seg.mask.dim(), (h as usize, w as usize));
    }
}

#[test]
fn same_seed_same_inputs_same_logits() {
    let frame = Frame::new("f", gradient_image(40, 30));
    let a = tiny_segmentation_stack(&TinyConfig::default(), 9).segment(&frame, "a bird").unwrap();
    let b = tiny_segmentation_stack(&TinyConfig::default(), 9).segment(&frame, "a bird").unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_prompt_is_rejected() {
    let model = tiny_segmentation_stack(&TinyConfig::default(), 1);
    let err = model.segment(&Frame::new("f", gradient_image(8, 8)), "  ").unwrap_err();
    assert_eq!(err, SegmentError::EmptyPrompt);
}

struct Recording {
    inner: Box<dyn VisionLanguageEncoderBackend>,
    seen: Arc<Mutex<Vec<ArrayD<f64>>>>,
}

impl Parameterized for Recording {}

impl VisionLanguageEncoderBackend for Recording {
    fn input_channels(&self) -> usize {
        self.inner.input_channels()
    }

    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn fuse(&self, tape: &mut Tape, enhanced: Var, prompt: &str) -> Result<Var, BackendError> {
        let out = self.inner.fuse(tape, enhanced, prompt)?;
        self.seen.lock().unwrap().push(tape.value(out).clone());
        Ok(out)
    }
}

struct Replay {
    input_channels: usize,
    value: ArrayD<f64>,
}

impl Parameterized for Replay {}

impl VisionLanguageEncoderBackend for Replay {
    fn input_channels(&self) -> usize {
        self.input_channels
    }

    fn feature_dim(&self) -> usize {
        self.value.shape()[1]
    }

    fn fuse(&self, tape: &mut Tape, _enhanced: Var, _prompt: &str) -> Result<Var, BackendError> {
        Ok(tape.constant(self.value.clone()))
    }
}

#[test]
fn replacing_a_stage_with_its_recording_changes_nothing() {
    let frame = Frame::new("f", gradient_image(33, 21));
    let prompt = "the red ball in the upper right";
    let seen = Arc::new(Mutex::new(Vec::new()));

    let mut stages = tiny_segmentation_stack(&TinyConfig::default(), 5).into_stages();
    let input_channels = stages.vision_language.input_channels();
    stages.vision_language = Box::new(Recording {
        inner: stages.vision_language,
        seen: Arc::clone(&seen),
    });
    let recorded = SegmentationModel::from_stages(stages).unwrap();
    let live = recorded.segment(&frame, prompt).unwrap();

    let mut stages = recorded.into_stages();
    let value = seen.lock().unwrap()[0].clone();
    stages.vision_language = Box::new(Replay { input_channels, value });
    let replayed = SegmentationModel::from_stages(stages).unwrap().segment(&frame, prompt).unwrap();

    assert_eq!(live, replayed);
}

#[test]
fn incompatible_bundle_is_rejected_at_assembly() {
    let mut stages = tiny_segmentation_stack(&TinyConfig::default(), 5).into_stages();
    stages.vision_language = Box::new(Replay {
        input_channels: 3,
        value: ArrayD::zeros(ndarray::IxDyn(&[1, 16])),
    });
    assert!(matches!(SegmentationModel::from_stages(stages), Err(SegmentError::ShapeMismatch(_))));
}
