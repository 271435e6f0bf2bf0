use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use image::{Rgb, RgbImage};
use imos::backend::oracle::oracle_segmentation_stack;
use imos::backend::scripted::ScriptedReasoner;
use imos::backend::BackendError;
use imos::frame::{fnv1a64, Frame};
use imos::prompt::{render_search_prompt, render_thinking_prompt, RefinementContext, VerdictKind};
use imos::segmentation::{BinaryMask, SegmentError, Segmentation, Segmenter};
use imos::thinking::{render_overlay, run, CallPurpose, LoopConfig, LoopError, LoopStatus};

struct Counting<S> {
    inner: S,
    calls: AtomicUsize,
    prompts: std::sync::Mutex<Vec<String>>,
}

impl<S: Segmenter> Counting<S> {
    fn new(inner: S) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
            prompts: Default::default(),
        }
    }

    fn count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<S: Segmenter> Segmenter for Counting<S> {
    fn segment(&self, frame: &Frame, prompt: &str) -> Result<Segmentation, SegmentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.inner.segment(frame, prompt)
    }
}

fn fixture() -> (Frame, BinaryMask, Counting<imos::segmentation::SegmentationModel>) {
    let rgb = RgbImage::from_fn(12, 9, |x, y| Rgb([(x * 20) as u8, (y * 25) as u8, 90]));
    let gt = BinaryMask::rect(9, 12, 2, 3, 6, 10);
    let model = oracle_segmentation_stack(HashMap::from([("clip/00000".to_string(), gt.clone())]));
    (Frame::new("clip/00000", rgb), gt, Counting::new(model))
}

fn digest(image: &RgbImage) -> u64 {
    fnv1a64(image.as_raw())
}

#[test]
fn first_try_success() {
    let (frame, gt, seg) = fixture();
    let description = "A red ball is flying in the air, in the upper right corner of the frame.";
    let mut reasoner = ScriptedReasoner::new([description, "VERDICT: CORRECT\nmotion blur on edges"]).unwrap();
    let out = run(&frame, &mut reasoner, &seg, &LoopConfig::default()).unwrap();

    assert_eq!(out.trace.status, LoopStatus::Correct);
    assert_eq!(out.trace.iterations.len(), 1);
    assert_eq!(out.trace.explanation.as_deref(), Some("motion blur on edges"));
    assert_eq!(out.mask, gt);
    assert_eq!(seg.count(), 1);

    let overlay = render_overlay(&frame.rgb, &gt, [0, 0, 255], 0.5).unwrap();
    let calls = reasoner.calls();
    assert_eq!(calls.len(), 2);
    assert_eq!(calls[0].prompt, render_search_prompt(None));
    assert_eq!(calls[0].image_digest, digest(&frame.rgb));
    assert_eq!(calls[1].prompt, render_thinking_prompt());
    assert_eq!(calls[1].image_digest, digest(&overlay));
    assert_eq!(*seg.prompts.lock().unwrap(), vec![description.to_string()]);
}

#[test]
fn five_incorrect_verdicts_exhaust_the_loop() {
    let (frame, gt, seg) = fixture();
    let mut script = vec!["Step 1: scan.\nStep 5: The dog on the left is running.".to_string()];
    for i in 0..5 {
        script.push(format!("VERDICT: INCORRECT\ncritique {i}"));
        if i < 4 {
            script.push(format!("refined description {i}"));
        }
    }
    let mut reasoner = ScriptedReasoner::new(script).unwrap();
    let out = run(&frame, &mut reasoner, &seg, &LoopConfig::default()).unwrap();

    assert_eq!(out.trace.status, LoopStatus::Exhausted);
    assert_eq!(out.trace.iterations.len(), 5);
    assert_eq!(seg.count(), 5);
    assert_eq!(out.mask, gt);
    assert_eq!(reasoner.remaining(), 0);
    assert!(out.trace.iterations.iter().all(|it| it.verdict.kind == VerdictKind::Incorrect));

    let mut expected_t = vec!["The dog on the left is running.".to_string()];
    expected_t.extend((0..4).map(|i| format!("refined description {i}")));
    assert_eq!(*seg.prompts.lock().unwrap(), expected_t);

    let calls = reasoner.calls();
    assert_eq!(calls.len(), 10);
    let overlay = digest(&render_overlay(&frame.rgb, &gt, [0, 0, 255], 0.5).unwrap());
    assert_eq!(calls[0].prompt, render_search_prompt(None));
    for i in 0..5 {
        let verdict = &calls[1 + 2 * i];
        assert_eq!(verdict.prompt, render_thinking_prompt());
        assert_eq!(verdict.image_digest, overlay);
        if i < 4 {
            let refine = &calls[2 + 2 * i];
            let context = RefinementContext {
                previous_prompt: expected_t[i].clone(),
                critique: format!("critique {i}"),
            };
            assert_eq!(refine.prompt, render_search_prompt(Some(&context)));
            assert_eq!(refine.image_digest, digest(&frame.rgb));
        }
    }
    let purposes: Vec<_> = out.trace.calls.iter().map(|c| c.purpose).collect();
    assert_eq!(purposes.len(), 10);
    assert_eq!(purposes[0], CallPurpose::Search);
    assert_eq!(purposes.iter().filter(|&&p| p == CallPurpose::Refine).count(), 4);
}

#[test]
fn no_moving_object_skips_segmentation() {
    let (frame, _, seg) = fixture();
    let mut reasoner = ScriptedReasoner::new(["No moving object."]).unwrap();
    let out = run(&frame, &mut reasoner, &seg, &LoopConfig::default()).unwrap();
    assert_eq!(out.trace.status, LoopStatus::NoMovingObject);
    assert!(out.trace.iterations.is_empty());
    assert!(out.mask.is_empty());
    assert_eq!(out.mask.dim(), (9, 12));
    assert_eq!(seg.count(), 0);
    assert_eq!(reasoner.calls().len(), 1);
}

#[test]
fn success_after_refinement() {
    let (frame, _, seg) = fixture();
    let mut reasoner = ScriptedReasoner::new([
        "a parked car",
        "VERDICT: INCORRECT\nThe mask covers a parked car.",
        "the cyclist crossing the road",
        "VERDICT: CORRECT\nThe cyclist's wheels are blurred.",
    ])
    .unwrap();
    let out = run(&frame, &mut reasoner, &seg, &LoopConfig::default()).unwrap();
    assert_eq!(out.trace.status, LoopStatus::Correct);
    assert_eq!(out.trace.iterations.len(), 2);
    assert_eq!(seg.count(), 2);
    assert_eq!(reasoner.calls().len(), 1 + 2 + 1);
    assert_eq!(out.trace.final_prompt(), Some("the cyclist crossing the road"));
}

#[test]
fn unparseable_verdict_counts_as_incorrect() {
    let (frame, _, seg) = fixture();
    let config = LoopConfig {
        max_iterations: 2,
        ..LoopConfig::default()
    };
    let mut reasoner =
        ScriptedReasoner::new(["a ball", "I think the mask looks fine.", "a bouncing ball", "no idea"]).unwrap();
    let out = run(&frame, &mut reasoner, &seg, &config).unwrap();
    assert_eq!(out.trace.status, LoopStatus::Exhausted);
    let first = &out.trace.iterations[0];
    assert!(!first.verdict_parsed);
    assert_eq!(first.verdict.critique.as_deref(), Some("I think the mask looks fine."));
    assert!(reasoner.calls()[2].prompt.contains("I think the mask looks fine."));
}

#[test]
fn refinement_reporting_no_object_keeps_previous_prompt() {
    let (frame, _, seg) = fixture();
    let mut reasoner = ScriptedReasoner::new([
        "a ball",
        "VERDICT: INCORRECT\nwrong object",
        "No moving object.",
        "VERDICT: CORRECT\nfine",
    ])
    .unwrap();
    let out = run(&frame, &mut reasoner, &seg, &LoopConfig::default()).unwrap();
    assert_eq!(*seg.prompts.lock().unwrap(), vec!["a ball", "a ball"]);
    assert_eq!(out.trace.status, LoopStatus::Correct);
}

#[test]
fn short_script_surfaces_exhaustion() {
    let (frame, _, seg) = fixture();
    let mut reasoner = ScriptedReasoner::new(["a ball"]).unwrap();
    let err = run(&frame, &mut reasoner, &seg, &LoopConfig::default()).unwrap_err();
    assert_eq!(err, LoopError::Reasoner(BackendError::ScriptExhausted(1)));
}

#[test]
fn replay_reproduces_the_trace() {
    let script = ["a ball", "VERDICT: INCORRECT\nno", "a red ball", "VERDICT: CORRECT\nyes"];
    let once = || {
        let (frame, _, seg) = fixture();
        let mut reasoner = ScriptedReasoner::new(script).unwrap();
        run(&frame, &mut reasoner, &seg, &LoopConfig::default()).unwrap()
    };
    let (a, b) = (once(), once());
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
}
