use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{BackendError, MultimodalReasoner};
use crate::frame::fnv1a64;

/// One call made to a [`ScriptedReasoner`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerCall {
    pub prompt: String,
    pub image_width: u32,
    pub image_height: u32,
    /// FNV-1a over the raw RGB bytes, enough to tell an overlay from the input.
    pub image_digest: u64,
    pub reply: Option<String>,
}

/// Replays a fixed list of replies in order.
#[derive(Debug, Clone)]
pub struct ScriptedReasoner {
    script: Vec<String>,
    cursor: usize,
    calls: Vec<ReasonerCall>,
}

impl ScriptedReasoner {
    pub fn new<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Result<Self, BackendError> {
        let script: Vec<String> = script.into_iter().map(Into::into).collect();
        if script.is_empty() {
            return Err(BackendError::EmptyScript);
        }
        Ok(ScriptedReasoner {
            script,
            cursor: 0,
            calls: Vec::new(),
        })
    }

    /// Every call so far, including one that failed with `ScriptExhausted`.
    pub fn calls(&self) -> &[ReasonerCall] {
        &self.calls
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - self.cursor
    }
}

impl MultimodalReasoner for ScriptedReasoner {
    fn reason(&mut self, image: &RgbImage, prompt: &str) -> Result<String, BackendError> {
        let reply = self.script.get(self.cursor).cloned();
        self.calls.push(ReasonerCall {
            prompt: prompt.to_string(),
            image_width: image.width(),
            image_height: image.height(),
            image_digest: fnv1a64(image.as_raw()),
            reply: reply.clone(),
        });
        match reply {
            Some(r) => {
                self.cursor += 1;
                Ok(r)
            }
            None => Err(BackendError::ScriptExhausted(self.script.len())),
        }
    }
}
