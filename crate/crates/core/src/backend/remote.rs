//! Reasoner client for an external model server.
//!
//! Wire format: `POST <endpoint>` with body `{"image": <base64 PNG>, "prompt": <string>}`;
//! the server answers `{"text": <string>}`.

use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use image::RgbImage;
use serde::Serialize;

use super::{BackendError, MultimodalReasoner};

#[derive(Debug, Serialize)]
struct ReasonRequest<'a> {
    image: String,
    prompt: &'a str,
}

#[derive(Debug, Clone)]
pub struct RemoteReasoner {
    endpoint: String,
    timeout: Duration,
    client: reqwest::blocking::Client,
}

impl RemoteReasoner {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(RemoteReasoner {
            endpoint: endpoint.into(),
            timeout,
            client,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

pub fn encode_png_base64(image: &RgbImage) -> String {
    let mut bytes = Cursor::new(Vec::new());
    image
        .write_to(&mut bytes, image::ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    base64::engine::general_purpose::STANDARD.encode(bytes.into_inner())
}

impl MultimodalReasoner for RemoteReasoner {
    fn reason(&mut self, image: &RgbImage, prompt: &str) -> Result<String, BackendError> {
        let body = ReasonRequest {
            image: encode_png_base64(image),
            prompt,
        };
        let response = self.client.post(&self.endpoint).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.timeout)
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Protocol(format!("HTTP status {status}")));
        }
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.timeout)
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("invalid JSON: {e}")))?;
        match value.get("text") {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(BackendError::Protocol("`text` is not a string".into())),
            None => Err(BackendError::Protocol("reply has no `text` field".into())),
        }
    }
}
