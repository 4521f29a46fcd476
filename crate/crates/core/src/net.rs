//! Blocking JSON-over-HTTP helpers shared by the remote planner and policy.

use std::io::Cursor;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub(crate) enum NetError {
    #[error("request timed out")]
    Timeout,
    #[error("{0}")]
    Network(String),
    #[error("undecodable response: {0}")]
    Body(String),
}

/// PNG-encodes an image and wraps it in base64.
pub fn png_base64(img: &RgbImage) -> String {
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
        .expect("encoding to memory cannot fail");
    STANDARD.encode(buf)
}

fn classify(e: ureq::Error) -> NetError {
    match e {
        ureq::Error::Timeout(_) => NetError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => NetError::Timeout,
        other => NetError::Network(other.to_string()),
    }
}

/// POSTs `body` and decodes a JSON reply.
pub(crate) fn post_json<B: Serialize, T: DeserializeOwned>(
    url: &str,
    body: &B,
    timeout_s: f64,
    bearer: Option<&str>,
) -> Result<T, NetError> {
    if !(timeout_s > 0.0 && timeout_s.is_finite()) {
        return Err(NetError::Network(format!("invalid timeout {timeout_s}")));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(timeout_s)))
        .build()
        .into();
    let mut req = agent.post(url);
    if let Some(key) = bearer {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(classify)?;
    resp.body_mut().read_json::<T>().map_err(|e| match classify(e) {
        NetError::Network(m) => NetError::Body(m),
        other => other,
    })
}
