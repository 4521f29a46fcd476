//! Client for an external inference server. The server receives the
//! observation and answers with an 8-vector action.
//!
//! Request: `{"prompt": str, "state": [7 floats], "external_image": base64 PNG,
//! "wrist_image": base64 PNG}`. Response: `{"action": [8 floats]}`.

use serde::{Deserialize, Serialize};

use super::{Action, ExecError, Observation, Policy};
use crate::net::{post_json, png_base64, NetError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemotePolicyConfig {
    pub endpoint: String,
    pub timeout_s: f64,
}

#[derive(Serialize)]
struct ObservationBody<'a> {
    prompt: &'a str,
    state: [f64; 7],
    external_image: Option<String>,
    wrist_image: Option<String>,
}

#[derive(Deserialize)]
struct ActionBody {
    action: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RemotePolicy {
    config: RemotePolicyConfig,
}

impl RemotePolicy {
    pub fn new(config: RemotePolicyConfig) -> Self {
        Self { config }
    }
}

impl Policy for RemotePolicy {
    fn act(&mut self, obs: &Observation) -> Result<Action, ExecError> {
        obs.validate()?;
        let body = ObservationBody {
            prompt: &obs.task_prompt,
            state: obs.state,
            external_image: obs.external_image.as_ref().map(|i| png_base64(i.as_image())),
            wrist_image: obs.wrist_image.as_ref().map(png_base64),
        };
        let reply: ActionBody =
            post_json(&self.config.endpoint, &body, self.config.timeout_s, None).map_err(|e| match e {
                NetError::Timeout => ExecError::Timeout,
                NetError::Network(m) => ExecError::Network(m),
                NetError::Body(m) => ExecError::Format(m),
            })?;
        Action::from_slice(&reply.action).map_err(|e| ExecError::Format(e.to_string()))
    }

    fn wants_images(&self) -> bool {
        true
    }
}
