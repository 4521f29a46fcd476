//! Wire messages. Every message is a JSON text frame tagged by `type`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Client to server. Each command carries a strictly increasing `seq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Hello { seq: u64 },
    SceneReset { seq: u64, task: u8, seed: u64 },
    /// Joint-target deltas in radians.
    Jog { seq: u64, deltas: [f64; 6] },
    Gripper { seq: u64, aperture: f64 },
    MarkDone { seq: u64 },
    StartRecording { seq: u64 },
    StopRecording { seq: u64 },
}

impl Command {
    pub fn seq(&self) -> u64 {
        match self {
            Command::Hello { seq }
            | Command::SceneReset { seq, .. }
            | Command::Jog { seq, .. }
            | Command::Gripper { seq, .. }
            | Command::MarkDone { seq }
            | Command::StartRecording { seq }
            | Command::StopRecording { seq } => *seq,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("commands serialize")
    }
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol: u32,
        session: String,
        task: u8,
        seed: u64,
    },
    Ack {
        seq: u64,
        #[serde(default)]
        data: Value,
    },
    Error {
        seq: Option<u64>,
        message: String,
    },
    StateUpdate {
        t: f64,
        state: [f64; 7],
        attached: Option<String>,
        subtask: Option<String>,
        recording: bool,
    },
    /// One camera image, base64 PNG. External and wrist frames of a tick share `t`.
    Frame {
        camera: String,
        t: f64,
        png: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn error(seq: Option<u64>, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            seq,
            message: message.into(),
        }
    }
}

/// Best-effort seq from a message that failed to parse as a command.
pub fn salvage_seq(text: &str) -> Option<u64> {
    serde_json::from_str::<Value>(text).ok()?.get("seq")?.as_u64()
}
