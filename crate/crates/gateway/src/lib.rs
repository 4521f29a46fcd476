//! WebSocket gateway for teleoperating the simulator and recording
//! demonstrations in the episode format.

pub mod client;
pub mod protocol;
pub mod server;
pub mod session;

pub use client::Client;
pub use protocol::{Command, ServerMessage, PROTOCOL_VERSION};
pub use server::{router, serve, AppState, GatewayConfig};
pub use session::Session;
