//! Headless protocol client for scripted sessions and tests.

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use crate::protocol::ServerMessage;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("undecodable server message: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("connection closed")]
    Closed,
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    /// Seq of the last command sent through [`Client::cmd`].
    pub seq: u64,
    /// Frames and state updates received while waiting for replies.
    pub streamed: Vec<ServerMessage>,
}

impl Client {
    /// Connects to `ws://addr/ws/<session>` and returns the server hello.
    pub async fn connect(addr: &str, session: &str) -> Result<(Self, ServerMessage), ClientError> {
        let (ws, _) = connect_async(format!("ws://{addr}/ws/{session}")).await?;
        let mut c = Self {
            ws,
            seq: 0,
            streamed: Vec::new(),
        };
        let hello = c.next().await?;
        Ok((c, hello))
    }

    /// Next server message of any kind.
    pub async fn next(&mut self) -> Result<ServerMessage, ClientError> {
        loop {
            match self.ws.next().await.ok_or(ClientError::Closed)?? {
                Message::Text(t) => return Ok(serde_json::from_str(&t)?),
                Message::Close(_) => return Err(ClientError::Closed),
                _ => continue,
            }
        }
    }

    /// Sends raw text and waits for the ack or error, stashing streamed messages.
    pub async fn raw(&mut self, text: String) -> Result<ServerMessage, ClientError> {
        self.ws.send(Message::Text(text.into())).await?;
        loop {
            match self.next().await? {
                m @ (ServerMessage::Frame { .. } | ServerMessage::StateUpdate { .. }) => self.streamed.push(m),
                other => return Ok(other),
            }
        }
    }

    /// Sends a command object with the next seq filled in.
    pub async fn cmd(&mut self, mut body: Value) -> Result<ServerMessage, ClientError> {
        self.seq += 1;
        body["seq"] = json!(self.seq);
        self.raw(body.to_string()).await
    }
}
