//! WebSocket front end: one recognizer per connection over a shared model.
//!
//! `GET /ws` carries one JSON message per frame in each direction.
//! `GET /health` reports whether a model is loaded and its layout.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::recognizer::{MetaState, Observation, Recognizer, RecognizerModel, StepOutput};
use crate::signal::{frame_from_features, FEATURE_CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Inbound {
    Frame {
        t: f64,
        features: Vec<f64>,
        speed: f64,
        #[serde(default = "present_default")]
        present: bool,
    },
}

fn present_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Outbound {
    Result {
        t: f64,
        meta: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        margin: Option<f64>,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl Outbound {
    pub fn from_step(o: &StepOutput) -> Self {
        Outbound::Result {
            t: o.t,
            meta: o.meta.name().to_string(),
            label: o.label.map(|l| l.name().to_string()),
            command: o.command.map(u8::from),
            margin: o.margin,
        }
    }

    pub fn from_error(e: &Error) -> Self {
        Outbound::Error { code: e.code().to_string(), detail: e.to_string() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

/// Handles one inbound text message. `Ok(None)` during warm-up.
pub fn handle_message(rec: &mut Recognizer, text: &str) -> Option<Outbound> {
    let parsed: Result<Inbound, _> = serde_json::from_str(text);
    let result = match parsed {
        Err(e) => Err(Error::BadMessage(e.to_string())),
        Ok(Inbound::Frame { t, features, speed, present }) => {
            if !present {
                rec.step(Observation::Absent { t })
            } else if features.len() != FEATURE_CHANNELS {
                Err(Error::BadMessage(format!("expected {FEATURE_CHANNELS} features, got {}", features.len())))
            } else {
                let f: [f64; FEATURE_CHANNELS] = features.try_into().expect("length checked");
                frame_from_features(t, &f, speed).and_then(|frame| rec.step(Observation::Present(frame)))
            }
        }
    };
    match result {
        Ok(out) => out.map(|o| Outbound::from_step(&o)),
        Err(e) => Some(Outbound::from_error(&e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_blocks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posture_blocks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gesture_blocks: Option<Vec<usize>>,
    pub version: String,
}

impl Health {
    pub fn of(model: Option<&RecognizerModel>) -> Self {
        Health {
            status: if model.is_some() { "ok" } else { "no-model" }.to_string(),
            model_loaded: model.is_some(),
            window: model.map(|m| m.window),
            classifier: model.map(|m| m.classifier.name().to_string()),
            stage1_blocks: model.map(|m| m.stage1.dictionary.block_sizes()),
            posture_blocks: model.map(|m| m.postures.dictionary.block_sizes()),
            gesture_blocks: model.map(|m| m.gestures.dictionary.block_sizes()),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone)]
struct AppState {
    model: Option<Arc<RecognizerModel>>,
}

pub fn router(model: Option<Arc<RecognizerModel>>) -> Router {
    Router::new().route("/health", get(health)).route("/ws", get(ws_upgrade)).with_state(AppState { model })
}

async fn health(State(state): State<AppState>) -> Response {
    let h = Health::of(state.model.as_deref());
    let status = if h.model_loaded { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    (status, Json(h)).into_response()
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| session(socket, state.model))
}

async fn session(mut socket: WebSocket, model: Option<Arc<RecognizerModel>>) {
    let Some(model) = model else {
        let _ = socket.send(Message::Text(Outbound::from_error(&Error::ModelMissing).to_json().into())).await;
        let _ = socket.send(Message::Close(None)).await;
        return;
    };
    let mut rec = Recognizer::new(model);
    while let Some(msg) = socket.recv().await {
        let reply = match msg {
            Ok(Message::Text(text)) => handle_message(&mut rec, text.as_str()),
            Ok(Message::Binary(_)) => Some(Outbound::from_error(&Error::BadMessage("binary frames are not accepted".into()))),
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => None,
        };
        if let Some(reply) = reply {
            if socket.send(Message::Text(reply.to_json().into())).await.is_err() {
                break;
            }
        }
    }
    log::debug!("session closed");
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, model: Option<Arc<RecognizerModel>>) -> std::io::Result<()> {
    axum::serve(listener, router(model)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await
}

/// Whether a result message reports an absent hand.
pub fn is_no_hand(o: &Outbound) -> bool {
    matches!(o, Outbound::Result { meta, .. } if meta == MetaState::NoHand.name())
}
