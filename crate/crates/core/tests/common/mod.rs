#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use futures::{SinkExt, StreamExt};
use gesturespot::recognizer::RecognizerModel;
use gesturespot::signal::LabeledStream;
use gesturespot::train::{train_recognizer, TrainConfig, TrainOutput, TrainingSet};
use tokio_tungstenite::tungstenite::Message;

pub const TRAIN_NOISE: f64 = 0.02;
pub const TRAIN_SEED: u64 = 0;

pub struct Trained {
    pub set: TrainingSet,
    pub output: TrainOutput,
    pub model: Arc<RecognizerModel>,
    pub seconds: f64,
}

fn train(seconds: f64) -> Trained {
    let set = TrainingSet::synthetic(seconds, TRAIN_NOISE, TRAIN_SEED).expect("training set");
    let started = Instant::now();
    let output = train_recognizer(&set, &TrainConfig::default()).expect("training");
    let seconds = started.elapsed().as_secs_f64();
    let model = Arc::new(output.model.clone());
    Trained { set, output, model, seconds }
}

/// Full-size model: four 20 s bilateral recordings, 975 windows each.
pub fn full() -> &'static Trained {
    static FULL: OnceLock<Trained> = OnceLock::new();
    FULL.get_or_init(|| train(20.0))
}

/// Same pipeline on 6 s recordings, for tests that only need a working model.
pub fn small() -> &'static Trained {
    static SMALL: OnceLock<Trained> = OnceLock::new();
    SMALL.get_or_init(|| train(6.0))
}

pub fn frame_message(t: f64, features: [f64; 6], speed: f64, present: bool) -> String {
    serde_json::json!({"type": "frame", "t": t, "features": features, "speed": speed, "present": present}).to_string()
}

pub fn stream_messages(stream: &LabeledStream) -> Vec<String> {
    stream.frames.iter().map(|f| frame_message(f.t, f.features(), f.speed(), true)).collect()
}

/// Starts the service on an ephemeral port.
pub async fn start_service(model: Option<Arc<RecognizerModel>>) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let addr = listener.local_addr().expect("addr");
    tokio::spawn(async move { gesturespot::service::serve(listener, model).await });
    addr
}

pub type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

pub async fn connect(addr: SocketAddr) -> Socket {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.expect("connect").0
}

pub async fn send(ws: &mut Socket, text: &str) {
    ws.send(Message::Text(text.to_string().into())).await.expect("send");
}

/// Next text message, or `None` once the server closes.
pub async fn recv(ws: &mut Socket) -> Option<String> {
    loop {
        match ws.next().await {
            Some(Ok(Message::Text(t))) => return Some(t.to_string()),
            Some(Ok(Message::Close(_))) | None => return None,
            Some(Ok(_)) => {}
            Some(Err(e)) => panic!("socket error: {e}"),
        }
    }
}

/// Sends every message on one session and collects `expected` replies.
pub async fn exchange(addr: SocketAddr, messages: &[String], expected: usize) -> Vec<String> {
    let mut ws = connect(addr).await;
    for m in messages {
        send(&mut ws, m).await;
    }
    let mut replies = Vec::with_capacity(expected);
    while replies.len() < expected {
        match recv(&mut ws).await {
            Some(t) => replies.push(t),
            None => break,
        }
    }
    let _ = ws.close(None).await;
    replies
}
