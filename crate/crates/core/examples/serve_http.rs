//! Start the chat service on an ephemeral port and talk to it over HTTP.
//!
//! For a long-running server use the binary instead:
//!
//! ```bash
//! cargo run --release -p intentbot -- serve --port 8080 --backend emb-cosine
//! ```

use std::sync::Arc;

use intentbot::matcher::{Backend, BackendSetup};
use intentbot::service::{router, AppState, SessionSettings, DEFAULT_SESSION_TTL};
use intentbot::{Corpus, DialogConfig, Engine};
use serde_json::{json, Value};

fn main() {
    let state = AppState::new(SessionSettings {
        backend: Backend::EmbCosine,
        dialog: DialogConfig::default(),
        seed: 0,
        ttl: DEFAULT_SESSION_TTL,
    });
    let (engine, _) = Engine::for_backend(Corpus::demo(), Backend::EmbCosine, &BackendSetup::default()).unwrap();
    state.install(Arc::new(engine));
    let app = router(state, None, None).unwrap();

    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        tokio::runtime::Runtime::new().unwrap().block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        })
    });
    let base = format!("http://{}", rx.recv().unwrap());
    println!("listening on {base}");

    let http = reqwest::blocking::Client::new();
    let info: Value = http.get(format!("{base}/api/info")).send().unwrap().json().unwrap();
    println!("GET /api/info -> backend {}, {} intents", info["backend"], info["tags"].as_array().unwrap().len());

    let created: Value = http.post(format!("{base}/api/sessions")).send().unwrap().json().unwrap();
    let id = created["session_id"].as_str().unwrap();
    println!("POST /api/sessions -> {id}");

    for text in ["What time can I visit your shop?", "bye", "hello?"] {
        let resp = http.post(format!("{base}/api/sessions/{id}/messages")).json(&json!({ "text": text })).send().unwrap();
        let status = resp.status();
        let body: Value = resp.json().unwrap();
        println!("POST messages {text:?} -> {status} {body}");
    }
}
