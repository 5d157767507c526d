use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use intentbot::matcher::{make_provider, Backend, BackendSetup, EmbeddingSource};
use intentbot::vectorizer::{EmbedError, EmbeddingProvider, HashedTfidf, RemoteProvider};
use intentbot::{Corpus, Engine};

/// Serve `app` on an ephemeral port from a background runtime.
fn spawn(app: Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

/// Embedding server backed by the hashed provider, so results are checkable.
fn hashed_server(dim: usize) -> (SocketAddr, Arc<HashedTfidf>) {
    let h = Arc::new(HashedTfidf::fit(&Corpus::demo(), dim).unwrap());
    let inner = h.clone();
    let app = Router::new().route(
        "/embed",
        post(move |Json(body): Json<Value>| {
            let h = inner.clone();
            async move {
                let vectors: Vec<Vec<f64>> = body["texts"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|t| h.embed(t.as_str().unwrap()).unwrap().into_inner())
                    .collect();
                Json(json!({ "vectors": vectors }))
            }
        }),
    );
    (spawn(app), h)
}

#[test]
fn remote_vectors_round_trip() {
    let (addr, h) = hashed_server(64);
    let remote = RemoteProvider::new(format!("http://{addr}/embed"), 64, Duration::from_secs(5)).unwrap();
    let texts = ["What time can I visit your shop?", "Do you sell gold?"];
    let got = remote.embed_batch(&texts).unwrap();
    for (t, v) in texts.iter().zip(got) {
        assert_eq!(v, h.embed(t).unwrap());
    }
    assert_eq!(remote.dim(), 64);
}

#[test]
fn wrong_width_is_rejected() {
    let (addr, _) = hashed_server(32);
    let remote = RemoteProvider::new(format!("http://{addr}/embed"), 64, Duration::from_secs(5)).unwrap();
    assert!(matches!(remote.embed("hi"), Err(EmbedError::DimensionMismatch { expected: 64, found: 32 })));
}

#[test]
fn server_errors_surface() {
    let addr = spawn(Router::new().route("/embed", post(|| async { (axum::http::StatusCode::INTERNAL_SERVER_ERROR, "boom") })));
    let remote = RemoteProvider::new(format!("http://{addr}/embed"), 16, Duration::from_secs(5)).unwrap();
    assert!(matches!(remote.embed("hi"), Err(EmbedError::Remote(_))));

    let closed = RemoteProvider::new("http://127.0.0.1:9/embed", 16, Duration::from_millis(500)).unwrap();
    assert!(matches!(closed.embed("hi"), Err(EmbedError::Remote(_))));
}

#[test]
fn cosine_backend_over_remote_embeddings() {
    let (addr, _) = hashed_server(384);
    let setup = BackendSetup {
        embedding: EmbeddingSource::Remote { url: format!("http://{addr}/embed"), dim: 384, timeout: Duration::from_secs(5) },
        ..BackendSetup::default()
    };
    let (engine, _) = Engine::for_backend(Corpus::demo(), Backend::EmbCosine, &setup).unwrap();
    let p = engine.classify(Backend::EmbCosine, "What time can I visit your shop?").unwrap();
    assert_eq!(p.tag(), Some("Timing"));
    assert_eq!(p.matched_pattern.as_deref(), Some("What are your shop timings?"));
    assert!(make_provider(&Corpus::demo(), &setup.embedding).unwrap().fingerprint().starts_with("remote:"));
}
