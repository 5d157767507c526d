//! Nearest-pattern retrieval: embed every corpus pattern, then show the
//! closest patterns for a query.
//!
//! ```bash
//! cargo run -p intentbot --example cosine_match -- "What time can I visit your shop?"
//! ```

use intentbot::matcher::{build_index, predict_cosine, DEFAULT_COSINE_THRESHOLD};
use intentbot::vectorizer::{EmbeddingProvider, HashedTfidf, DEFAULT_EMBEDDING_DIM};
use intentbot::Corpus;

fn main() {
    let query = std::env::args().nth(1).unwrap_or_else(|| "What time can I visit your shop?".into());
    let corpus = Corpus::demo();
    let provider = HashedTfidf::fit(&corpus, DEFAULT_EMBEDDING_DIM).unwrap();
    let index = build_index(&corpus, &provider).unwrap();

    let q = provider.embed(&query).unwrap();
    let mut ranked: Vec<(f64, &str, &str)> = index
        .similarities(&q)
        .unwrap()
        .into_iter()
        .zip(&index.entries)
        .map(|(s, e)| (s, e.tag.as_str(), e.pattern.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    println!("query: {query:?}");
    for (s, tag, pattern) in ranked.iter().take(5) {
        println!("  {s:.3}  {tag:<10} {pattern}");
    }
    let p = predict_cosine(&index, &query, &provider, DEFAULT_COSINE_THRESHOLD).unwrap();
    match p.tag() {
        Some(tag) => println!("=> {tag} via {:?}", p.matched_pattern.as_deref().unwrap()),
        None => println!("=> fallback (best {:.3} < {DEFAULT_COSINE_THRESHOLD})", p.confidence),
    }
}
