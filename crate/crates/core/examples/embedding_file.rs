//! Plug precomputed sentence vectors into the cosine backend.
//!
//! The file is TSV: the text, a tab, then space-separated floats. Texts the
//! file does not cover (including unseen queries) fall back to the hashed
//! embedding of the same width. Here the "precomputed" vectors are made up
//! so that two delivery questions land on the same point.

use std::fmt::Write;

use intentbot::matcher::{Backend, BackendSetup, EmbeddingSource};
use intentbot::{Corpus, Engine};

fn main() {
    let corpus = Corpus::demo();
    let dim = 16;
    let mut tsv = String::new();
    let delivery: Vec<String> = (0..dim).map(|i| if i == 3 { "1".into() } else { "0".into() }).collect();
    for text in corpus.intent("delivery").unwrap().patterns.iter().map(String::as_str).chain(["will my parcel reach kochi"]) {
        writeln!(tsv, "{text}\t{}", delivery.join(" ")).unwrap();
    }
    let path = std::env::temp_dir().join("intentbot-embeddings.tsv");
    std::fs::write(&path, tsv).unwrap();

    let setup = BackendSetup { embedding: EmbeddingSource::File { path }, ..BackendSetup::default() };
    let (engine, _) = Engine::for_backend(corpus, Backend::EmbCosine, &setup).unwrap();
    let fp = engine.model_fingerprint(Backend::EmbCosine).unwrap();
    println!("provider: {fp}");
    for q in ["will my parcel reach kochi", "Do you sell gold rings?"] {
        let p = engine.classify(Backend::EmbCosine, q).unwrap();
        println!("{q:<28} -> {:<10} {:.3}  {:?}", p.tag().unwrap_or("(fallback)"), p.confidence, p.matched_pattern);
    }
}
