//! Confusion matrix and per-class scores for one backend.
//!
//! ```bash
//! cargo run --release -p intentbot --example evaluate -- emb-cosine [TEST_SET.json]
//! ```

use intentbot::evaluation::{check_disjoint, demo_test_set, evaluate_backend, load_test_set, render_report};
use intentbot::matcher::{Backend, BackendSetup};
use intentbot::{Corpus, Engine};

fn main() {
    let mut args = std::env::args().skip(1);
    let backend: Backend = args.next().as_deref().unwrap_or("emb-cosine").parse().unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2);
    });
    let test = match args.next() {
        Some(path) => load_test_set(path).expect("readable test set"),
        None => demo_test_set(),
    };
    let corpus = Corpus::demo();
    check_disjoint(&corpus, &test).expect("test set is held out");

    let (engine, report) = Engine::for_backend(corpus, backend, &BackendSetup::default()).unwrap();
    if let Some(r) = report {
        println!("final training loss {:.4}", r.epoch_losses.last().unwrap());
    }
    let result = evaluate_backend(&engine, backend, &test).unwrap();
    print!("{}", render_report(&result));

    let misses: Vec<_> = test
        .iter()
        .filter_map(|u| {
            let p = engine.classify(backend, &u.text).unwrap();
            (p.tag() != Some(u.tag.as_str())).then_some((u, p))
        })
        .collect();
    println!("\n{} misses", misses.len());
    for (u, p) in misses.iter().take(10) {
        println!("  {:?} ({}) -> {}", u.text, u.tag, p.tag().unwrap_or("(fallback)"));
    }
}
