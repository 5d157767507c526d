//! Train all three backends on the bundled jewelry-shop corpus and score
//! them on the held-out paraphrase set.
//!
//! ```bash
//! cargo run --release -p intentbot --example compare_backends
//! ```

use std::time::Instant;

use intentbot::evaluation::{compare_backends, demo_test_set, render_comparison, render_report, EvalConfig};
use intentbot::mlp::TrainConfig;
use intentbot::Corpus;

fn main() {
    let corpus = Corpus::demo();
    let test = demo_test_set();
    let config = EvalConfig { train: TrainConfig { seed: 7, ..TrainConfig::default() }, ..EvalConfig::default() };

    let start = Instant::now();
    let comparison = compare_backends(&corpus, &test, &config).expect("comparison runs");
    println!("{}", render_comparison(&comparison));
    if std::env::args().any(|a| a == "--verbose") {
        for result in &comparison.results {
            println!("{}", render_report(result));
        }
    }
    println!("took {:.1?}", start.elapsed());
}
