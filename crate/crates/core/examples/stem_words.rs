//! Run the text pipeline on each argument, or on a few shop questions.
//!
//! ```bash
//! cargo run -p intentbot --example stem_words -- "When is your shop open for visiting?" generously
//! ```

use intentbot::textproc::{porter_stem, preprocess};

fn main() {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = ["When is your shop open for visiting?", "Timings!!!", "Open 8am-11pm", "relational conditioning"]
            .map(String::from)
            .to_vec();
    }
    for text in &inputs {
        let tokens = preprocess(text);
        println!("{text:?}");
        println!("  tokens: {}", tokens.joined());
        if text.chars().all(char::is_alphabetic) {
            println!("  stem:   {}", porter_stem(&text.to_lowercase()));
        }
    }
}
