//! Train the bag-of-words network, save it, reload it and classify a few
//! queries with the reloaded copy.
//!
//! ```bash
//! cargo run --release -p intentbot --example train_ohe_nn -- [SEED]
//! ```

use intentbot::matcher::Backend;
use intentbot::mlp::{MlpModel, TrainConfig};
use intentbot::{Corpus, Engine};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let config = TrainConfig { seed, ..TrainConfig::default() };

    let mut engine = Engine::new(Corpus::demo());
    let report = engine.train_ohe_nn(&config).expect("training converges");
    for (epoch, loss) in report.epoch_losses.iter().enumerate().filter(|(e, _)| e % 25 == 0 || *e + 1 == config.epochs) {
        println!("epoch {:>3}  loss {loss:.4}", epoch + 1);
    }
    println!("training accuracy {:.3}", report.train_accuracy);

    let dir = tempfile_dir();
    let path = dir.join("ohe-nn.json");
    let nn = engine.nn_backend(Backend::OheNn).unwrap();
    nn.model.save(&path).unwrap();
    let reloaded = MlpModel::load(&path).unwrap();
    assert_eq!(reloaded, nn.model);
    println!("saved and reloaded {} ({} bytes)", path.display(), std::fs::metadata(&path).unwrap().len());

    let mut fresh = Engine::new(Corpus::demo());
    let encoder = fresh.ohe_encoder().unwrap();
    fresh.install_nn(Backend::OheNn, encoder, reloaded).unwrap();
    for q in ["What time can I visit your shop?", "do you have silver anklets", "can I pay by card", "blorp"] {
        let p = fresh.classify(Backend::OheNn, q).unwrap();
        println!("{q:<36} -> {:<10} {:.3}", p.tag().unwrap_or("(fallback)"), p.confidence);
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("intentbot-example");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
