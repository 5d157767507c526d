//! A scripted conversation with the cosine backend, printed the way the
//! REPL prints it, then dumped as JSON lines.

use std::sync::Arc;

use intentbot::matcher::{Backend, BackendSetup};
use intentbot::{Corpus, DialogConfig, DialogSession, Engine};

fn main() {
    let (engine, _) = Engine::for_backend(Corpus::demo(), Backend::EmbCosine, &BackendSetup::default()).unwrap();
    let engine = Arc::new(engine);
    let classifier = engine.classifier(Backend::EmbCosine);
    let config = DialogConfig::new(0.5).unwrap();
    let mut session = DialogSession::new(engine.corpus().clone(), "demo", 2);

    let script = [
        "hello there",
        "What time can I visit your shop?",
        "What time can I visit your shop?",
        "Do you make custom engagement rings?",
        "what's the weather on mars",
        "ok thanks, bye",
    ];
    for line in script {
        println!("you> {line}");
        let turn = session.handle_turn(line, &classifier, &config).unwrap();
        println!("bot> {}", turn.response);
        if let Some(f) = turn.followup {
            println!("bot+ {f}");
        }
        if turn.ended {
            break;
        }
    }

    println!();
    session.export_transcript(std::io::stdout().lock()).unwrap();
}
