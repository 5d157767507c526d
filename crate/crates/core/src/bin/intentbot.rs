use std::io::{self, Write};

fn main() {
    tracing_subscriber::fmt().with_writer(io::stderr).with_env_filter(
        tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "intentbot=info".into()),
    ).init();
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    let code = intentbot::cli::run(std::env::args_os(), &mut stdin.lock(), &mut stdout, &mut io::stderr());
    let _ = stdout.flush();
    std::process::exit(code);
}
