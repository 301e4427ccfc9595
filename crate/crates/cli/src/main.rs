mod cli;
mod commands;
mod config;

use clap::Parser;

use cli::{Cli, Cmd};

/// `MLATK_WORKERS` pins the rayon pool size; per-instance seeds are drawn
/// upfront, so the worker count affects speed, never results.
fn init_workers() {
    if let Ok(text) = std::env::var("MLATK_WORKERS") {
        if let Ok(n) = text.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() {
    let args = Cli::parse();
    init_workers();
    let outcome = match &args.cmd {
        Cmd::Synth(a) => commands::cmd_synth(a),
        Cmd::Train(a) => commands::cmd_train(a),
        Cmd::Explore(a) => commands::cmd_explore(a),
        Cmd::Certify(a) => commands::cmd_certify(a),
        Cmd::Bounds(a) => commands::cmd_bounds(a),
        Cmd::Report(a) => commands::cmd_report(a),
    };
    if let Err(e) = outcome {
        eprintln!("error: {}", e);
        std::process::exit(if e.is_config() { 2 } else { 3 });
    }
}
