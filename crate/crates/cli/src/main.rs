use std::sync::atomic::Ordering;

use clap::Parser;
use minea_ergo_cli::{run, Cli, CANCEL, EXIT_INTERRUPTED, SCAN_ACTIVE};

fn main() {
    let cli = Cli::parse();
    let installed = ctrlc::set_handler(|| {
        if SCAN_ACTIVE.load(Ordering::SeqCst) && !CANCEL.swap(true, Ordering::SeqCst) {
            eprintln!("stopping after the running cells finish (Ctrl-C again to abort)");
        } else {
            std::process::exit(EXIT_INTERRUPTED);
        }
    });
    if let Err(e) = installed {
        eprintln!("warning: cannot install Ctrl-C handler: {e}");
    }
    std::process::exit(run(&cli));
}
